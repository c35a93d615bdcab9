#pragma once

#include "nethawkes/core.hpp"
#include "nethawkes/netprior.hpp"
#include "nethawkes/parallel.hpp"
#include "nethawkes/random.hpp"
#include "nethawkes/special.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace nethawkes {

// Global factors of the mean-field posterior for the mixture-of-gammas model.
struct VariationalState {
    std::vector<double> alpha;       // q(lambda0_k) = Gamma(alpha_k, beta_k)
    std::vector<double> beta;
    Tensor3<double> gamma;           // q(g^(k,k')) = Dirichlet(gamma(k, k', :))
    Tensor3<double> gamma_target;    // gamma + Z, the data-driven Dirichlet target
    Matrix<double> p;                // q(A = 1)
    Matrix<double> kappa1, v1;       // q(W | A = 1) = Gamma(kappa1, v1)
    Matrix<double> kappa0, v0;       // q(W | A = 0) = Gamma(kappa0, v0)
    std::size_t iteration = 0;

    VariationalState() = default;
    VariationalState(std::size_t K, std::size_t B)
        : alpha(K, 1.0), beta(K, 1.0), gamma(K, K, B, 1.0), gamma_target(K, K, B, 1.0), p(K, K, 0.5),
          kappa1(K, K, 1.0), v1(K, K, 1.0), kappa0(K, K, 1.0), v0(K, K, 1.0) {}

    [[nodiscard]] std::size_t K() const noexcept { return alpha.size(); }
    [[nodiscard]] std::size_t B() const noexcept { return gamma.dim2(); }

    [[nodiscard]] double mean_weight(std::size_t k, std::size_t kp) const {
        return p(k, kp) * kappa1(k, kp) / v1(k, kp) + (1.0 - p(k, kp)) * kappa0(k, kp) / v0(k, kp);
    }
    [[nodiscard]] double mean_log_weight(std::size_t k, std::size_t kp) const {
        return p(k, kp) * expected_log_gamma_rv(kappa1(k, kp), v1(k, kp)) +
               (1.0 - p(k, kp)) * expected_log_gamma_rv(kappa0(k, kp), v0(k, kp));
    }

    void validate() const {
        const std::size_t K = alpha.size();
        const std::size_t B = gamma.dim2();
        if (beta.size() != K || gamma.dim0() != K || gamma.dim1() != K || gamma_target.dim0() != K ||
            gamma_target.dim1() != K || gamma_target.dim2() != B || p.rows() != K || kappa1.rows() != K ||
            v1.rows() != K || kappa0.rows() != K || v0.rows() != K) {
            throw std::invalid_argument("VariationalState: inconsistent shapes");
        }
        auto positive = [](const std::vector<double>& xs) {
            return std::all_of(xs.begin(), xs.end(), [](double x) { return x > 0.0 && std::isfinite(x); });
        };
        if (!positive(alpha) || !positive(beta) || !positive(gamma.data()) || !positive(gamma_target.data()) ||
            !positive(kappa1.data()) || !positive(v1.data()) || !positive(kappa0.data()) ||
            !positive(v0.data())) {
            throw std::invalid_argument("VariationalState: gamma and Dirichlet parameters must be positive");
        }
        for (double x : p.data()) {
            if (!(x >= 0.0 && x <= 1.0)) {
                throw std::invalid_argument("VariationalState: p must lie in [0, 1]");
            }
        }
    }
};

struct VariationalExpectations {
    std::vector<double> e_lambda0, e_ln_lambda0;
    Matrix<double> e_w, e_ln_w, slab_mean;
    Tensor3<double> e_g, e_ln_g;
};

inline VariationalExpectations variational_expectations(const VariationalState& q) {
    const std::size_t K = q.K(), B = q.B();
    VariationalExpectations e{std::vector<double>(K), std::vector<double>(K), Matrix<double>(K, K),
                              Matrix<double>(K, K), Matrix<double>(K, K), Tensor3<double>(K, K, B),
                              Tensor3<double>(K, K, B)};
    for (std::size_t k = 0; k < K; ++k) {
        e.e_lambda0[k] = q.alpha[k] / q.beta[k];
        e.e_ln_lambda0[k] = expected_log_gamma_rv(q.alpha[k], q.beta[k]);
    }
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t kp = 0; kp < K; ++kp) {
            e.e_w(k, kp) = q.mean_weight(k, kp);
            e.e_ln_w(k, kp) = q.mean_log_weight(k, kp);
            e.slab_mean(k, kp) = q.kappa1(k, kp) / q.v1(k, kp);
            double g0 = 0.0;
            for (double g : q.gamma.fiber(k, kp)) {
                g0 += g;
            }
            const double dg0 = digamma(g0);
            for (std::size_t b = 0; b < B; ++b) {
                e.e_g(k, kp, b) = q.gamma(k, kp, b) / g0;
                e.e_ln_g(k, kp, b) = digamma(q.gamma(k, kp, b)) - dg0;
            }
        }
    }
    return e;
}

// Mini-batch schedule: rho_i = (i + 1)^(-exponent) unless a fixed step is given.
struct SviSchedule {
    std::size_t minibatch = 1024;
    double exponent = 0.5;
    std::optional<double> fixed_step;

    [[nodiscard]] double step(std::size_t i) const {
        if (fixed_step) {
            return *fixed_step;
        }
        return std::pow(static_cast<double>(i) + 1.0, -exponent);
    }
};

// Expected parent counts aggregated over a set of bins.
struct ParentStats {
    std::vector<double> z0;     // per k'
    Tensor3<double> zw;         // (k, k', b)
};

struct VariationalOptions {
    ExposureMode exposure = ExposureMode::exact;
};

// Batch coordinate ascent and stochastic variational inference.
//
// Responsibilities are stored only for bins with events; bins without events carry
// no expected parent counts and contribute nothing to the bound.
class VariationalInference {
  public:
    VariationalInference(CountMatrix S, BasisSet basis, HyperParams hyper, ErdosRenyiPrior prior,
                         VariationalOptions opts = {})
        : S_(std::move(S)), basis_(std::move(basis)), hyper_(std::move(hyper)), prior_(std::move(prior)),
          opts_(opts) {
        S_.validate();
        hyper_.validate(basis_.B);
        if (basis_.D >= S_.T) {
            throw std::invalid_argument("VariationalInference: require D < T");
        }
        if (prior_.K() != S_.K) {
            throw std::invalid_argument("VariationalInference: prior has the wrong number of processes");
        }
        shat_ = convolve_counts(S_, basis_);
        const std::size_t K = S_.K;
        row_ptr_.assign(S_.T + 1, 0);
        for (std::size_t t = 0; t < S_.T; ++t) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                if (S_(t, kp) > 0) {
                    active_.push_back(t * K + kp);
                }
            }
            row_ptr_[t + 1] = active_.size();
        }
        u_.assign(active_.size() * slots(), 0.0);
        for (std::size_t i = 0; i < active_.size(); ++i) {
            u_[i * slots()] = 1.0;
        }
        q_ = default_state();
    }

    // Factors at their priors: the no-data starting point.
    [[nodiscard]] VariationalState default_state() const {
        const std::size_t K = S_.K, B = basis_.B;
        VariationalState q(K, B);
        const NetPriorExpectations ne = prior_.expectations();
        for (std::size_t k = 0; k < K; ++k) {
            q.alpha[k] = hyper_.alpha_lambda;
            q.beta[k] = hyper_.beta_lambda + static_cast<double>(S_.T) * S_.dt;
            for (std::size_t kp = 0; kp < K; ++kp) {
                for (std::size_t b = 0; b < B; ++b) {
                    q.gamma(k, kp, b) = hyper_.gamma[b];
                    q.gamma_target(k, kp, b) = hyper_.gamma[b];
                }
                q.p(k, kp) = prior_.p();
                q.kappa1(k, kp) = hyper_.kappa;
                q.v1(k, kp) = ne.e_v(k, kp);
                q.kappa0(k, kp) = hyper_.kappa0;
                q.v0(k, kp) = hyper_.nu0;
            }
        }
        return q;
    }

    [[nodiscard]] const VariationalState& state() const noexcept { return q_; }
    void set_state(VariationalState q) {
        q.validate();
        if (q.K() != S_.K || q.B() != basis_.B) {
            throw std::invalid_argument("VariationalInference: state shape mismatch");
        }
        q_ = std::move(q);
    }
    [[nodiscard]] const ErdosRenyiPrior& prior() const noexcept { return prior_; }
    [[nodiscard]] ErdosRenyiPrior& prior() noexcept { return prior_; }
    [[nodiscard]] const CountMatrix& counts() const noexcept { return S_; }
    [[nodiscard]] const ConvolvedCounts& shat() const noexcept { return shat_; }
    [[nodiscard]] const BasisSet& basis() const noexcept { return basis_; }
    [[nodiscard]] const HyperParams& hyper() const noexcept { return hyper_; }
    [[nodiscard]] const VariationalOptions& options() const noexcept { return opts_; }
    [[nodiscard]] std::size_t slots() const noexcept { return 1 + S_.K * basis_.B; }

    // Responsibilities u_{t,k'}; bins without events report the background-only vector.
    [[nodiscard]] std::vector<double> responsibilities(std::size_t t, std::size_t kp) const {
        std::vector<double> out(slots(), 0.0);
        const std::size_t flat = t * S_.K + kp;
        const auto it = std::lower_bound(active_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[t]),
                                         active_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[t + 1]), flat);
        if (it == active_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[t + 1]) || *it != flat) {
            out[0] = 1.0;
            return out;
        }
        const double* u = u_.data() + static_cast<std::size_t>(it - active_.begin()) * slots();
        std::copy(u, u + slots(), out.begin());
        return out;
    }

    // Local step on the listed time bins (all processes at each bin).
    void update_parents_q(std::span<const std::size_t> bins) {
        const VariationalExpectations e = variational_expectations(q_);
        const std::size_t K = S_.K, B = basis_.B, ns = slots();
        // Per target column: log weights c[slot] and their shifted exponentials.
        std::vector<double> logw(K * ns), expw(K * ns);
        for (std::size_t kp = 0; kp < K; ++kp) {
            double* c = logw.data() + kp * ns;
            c[0] = e.e_ln_lambda0[kp];
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t b = 0; b < B; ++b) {
                    c[1 + k * B + b] = e.e_ln_g(k, kp, b) + e.e_ln_w(k, kp);
                }
            }
            const double cmax = *std::max_element(c, c + ns);
            for (std::size_t j = 0; j < ns; ++j) {
                expw[kp * ns + j] = std::exp(c[j] - cmax);
            }
        }
        parallel_chunks(bins.size(), 256, [&](std::size_t i0, std::size_t i1) {
            for (std::size_t i = i0; i < i1; ++i) {
                const std::size_t t = bins[i];
                for (std::size_t a = row_ptr_[t]; a < row_ptr_[t + 1]; ++a) {
                    local_update(a, logw.data() + (active_[a] % K) * ns, expw.data() + (active_[a] % K) * ns);
                }
            }
        });
    }

    void update_parents_q_all() {
        std::vector<std::size_t> bins(S_.T);
        std::iota(bins.begin(), bins.end(), std::size_t{0});
        update_parents_q(bins);
    }

    [[nodiscard]] ParentStats parent_stats(std::span<const std::size_t> bins) const {
        const std::size_t K = S_.K, B = basis_.B, ns = slots();
        ParentStats st{std::vector<double>(K, 0.0), Tensor3<double>(K, K, B, 0.0)};
        for (std::size_t t : bins) {
            for (std::size_t a = row_ptr_[t]; a < row_ptr_[t + 1]; ++a) {
                const std::size_t kp = active_[a] % K;
                const double s = S_.data[active_[a]];
                const double* u = u_.data() + a * ns;
                st.z0[kp] += s * u[0];
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t b = 0; b < B; ++b) {
                        st.zw(k, kp, b) += s * u[1 + k * B + b];
                    }
                }
            }
        }
        return st;
    }

    void update_background_q(const ParentStats& st, double scale, double rho = 1.0) {
        for (std::size_t k = 0; k < S_.K; ++k) {
            const double target = hyper_.alpha_lambda + scale * st.z0[k];
            q_.alpha[k] = (1.0 - rho) * q_.alpha[k] + rho * target;
            q_.beta[k] = hyper_.beta_lambda + static_cast<double>(S_.T) * S_.dt;
        }
    }

    void update_impulse_q(const ParentStats& st, double scale, double rho = 1.0) {
        const std::size_t K = S_.K, B = basis_.B;
        std::vector<double> exposure(B);
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t b = 0; b < B; ++b) {
                exposure[b] = basis_exposure(shat_, k, b, opts_.exposure);
            }
            for (std::size_t kp = 0; kp < K; ++kp) {
                auto target = q_.gamma_target.fiber(k, kp);
                for (std::size_t b = 0; b < B; ++b) {
                    target[b] = (1.0 - rho) * target[b] + rho * (hyper_.gamma[b] + scale * st.zw(k, kp, b));
                }
                optimize_dirichlet(target, q_.mean_weight(k, kp), exposure, q_.gamma.fiber(k, kp));
            }
        }
    }

    void update_weight_q(const ParentStats& st, double scale, double rho = 1.0) {
        const std::size_t K = S_.K, B = basis_.B;
        const NetPriorExpectations ne = prior_.expectations();
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                double z = 0.0, g0 = 0.0, expo = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    z += st.zw(k, kp, b);
                    g0 += q_.gamma(k, kp, b);
                }
                for (std::size_t b = 0; b < B; ++b) {
                    expo += q_.gamma(k, kp, b) / g0 * basis_exposure(shat_, k, b, opts_.exposure);
                }
                q_.kappa1(k, kp) = (1.0 - rho) * q_.kappa1(k, kp) + rho * (hyper_.kappa + scale * z);
                q_.kappa0(k, kp) = (1.0 - rho) * q_.kappa0(k, kp) + rho * (hyper_.kappa0 + scale * z);
                q_.v1(k, kp) = ne.e_v(k, kp) + expo;
                q_.v0(k, kp) = hyper_.nu0 + expo;
            }
        }
    }

    // Log-odds of q(A = 1) given the weight factors.
    [[nodiscard]] double adjacency_log_odds(std::size_t k, std::size_t kp, const NetPriorExpectations& ne) const {
        const double kappa = hyper_.kappa, kappa0 = hyper_.kappa0, nu0 = hyper_.nu0;
        const double k1 = q_.kappa1(k, kp), v1 = q_.v1(k, kp), k0 = q_.kappa0(k, kp), v0 = q_.v0(k, kp);
        return ne.e_ln_p(k, kp) - ne.e_ln_1mp(k, kp) + kappa * ne.e_ln_v(k, kp) - log_gamma(kappa) +
               log_gamma(k1) - k1 * std::log(v1) + log_gamma(kappa0) - kappa0 * std::log(nu0) +
               k0 * std::log(v0) - log_gamma(k0);
    }

    void update_adjacency_q() {
        const NetPriorExpectations ne = prior_.expectations();
        for (std::size_t k = 0; k < S_.K; ++k) {
            for (std::size_t kp = 0; kp < S_.K; ++kp) {
                q_.p(k, kp) = logistic(adjacency_log_odds(k, kp, ne));
            }
        }
    }

    void update_network_q(double rho = 1.0) {
        const std::size_t K = S_.K;
        Matrix<double> slab(K, K);
        for (std::size_t i = 0; i < slab.size(); ++i) {
            slab.data()[i] = q_.kappa1.data()[i] / q_.v1.data()[i];
        }
        prior_.vb_update(q_.p, slab, hyper_.kappa, rho);
    }

    // One batch coordinate-ascent sweep.
    void vb_iterate() {
        update_parents_q_all();
        std::vector<std::size_t> bins(S_.T);
        std::iota(bins.begin(), bins.end(), std::size_t{0});
        global_step(bins, 1.0, 1.0);
        ++q_.iteration;
    }

    // One stochastic step on a mini-batch of time bins drawn without replacement.
    void svi_step(const SviSchedule& schedule, Rng& rng) {
        if (schedule.minibatch == 0 || schedule.minibatch > S_.T) {
            throw std::invalid_argument("svi_step: minibatch size must lie in [1, T]");
        }
        const std::vector<std::size_t> batch = sample_minibatch(schedule.minibatch, rng);
        update_parents_q(batch);
        const double scale = static_cast<double>(S_.T) / static_cast<double>(schedule.minibatch);
        global_step(batch, scale, schedule.step(q_.iteration));
        ++q_.iteration;
    }

    [[nodiscard]] std::vector<std::size_t> sample_minibatch(std::size_t n, Rng& rng) const {
        std::vector<std::size_t> perm(S_.T);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + std::uniform_int_distribution<std::size_t>(0, S_.T - 1 - i)(rng);
            std::swap(perm[i], perm[j]);
        }
        perm.resize(n);
        std::sort(perm.begin(), perm.end());
        return perm;
    }

    void global_step(std::span<const std::size_t> bins, double scale, double rho) {
        const ParentStats st = parent_stats(bins);
        update_background_q(st, scale, rho);
        update_impulse_q(st, scale, rho);
        update_weight_q(st, scale, rho);
        update_adjacency_q();
        update_network_q(rho);
    }

    // Evidence lower bound including every constant.
    [[nodiscard]] double elbo() const {
        const std::size_t K = S_.K, B = basis_.B, ns = slots();
        const VariationalExpectations e = variational_expectations(q_);
        const NetPriorExpectations ne = prior_.expectations();
        const double ln_dt = std::log(S_.dt);
        double data = 0.0;
        for (std::size_t a = 0; a < active_.size(); ++a) {
            const std::size_t flat = active_[a];
            const std::size_t t = flat / K, kp = flat % K;
            const Count s = S_.data[flat];
            const double* u = u_.data() + a * ns;
            double acc = 0.0;
            if (u[0] > 0.0) {
                acc += u[0] * (e.e_ln_lambda0[kp] + ln_dt - std::log(u[0]));
            }
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t b = 0; b < B; ++b) {
                    const double uj = u[1 + k * B + b];
                    if (uj > 0.0) {
                        acc += uj * (e.e_ln_w(k, kp) + e.e_ln_g(k, kp, b) + std::log(shat_(t, k, b)) + ln_dt -
                                     std::log(uj));
                    }
                }
            }
            data += s * acc - log_factorial(s);
        }
        for (std::size_t kp = 0; kp < K; ++kp) {
            data -= e.e_lambda0[kp] * static_cast<double>(S_.T) * S_.dt;
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t b = 0; b < B; ++b) {
                    data -= e.e_w(k, kp) * e.e_g(k, kp, b) * basis_exposure(shat_, k, b, opts_.exposure);
                }
            }
        }

        double globals = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            globals += gamma_elbo_term(hyper_.alpha_lambda, hyper_.beta_lambda, q_.alpha[k], q_.beta[k]);
        }
        double gsum = 0.0, lg = 0.0;
        for (double g : hyper_.gamma) {
            gsum += g;
            lg += log_gamma(g);
        }
        const double log_norm_prior = log_gamma(gsum) - lg;
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                double qsum = 0.0, qlg = 0.0, cross = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    const double gt = q_.gamma(k, kp, b);
                    qsum += gt;
                    qlg += log_gamma(gt);
                    cross += (hyper_.gamma[b] - gt) * e.e_ln_g(k, kp, b);
                }
                globals += log_norm_prior - (log_gamma(qsum) - qlg) + cross;
                globals += weight_elbo_term(k, kp, ne);
            }
        }
        globals += prior_.elbo_terms();
        return data + globals;
    }

    // E_q[ln p(A, W | p, v)] - E_q[ln q(A, W)] for one entry.
    [[nodiscard]] double weight_elbo_term(std::size_t k, std::size_t kp, const NetPriorExpectations& ne) const {
        const double pt = q_.p(k, kp);
        const double kappa = hyper_.kappa, kappa0 = hyper_.kappa0, nu0 = hyper_.nu0;
        double out = 0.0;
        if (pt > 0.0) {
            const double k1 = q_.kappa1(k, kp), v1 = q_.v1(k, kp);
            const double eln = expected_log_gamma_rv(k1, v1), ew = k1 / v1;
            const double cross = ne.e_ln_p(k, kp) + kappa * ne.e_ln_v(k, kp) - log_gamma(kappa) +
                                 (kappa - 1.0) * eln - ne.e_v(k, kp) * ew;
            const double self = std::log(pt) + k1 * std::log(v1) - log_gamma(k1) + (k1 - 1.0) * eln - k1;
            out += pt * (cross - self);
        }
        if (pt < 1.0) {
            const double k0 = q_.kappa0(k, kp), v0 = q_.v0(k, kp);
            const double eln = expected_log_gamma_rv(k0, v0), ew = k0 / v0;
            const double cross = ne.e_ln_1mp(k, kp) + kappa0 * std::log(nu0) - log_gamma(kappa0) +
                                 (kappa0 - 1.0) * eln - nu0 * ew;
            const double self = std::log1p(-pt) + k0 * std::log(v0) - log_gamma(k0) + (k0 - 1.0) * eln - k0;
            out += (1.0 - pt) * (cross - self);
        }
        return out;
    }

    // Maximizes the part of the bound that depends on a Dirichlet factor:
    //   f(x) = sum_b (a_b - x_b) E[ln g_b] - ln Gamma(x_0) + sum_b ln Gamma(x_b) - w sum_b E_b x_b / x_0
    // With equal exposures the optimum is x = a. Otherwise the stationarity condition
    // x = a + F(x)^{-1} h(x), with F the Dirichlet Fisher information, is iterated and the
    // result is kept only if it does not decrease f relative to the current value.
    static void optimize_dirichlet(std::span<const double> a, double w, std::span<const double> exposure,
                                   std::span<double> current) {
        const std::size_t B = a.size();
        const auto [emin, emax] = std::minmax_element(exposure.begin(), exposure.end());
        if (B == 1 || w == 0.0 || *emax - *emin <= 1e-15 * std::max(1.0, std::abs(*emax))) {
            std::copy(a.begin(), a.end(), current.begin());
            return;
        }
        std::vector<double> x(a.begin(), a.end()), next(B), h(B), d(B);
        for (int it = 0; it < 200; ++it) {
            const double x0 = std::accumulate(x.begin(), x.end(), 0.0);
            double ebar = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                ebar += exposure[b] * x[b];
            }
            ebar /= x0;
            const double c = trigamma(x0);
            double sum_inv_d = 0.0, sum_h_d = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                h[b] = -w * (exposure[b] - ebar) / x0;
                d[b] = trigamma(x[b]);
                sum_inv_d += 1.0 / d[b];
                sum_h_d += h[b] / d[b];
            }
            const double coef = c * sum_h_d / (1.0 - c * sum_inv_d);
            double step = 1.0;
            for (;;) {
                bool ok = true;
                for (std::size_t b = 0; b < B; ++b) {
                    const double target = a[b] + h[b] / d[b] + coef / d[b];
                    next[b] = x[b] + step * (target - x[b]);
                    ok = ok && next[b] > 0.0;
                }
                if (ok || step < 1e-12) {
                    break;
                }
                step *= 0.5;
            }
            double change = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                change = std::max(change, std::abs(next[b] - x[b]) / x[b]);
                x[b] = std::max(next[b], 1e-300);
            }
            if (change < 1e-15) {
                break;
            }
        }
        if (dirichlet_objective(a, w, exposure, x) >= dirichlet_objective(a, w, exposure, current)) {
            std::copy(x.begin(), x.end(), current.begin());
        }
    }

    static double dirichlet_objective(std::span<const double> a, double w, std::span<const double> exposure,
                                      std::span<const double> x) {
        const double x0 = std::accumulate(x.begin(), x.end(), 0.0);
        const double dg0 = digamma(x0);
        double f = -log_gamma(x0), ex = 0.0;
        for (std::size_t b = 0; b < x.size(); ++b) {
            f += (a[b] - x[b]) * (digamma(x[b]) - dg0) + log_gamma(x[b]);
            ex += exposure[b] * x[b];
        }
        return f - w * ex / x0;
    }

  private:
    void local_update(std::size_t a, const double* logw, const double* expw) {
        const std::size_t K = S_.K, B = basis_.B, ns = slots();
        const std::size_t flat = active_[a];
        const std::size_t t = flat / K;
        double* u = u_.data() + a * ns;
        const double* sh = shat_.shat.data() + t * K * B;
        u[0] = expw[0];
        double total = u[0];
        for (std::size_t j = 1; j < ns; ++j) {
            u[j] = sh[j - 1] * expw[j];
            total += u[j];
        }
        if (!(total > 1e-280)) {
            // Everything underflowed relative to the column maximum; redo in log space.
            double m = logw[0];
            for (std::size_t j = 1; j < ns; ++j) {
                if (sh[j - 1] > 0.0) {
                    m = std::max(m, logw[j] + std::log(sh[j - 1]));
                }
            }
            u[0] = std::exp(logw[0] - m);
            total = u[0];
            for (std::size_t j = 1; j < ns; ++j) {
                u[j] = sh[j - 1] > 0.0 ? std::exp(logw[j] + std::log(sh[j - 1]) - m) : 0.0;
                total += u[j];
            }
        }
        for (std::size_t j = 0; j < ns; ++j) {
            u[j] /= total;
        }
    }

    CountMatrix S_;
    BasisSet basis_;
    HyperParams hyper_;
    ErdosRenyiPrior prior_;
    VariationalOptions opts_;
    ConvolvedCounts shat_;
    std::vector<std::size_t> active_;  // flat t * K + k' of bins with events, sorted
    std::vector<std::size_t> row_ptr_; // active_[row_ptr_[t] .. row_ptr_[t + 1]) lie in bin t
    std::vector<double> u_;            // active_.size() x slots()
    VariationalState q_;
};

// Draws a full parameter set from the variational posterior.
inline ModelParams sample_from_variational(const VariationalState& q, Rng& rng) {
    const std::size_t K = q.K(), B = q.B();
    ModelParams params(K, B);
    for (std::size_t k = 0; k < K; ++k) {
        params.lambda0[k] = sample_gamma(rng, q.alpha[k], q.beta[k]);
    }
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t kp = 0; kp < K; ++kp) {
            const bool on = sample_bernoulli(rng, q.p(k, kp));
            params.A(k, kp) = on ? 1 : 0;
            params.W(k, kp) = on ? sample_gamma(rng, q.kappa1(k, kp), q.v1(k, kp))
                                 : sample_gamma(rng, q.kappa0(k, kp), q.v0(k, kp));
            sample_dirichlet(rng, q.gamma.fiber(k, kp), params.g.fiber(k, kp));
        }
    }
    return params;
}

} // namespace nethawkes
