#pragma once

#include "nethawkes/core.hpp"
#include "nethawkes/netprior.hpp"
#include "nethawkes/parallel.hpp"
#include "nethawkes/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <limits>
#include <string>
#include <vector>

namespace nethawkes {

struct GammaParams {
    double shape = 1.0;
    double rate = 1.0;
};

struct GibbsOptions {
    ExposureMode exposure = ExposureMode::exact;
    // Individual steps can be frozen, e.g. to isolate one kernel in a test.
    bool update_background = true;
    bool update_impulse = true;
    bool update_weights = true;
    bool update_adjacency = true;
    bool update_network = true;
};

// Gibbs sampler over parents, background rates, impulse coefficients, weights,
// adjacency and the network prior's (p, v).
//
// Parent counts are stored only for bins with at least one event; slot 0 is the
// background and slot 1 + k * B + b is basis b of source k.
class GibbsSampler {
  public:
    GibbsSampler(CountMatrix S, BasisSet basis, HyperParams hyper, ErdosRenyiPrior prior,
                 ModelParams init, std::uint64_t seed, GibbsOptions opts = {})
        : basis_(std::move(basis)), hyper_(std::move(hyper)), prior_(std::move(prior)),
          params_(std::move(init)), opts_(opts), rng_(seed) {
        hyper_.validate(basis_.B);
        params_.validate();
        if (params_.B() != basis_.B || prior_.K() != params_.K()) {
            throw std::invalid_argument("GibbsSampler: parameter shapes do not match basis or prior");
        }
        enforce_support();
        set_counts(std::move(S));
    }

    // Replaces the observed counts and invalidates the parents.
    void set_counts(CountMatrix S) {
        S.validate();
        if (S.K != params_.K()) {
            throw std::invalid_argument("GibbsSampler: counts have the wrong number of processes");
        }
        if (basis_.D >= S.T) {
            throw std::invalid_argument("GibbsSampler: require D < T");
        }
        S_ = std::move(S);
        shat_ = convolve_counts(S_, basis_);
        const std::size_t K = S_.K;
        active_.clear();
        col_bins_.assign(K, {});
        for (std::size_t t = 0; t < S_.T; ++t) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                if (S_(t, kp) > 0) {
                    active_.push_back(t * K + kp);
                    col_bins_[kp].push_back(static_cast<std::uint32_t>(t));
                }
            }
        }
        parents_.assign(active_.size() * slots(), 0);
        parents_valid_ = false;
        rates_fresh_ = false;
        Z0_.assign(K, 0);
        Zw_ = Tensor3<std::int64_t>(K, K, basis_.B, 0);
    }

    void set_params(ModelParams params) {
        params.validate();
        if (params.K() != params_.K() || params.B() != params_.B()) {
            throw std::invalid_argument("GibbsSampler: parameter shape mismatch");
        }
        params_ = std::move(params);
        enforce_support();
        parents_valid_ = false;
    }

    [[nodiscard]] const CountMatrix& counts() const noexcept { return S_; }
    [[nodiscard]] const ConvolvedCounts& shat() const noexcept { return shat_; }
    [[nodiscard]] const BasisSet& basis() const noexcept { return basis_; }
    [[nodiscard]] const HyperParams& hyper() const noexcept { return hyper_; }
    [[nodiscard]] const ModelParams& params() const noexcept { return params_; }
    [[nodiscard]] const ErdosRenyiPrior& prior() const noexcept { return prior_; }
    [[nodiscard]] ErdosRenyiPrior& prior() noexcept { return prior_; }
    [[nodiscard]] const GibbsOptions& options() const noexcept { return opts_; }
    [[nodiscard]] Rng& rng() noexcept { return rng_; }
    [[nodiscard]] std::size_t sweeps() const noexcept { return sweeps_; }
    void set_sweeps(std::size_t n) noexcept { sweeps_ = n; }
    [[nodiscard]] bool parents_valid() const noexcept { return parents_valid_; }
    [[nodiscard]] std::size_t slots() const noexcept { return 1 + params_.K() * basis_.B; }
    [[nodiscard]] std::size_t active_bins() const noexcept { return active_.size(); }

    // z_{t,k'}[slot]; zero for bins without events.
    [[nodiscard]] Count parent_count(std::size_t t, std::size_t kp, std::size_t slot) const {
        const std::size_t flat = t * S_.K + kp;
        const auto it = std::lower_bound(active_.begin(), active_.end(), flat);
        if (it == active_.end() || *it != flat) {
            return 0;
        }
        return parents_[static_cast<std::size_t>(it - active_.begin()) * slots() + slot];
    }
    [[nodiscard]] std::int64_t background_parent_total(std::size_t kp) const { return Z0_[kp]; }
    [[nodiscard]] std::int64_t impulse_parent_total(std::size_t k, std::size_t kp, std::size_t b) const {
        return Zw_(k, kp, b);
    }

    // Normalized attribution probabilities u_{t,k'} over all 1 + K*B slots.
    [[nodiscard]] std::vector<double> parent_probabilities(std::size_t t, std::size_t kp) const {
        const std::size_t K = params_.K(), B = basis_.B;
        std::vector<double> u(slots(), 0.0);
        u[0] = params_.lambda0[kp];
        double total = u[0];
        for (std::size_t k = 0; k < K; ++k) {
            const double w = params_.W(k, kp);
            for (std::size_t b = 0; b < B; ++b) {
                const double v = w * params_.g(k, kp, b) * shat_(t, k, b);
                u[1 + k * B + b] = v;
                total += v;
            }
        }
        if (!(total > 0.0)) {
            throw InconsistentStateError("parent_probabilities: zero total rate at bin " +
                                         std::to_string(t) + ", process " + std::to_string(kp));
        }
        for (double& x : u) {
            x /= total;
        }
        return u;
    }

    // Conjugate conditionals given the current parents and parameters.
    [[nodiscard]] GammaParams background_conditional(std::size_t kp) const {
        require_parents();
        return {hyper_.alpha_lambda + static_cast<double>(Z0_[kp]),
                hyper_.beta_lambda + static_cast<double>(S_.T) * S_.dt};
    }
    [[nodiscard]] std::vector<double> impulse_conditional(std::size_t k, std::size_t kp) const {
        require_parents();
        std::vector<double> a(basis_.B);
        for (std::size_t b = 0; b < basis_.B; ++b) {
            a[b] = hyper_.gamma[b] + static_cast<double>(Zw_(k, kp, b));
        }
        return a;
    }
    [[nodiscard]] GammaParams weight_conditional(std::size_t k, std::size_t kp) const {
        require_parents();
        double z = 0.0;
        for (std::size_t b = 0; b < basis_.B; ++b) {
            z += static_cast<double>(Zw_(k, kp, b));
        }
        return {hyper_.kappa + z, prior_.v() + effective_exposure(k, kp, params_.g.fiber(k, kp))};
    }

    // sum_b g_b * exposure(k, b) under the configured exposure mode.
    [[nodiscard]] double effective_exposure(std::size_t k, std::size_t /*kp*/,
                                            std::span<const double> g) const {
        double e = 0.0;
        for (std::size_t b = 0; b < basis_.B; ++b) {
            e += g[b] * basis_exposure(shat_, k, b, opts_.exposure);
        }
        return e;
    }

    void sweep() {
        resample_parents();
        if (opts_.update_background) {
            resample_background();
        }
        if (opts_.update_impulse) {
            resample_impulse();
        }
        if (opts_.update_weights) {
            resample_weights();
        }
        if (opts_.update_adjacency) {
            resample_adjacency();
        }
        if (opts_.update_network) {
            resample_network();
        }
        ++sweeps_;
    }

    void resample_parents() {
        const std::size_t K = params_.K(), B = basis_.B, nslots = slots();
        // Per-column list of sources with nonzero weight.
        std::vector<std::vector<std::size_t>> sources(K);
        for (std::size_t kp = 0; kp < K; ++kp) {
            for (std::size_t k = 0; k < K; ++k) {
                if (params_.W(k, kp) > 0.0) {
                    sources[kp].push_back(k);
                }
            }
        }
        constexpr std::size_t chunk = 4096;
        const std::size_t nchunks = (active_.size() + chunk - 1) / chunk;
        const std::uint64_t base = rng_();
        std::vector<std::vector<std::int64_t>> partial(nchunks);
        parallel_chunks(active_.size(), chunk, [&](std::size_t i0, std::size_t i1) {
            const std::size_t c = i0 / chunk;
            Rng local(mix_seed(base ^ mix_seed(c)));
            std::vector<std::int64_t>& acc = partial[c];
            acc.assign(K * nslots, 0); // per target column
            std::vector<double> w(nslots);
            std::vector<std::size_t> idx(nslots);
            std::vector<Count> draw(nslots);
            for (std::size_t i = i0; i < i1; ++i) {
                const std::size_t flat = active_[i];
                const std::size_t t = flat / K, kp = flat % K;
                const Count s = S_.data[flat];
                std::size_t n = 0;
                double total = params_.lambda0[kp];
                w[n] = total;
                idx[n++] = 0;
                for (std::size_t k : sources[kp]) {
                    const double wkk = params_.W(k, kp);
                    const double* sh = shat_.shat.data() + (t * K + k) * B;
                    for (std::size_t b = 0; b < B; ++b) {
                        const double v = wkk * params_.g(k, kp, b) * sh[b];
                        if (v > 0.0) {
                            w[n] = v;
                            idx[n++] = 1 + k * B + b;
                            total += v;
                        }
                    }
                }
                if (!(total > 0.0)) {
                    throw InconsistentStateError("resample_parents: zero rate with " + std::to_string(s) +
                                                 " events at bin " + std::to_string(t) + ", process " +
                                                 std::to_string(kp));
                }
                sample_multinomial<Count>(local, s, std::span<const double>(w.data(), n), total,
                                          std::span<Count>(draw.data(), n));
                Count* z = parents_.data() + i * nslots;
                std::fill(z, z + nslots, 0);
                std::int64_t* a = acc.data() + kp * nslots;
                for (std::size_t j = 0; j < n; ++j) {
                    z[idx[j]] = draw[j];
                    a[idx[j]] += draw[j];
                }
            }
        });
        std::fill(Z0_.begin(), Z0_.end(), 0);
        Zw_.fill(0);
        for (const auto& acc : partial) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                const std::int64_t* a = acc.data() + kp * nslots;
                Z0_[kp] += a[0];
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t b = 0; b < B; ++b) {
                        Zw_(k, kp, b) += a[1 + k * B + b];
                    }
                }
            }
        }
        parents_valid_ = true;
    }

    void resample_background() {
        for (std::size_t kp = 0; kp < params_.K(); ++kp) {
            const GammaParams c = background_conditional(kp);
            params_.lambda0[kp] = std::max(sample_gamma(rng_, c.shape, c.rate),
                                           std::numeric_limits<double>::min());
        }
        rates_fresh_ = false;
    }

    // With exact exposure the conditional of g carries an extra factor
    // exp(-W sum_b g_b E_b); an independence Metropolis step with the Dirichlet
    // proposal corrects for it. Under event-count exposure the factor is constant.
    void resample_impulse() {
        const std::size_t K = params_.K(), B = basis_.B;
        if (B == 1) {
            return;
        }
        std::vector<double> proposal(B);
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                const std::vector<double> a = impulse_conditional(k, kp);
                sample_dirichlet(rng_, a, proposal);
                const double w = params_.W(k, kp);
                auto g = params_.g.fiber(k, kp);
                if (opts_.exposure == ExposureMode::exact && w > 0.0) {
                    double delta = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                        delta += (proposal[b] - g[b]) * shat_.exposure(k, b);
                    }
                    const double log_accept = -w * delta;
                    if (log_accept < 0.0 && std::log(sample_uniform(rng_)) >= log_accept) {
                        continue;
                    }
                }
                clamp_simplex(proposal);
                std::copy(proposal.begin(), proposal.end(), g.begin());
            }
        }
        rates_fresh_ = false;
    }

    void resample_weights() {
        const std::size_t K = params_.K();
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                resample_weight_entry(k, kp);
            }
        }
    }

    void resample_weight_entry(std::size_t k, std::size_t kp) {
        if (!params_.A(k, kp)) {
            params_.W(k, kp) = 0.0;
            return;
        }
        const GammaParams c = weight_conditional(k, kp);
        params_.W(k, kp) = std::max(sample_gamma(rng_, c.shape, c.rate), std::numeric_limits<double>::min());
        rates_fresh_ = false;
    }

    // Joint Metropolis-Hastings move on (A, W) with parents integrated out. The proposal
    // is the prior, so the acceptance ratio is the column likelihood ratio.
    void resample_adjacency() {
        const std::size_t K = params_.K();
        refresh_column_rates();
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                resample_adjacency_entry(k, kp);
            }
        }
        parents_valid_ = false;
    }

    // Log-likelihood change for column k' when W(k, k') moves by delta_w.
    [[nodiscard]] double adjacency_delta_loglik(std::size_t k, std::size_t kp, double delta_w) {
        if (delta_w == 0.0) {
            return 0.0;
        }
        if (!rates_fresh_) {
            refresh_column_rates();
        }
        const std::size_t K = params_.K(), B = basis_.B;
        const auto g = params_.g.fiber(k, kp);
        const auto& bins = col_bins_[kp];
        auto& x = scratch_;
        x.resize(bins.size());
        double ll = -delta_w * effective_exposure(k, kp, g);
        const std::vector<double>& lam = col_rates_[kp];
        for (std::size_t i = 0; i < bins.size(); ++i) {
            const std::size_t t = bins[i];
            const double* sh = shat_.shat.data() + (t * K + k) * B;
            double xi = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                xi += g[b] * sh[b];
            }
            x[i] = xi;
            if (xi == 0.0) {
                continue;
            }
            const double ratio = delta_w * xi / lam[i];
            if (ratio <= -1.0) {
                return -std::numeric_limits<double>::infinity();
            }
            ll += S_(t, kp) * std::log1p(ratio);
        }
        return ll;
    }

    void resample_adjacency_entry(std::size_t k, std::size_t kp) {
        const bool a_new = sample_bernoulli(rng_, prior_.p());
        const double w_new = a_new ? std::max(sample_gamma(rng_, hyper_.kappa, prior_.v()),
                                              std::numeric_limits<double>::min())
                                   : 0.0;
        const double delta = w_new - params_.W(k, kp);
        const double dll = adjacency_delta_loglik(k, kp, delta);
        const double u = sample_uniform(rng_);
        if (dll < 0.0 && !(std::log(u) < dll)) {
            return;
        }
        params_.A(k, kp) = a_new ? 1 : 0;
        params_.W(k, kp) = w_new;
        if (delta != 0.0) {
            // adjacency_delta_loglik left x_t for this entry in scratch_.
            auto& lam = col_rates_[kp];
            for (std::size_t i = 0; i < lam.size(); ++i) {
                lam[i] += delta * scratch_[i];
            }
        }
        parents_valid_ = false;
    }

    void resample_network() { prior_.gibbs_update(params_.A, params_.W, hyper_.kappa, rng_); }

    // Rates at bins with events, column by column, recomputed from scratch.
    void refresh_column_rates() {
        const std::size_t K = params_.K(), B = basis_.B;
        col_rates_.assign(K, {});
        for (std::size_t kp = 0; kp < K; ++kp) {
            auto& lam = col_rates_[kp];
            lam.resize(col_bins_[kp].size());
            for (std::size_t i = 0; i < lam.size(); ++i) {
                const std::size_t t = col_bins_[kp][i];
                double acc = params_.lambda0[kp];
                for (std::size_t k = 0; k < K; ++k) {
                    const double w = params_.W(k, kp);
                    if (w == 0.0) {
                        continue;
                    }
                    const double* sh = shat_.shat.data() + (t * K + k) * B;
                    for (std::size_t b = 0; b < B; ++b) {
                        acc += w * params_.g(k, kp, b) * sh[b];
                    }
                }
                lam[i] = acc;
            }
        }
        rates_fresh_ = true;
    }

    // Parent-marginalized log likelihood (with the configured exposure) plus all log priors.
    [[nodiscard]] double log_likelihood() const {
        const std::size_t K = params_.K(), B = basis_.B;
        double ll = 0.0;
        for (std::size_t kp = 0; kp < K; ++kp) {
            double mass = params_.lambda0[kp] * static_cast<double>(S_.T) * S_.dt;
            for (std::size_t k = 0; k < K; ++k) {
                mass += params_.W(k, kp) * effective_exposure(k, kp, params_.g.fiber(k, kp));
            }
            ll -= mass;
            for (std::uint32_t t : col_bins_[kp]) {
                double lam = params_.lambda0[kp];
                for (std::size_t k = 0; k < K; ++k) {
                    const double w = params_.W(k, kp);
                    if (w == 0.0) {
                        continue;
                    }
                    for (std::size_t b = 0; b < B; ++b) {
                        lam += w * params_.g(k, kp, b) * shat_(t, k, b);
                    }
                }
                const Count s = S_(t, kp);
                if (lam <= 0.0) {
                    return -std::numeric_limits<double>::infinity();
                }
                ll += s * std::log(std::max(lam * S_.dt, kRateFloor)) - log_factorial(s);
            }
        }
        return ll;
    }

    [[nodiscard]] double log_prior() const {
        const std::size_t K = params_.K(), B = basis_.B;
        const double a = hyper_.alpha_lambda, b0 = hyper_.beta_lambda;
        double lp = 0.0;
        for (double l : params_.lambda0) {
            lp += a * std::log(b0) - log_gamma(a) + (a - 1.0) * std::log(l) - b0 * l;
        }
        double gsum = 0.0, lbeta = 0.0;
        for (double g : hyper_.gamma) {
            gsum += g;
            lbeta += log_gamma(g);
        }
        lbeta -= log_gamma(gsum);
        const double p = prior_.p(), v = prior_.v(), kappa = hyper_.kappa;
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                if (B > 1) {
                    lp -= lbeta;
                    for (std::size_t bb = 0; bb < B; ++bb) {
                        lp += (hyper_.gamma[bb] - 1.0) * std::log(params_.g(k, kp, bb));
                    }
                }
                if (params_.A(k, kp)) {
                    const double w = params_.W(k, kp);
                    lp += std::log(p) + kappa * std::log(v) - log_gamma(kappa) +
                          (kappa - 1.0) * std::log(w) - v * w;
                } else {
                    lp += std::log1p(-p);
                }
            }
        }
        return lp + prior_.log_density();
    }

    [[nodiscard]] double log_joint() const { return log_likelihood() + log_prior(); }

  private:
    void require_parents() const {
        if (!parents_valid_) {
            throw InconsistentStateError("GibbsSampler: parents are stale; call resample_parents first");
        }
    }

    void enforce_support() {
        const std::size_t K = params_.K();
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                if (!params_.A(k, kp)) {
                    params_.W(k, kp) = 0.0;
                } else if (params_.W(k, kp) <= 0.0) {
                    params_.W(k, kp) = std::numeric_limits<double>::min();
                }
                clamp_simplex(params_.g.fiber(k, kp));
            }
        }
        for (double& l : params_.lambda0) {
            l = std::max(l, std::numeric_limits<double>::min());
        }
        rates_fresh_ = false;
    }

    // Keeps g on the open simplex so log densities stay finite. Vectors already on it
    // are left bit-for-bit unchanged, which keeps checkpoint restores exact.
    static void clamp_simplex(std::span<double> g) {
        double sum = 0.0;
        bool clamped = false;
        for (double& x : g) {
            if (x < 1e-300) {
                x = 1e-300;
                clamped = true;
            }
            sum += x;
        }
        if (!clamped && std::abs(sum - 1.0) <= 1e-12) {
            return;
        }
        for (double& x : g) {
            x /= sum;
        }
    }

    CountMatrix S_;
    BasisSet basis_;
    HyperParams hyper_;
    ErdosRenyiPrior prior_;
    ModelParams params_;
    GibbsOptions opts_;
    Rng rng_;
    ConvolvedCounts shat_;

    std::vector<std::size_t> active_;                  // flat t * K + k' of bins with events
    std::vector<std::vector<std::uint32_t>> col_bins_; // per column, bins with events
    std::vector<Count> parents_;                       // active_.size() x slots()
    std::vector<std::int64_t> Z0_;                     // per k', sum_t z^(0)
    Tensor3<std::int64_t> Zw_;                         // (k, k', b), sum_t z^(k,b)
    bool parents_valid_ = false;

    std::vector<std::vector<double>> col_rates_;
    std::vector<double> scratch_;
    bool rates_fresh_ = false;
    std::size_t sweeps_ = 0;
};

} // namespace nethawkes
