#pragma once

#include "nethawkes/core.hpp"
#include "nethawkes/netprior.hpp"
#include "nethawkes/vi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace nethawkes {

struct MapConfig {
    double l1_scale = 0.0; // exponential-prior rate theta on every weight
    std::size_t max_iters = 500;
    double tol = 1e-8;     // relative objective change
    std::vector<double> cv_grid{0.0, 1.0, 10.0, 100.0};
    double cv_fraction = 0.2;
    ExposureMode exposure = ExposureMode::exact;

    void validate() const {
        if (!(l1_scale >= 0.0) || !(tol > 0.0) || max_iters == 0) {
            throw std::invalid_argument("MapConfig: require l1_scale >= 0, tol > 0 and max_iters >= 1");
        }
        if (!(cv_fraction > 0.0 && cv_fraction < 1.0)) {
            throw std::invalid_argument("MapConfig: cv_fraction must lie in (0, 1)");
        }
    }
};

struct MapResult {
    ModelParams params;             // dense: A = 1 everywhere
    std::vector<double> objective;  // penalized log likelihood after each iteration
    std::size_t iterations = 0;
    bool converged = false;
};

inline constexpr double kMapRateFloor = 1e-10;

namespace detail {

// Penalized log likelihood sum_{t,k'} [s ln(lambda dt) - ln s!] - sum lambda dt - theta sum W
// using the configured exposure for the compensator.
inline double map_objective(const CountMatrix& S, const ConvolvedCounts& shat, const ModelParams& p,
                            double theta, ExposureMode mode) {
    const std::size_t K = S.K, B = shat.B;
    double obj = 0.0;
    for (std::size_t t = 0; t < S.T; ++t) {
        for (std::size_t kp = 0; kp < K; ++kp) {
            const Count s = S(t, kp);
            if (s == 0) {
                continue;
            }
            double lam = p.lambda0[kp];
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t b = 0; b < B; ++b) {
                    lam += p.W(k, kp) * p.g(k, kp, b) * shat(t, k, b);
                }
            }
            if (lam <= 0.0) {
                return -std::numeric_limits<double>::infinity();
            }
            obj += s * std::log(std::max(lam * S.dt, kRateFloor)) - log_factorial(s);
        }
    }
    for (std::size_t kp = 0; kp < K; ++kp) {
        obj -= p.lambda0[kp] * static_cast<double>(S.T) * S.dt;
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t b = 0; b < B; ++b) {
                obj -= p.W(k, kp) * p.g(k, kp, b) * basis_exposure(shat, k, b, mode);
            }
            obj -= theta * p.W(k, kp);
        }
    }
    return obj;
}

} // namespace detail

// EM for the dense model with an exponential (L1) prior on the weights. Writing
// h_b = W g_b, the M-step maximizes sum_b [m_b ln h_b - h_b (E_b + theta)], giving
// h_b = m_b / (E_b + theta), W = sum_b h_b and g = h / W.
inline MapResult map_fit(const CountMatrix& S, const BasisSet& basis, const MapConfig& cfg,
                         const ModelParams* init = nullptr) {
    cfg.validate();
    if (basis.D >= S.T) {
        throw std::invalid_argument("map_fit: require D < T");
    }
    const ConvolvedCounts shat = convolve_counts(S, basis);
    const std::size_t K = S.K, B = basis.B, T = S.T;
    const double duration = static_cast<double>(T) * S.dt;
    MapResult res;
    if (init) {
        init->validate();
        if (init->K() != K || init->B() != B) {
            throw std::invalid_argument("map_fit: initial parameters have the wrong shape");
        }
        res.params = *init;
        res.params.A.fill(1);
    } else {
        res.params = ModelParams(K, B);
        res.params.A.fill(1);
        for (std::size_t k = 0; k < K; ++k) {
            res.params.lambda0[k] = std::max(0.5 * shat.totals[k] / duration, kMapRateFloor);
        }
        res.params.W.fill(0.5 / static_cast<double>(K));
    }
    ModelParams& p = res.params;
    double prev = detail::map_objective(S, shat, p, cfg.l1_scale, cfg.exposure);
    std::vector<double> r0(K);
    Tensor3<double> m(K, K, B);
    std::vector<double> w(1 + K * B);
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        std::fill(r0.begin(), r0.end(), 0.0);
        m.fill(0.0);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                const Count s = S(t, kp);
                if (s == 0) {
                    continue;
                }
                double total = p.lambda0[kp];
                w[0] = total;
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t b = 0; b < B; ++b) {
                        const double v = p.W(k, kp) * p.g(k, kp, b) * shat(t, k, b);
                        w[1 + k * B + b] = v;
                        total += v;
                    }
                }
                const double scale = s / total;
                r0[kp] += w[0] * scale;
                for (std::size_t k = 0; k < K; ++k) {
                    for (std::size_t b = 0; b < B; ++b) {
                        m(k, kp, b) += w[1 + k * B + b] * scale;
                    }
                }
            }
        }
        for (std::size_t kp = 0; kp < K; ++kp) {
            p.lambda0[kp] = std::max(r0[kp] / duration, kMapRateFloor);
        }
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                double wsum = 0.0;
                std::vector<double> h(B);
                for (std::size_t b = 0; b < B; ++b) {
                    const double denom = basis_exposure(shat, k, b, cfg.exposure) + cfg.l1_scale;
                    h[b] = m(k, kp, b) > 0.0 ? m(k, kp, b) / denom : 0.0;
                    wsum += h[b];
                }
                p.W(k, kp) = wsum;
                if (wsum > 0.0) {
                    for (std::size_t b = 0; b < B; ++b) {
                        p.g(k, kp, b) = h[b] / wsum;
                    }
                }
            }
        }
        const double obj = detail::map_objective(S, shat, p, cfg.l1_scale, cfg.exposure);
        if (!std::isfinite(obj)) {
            std::ostringstream os;
            os << "map_fit: objective became non-finite (" << obj << ") at iteration " << it
               << "; previous value " << prev;
            throw std::runtime_error(os.str());
        }
        res.objective.push_back(obj);
        res.iterations = it + 1;
        if (std::abs(obj - prev) <= cfg.tol * std::max(1.0, std::abs(prev))) {
            res.converged = true;
            break;
        }
        prev = obj;
    }
    return res;
}

struct CrossValidationResult {
    double best = 0.0;
    std::vector<double> grid;
    std::vector<double> heldout_loglik;
};

// Unpenalized log likelihood of bins [t0, T) under params, with history from all of S.
inline double heldout_loglik(const CountMatrix& S, const ConvolvedCounts& shat, const ModelParams& p,
                             std::size_t t0) {
    const Matrix<double> rates = compute_rates(p, shat);
    double ll = 0.0;
    for (std::size_t t = t0; t < S.T; ++t) {
        for (std::size_t k = 0; k < S.K; ++k) {
            const double lam = rates(t, k);
            const Count s = S(t, k);
            if (s > 0) {
                if (lam <= 0.0) {
                    return -std::numeric_limits<double>::infinity();
                }
                ll += s * std::log(std::max(lam * S.dt, kRateFloor)) - log_factorial(s);
            }
            ll -= lam * S.dt;
        }
    }
    return ll;
}

// Fits on a temporal prefix and scores the held-out suffix for every theta; ties within
// a relative 1e-9 go to the smallest theta.
inline CrossValidationResult cross_validate(const CountMatrix& S, const BasisSet& basis, const MapConfig& cfg) {
    cfg.validate();
    if (cfg.cv_grid.empty()) {
        throw std::invalid_argument("cross_validate: empty regularization grid");
    }
    const std::size_t held = static_cast<std::size_t>(std::ceil(cfg.cv_fraction * static_cast<double>(S.T)));
    const std::size_t train_T = S.T - std::min(held, S.T);
    if (held == 0 || train_T <= basis.D) {
        throw std::invalid_argument("cross_validate: training prefix too short for the lag window");
    }
    CountMatrix train(train_T, S.K, S.dt);
    std::copy(S.data.begin(), S.data.begin() + static_cast<std::ptrdiff_t>(train_T * S.K), train.data.begin());
    const ConvolvedCounts full = convolve_counts(S, basis);

    CrossValidationResult res;
    res.grid = cfg.cv_grid;
    std::sort(res.grid.begin(), res.grid.end());
    for (double theta : res.grid) {
        if (!(theta >= 0.0)) {
            throw std::invalid_argument("cross_validate: grid values must be nonnegative");
        }
        MapConfig c = cfg;
        c.l1_scale = theta;
        const MapResult fit = map_fit(train, basis, c);
        res.heldout_loglik.push_back(heldout_loglik(S, full, fit.params, train_T));
    }
    const double best_ll = *std::max_element(res.heldout_loglik.begin(), res.heldout_loglik.end());
    for (std::size_t i = 0; i < res.grid.size(); ++i) {
        const double ll = res.heldout_loglik[i];
        if (ll == best_ll || std::abs(ll - best_ll) <= 1e-9 * std::max(1.0, std::abs(best_ll))) {
            res.best = res.grid[i];
            break;
        }
    }
    return res;
}

struct MapInitialization {
    ModelParams gibbs;
    VariationalState variational;
    std::vector<std::size_t> kept; // row-major indices of retained entries, largest first
};

// Keeps the largest ceil(p K^2) weights (stable sort, row-major tie-break) and builds
// peaked starting points for the samplers.
inline MapInitialization initialize_from_map(const ModelParams& dense, double p, const HyperParams& hyper,
                                             const ErdosRenyiPrior& prior) {
    if (!(p > 0.0 && p <= 1.0)) {
        throw std::invalid_argument("initialize_from_map: p must lie in (0, 1]");
    }
    dense.validate();
    const std::size_t K = dense.K(), B = dense.B();
    hyper.validate(B);
    const std::size_t n = K * K;
    const std::size_t keep = std::min<std::size_t>(
        n, static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return dense.W.data()[a] > dense.W.data()[b];
    });
    order.resize(keep);

    MapInitialization out;
    out.kept = order;
    out.gibbs = dense;
    out.gibbs.A.fill(0);
    out.gibbs.W.fill(0.0);
    for (std::size_t idx : order) {
        out.gibbs.A.data()[idx] = 1;
        out.gibbs.W.data()[idx] = dense.W.data()[idx];
    }

    const NetPriorExpectations ne = prior.expectations();
    VariationalState q(K, B);
    for (std::size_t k = 0; k < K; ++k) {
        q.alpha[k] = 100.0 * std::max(dense.lambda0[k], kMapRateFloor);
        q.beta[k] = 100.0;
        for (std::size_t kp = 0; kp < K; ++kp) {
            const bool kept = out.gibbs.A(k, kp) == 1;
            q.p(k, kp) = kept ? 0.999 : 0.001;
            if (kept) {
                q.kappa1(k, kp) = 100.0 * std::max(dense.W(k, kp), 1e-8);
                q.v1(k, kp) = 100.0;
            } else {
                q.kappa1(k, kp) = hyper.kappa;
                q.v1(k, kp) = ne.e_v(k, kp);
            }
            q.kappa0(k, kp) = hyper.kappa0;
            q.v0(k, kp) = hyper.nu0;
            for (std::size_t b = 0; b < B; ++b) {
                q.gamma(k, kp, b) = 1.0 + 100.0 * dense.g(k, kp, b);
                q.gamma_target(k, kp, b) = q.gamma(k, kp, b);
            }
        }
    }
    out.variational = std::move(q);
    return out;
}

} // namespace nethawkes
