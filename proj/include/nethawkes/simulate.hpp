#pragma once

#include "nethawkes/core.hpp"
#include "nethawkes/netprior.hpp"
#include "nethawkes/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

namespace nethawkes {

struct StabilityReport {
    bool stable = true;
    double spectral_radius = 0.0;
};

namespace detail {

// Strongly connected components of the graph with an edge i -> j wherever W(i, j) > 0.
inline std::vector<std::vector<std::size_t>> strong_components(const Matrix<double>& W) {
    const std::size_t K = W.rows();
    constexpr std::size_t none = static_cast<std::size_t>(-1);
    std::vector<std::size_t> index(K, none), low(K, 0), stack;
    std::vector<bool> on_stack(K, false);
    std::vector<std::vector<std::size_t>> comps;
    std::size_t counter = 0;
    // Iterative Tarjan: frames hold (node, next neighbour to visit).
    std::vector<std::pair<std::size_t, std::size_t>> frames;
    for (std::size_t root = 0; root < K; ++root) {
        if (index[root] != none) {
            continue;
        }
        frames.push_back({root, 0});
        index[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!frames.empty()) {
            auto& [v, next] = frames.back();
            bool descended = false;
            while (next < K) {
                const std::size_t w = next++;
                if (!(W(v, w) > 0.0)) {
                    continue;
                }
                if (index[w] == none) {
                    index[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    frames.push_back({w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
            }
            if (descended) {
                continue;
            }
            const std::size_t node = v;
            if (low[node] == index[node]) {
                std::vector<std::size_t> comp;
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp.push_back(w);
                } while (w != node);
                std::sort(comp.begin(), comp.end());
                comps.push_back(std::move(comp));
            }
            frames.pop_back();
            if (!frames.empty()) {
                const std::size_t parent = frames.back().first;
                low[parent] = std::min(low[parent], low[node]);
            }
        }
    }
    return comps;
}

// Perron root of an irreducible nonnegative block by power iteration on W + I. The shift
// makes the block primitive, and the Collatz-Wielandt bounds bracket the root at every step.
inline double irreducible_radius(const Matrix<double>& W, const std::vector<std::size_t>& nodes,
                                 std::size_t max_iters, double tol) {
    const std::size_t n = nodes.size();
    std::vector<double> x(n, 1.0), y(n);
    double lo = 0.0, hi = 0.0;
    for (std::size_t it = 0; it < max_iters; ++it) {
        lo = std::numeric_limits<double>::infinity();
        hi = 0.0;
        double norm = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double acc = x[j];
            for (std::size_t i = 0; i < n; ++i) {
                acc += W(nodes[i], nodes[j]) * x[i]; // (W^T + I) x has the same spectrum
            }
            y[j] = acc;
            lo = std::min(lo, acc / x[j]);
            hi = std::max(hi, acc / x[j]);
            norm = std::max(norm, acc);
        }
        for (std::size_t j = 0; j < n; ++j) {
            x[j] = y[j] / norm;
        }
        if (hi - lo <= tol * hi) {
            break;
        }
    }
    return 0.5 * (lo + hi) - 1.0;
}

} // namespace detail

// Spectral radius of a nonnegative W: the largest Perron root over its strongly connected
// components. A component without internal edges contributes zero.
inline StabilityReport check_stability(const Matrix<double>& W, std::size_t max_iters = 100000,
                                       double tol = 1e-13) {
    const std::size_t K = W.rows();
    if (W.cols() != K) {
        throw std::invalid_argument("check_stability: W must be square");
    }
    for (double w : W.data()) {
        if (!(w >= 0.0)) {
            throw std::invalid_argument("check_stability: W must be nonnegative");
        }
    }
    double radius = 0.0;
    for (const auto& comp : detail::strong_components(W)) {
        if (comp.size() == 1) {
            radius = std::max(radius, W(comp[0], comp[0]));
        } else {
            radius = std::max(radius, detail::irreducible_radius(W, comp, max_iters, tol));
        }
    }
    radius = std::max(0.0, radius);
    return {radius < 1.0, radius};
}

struct SimConfig {
    Dims dims;
    std::uint64_t seed = 0;
    ModelParams params;
    BasisSet basis;
    bool warn_unstable = true;
};

inline constexpr double kExplosiveMean = 1e9;

// Sequential conditional sampling: at each bin the rate depends only on earlier bins,
// and counts across processes are independent Poisson draws.
inline CountMatrix sample_forward(const SimConfig& cfg) {
    const Dims& dims = cfg.dims;
    dims.validate();
    cfg.basis.validate();
    cfg.params.validate();
    const std::size_t T = dims.T, K = dims.K, B = dims.B, D = dims.D;
    if (cfg.params.K() != K || cfg.params.B() != B || cfg.basis.B != B || cfg.basis.D != D ||
        std::abs(cfg.basis.dt - dims.dt) > 1e-12 * std::max(1.0, dims.dt)) {
        throw std::invalid_argument("sample_forward: params or basis inconsistent with dims");
    }
    const StabilityReport stab = check_stability(cfg.params.W);
    if (!stab.stable && cfg.warn_unstable) {
        std::clog << "warning: spectral radius " << stab.spectral_radius
                  << " >= 1; the process is not stationary\n";
    }

    // kernel(k, k', d - 1) = sum_b W(k,k') g(k,k',b) phi_b[d]
    Tensor3<double> kernel(K, K, D, 0.0);
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t kp = 0; kp < K; ++kp) {
            const double w = cfg.params.W(k, kp);
            if (w == 0.0) {
                continue;
            }
            edges.emplace_back(k, kp);
            for (std::size_t d = 1; d <= D; ++d) {
                double acc = 0.0;
                for (std::size_t b = 0; b < B; ++b) {
                    acc += cfg.params.g(k, kp, b) * cfg.basis.at(b, d);
                }
                kernel(k, kp, d - 1) = w * acc;
            }
        }
    }

    CountMatrix S(T, K, dims.dt);
    Rng rng(cfg.seed);
    // Ring buffer of pending network input: slot (t mod (D + 1)) holds input to bin t.
    const std::size_t R = D + 1;
    Matrix<double> pending(R, K, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        auto input = pending.row(t % R);
        for (std::size_t k = 0; k < K; ++k) {
            const double mean = (cfg.params.lambda0[k] + input[k]) * dims.dt;
            if (mean > kExplosiveMean) {
                throw ExplosiveProcessError("sample_forward: expected count " + std::to_string(mean) +
                                            " at bin " + std::to_string(t) + " exceeds overflow guard");
            }
            S(t, k) = sample_poisson<Count>(rng, mean);
        }
        std::fill(input.begin(), input.end(), 0.0);
        for (const auto& [k, kp] : edges) {
            const Count s = S(t, k);
            if (s == 0) {
                continue;
            }
            for (std::size_t d = 1; d <= D && t + d < T; ++d) {
                pending((t + d) % R, kp) += s * kernel(k, kp, d - 1);
            }
        }
    }
    return S;
}

// Parameters drawn from the model prior given the network point (p, v).
inline ModelParams sample_params_from_prior(std::size_t K, std::size_t B, const HyperParams& hyper,
                                            double p, double v, Rng& rng) {
    hyper.validate(B);
    ModelParams params(K, B);
    for (std::size_t k = 0; k < K; ++k) {
        params.lambda0[k] = sample_gamma(rng, hyper.alpha_lambda, hyper.beta_lambda);
    }
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t kp = 0; kp < K; ++kp) {
            params.A(k, kp) = sample_bernoulli(rng, p) ? 1 : 0;
            params.W(k, kp) = params.A(k, kp) ? sample_gamma(rng, hyper.kappa, v) : 0.0;
            sample_dirichlet(rng, hyper.gamma, params.g.fiber(k, kp));
        }
    }
    return params;
}

struct SyntheticNetworkConfig {
    std::size_t K = 10;
    std::size_t B = 1;
    double p = 0.25;
    double weight_shape = 3.0;
    double weight_rate = 15.0;
    double lambda0_mean = 1.0;
    double lambda0_shape = 1.0;   // background rates ~ Gamma(shape, shape / mean); 0 = constant
    bool include_diagonal = true;
    double target_radius = 0.0;   // > 0 rescales W to this spectral radius
    double impulse_concentration = 0.0; // > 0 draws g ~ Dirichlet(c); 0 = uniform g
};

// Erdos-Renyi network with gamma weights, as used by the synthetic experiments.
inline ModelParams make_synthetic_params(const SyntheticNetworkConfig& cfg, Rng& rng) {
    if (cfg.K == 0 || cfg.B == 0 || !(cfg.p >= 0.0 && cfg.p <= 1.0) || !(cfg.weight_shape > 0.0) ||
        !(cfg.weight_rate > 0.0) || !(cfg.lambda0_mean >= 0.0) || cfg.lambda0_shape < 0.0) {
        throw std::invalid_argument("make_synthetic_params: invalid configuration");
    }
    const std::size_t K = cfg.K, B = cfg.B;
    ModelParams params(K, B);
    for (std::size_t k = 0; k < K; ++k) {
        params.lambda0[k] = cfg.lambda0_shape > 0.0
                                ? sample_gamma(rng, cfg.lambda0_shape, cfg.lambda0_shape / cfg.lambda0_mean)
                                : cfg.lambda0_mean;
    }
    std::vector<double> conc(B, cfg.impulse_concentration);
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t kp = 0; kp < K; ++kp) {
            const bool allowed = cfg.include_diagonal || k != kp;
            params.A(k, kp) = allowed && sample_bernoulli(rng, cfg.p) ? 1 : 0;
            params.W(k, kp) = params.A(k, kp) ? sample_gamma(rng, cfg.weight_shape, cfg.weight_rate) : 0.0;
            if (cfg.impulse_concentration > 0.0) {
                sample_dirichlet(rng, conc, params.g.fiber(k, kp));
            }
        }
    }
    if (cfg.target_radius > 0.0) {
        const double r = check_stability(params.W).spectral_radius;
        if (r > 0.0) {
            for (double& w : params.W.data()) {
                w *= cfg.target_radius / r;
            }
        }
    }
    return params;
}

} // namespace nethawkes
