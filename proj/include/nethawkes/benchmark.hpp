#pragma once

#include "nethawkes/gibbs.hpp"
#include "nethawkes/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <vector>

namespace nethawkes {

struct BenchmarkConfig {
    Dims dims{10000, 20, 3, 10, 1.0};
    std::vector<double> events_per_bin{1.0, 10.0, 100.0};
    std::size_t sweeps = 3;        // timed sweeps per grid point, after one warm-up sweep
    double p = 0.25;
    double target_radius = 0.5;
    std::uint64_t seed = 0;
    ExposureMode exposure = ExposureMode::exact;
};

struct BenchmarkRow {
    double events_per_bin = 0.0;   // requested mean events per bin and process
    double observed_per_bin = 0.0; // realized mean in the simulated counts
    double seconds_per_sweep = 0.0; // median over the timed sweeps
};

// Stationary mean rates x = lambda0 + W^T x by fixed-point iteration (requires radius < 1).
inline std::vector<double> stationary_rates(const ModelParams& p, std::size_t iters = 10000) {
    const std::size_t K = p.K();
    std::vector<double> x(p.lambda0), y(K);
    for (std::size_t it = 0; it < iters; ++it) {
        double change = 0.0;
        for (std::size_t kp = 0; kp < K; ++kp) {
            double acc = p.lambda0[kp];
            for (std::size_t k = 0; k < K; ++k) {
                acc += p.W(k, kp) * x[k];
            }
            y[kp] = acc;
            change = std::max(change, std::abs(acc - x[kp]) / std::max(acc, 1e-300));
        }
        x.swap(y);
        if (change < 1e-14) {
            break;
        }
    }
    return x;
}

// Times Gibbs sweeps on simulated data whose stationary mean count per bin matches
// each grid value. The network is drawn once and shared by every grid point.
inline std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& cfg) {
    cfg.dims.validate();
    if (cfg.events_per_bin.empty() || cfg.sweeps == 0) {
        throw std::invalid_argument("run_benchmark: need a non-empty grid and at least one sweep");
    }
    if (!(cfg.target_radius > 0.0 && cfg.target_radius < 1.0)) {
        throw std::invalid_argument("run_benchmark: target radius must lie in (0, 1)");
    }
    const Dims& d = cfg.dims;
    Rng rng(cfg.seed);
    SyntheticNetworkConfig net;
    net.K = d.K;
    net.B = d.B;
    net.p = cfg.p;
    net.target_radius = cfg.target_radius;
    net.lambda0_shape = 0.0;
    net.lambda0_mean = 1.0;
    net.impulse_concentration = d.B > 1 ? 2.0 : 0.0;
    const ModelParams base = make_synthetic_params(net, rng);
    const std::vector<double> unit = stationary_rates(base);
    double unit_mean = 0.0;
    for (double x : unit) {
        unit_mean += x / static_cast<double>(d.K);
    }
    const BasisSet basis = make_basis(d, BasisKind::gaussian_bumps);

    std::vector<BenchmarkRow> rows;
    for (std::size_t gi = 0; gi < cfg.events_per_bin.size(); ++gi) {
        const double m = cfg.events_per_bin[gi];
        if (!(m > 0.0)) {
            throw std::invalid_argument("run_benchmark: events per bin must be positive");
        }
        ModelParams truth = base;
        for (double& l : truth.lambda0) {
            l = m / (unit_mean * d.dt);
        }
        SimConfig sc{d, mix_seed(cfg.seed + gi + 1), truth, basis, false};
        const CountMatrix S = sample_forward(sc);
        GibbsOptions opts;
        opts.exposure = cfg.exposure;
        GibbsSampler sampler(S, basis, HyperParams::defaults(d.B), ErdosRenyiPrior(d.K, {}), truth,
                             mix_seed(cfg.seed ^ (gi + 101)), opts);
        sampler.sweep();
        std::vector<double> times;
        for (std::size_t i = 0; i < cfg.sweeps; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            sampler.sweep();
            times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        std::sort(times.begin(), times.end());
        rows.push_back({m, static_cast<double>(S.total()) / static_cast<double>(d.T * d.K),
                        times[times.size() / 2]});
    }
    return rows;
}

} // namespace nethawkes
