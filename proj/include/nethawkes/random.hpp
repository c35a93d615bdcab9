#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace nethawkes {

using Rng = std::mt19937_64;

inline double sample_uniform(Rng& rng) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Gamma(shape, rate) with the shape/rate convention used throughout.
inline double sample_gamma(Rng& rng, double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

inline double sample_beta(Rng& rng, double a, double b) {
    const double x = sample_gamma(rng, a, 1.0);
    const double y = sample_gamma(rng, b, 1.0);
    return x / (x + y);
}

inline bool sample_bernoulli(Rng& rng, double p) { return sample_uniform(rng) < p; }

template <typename Int = std::int32_t>
Int sample_poisson(Rng& rng, double mean) {
    if (!(mean > 0.0)) {
        return 0;
    }
    return std::poisson_distribution<Int>(mean)(rng);
}

inline void sample_dirichlet(Rng& rng, std::span<const double> alpha, std::span<double> out) {
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        out[i] = sample_gamma(rng, alpha[i], 1.0);
        total += out[i];
    }
    if (total > 0.0) {
        for (double& x : out) {
            x /= total;
        }
    } else {
        // Every component underflowed; fall back to the mean.
        double asum = 0.0;
        for (double a : alpha) {
            asum += a;
        }
        for (std::size_t i = 0; i < alpha.size(); ++i) {
            out[i] = alpha[i] / asum;
        }
    }
}

// Binomial(n, q). Small means use sequential-search inversion on the pmf recursion.
template <typename Int>
Int sample_binomial(Rng& rng, Int n, double q) {
    if (n <= 0 || q <= 0.0) {
        return 0;
    }
    if (q >= 1.0) {
        return n;
    }
    const bool flip = q > 0.5;
    const double pp = flip ? 1.0 - q : q;
    if (static_cast<double>(n) * pp >= 10.0) {
        return std::binomial_distribution<Int>(n, q)(rng);
    }
    const double r = pp / (1.0 - pp);
    double pmf = std::pow(1.0 - pp, static_cast<double>(n));
    double u = sample_uniform(rng);
    Int x = 0;
    while (u > pmf && x < n) {
        u -= pmf;
        ++x;
        pmf *= r * static_cast<double>(n - x + 1) / static_cast<double>(x);
    }
    return flip ? n - x : x;
}

// Multinomial(n, weights / sum(weights)). Small n uses n categorical draws on the
// cumulative weights; larger n uses sequential conditional binomials. Zero-weight
// categories are never selected.
template <typename Int>
void sample_multinomial(Rng& rng, Int n, std::span<const double> weights, double total_weight,
                        std::span<Int> out) {
    std::fill(out.begin(), out.end(), Int{0});
    if (n == 0) {
        return;
    }
    if (n == 1) {
        // Single categorical draw by inversion.
        double u = sample_uniform(rng) * total_weight;
        std::size_t last = 0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) {
                continue;
            }
            last = i;
            if (u < weights[i]) {
                out[i] = 1;
                return;
            }
            u -= weights[i];
        }
        out[last] = 1;
        return;
    }
    if (static_cast<std::size_t>(n) < weights.size()) {
        thread_local std::vector<double> cum;
        cum.resize(weights.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            acc += std::max(weights[i], 0.0);
            cum[i] = acc;
        }
        for (Int d = 0; d < n; ++d) {
            const double u = sample_uniform(rng) * acc;
            auto it = std::upper_bound(cum.begin(), cum.end(), u);
            if (it == cum.end()) {
                --it;
            }
            // Step back over trailing zero-weight categories that share the same prefix sum.
            std::size_t i = static_cast<std::size_t>(it - cum.begin());
            while (weights[i] <= 0.0 && i > 0) {
                --i;
            }
            ++out[i];
        }
        return;
    }
    double remaining_mass = total_weight;
    Int remaining = n;
    std::size_t last = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] > 0.0) {
            last = i;
        }
    }
    for (std::size_t i = 0; i < weights.size() && remaining > 0; ++i) {
        const double w = weights[i];
        if (w <= 0.0) {
            continue;
        }
        if (i == last || w >= remaining_mass) {
            out[i] = remaining;
            remaining = 0;
            break;
        }
        const double q = w / remaining_mass;
        const Int x = sample_binomial<Int>(rng, remaining, q);
        out[i] = x;
        remaining -= x;
        remaining_mass -= w;
    }
}

// Deterministic 64-bit mixing for deriving seeds (SplitMix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::string rng_state_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

inline void restore_rng_state(Rng& rng, const std::string& state) {
    std::istringstream is(state);
    is >> rng;
}

} // namespace nethawkes
