#pragma once

#include "nethawkes/array.hpp"
#include "nethawkes/parallel.hpp"
#include "nethawkes/special.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nethawkes {

using Count = std::int32_t;

// Rates below this are clamped before taking logarithms.
inline constexpr double kRateFloor = 1e-32;

class ExplosiveProcessError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class InconsistentStateError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class UndefinedMetricError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Dims {
    std::size_t T = 1; // time bins
    std::size_t K = 1; // processes
    std::size_t B = 1; // basis functions
    std::size_t D = 1; // maximum lag in bins
    double dt = 1.0;   // bin width

    void validate() const {
        if (T < 1 || K < 1 || B < 1) {
            throw std::invalid_argument("Dims: T, K and B must be >= 1");
        }
        if (D < 1 || D >= T) {
            throw std::invalid_argument("Dims: require 1 <= D < T");
        }
        if (!(dt > 0.0) || !std::isfinite(dt)) {
            throw std::invalid_argument("Dims: dt must be positive and finite");
        }
    }
};

// T x K matrix of nonnegative event counts.
struct CountMatrix {
    std::size_t T = 0;
    std::size_t K = 0;
    double dt = 1.0;
    std::vector<Count> data;

    CountMatrix() = default;
    CountMatrix(std::size_t T_, std::size_t K_, double dt_)
        : T(T_), K(K_), dt(dt_), data(T_ * K_, 0) {}

    Count& operator()(std::size_t t, std::size_t k) noexcept { return data[t * K + k]; }
    Count operator()(std::size_t t, std::size_t k) const noexcept { return data[t * K + k]; }

    [[nodiscard]] std::vector<double> totals() const {
        std::vector<double> n(K, 0.0);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t k = 0; k < K; ++k) {
                n[k] += (*this)(t, k);
            }
        }
        return n;
    }
    [[nodiscard]] double total() const {
        double n = 0.0;
        for (Count c : data) {
            n += c;
        }
        return n;
    }

    void validate() const {
        if (data.size() != T * K) {
            throw std::invalid_argument("CountMatrix: data size does not match T*K");
        }
        if (!(dt > 0.0)) {
            throw std::invalid_argument("CountMatrix: dt must be positive");
        }
        for (Count c : data) {
            if (c < 0) {
                throw std::invalid_argument("CountMatrix: counts must be nonnegative");
            }
        }
    }

    bool operator==(const CountMatrix&) const = default;
};

enum class BasisKind { gaussian_bumps, boxcar };

// B causal lag filters over lags 1..D, each satisfying sum_d phi_b[d] * dt = 1.
struct BasisSet {
    std::size_t B = 0;
    std::size_t D = 0;
    double dt = 1.0;
    std::vector<double> filters; // B x D, filters[b * D + (lag - 1)]

    [[nodiscard]] double at(std::size_t b, std::size_t lag) const noexcept {
        return filters[b * D + (lag - 1)];
    }
    [[nodiscard]] std::span<const double> filter(std::size_t b) const noexcept {
        return {filters.data() + b * D, D};
    }

    void validate() const {
        if (B < 1 || D < 1 || filters.size() != B * D || !(dt > 0.0)) {
            throw std::invalid_argument("BasisSet: inconsistent shape");
        }
        for (std::size_t b = 0; b < B; ++b) {
            double mass = 0.0;
            for (std::size_t d = 1; d <= D; ++d) {
                const double v = at(b, d);
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    throw std::invalid_argument("BasisSet: filters must be finite and nonnegative");
                }
                mass += v;
            }
            if (std::abs(mass * dt - 1.0) > 1e-9) {
                throw std::invalid_argument("BasisSet: filter " + std::to_string(b) +
                                            " is not normalized");
            }
        }
    }
};

inline void normalize_basis(BasisSet& basis) {
    for (std::size_t b = 0; b < basis.B; ++b) {
        double mass = 0.0;
        for (std::size_t d = 0; d < basis.D; ++d) {
            mass += basis.filters[b * basis.D + d];
        }
        if (!(mass > 0.0)) {
            throw std::invalid_argument("BasisSet: filter has zero mass");
        }
        for (std::size_t d = 0; d < basis.D; ++d) {
            basis.filters[b * basis.D + d] /= mass * basis.dt;
        }
    }
}

// Gaussian bumps: centers evenly spaced on [1, D] (the midpoint when B = 1), width
// D / (B + 1) lags. Boxcars: B contiguous windows tiling lags 1..D.
inline BasisSet make_basis(const Dims& dims, BasisKind kind) {
    if (dims.B < 1 || dims.D < 1 || !(dims.dt > 0.0)) {
        throw std::invalid_argument("make_basis: invalid dims");
    }
    BasisSet basis{dims.B, dims.D, dims.dt, std::vector<double>(dims.B * dims.D, 0.0)};
    const double Bd = static_cast<double>(dims.B);
    const double Dd = static_cast<double>(dims.D);
    switch (kind) {
    case BasisKind::gaussian_bumps: {
        const double width = Dd / (Bd + 1.0);
        for (std::size_t b = 0; b < dims.B; ++b) {
            const double center =
                dims.B == 1 ? 0.5 * (1.0 + Dd) : 1.0 + (Dd - 1.0) * static_cast<double>(b) / (Bd - 1.0);
            for (std::size_t d = 1; d <= dims.D; ++d) {
                const double z = (static_cast<double>(d) - center) / width;
                basis.filters[b * dims.D + d - 1] = std::exp(-0.5 * z * z);
            }
        }
        break;
    }
    case BasisKind::boxcar: {
        if (dims.B > dims.D) {
            throw std::invalid_argument("make_basis: boxcar basis requires B <= D");
        }
        for (std::size_t b = 0; b < dims.B; ++b) {
            const std::size_t lo = b * dims.D / dims.B;       // exclusive, in lags - 1
            const std::size_t hi = (b + 1) * dims.D / dims.B; // inclusive
            for (std::size_t d = lo + 1; d <= hi; ++d) {
                basis.filters[b * dims.D + d - 1] = 1.0;
            }
        }
        break;
    }
    }
    normalize_basis(basis);
    return basis;
}

// shat(t, k, b) = sum_{d=1}^{min(D, t)} s(t - d, k) * phi_b[d] with 0-based t.
struct ConvolvedCounts {
    std::size_t T = 0;
    std::size_t K = 0;
    std::size_t B = 0;
    double dt = 1.0;
    std::vector<double> shat;   // (t * K + k) * B + b
    Matrix<double> exposure;    // K x B, sum_t shat(t, k, b) * dt
    std::vector<double> totals; // N_k

    [[nodiscard]] double operator()(std::size_t t, std::size_t k, std::size_t b) const noexcept {
        return shat[(t * K + k) * B + b];
    }
    [[nodiscard]] std::span<const double> at(std::size_t t, std::size_t k) const noexcept {
        return {shat.data() + (t * K + k) * B, B};
    }
};

inline ConvolvedCounts convolve_counts(const CountMatrix& S, const BasisSet& basis) {
    S.validate();
    basis.validate();
    if (std::abs(S.dt - basis.dt) > 1e-12 * std::max(1.0, S.dt)) {
        throw std::invalid_argument("convolve_counts: bin width mismatch between counts and basis");
    }
    const std::size_t T = S.T, K = S.K, B = basis.B, D = basis.D;
    ConvolvedCounts out{T, K, B, S.dt, std::vector<double>(T * K * B, 0.0), Matrix<double>(K, B, 0.0),
                        S.totals()};
    parallel_chunks(T, 512, [&](std::size_t t0, std::size_t t1) {
        for (std::size_t t = t0; t < t1; ++t) {
            const std::size_t max_lag = std::min(D, t);
            for (std::size_t k = 0; k < K; ++k) {
                double* dst = out.shat.data() + (t * K + k) * B;
                for (std::size_t d = 1; d <= max_lag; ++d) {
                    const Count s = S(t - d, k);
                    if (s == 0) {
                        continue;
                    }
                    for (std::size_t b = 0; b < B; ++b) {
                        dst[b] += s * basis.at(b, d);
                    }
                }
            }
        }
    });
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t b = 0; b < B; ++b) {
                out.exposure(k, b) += out(t, k, b);
            }
        }
    }
    for (double& e : out.exposure.data()) {
        e *= S.dt;
    }
    return out;
}

struct ModelParams {
    std::vector<double> lambda0;  // K background rates (events per unit time)
    Matrix<std::uint8_t> A;       // K x K adjacency, A(k, k') is the edge k -> k'
    Matrix<double> W;             // K x K weights (expected offspring counts)
    Tensor3<double> g;            // K x K x B impulse mixture coefficients

    ModelParams() = default;
    ModelParams(std::size_t K, std::size_t B)
        : lambda0(K, 0.0), A(K, K, 0), W(K, K, 0.0), g(K, K, B, 1.0 / static_cast<double>(B)) {}

    [[nodiscard]] std::size_t K() const noexcept { return lambda0.size(); }
    [[nodiscard]] std::size_t B() const noexcept { return g.dim2(); }

    // Throws when shapes or supports are violated. With strict, W must vanish off A.
    void validate(bool strict = false) const {
        const std::size_t K = lambda0.size();
        if (A.rows() != K || A.cols() != K || W.rows() != K || W.cols() != K || g.dim0() != K ||
            g.dim1() != K || g.dim2() < 1) {
            throw std::invalid_argument("ModelParams: inconsistent shapes");
        }
        for (double l : lambda0) {
            if (!(l >= 0.0) || !std::isfinite(l)) {
                throw std::invalid_argument("ModelParams: lambda0 must be finite and nonnegative");
            }
        }
        for (std::size_t i = 0; i < K; ++i) {
            for (std::size_t j = 0; j < K; ++j) {
                if (A(i, j) > 1) {
                    throw std::invalid_argument("ModelParams: A must be binary");
                }
                if (!(W(i, j) >= 0.0) || !std::isfinite(W(i, j))) {
                    throw std::invalid_argument("ModelParams: W must be finite and nonnegative");
                }
                if (strict && A(i, j) == 0 && W(i, j) != 0.0) {
                    throw std::invalid_argument("ModelParams: W must be zero where A is zero");
                }
                double sum = 0.0;
                for (double v : g.fiber(i, j)) {
                    if (!(v >= 0.0)) {
                        throw std::invalid_argument("ModelParams: g must be nonnegative");
                    }
                    sum += v;
                }
                if (std::abs(sum - 1.0) > 1e-9) {
                    throw std::invalid_argument("ModelParams: g must lie on the simplex");
                }
            }
        }
    }

    bool operator==(const ModelParams&) const = default;
};

struct HyperParams {
    double alpha_lambda = 1.0;
    double beta_lambda = 1.0;
    std::vector<double> gamma; // length B Dirichlet concentration
    double kappa = 3.0;        // slab shape
    double kappa0 = 0.1;       // spike shape
    double nu0 = 100.0;        // spike inverse scale

    static HyperParams defaults(std::size_t B) {
        HyperParams h;
        h.gamma.assign(B, 1.0);
        return h;
    }

    void validate(std::size_t B) const {
        if (!(alpha_lambda > 0.0) || !(beta_lambda > 0.0) || !(kappa > 0.0) || !(kappa0 > 0.0) ||
            !(nu0 > 0.0)) {
            throw std::invalid_argument("HyperParams: all parameters must be strictly positive");
        }
        if (gamma.size() != B) {
            throw std::invalid_argument("HyperParams: gamma must have length B");
        }
        for (double g : gamma) {
            if (!(g > 0.0)) {
                throw std::invalid_argument("HyperParams: gamma must be strictly positive");
            }
        }
    }
};

// How a weight's conjugate update measures a source's opportunity to excite.
// exact: sum_t shat * dt (includes truncation at the end of the record).
// event_count: the source's event count N_k.
enum class ExposureMode { exact, event_count };

// Exposure of source k through basis b under the chosen mode.
inline double basis_exposure(const ConvolvedCounts& shat, std::size_t k, std::size_t b,
                             ExposureMode mode) {
    return mode == ExposureMode::exact ? shat.exposure(k, b) : shat.totals[k];
}

// lambda(t, k') = lambda0[k'] + sum_{k,b} W(k,k') g(k,k',b) shat(t,k,b); T x K.
inline Matrix<double> compute_rates(const ModelParams& params, const ConvolvedCounts& shat,
                                    bool background_only = false) {
    const std::size_t T = shat.T, K = shat.K, B = shat.B;
    if (params.K() != K || params.B() != B) {
        throw std::invalid_argument("compute_rates: parameter shapes do not match the data");
    }
    Matrix<double> rates(T, K, 0.0);
    Tensor3<double> h(K, K, B, 0.0); // h(k', k, b) = W(k,k') g(k,k',b), target-major
    if (!background_only) {
        for (std::size_t k = 0; k < K; ++k) {
            for (std::size_t kp = 0; kp < K; ++kp) {
                for (std::size_t b = 0; b < B; ++b) {
                    h(kp, k, b) = params.W(k, kp) * params.g(k, kp, b);
                }
            }
        }
    }
    parallel_chunks(T, 512, [&](std::size_t t0, std::size_t t1) {
        for (std::size_t t = t0; t < t1; ++t) {
            const double* row = shat.shat.data() + t * K * B;
            for (std::size_t kp = 0; kp < K; ++kp) {
                double lam = params.lambda0[kp];
                if (!background_only) {
                    const double* hk = &h(kp, 0, 0);
                    for (std::size_t i = 0; i < K * B; ++i) {
                        lam += hk[i] * row[i];
                    }
                }
                rates(t, kp) = lam;
            }
        }
    });
    return rates;
}

// sum_{t,k} [s ln(lambda dt) - lambda dt - ln s!]. Returns -inf when a positive count
// meets an exactly zero rate.
inline double poisson_log_likelihood(const CountMatrix& S, const Matrix<double>& rates) {
    if (rates.rows() != S.T || rates.cols() != S.K) {
        throw std::invalid_argument("poisson_log_likelihood: shape mismatch");
    }
    double ll = 0.0;
    for (std::size_t t = 0; t < S.T; ++t) {
        for (std::size_t k = 0; k < S.K; ++k) {
            const double lam = rates(t, k);
            if (lam < 0.0) {
                throw std::invalid_argument("poisson_log_likelihood: negative rate");
            }
            const Count s = S(t, k);
            const double mean = lam * S.dt;
            if (s > 0) {
                if (lam == 0.0) {
                    return -std::numeric_limits<double>::infinity();
                }
                ll += s * std::log(std::max(mean, kRateFloor)) - log_factorial(s);
            }
            ll -= mean;
        }
    }
    return ll;
}

} // namespace nethawkes
