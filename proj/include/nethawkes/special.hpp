#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace nethawkes {

// Digamma for x > 0: upward recurrence to x >= 10, then the asymptotic series.
inline double digamma(double x) {
    if (!(x > 0.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    // Bernoulli terms B_2n / (2n x^2n), n = 1..7
    const double series =
        inv2 * (1.0 / 12.0 -
                inv2 * (1.0 / 120.0 -
                        inv2 * (1.0 / 252.0 -
                                inv2 * (1.0 / 240.0 -
                                        inv2 * (1.0 / 132.0 -
                                                inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    return result + std::log(x) - 0.5 * inv - series;
}

// Trigamma for x > 0, same scheme.
inline double trigamma(double x) {
    if (!(x > 0.0)) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    double result = 0.0;
    while (x < 10.0) {
        result += 1.0 / (x * x);
        x += 1.0;
    }
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    const double series =
        inv * (1.0 + inv * (0.5 +
                            inv * (1.0 / 6.0 -
                                   inv2 * (1.0 / 30.0 -
                                           inv2 * (1.0 / 42.0 -
                                                   inv2 * (1.0 / 30.0 -
                                                           inv2 * (5.0 / 66.0 -
                                                                   inv2 * (691.0 / 2730.0 -
                                                                           inv2 * 7.0 / 6.0))))))));
    return result + series;
}

// ln Gamma(x) for x > 0 (Lanczos, g = 671/128, 14 terms).
// Reentrant, unlike std::lgamma which writes the global signgam.
inline double log_gamma(double x) {
    if (!(x > 0.0)) {
        return x == 0.0 ? std::numeric_limits<double>::infinity()
                        : std::numeric_limits<double>::quiet_NaN();
    }
    if (x < 0.5) {
        // Reflection keeps precision for tiny arguments.
        return std::log(std::numbers::pi / std::sin(std::numbers::pi * x)) - log_gamma(1.0 - x);
    }
    static constexpr std::array<double, 14> cof = {
        57.1562356658629235,     -59.5979603554754912,     14.1360979747417471,
        -0.491913816097620199,   .339946499848118887e-4,   .465236289270485756e-4,
        -.983744753048795646e-4, .158088703224912494e-3,   -.210264441724104883e-3,
        .217439618115212643e-3,  -.164318106536763890e-3,  .844182239838527433e-4,
        -.261908384015814087e-4, .368991826595316234e-5};
    double y = x;
    double tmp = x + 5.24218750000000000;
    tmp = (x + 0.5) * std::log(tmp) - tmp;
    double ser = 0.999999999999997092;
    for (double c : cof) {
        ser += c / ++y;
    }
    return tmp + std::log(2.5066282746310005 * ser / x);
}

inline double log_factorial(long long n) { return log_gamma(static_cast<double>(n) + 1.0); }

inline double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// x * ln(x) with the 0 ln 0 = 0 convention.
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// Expectations under standard exponential-family factors.
inline double expected_log_gamma_rv(double shape, double rate) {
    return digamma(shape) - std::log(rate);
}

// E_q[ln Gamma(x | a0, b0)] - E_q[ln q(x)] for q = Gamma(a, b) (shape/rate).
inline double gamma_elbo_term(double a0, double b0, double a, double b) {
    const double e_ln = expected_log_gamma_rv(a, b);
    const double e_x = a / b;
    const double cross = a0 * std::log(b0) - log_gamma(a0) + (a0 - 1.0) * e_ln - b0 * e_x;
    const double self = a * std::log(b) - log_gamma(a) + (a - 1.0) * e_ln - a;
    return cross - self;
}

// Same for Beta(a0, b0) prior and Beta(a, b) posterior.
inline double beta_elbo_term(double a0, double b0, double a, double b) {
    const double e_ln_p = digamma(a) - digamma(a + b);
    const double e_ln_1mp = digamma(b) - digamma(a + b);
    const double lbeta0 = log_gamma(a0) + log_gamma(b0) - log_gamma(a0 + b0);
    const double lbeta = log_gamma(a) + log_gamma(b) - log_gamma(a + b);
    const double cross = (a0 - 1.0) * e_ln_p + (b0 - 1.0) * e_ln_1mp - lbeta0;
    const double self = (a - 1.0) * e_ln_p + (b - 1.0) * e_ln_1mp - lbeta;
    return cross - self;
}

} // namespace nethawkes
