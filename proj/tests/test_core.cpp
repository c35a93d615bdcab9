#include "nethawkes/core.hpp"
#include "nethawkes/random.hpp"
#include "nethawkes/simulate.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

namespace nh = nethawkes;

namespace {

nh::CountMatrix random_counts(std::size_t T, std::size_t K, double mean, std::uint64_t seed, double dt = 1.0) {
    nh::Rng rng(seed);
    nh::CountMatrix S(T, K, dt);
    for (auto& c : S.data) {
        c = nh::sample_poisson<nh::Count>(rng, mean);
    }
    return S;
}

nh::ModelParams random_params(std::size_t K, std::size_t B, std::uint64_t seed) {
    nh::Rng rng(seed);
    nh::ModelParams p(K, B);
    std::vector<double> ones(B, 1.0);
    for (auto& l : p.lambda0) {
        l = nh::sample_gamma(rng, 2.0, 2.0);
    }
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t kp = 0; kp < K; ++kp) {
            p.A(k, kp) = nh::sample_bernoulli(rng, 0.6);
            p.W(k, kp) = p.A(k, kp) ? nh::sample_gamma(rng, 2.0, 8.0) : 0.0;
            nh::sample_dirichlet(rng, ones, p.g.fiber(k, kp));
        }
    }
    return p;
}

} // namespace

TEST(Dims, Validation) {
    nh::Dims d{10, 2, 1, 3, 1.0};
    EXPECT_NO_THROW(d.validate());
    d.D = 10;
    EXPECT_THROW(d.validate(), std::invalid_argument);
    d = {10, 0, 1, 3, 1.0};
    EXPECT_THROW(d.validate(), std::invalid_argument);
    d = {10, 2, 1, 3, 0.0};
    EXPECT_THROW(d.validate(), std::invalid_argument);
    d = {10, 2, 1, 0, 1.0};
    EXPECT_THROW(d.validate(), std::invalid_argument);
}

TEST(MakeBasis, SingleLagBoxcarIsInverseBinWidth) {
    const auto b = nh::make_basis({5, 1, 1, 1, 1.0}, nh::BasisKind::boxcar);
    ASSERT_EQ(b.filters.size(), 1u);
    EXPECT_DOUBLE_EQ(b.filters[0], 1.0);
    const auto b2 = nh::make_basis({5, 1, 1, 1, 0.25}, nh::BasisKind::boxcar);
    EXPECT_DOUBLE_EQ(b2.filters[0], 4.0);
}

TEST(MakeBasis, TwoHalfWindows) {
    const auto b = nh::make_basis({10, 1, 2, 4, 0.5}, nh::BasisKind::boxcar);
    const std::vector<double> expected{1, 1, 0, 0, 0, 0, 1, 1};
    ASSERT_EQ(b.filters.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_DOUBLE_EQ(b.filters[i], expected[i]);
    }
}

TEST(MakeBasis, BoxcarRejectsMoreFiltersThanLags) {
    EXPECT_THROW(nh::make_basis({10, 1, 5, 4, 1.0}, nh::BasisKind::boxcar), std::invalid_argument);
}

TEST(MakeBasis, GaussianBumpsMatchIndependentFormula) {
    const std::size_t B = 3, D = 10;
    const auto b = nh::make_basis({20, 1, B, D, 1.0}, nh::BasisKind::gaussian_bumps);
    for (std::size_t i = 0; i < B; ++i) {
        // Centers at 1, 5.5, 10; width 10 / 4 = 2.5 lags.
        const double mu = 1.0 + 4.5 * static_cast<double>(i);
        double z = 0.0;
        std::vector<double> raw(D);
        for (std::size_t d = 0; d < D; ++d) {
            const double x = (static_cast<double>(d + 1) - mu) / 2.5;
            raw[d] = std::exp(-x * x / 2.0);
            z += raw[d];
        }
        double sum = 0.0;
        for (std::size_t d = 0; d < D; ++d) {
            EXPECT_NEAR(b.at(i, d + 1), raw[d] / z, 1e-14);
            sum += b.at(i, d + 1);
        }
        EXPECT_NEAR(sum, 1.0, 1e-9);
    }
}

TEST(MakeBasis, NormalizationHoldsAcrossShapes) {
    for (double dt : {0.1, 1.0, 3.0}) {
        for (std::size_t B : {1u, 2u, 5u}) {
            for (std::size_t D : {5u, 7u, 30u}) {
                for (auto kind : {nh::BasisKind::gaussian_bumps, nh::BasisKind::boxcar}) {
                    const auto b = nh::make_basis({100, 1, B, D, dt}, kind);
                    EXPECT_NO_THROW(b.validate());
                    for (std::size_t i = 0; i < B; ++i) {
                        double s = 0.0;
                        for (std::size_t d = 1; d <= D; ++d) {
                            EXPECT_GE(b.at(i, d), 0.0);
                            s += b.at(i, d) * dt;
                        }
                        EXPECT_NEAR(s, 1.0, 1e-9);
                    }
                }
            }
        }
    }
}

TEST(ConvolveCounts, ZeroInZeroOut) {
    nh::CountMatrix S(20, 3, 1.0);
    const auto shat = nh::convolve_counts(S, nh::make_basis({20, 3, 2, 4, 1.0}, nh::BasisKind::gaussian_bumps));
    for (double v : shat.shat) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(ConvolveCounts, ImpulseResponse) {
    const std::size_t D = 6;
    const auto basis = nh::make_basis({30, 1, 1, D, 1.0}, nh::BasisKind::gaussian_bumps);
    nh::CountMatrix S(30, 1, 1.0);
    S(5, 0) = 1;
    const auto shat = nh::convolve_counts(S, basis);
    for (std::size_t t = 0; t < 30; ++t) {
        const double expected = (t > 5 && t <= 5 + D) ? basis.at(0, t - 5) : 0.0;
        EXPECT_DOUBLE_EQ(shat(t, 0, 0), expected) << t;
    }
}

TEST(ConvolveCounts, MatchesBruteForce) {
    const auto S = random_counts(30, 2, 1.3, 7);
    const auto basis = nh::make_basis({30, 2, 2, 4, 1.0}, nh::BasisKind::gaussian_bumps);
    const auto shat = nh::convolve_counts(S, basis);
    const auto ref = oracle::convolve(S, basis);
    ASSERT_EQ(shat.shat.size(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
        EXPECT_NEAR(shat.shat[i], ref[i], 1e-12);
    }
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t b = 0; b < 2; ++b) {
            EXPECT_NEAR(shat.exposure(k, b), oracle::exposure(S, basis, k, b), 1e-12);
        }
    }
}

TEST(ConvolveCounts, StrictlyCausal) {
    auto S = random_counts(40, 2, 0.8, 11);
    const auto basis = nh::make_basis({40, 2, 3, 5, 1.0}, nh::BasisKind::gaussian_bumps);
    const auto before = nh::convolve_counts(S, basis);
    const std::size_t t0 = 17;
    S(t0, 1) += 3;
    const auto after = nh::convolve_counts(S, basis);
    for (std::size_t t = 0; t < 40; ++t) {
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t b = 0; b < 3; ++b) {
                if (t <= t0 || k == 0) {
                    EXPECT_EQ(before(t, k, b), after(t, k, b));
                }
            }
        }
    }
    EXPECT_NE(before(t0 + 1, 1, 0) + before(t0 + 1, 1, 1) + before(t0 + 1, 1, 2),
              after(t0 + 1, 1, 0) + after(t0 + 1, 1, 1) + after(t0 + 1, 1, 2));
    // First bin has no history.
    for (std::size_t k = 0; k < 2; ++k) {
        for (std::size_t b = 0; b < 3; ++b) {
            EXPECT_EQ(after(0, k, b), 0.0);
        }
    }
}

TEST(ConvolveCounts, ExposureIdentity) {
    const std::size_t T = 500, D = 8;
    auto S = random_counts(T, 2, 0.7, 3);
    const auto basis = nh::make_basis({T, 2, 2, D, 1.0}, nh::BasisKind::gaussian_bumps);
    auto shat = nh::convolve_counts(S, basis);
    const auto N = S.totals();
    for (std::size_t k = 0; k < 2; ++k) {
        int smax = 0;
        for (std::size_t t = 0; t < T; ++t) {
            smax = std::max(smax, S(t, k));
        }
        for (std::size_t b = 0; b < 2; ++b) {
            const double trunc = N[k] - shat.exposure(k, b);
            EXPECT_GE(trunc, -1e-9);
            EXPECT_LE(trunc, D * smax + 1e-9);
        }
    }
    for (std::size_t t = T - D; t < T; ++t) {
        S(t, 0) = 0;
    }
    shat = nh::convolve_counts(S, basis);
    const auto N2 = S.totals();
    for (std::size_t b = 0; b < 2; ++b) {
        EXPECT_NEAR(shat.exposure(0, b), N2[0], 1e-9);
    }
}

TEST(ConvolveCounts, RejectsMismatchedBinWidth) {
    nh::CountMatrix S(20, 1, 0.5);
    EXPECT_THROW(nh::convolve_counts(S, nh::make_basis({20, 1, 1, 3, 1.0}, nh::BasisKind::boxcar)),
                 std::invalid_argument);
}

TEST(ComputeRates, BackgroundOnlyWithoutWeights) {
    const auto S = random_counts(25, 3, 1.0, 5);
    const auto basis = nh::make_basis({25, 3, 2, 4, 1.0}, nh::BasisKind::gaussian_bumps);
    auto p = random_params(3, 2, 9);
    p.W.fill(0.0);
    const auto rates = nh::compute_rates(p, nh::convolve_counts(S, basis));
    for (std::size_t t = 0; t < 25; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_EQ(rates(t, k), p.lambda0[k]);
        }
    }
}

TEST(ComputeRates, MatchesHistorySum) {
    const auto S = random_counts(35, 3, 1.1, 13);
    const auto basis = nh::make_basis({35, 3, 3, 6, 1.0}, nh::BasisKind::gaussian_bumps);
    const auto p = random_params(3, 3, 21);
    const auto rates = nh::compute_rates(p, nh::convolve_counts(S, basis));
    const auto ref = oracle::rates(p, S, basis);
    for (std::size_t i = 0; i < rates.size(); ++i) {
        EXPECT_NEAR(rates.data()[i], ref.data()[i], 1e-12);
        EXPECT_GE(rates.data()[i], 0.0);
    }
    const auto bg = nh::compute_rates(p, nh::convolve_counts(S, basis), true);
    for (std::size_t t = 0; t < 35; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            EXPECT_EQ(bg(t, k), p.lambda0[k]);
        }
    }
}

TEST(ComputeRates, LinearInWeights) {
    const auto S = random_counts(40, 3, 1.0, 17);
    const auto basis = nh::make_basis({40, 3, 2, 5, 1.0}, nh::BasisKind::gaussian_bumps);
    const auto shat = nh::convolve_counts(S, basis);
    auto p1 = random_params(3, 2, 1);
    auto p2 = p1;
    nh::Rng rng(4);
    for (double& w : p2.W.data()) {
        w = nh::sample_gamma(rng, 1.0, 5.0);
    }
    const double a = 0.7, b = 2.3;
    auto mix = p1;
    for (std::size_t i = 0; i < mix.W.size(); ++i) {
        mix.W.data()[i] = a * p1.W.data()[i] + b * p2.W.data()[i];
    }
    const auto r1 = nh::compute_rates(p1, shat), r2 = nh::compute_rates(p2, shat), rm = nh::compute_rates(mix, shat);
    for (std::size_t t = 0; t < 40; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            const double l0 = p1.lambda0[k];
            EXPECT_NEAR(rm(t, k), l0 + a * (r1(t, k) - l0) + b * (r2(t, k) - l0), 1e-10);
        }
    }
}

TEST(PoissonLogLikelihood, HandValues) {
    nh::CountMatrix S(10, 1, 1.0);
    nh::Matrix<double> rates(10, 1, 1.0);
    EXPECT_DOUBLE_EQ(nh::poisson_log_likelihood(S, rates), -10.0);
    nh::CountMatrix one(1, 1, 1.0);
    one(0, 0) = 1;
    EXPECT_DOUBLE_EQ(nh::poisson_log_likelihood(one, nh::Matrix<double>(1, 1, 1.0)), -1.0);
}

TEST(PoissonLogLikelihood, ZeroRateWithEventsIsMinusInfinity) {
    nh::CountMatrix S(3, 1, 1.0);
    S(1, 0) = 2;
    nh::Matrix<double> rates(3, 1, 1.0);
    rates(1, 0) = 0.0;
    EXPECT_EQ(nh::poisson_log_likelihood(S, rates), -std::numeric_limits<double>::infinity());
    S(1, 0) = 0;
    EXPECT_DOUBLE_EQ(nh::poisson_log_likelihood(S, rates), -2.0);
}

TEST(PoissonLogLikelihood, MatchesIndependentPmf) {
    const auto S = random_counts(50, 4, 2.5, 23, 0.5);
    nh::Rng rng(8);
    nh::Matrix<double> rates(50, 4);
    for (double& r : rates.data()) {
        r = nh::sample_gamma(rng, 3.0, 1.0);
    }
    EXPECT_NEAR(nh::poisson_log_likelihood(S, rates), oracle::loglik(S, rates), 1e-10);
}

TEST(ModelParams, Validation) {
    nh::ModelParams p(2, 2);
    EXPECT_NO_THROW(p.validate(true));
    p.W(0, 1) = 0.3;
    EXPECT_NO_THROW(p.validate());
    EXPECT_THROW(p.validate(true), std::invalid_argument);
    p.g(0, 0, 0) = 0.9;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    nh::ModelParams q(2, 1);
    q.lambda0[0] = -1.0;
    EXPECT_THROW(q.validate(), std::invalid_argument);
}

TEST(HyperParams, Validation) {
    auto h = nh::HyperParams::defaults(2);
    EXPECT_NO_THROW(h.validate(2));
    EXPECT_THROW(h.validate(3), std::invalid_argument);
    h.kappa0 = 0.0;
    EXPECT_THROW(h.validate(2), std::invalid_argument);
}

// Synthetic regime with K = 50, ER p = 0.08 and Gamma(3, 15) weights: the stationary mean
// rate averaged over networks lands near the reported 16.7 events per bin.
TEST(ComputeRates, SyntheticRegimeMeanRate) {
    double total = 0.0;
    int used = 0;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        nh::Rng rng(seed);
        nh::SyntheticNetworkConfig cfg;
        cfg.K = 50;
        cfg.p = 0.08;
        cfg.lambda0_mean = 1.0;
        cfg.lambda0_shape = 0.0;
        const auto p = nh::make_synthetic_params(cfg, rng);
        if (oracle::spectral_radius(p.W) >= 1.0) {
            continue;
        }
        const auto lam = oracle::stationary_rates(p);
        double m = 0.0;
        for (double l : lam) {
            m += l;
        }
        total += m / 50.0;
        ++used;
    }
    ASSERT_GT(used, 0);
    const double mean_rate = total / used;
    EXPECT_GT(mean_rate, 16.7 - 12.0);
    EXPECT_LT(mean_rate, 16.7 + 12.0);
}
