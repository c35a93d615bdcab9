#include "nethawkes/map.hpp"
#include "nethawkes/simulate.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace nh = nethawkes;

namespace {

struct Problem {
    nh::CountMatrix S;
    nh::BasisSet basis;
    nh::ModelParams truth;
};

Problem make_problem(std::size_t T, std::size_t K, std::size_t B, std::uint64_t seed) {
    nh::Rng rng(seed);
    nh::SyntheticNetworkConfig c;
    c.K = K;
    c.B = B;
    c.p = 0.5;
    c.target_radius = 0.6;
    c.impulse_concentration = B > 1 ? 2.0 : 0.0;
    Problem out;
    out.truth = nh::make_synthetic_params(c, rng);
    nh::SimConfig sc;
    sc.dims = {T, K, B, 6, 1.0};
    sc.seed = seed + 3;
    sc.params = out.truth;
    sc.basis = nh::make_basis(sc.dims, nh::BasisKind::gaussian_bumps);
    sc.warn_unstable = false;
    out.basis = sc.basis;
    out.S = nh::sample_forward(sc);
    return out;
}

} // namespace

TEST(MapFit, ObjectiveIsNondecreasing) {
    const auto pb = make_problem(2000, 3, 2, 1);
    for (double theta : {0.0, 5.0}) {
        nh::MapConfig cfg;
        cfg.l1_scale = theta;
        const auto res = nh::map_fit(pb.S, pb.basis, cfg);
        ASSERT_GT(res.iterations, 1u);
        for (std::size_t i = 1; i < res.objective.size(); ++i) {
            EXPECT_GE(res.objective[i], res.objective[i - 1] - 1e-9 * std::abs(res.objective[i]));
        }
    }
}

TEST(MapFit, ObjectiveMatchesOracleLikelihood) {
    const auto pb = make_problem(500, 3, 2, 2);
    nh::MapConfig cfg;
    cfg.l1_scale = 2.0;
    cfg.max_iters = 5;
    const auto res = nh::map_fit(pb.S, pb.basis, cfg);
    double wsum = 0.0;
    for (double w : res.params.W.data()) {
        wsum += w;
    }
    const double ref = oracle::loglik(pb.S, oracle::rates(res.params, pb.S, pb.basis)) - 2.0 * wsum;
    EXPECT_NEAR(res.objective.back(), ref, 1e-8 * std::abs(ref));
}

TEST(MapFit, StationarityAtConvergence) {
    const auto pb = make_problem(3000, 2, 2, 3);
    nh::MapConfig cfg;
    cfg.l1_scale = 1.0;
    cfg.max_iters = 20000;
    cfg.tol = 1e-14;
    const auto res = nh::map_fit(pb.S, pb.basis, cfg);
    const auto& p = res.params;
    const auto lam = oracle::rates(p, pb.S, pb.basis);
    const auto sh = oracle::convolve(pb.S, pb.basis);
    for (std::size_t kp = 0; kp < 2; ++kp) {
        double d0 = -3000.0;
        for (std::size_t t = 0; t < 3000; ++t) {
            d0 += pb.S(t, kp) / lam(t, kp);
        }
        // EM approaches boundary entries slowly, so residuals are judged against the event scale.
        const double scale = 1e-4 * 3000.0;
        EXPECT_NEAR(d0, 0.0, scale);
        for (std::size_t k = 0; k < 2; ++k) {
            for (std::size_t b = 0; b < 2; ++b) {
                const double h = p.W(k, kp) * p.g(k, kp, b);
                double grad = -oracle::exposure(pb.S, pb.basis, k, b) - 1.0;
                for (std::size_t t = 0; t < 3000; ++t) {
                    grad += pb.S(t, kp) * sh[(t * 2 + k) * 2 + b] / lam(t, kp);
                }
                if (h > 1e-6) {
                    EXPECT_NEAR(grad, 0.0, scale) << k << kp << b;
                } else {
                    EXPECT_LE(grad, scale);
                }
            }
        }
    }
}

TEST(MapFit, PenaltyShrinksWeights) {
    const auto pb = make_problem(1500, 3, 1, 4);
    double prev = std::numeric_limits<double>::infinity();
    for (double theta : {0.0, 10.0, 100.0, 1000.0}) {
        nh::MapConfig cfg;
        cfg.l1_scale = theta;
        const auto res = nh::map_fit(pb.S, pb.basis, cfg);
        double wsum = 0.0;
        for (double w : res.params.W.data()) {
            wsum += w;
        }
        EXPECT_LE(wsum, prev + 1e-9);
        prev = wsum;
    }
}

TEST(MapFit, RejectsBadConfig) {
    const auto pb = make_problem(100, 2, 1, 5);
    nh::MapConfig cfg;
    cfg.l1_scale = -1.0;
    EXPECT_THROW(nh::map_fit(pb.S, pb.basis, cfg), std::invalid_argument);
    cfg = {};
    cfg.cv_fraction = 1.0;
    EXPECT_THROW(nh::cross_validate(pb.S, pb.basis, cfg), std::invalid_argument);
    cfg = {};
    cfg.cv_grid.clear();
    EXPECT_THROW(nh::cross_validate(pb.S, pb.basis, cfg), std::invalid_argument);
}

TEST(HeldoutLoglik, UsesFullHistory) {
    const auto pb = make_problem(400, 3, 2, 6);
    const auto shat = nh::convolve_counts(pb.S, pb.basis);
    const auto lam = oracle::rates(pb.truth, pb.S, pb.basis);
    double ref = 0.0;
    for (std::size_t t = 300; t < 400; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            ref += oracle::poisson_logpmf(pb.S(t, k), lam(t, k));
        }
    }
    EXPECT_NEAR(nh::heldout_loglik(pb.S, shat, pb.truth, 300), ref, 1e-9 * std::abs(ref));
}

TEST(CrossValidate, TiesGoToSmallestTheta) {
    // Events only every seventh bin with a lag window of six: no event has history,
    // so every theta yields zero weights and the same held-out score.
    nh::CountMatrix S(700, 2, 1.0);
    for (std::size_t t = 0; t < 700; t += 7) {
        S(t, 0) = 1;
        S(t, 1) = 2;
    }
    const auto basis = nh::make_basis({700, 2, 1, 6, 1.0}, nh::BasisKind::boxcar);
    nh::MapConfig cfg;
    cfg.cv_grid = {10.0, 1.0, 100.0};
    const auto cv = nh::cross_validate(S, basis, cfg);
    EXPECT_EQ(cv.best, 1.0);
    ASSERT_EQ(cv.grid.size(), 3u);
    EXPECT_EQ(cv.grid.front(), 1.0);
    EXPECT_EQ(cv.heldout_loglik[0], cv.heldout_loglik[2]);
}

TEST(CrossValidate, PicksTheBestHeldoutScore) {
    const auto pb = make_problem(2000, 3, 1, 7);
    const auto cv = nh::cross_validate(pb.S, pb.basis, {});
    const auto it = std::max_element(cv.heldout_loglik.begin(), cv.heldout_loglik.end());
    EXPECT_EQ(cv.best, cv.grid[static_cast<std::size_t>(it - cv.heldout_loglik.begin())]);
}

TEST(InitializeFromMap, KeepsLargestWeightsWithRowMajorTies) {
    nh::ModelParams dense(3, 2);
    dense.lambda0 = {0.5, 1.0, 2.0};
    dense.A.fill(1);
    const double w[9] = {0.1, 0.5, 0.2, 0.5, 0.0, 0.3, 0.05, 0.5, 0.01};
    std::copy(w, w + 9, dense.W.data().begin());
    const auto init = nh::initialize_from_map(dense, 0.3, nh::HyperParams::defaults(2), nh::ErdosRenyiPrior(3, {}));
    // ceil(0.3 * 9) = 3 entries: the three tied 0.5 weights in row-major order.
    ASSERT_EQ(init.kept.size(), 3u);
    EXPECT_EQ(init.kept[0], 1u);
    EXPECT_EQ(init.kept[1], 3u);
    EXPECT_EQ(init.kept[2], 7u);
    EXPECT_EQ(init.gibbs.A(0, 1), 1);
    EXPECT_EQ(init.gibbs.A(1, 2), 0);
    EXPECT_EQ(init.gibbs.W(1, 2), 0.0);
    EXPECT_NO_THROW(init.gibbs.validate(true));
    const auto& q = init.variational;
    EXPECT_NO_THROW(q.validate());
    EXPECT_DOUBLE_EQ(q.p(0, 1), 0.999);
    EXPECT_DOUBLE_EQ(q.p(1, 2), 0.001);
    EXPECT_NEAR(q.kappa1(0, 1) / q.v1(0, 1), 0.5, 1e-12);
    EXPECT_NEAR(q.alpha[2] / q.beta[2], 2.0, 1e-12);
    EXPECT_NEAR(q.gamma(0, 0, 0) / (q.gamma(0, 0, 0) + q.gamma(0, 0, 1)), 0.5, 1e-12);
    EXPECT_THROW(nh::initialize_from_map(dense, 0.0, nh::HyperParams::defaults(2), nh::ErdosRenyiPrior(3, {})),
                 std::invalid_argument);
}

TEST(InitializeFromMap, ExactFractionIsNotRoundedUp) {
    nh::ModelParams dense(2, 1);
    dense.A.fill(1);
    dense.W(0, 0) = 0.3;
    dense.W(1, 1) = 0.2;
    const auto init = nh::initialize_from_map(dense, 0.5, nh::HyperParams::defaults(1), nh::ErdosRenyiPrior(2, {}));
    EXPECT_EQ(init.kept.size(), 2u);
}
