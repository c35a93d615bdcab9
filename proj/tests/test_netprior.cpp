#include "nethawkes/netprior.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace nh = nethawkes;

TEST(ErdosRenyiPrior, RejectsInvalidConfig) {
    EXPECT_THROW(nh::ErdosRenyiPrior(0, {}), std::invalid_argument);
    nh::ErdosRenyiPrior::Config c;
    c.tau1 = 0.0;
    EXPECT_THROW(nh::ErdosRenyiPrior(3, c), std::invalid_argument);
    c = {};
    c.fixed_p = 1.0;
    EXPECT_THROW(nh::ErdosRenyiPrior(3, c), std::invalid_argument);
    c = {};
    c.fixed_v = -2.0;
    EXPECT_THROW(nh::ErdosRenyiPrior(3, c), std::invalid_argument);
}

TEST(ErdosRenyiPrior, ConditionalsCountEdges) {
    nh::ErdosRenyiPrior pr(3, {});
    nh::Matrix<std::uint8_t> A(3, 3, 0);
    nh::Matrix<double> W(3, 3, 0.0);
    A(0, 1) = 1;
    W(0, 1) = 0.5;
    A(2, 2) = 1;
    W(2, 2) = 1.5;
    const auto c = pr.gibbs_conditionals(A, W, 3.0);
    EXPECT_DOUBLE_EQ(c.p_a, 1.0 + 2.0);
    EXPECT_DOUBLE_EQ(c.p_b, 1.0 + 7.0);
    EXPECT_DOUBLE_EQ(c.v_shape, 10.0 + 6.0);
    EXPECT_DOUBLE_EQ(c.v_rate, 1.0 + 2.0);
    EXPECT_THROW((void)pr.gibbs_conditionals(nh::Matrix<std::uint8_t>(2, 2, 0), nh::Matrix<double>(2, 2), 3.0),
                 std::invalid_argument);
}

TEST(ErdosRenyiPrior, GibbsUpdateMomentsMatchConditionals) {
    nh::ErdosRenyiPrior pr(4, {});
    nh::Matrix<std::uint8_t> A(4, 4, 0);
    nh::Matrix<double> W(4, 4, 0.0);
    for (std::size_t i = 0; i < 4; ++i) {
        A(i, (i + 1) % 4) = 1;
        W(i, (i + 1) % 4) = 0.25 * (i + 1);
    }
    const auto c = pr.gibbs_conditionals(A, W, 2.0);
    nh::Rng rng(1);
    const int n = 40000;
    double mp = 0.0, mv = 0.0;
    for (int i = 0; i < n; ++i) {
        pr.gibbs_update(A, W, 2.0, rng);
        mp += pr.p();
        mv += pr.v();
    }
    mp /= n;
    mv /= n;
    const double ep = c.p_a / (c.p_a + c.p_b);
    const double sp = std::sqrt(ep * (1 - ep) / (c.p_a + c.p_b + 1));
    const double ev = c.v_shape / c.v_rate;
    const double sv = std::sqrt(c.v_shape) / c.v_rate;
    EXPECT_NEAR(mp, ep, 4 * sp / std::sqrt(n));
    EXPECT_NEAR(mv, ev, 4 * sv / std::sqrt(n));
}

TEST(ErdosRenyiPrior, FixedOverridesAreHonoured) {
    nh::ErdosRenyiPrior::Config c;
    c.fixed_p = 0.2;
    c.fixed_v = 7.0;
    nh::ErdosRenyiPrior pr(2, c);
    nh::Rng rng(3);
    nh::Matrix<std::uint8_t> A(2, 2, 1);
    nh::Matrix<double> W(2, 2, 1.0);
    pr.gibbs_update(A, W, 3.0, rng);
    EXPECT_EQ(pr.p(), 0.2);
    EXPECT_EQ(pr.v(), 7.0);
    pr.sample_from_prior(rng);
    EXPECT_EQ(pr.p(), 0.2);
    const auto e = pr.expectations();
    EXPECT_DOUBLE_EQ(e.e_ln_p(1, 0), std::log(0.2));
    EXPECT_DOUBLE_EQ(e.e_ln_1mp(0, 1), std::log(0.8));
    EXPECT_DOUBLE_EQ(e.e_v(0, 0), 7.0);
    EXPECT_EQ(pr.elbo_terms(), 0.0);
    EXPECT_EQ(pr.log_density(), 0.0);
}

TEST(ErdosRenyiPrior, ExpectationsUnderVariationalFactors) {
    nh::ErdosRenyiPrior pr(2, {});
    pr.set_variational(3.0, 5.0, 4.0, 2.0);
    const auto e = pr.expectations();
    EXPECT_NEAR(e.e_ln_p(0, 0), oracle::psi(3.0) - oracle::psi(8.0), 1e-12);
    EXPECT_NEAR(e.e_ln_1mp(0, 0), oracle::psi(5.0) - oracle::psi(8.0), 1e-12);
    EXPECT_NEAR(e.e_v(0, 0), 2.0, 1e-15);
    EXPECT_NEAR(e.e_ln_v(0, 0), oracle::psi(4.0) - std::log(2.0), 1e-12);
    EXPECT_THROW(pr.set_variational(0.0, 1.0, 1.0, 1.0), std::invalid_argument);
}

TEST(ErdosRenyiPrior, VbUpdateClosedForm) {
    nh::ErdosRenyiPrior pr(2, {});
    nh::Matrix<double> pt(2, 2, 0.5);
    nh::Matrix<double> slab(2, 2, 0.3);
    pr.vb_update(pt, slab, 3.0);
    EXPECT_DOUBLE_EQ(pr.beta_a(), 1.0 + 2.0);
    EXPECT_DOUBLE_EQ(pr.beta_b(), 1.0 + 2.0);
    EXPECT_DOUBLE_EQ(pr.gamma_shape(), 10.0 + 6.0);
    EXPECT_DOUBLE_EQ(pr.gamma_rate(), 1.0 + 0.6);
    // Half step toward the same target leaves it unchanged.
    pr.vb_update(pt, slab, 3.0, 0.5);
    EXPECT_DOUBLE_EQ(pr.beta_a(), 3.0);
    pr.reset();
    pr.vb_update(pt, slab, 3.0, 0.25);
    EXPECT_DOUBLE_EQ(pr.beta_a(), 0.75 * 1.0 + 0.25 * 3.0);
}

TEST(ErdosRenyiPrior, ElboTermsMatchNegativeKl) {
    nh::ErdosRenyiPrior pr(2, {});
    EXPECT_NEAR(pr.elbo_terms(), 0.0, 1e-12);
    pr.set_variational(2.0, 3.0, 12.0, 1.5);
    // KL(Beta(2,3) || Beta(1,1)) = -H(Beta(2,3)); KL of gammas by closed form.
    const double kl_beta = -oracle::beta_entropy(2.0, 3.0);
    const double a = 12.0, b = 1.5, a0 = 10.0, b0 = 1.0;
    const double kl_gamma = (a - a0) * oracle::psi(a) - oracle::lgam(a) + oracle::lgam(a0) +
                            a0 * (std::log(b) - std::log(b0)) + a * (b0 - b) / b;
    EXPECT_NEAR(pr.elbo_terms(), -(kl_beta + kl_gamma), 1e-10);
}

TEST(ErdosRenyiPrior, LogDensityMatchesReference) {
    nh::ErdosRenyiPrior::Config c;
    c.tau1 = 2.0;
    c.tau0 = 3.0;
    nh::ErdosRenyiPrior pr(2, c);
    pr.set_point(0.3, 4.0);
    const double ref = std::log(0.3) + 2 * std::log(0.7) - (oracle::lgam(2) + oracle::lgam(3) - oracle::lgam(5)) +
                       10 * std::log(1.0) - oracle::lgam(10) + 9 * std::log(4.0) - 4.0;
    EXPECT_NEAR(pr.log_density(), ref, 1e-12);
}
