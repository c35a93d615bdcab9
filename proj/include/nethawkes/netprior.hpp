#pragma once

#include "nethawkes/array.hpp"
#include "nethawkes/random.hpp"
#include "nethawkes/special.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

namespace nethawkes {

// Posterior expectations the engines need from a network prior, one entry per edge.
struct NetPriorExpectations {
    Matrix<double> e_ln_p;
    Matrix<double> e_ln_1mp;
    Matrix<double> e_v;
    Matrix<double> e_ln_v;
};

// Erdos-Renyi prior: a shared connection probability p ~ Beta(tau1, tau0) and a shared
// weight rate v ~ Gamma(alpha_v, beta_v). Self-edges count as ordinary entries.
class ErdosRenyiPrior {
  public:
    struct Config {
        double tau1 = 1.0;
        double tau0 = 1.0;
        double alpha_v = 10.0;
        double beta_v = 1.0;
        std::optional<double> fixed_p;
        std::optional<double> fixed_v;
    };

    ErdosRenyiPrior() : ErdosRenyiPrior(1, Config{}) {}
    explicit ErdosRenyiPrior(std::size_t K) : ErdosRenyiPrior(K, Config()) {}
    ErdosRenyiPrior(std::size_t K, Config cfg) : K_(K), cfg_(cfg) {
        if (K == 0) {
            throw std::invalid_argument("ErdosRenyiPrior: K must be >= 1");
        }
        if (!(cfg.tau1 > 0.0) || !(cfg.tau0 > 0.0) || !(cfg.alpha_v > 0.0) || !(cfg.beta_v > 0.0)) {
            throw std::invalid_argument("ErdosRenyiPrior: hyperparameters must be positive");
        }
        if (cfg.fixed_p && !(*cfg.fixed_p > 0.0 && *cfg.fixed_p < 1.0)) {
            throw std::invalid_argument("ErdosRenyiPrior: fixed p must lie in (0, 1)");
        }
        if (cfg.fixed_v && !(*cfg.fixed_v > 0.0 && std::isfinite(*cfg.fixed_v))) {
            throw std::invalid_argument("ErdosRenyiPrior: fixed v must be positive");
        }
        reset();
    }

    // Returns the Gibbs point values to the prior means and the variational factors to the priors.
    void reset() {
        p_ = cfg_.fixed_p.value_or(cfg_.tau1 / (cfg_.tau1 + cfg_.tau0));
        v_ = cfg_.fixed_v.value_or(cfg_.alpha_v / cfg_.beta_v);
        beta_a_ = cfg_.tau1;
        beta_b_ = cfg_.tau0;
        gamma_shape_ = cfg_.alpha_v;
        gamma_rate_ = cfg_.beta_v;
    }

    [[nodiscard]] std::size_t K() const noexcept { return K_; }
    [[nodiscard]] const Config& config() const noexcept { return cfg_; }

    // Gibbs state.
    [[nodiscard]] double p() const noexcept { return p_; }
    [[nodiscard]] double v() const noexcept { return v_; }
    void set_point(double p, double v) {
        p_ = cfg_.fixed_p.value_or(p);
        v_ = cfg_.fixed_v.value_or(v);
    }
    [[nodiscard]] Matrix<double> p_matrix() const { return Matrix<double>(K_, K_, p_); }
    [[nodiscard]] Matrix<double> v_matrix() const { return Matrix<double>(K_, K_, v_); }

    // Variational state: q(p) = Beta(a, b), q(v) = Gamma(shape, rate).
    [[nodiscard]] double beta_a() const noexcept { return beta_a_; }
    [[nodiscard]] double beta_b() const noexcept { return beta_b_; }
    [[nodiscard]] double gamma_shape() const noexcept { return gamma_shape_; }
    [[nodiscard]] double gamma_rate() const noexcept { return gamma_rate_; }
    void set_variational(double a, double b, double shape, double rate) {
        if (!(a > 0.0) || !(b > 0.0) || !(shape > 0.0) || !(rate > 0.0)) {
            throw std::invalid_argument("ErdosRenyiPrior: variational parameters must be positive");
        }
        beta_a_ = a;
        beta_b_ = b;
        gamma_shape_ = shape;
        gamma_rate_ = rate;
    }

    [[nodiscard]] NetPriorExpectations expectations() const {
        double e_ln_p, e_ln_1mp, e_v, e_ln_v;
        if (cfg_.fixed_p) {
            e_ln_p = std::log(*cfg_.fixed_p);
            e_ln_1mp = std::log1p(-*cfg_.fixed_p);
        } else {
            const double dsum = digamma(beta_a_ + beta_b_);
            e_ln_p = digamma(beta_a_) - dsum;
            e_ln_1mp = digamma(beta_b_) - dsum;
        }
        if (cfg_.fixed_v) {
            e_v = *cfg_.fixed_v;
            e_ln_v = std::log(*cfg_.fixed_v);
        } else {
            e_v = gamma_shape_ / gamma_rate_;
            e_ln_v = expected_log_gamma_rv(gamma_shape_, gamma_rate_);
        }
        return {Matrix<double>(K_, K_, e_ln_p), Matrix<double>(K_, K_, e_ln_1mp),
                Matrix<double>(K_, K_, e_v), Matrix<double>(K_, K_, e_ln_v)};
    }

    struct Conditionals {
        double p_a, p_b;           // Beta for p
        double v_shape, v_rate;    // Gamma for v
    };

    // Conjugate conditionals of (p, v) given the current network and slab shape kappa.
    [[nodiscard]] Conditionals gibbs_conditionals(const Matrix<std::uint8_t>& A, const Matrix<double>& W,
                                                  double kappa) const {
        check_shape(A.rows(), A.cols());
        double edges = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < A.size(); ++i) {
            if (A.data()[i]) {
                edges += 1.0;
                wsum += W.data()[i];
            }
        }
        const double total = static_cast<double>(K_ * K_);
        return {cfg_.tau1 + edges, cfg_.tau0 + total - edges, cfg_.alpha_v + kappa * edges,
                cfg_.beta_v + wsum};
    }

    void gibbs_update(const Matrix<std::uint8_t>& A, const Matrix<double>& W, double kappa, Rng& rng) {
        const Conditionals c = gibbs_conditionals(A, W, kappa);
        if (!cfg_.fixed_p) {
            p_ = sample_beta(rng, c.p_a, c.p_b);
            // Keep p strictly inside (0, 1) so log-odds stay finite.
            p_ = std::min(std::max(p_, 1e-300), 1.0 - 1e-16);
        }
        if (!cfg_.fixed_v) {
            v_ = std::max(sample_gamma(rng, c.v_shape, c.v_rate), 1e-300);
        }
    }

    // p_tilde: q(A = 1); slab_mean: E[W | A = 1].
    void vb_update(const Matrix<double>& p_tilde, const Matrix<double>& slab_mean, double kappa,
                   double rho = 1.0) {
        check_shape(p_tilde.rows(), p_tilde.cols());
        double sp = 0.0, sw = 0.0;
        for (std::size_t i = 0; i < p_tilde.size(); ++i) {
            sp += p_tilde.data()[i];
            sw += p_tilde.data()[i] * slab_mean.data()[i];
        }
        const double total = static_cast<double>(K_ * K_);
        const double a = cfg_.tau1 + sp;
        const double b = cfg_.tau0 + total - sp;
        const double shape = cfg_.alpha_v + kappa * sp;
        const double rate = cfg_.beta_v + sw;
        beta_a_ = (1.0 - rho) * beta_a_ + rho * a;
        beta_b_ = (1.0 - rho) * beta_b_ + rho * b;
        gamma_shape_ = (1.0 - rho) * gamma_shape_ + rho * shape;
        gamma_rate_ = (1.0 - rho) * gamma_rate_ + rho * rate;
    }

    // KL contributions of q(p), q(v) against their hyperpriors (zero when fixed).
    [[nodiscard]] double elbo_terms() const {
        double out = 0.0;
        if (!cfg_.fixed_p) {
            out += beta_elbo_term(cfg_.tau1, cfg_.tau0, beta_a_, beta_b_);
        }
        if (!cfg_.fixed_v) {
            out += gamma_elbo_term(cfg_.alpha_v, cfg_.beta_v, gamma_shape_, gamma_rate_);
        }
        return out;
    }

    // Log hyperprior density of the Gibbs point (p, v), skipping fixed components.
    [[nodiscard]] double log_density() const {
        double out = 0.0;
        if (!cfg_.fixed_p) {
            out += (cfg_.tau1 - 1.0) * std::log(p_) + (cfg_.tau0 - 1.0) * std::log1p(-p_) -
                   (log_gamma(cfg_.tau1) + log_gamma(cfg_.tau0) - log_gamma(cfg_.tau1 + cfg_.tau0));
        }
        if (!cfg_.fixed_v) {
            out += cfg_.alpha_v * std::log(cfg_.beta_v) - log_gamma(cfg_.alpha_v) +
                   (cfg_.alpha_v - 1.0) * std::log(v_) - cfg_.beta_v * v_;
        }
        return out;
    }

    // Draws (p, v) from the hyperprior, honouring fixed overrides.
    void sample_from_prior(Rng& rng) {
        p_ = cfg_.fixed_p ? *cfg_.fixed_p : sample_beta(rng, cfg_.tau1, cfg_.tau0);
        v_ = cfg_.fixed_v ? *cfg_.fixed_v : sample_gamma(rng, cfg_.alpha_v, cfg_.beta_v);
    }

  private:
    void check_shape(std::size_t r, std::size_t c) const {
        if (r != K_ || c != K_) {
            throw std::invalid_argument("ErdosRenyiPrior: matrix shape does not match K");
        }
    }

    std::size_t K_;
    Config cfg_;
    double p_ = 0.5;
    double v_ = 1.0;
    double beta_a_ = 1.0;
    double beta_b_ = 1.0;
    double gamma_shape_ = 1.0;
    double gamma_rate_ = 1.0;
};

} // namespace nethawkes
