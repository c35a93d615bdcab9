#pragma once

#include "nethawkes/core.hpp"
#include "nethawkes/random.hpp"
#include "nethawkes/vi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace nethawkes {

struct PosteriorSummary {
    Matrix<double> mean_A;
    Matrix<double> std_A;
    Matrix<double> mean_W;
    std::vector<double> mean_lambda0;
    std::vector<ModelParams> draws;
};

// Sample moments (population variance) over a stack of Gibbs samples.
inline PosteriorSummary summarize_samples(std::vector<ModelParams> samples) {
    if (samples.empty()) {
        throw std::invalid_argument("summarize_samples: no samples");
    }
    const std::size_t K = samples.front().K();
    PosteriorSummary out{Matrix<double>(K, K, 0.0), Matrix<double>(K, K, 0.0), Matrix<double>(K, K, 0.0),
                         std::vector<double>(K, 0.0), {}};
    const double n = static_cast<double>(samples.size());
    for (const ModelParams& s : samples) {
        if (s.K() != K) {
            throw std::invalid_argument("summarize_samples: inconsistent sample shapes");
        }
        for (std::size_t i = 0; i < K * K; ++i) {
            out.mean_A.data()[i] += s.A.data()[i] / n;
            out.mean_W.data()[i] += s.W.data()[i] / n;
        }
        for (std::size_t k = 0; k < K; ++k) {
            out.mean_lambda0[k] += s.lambda0[k] / n;
        }
    }
    for (const ModelParams& s : samples) {
        for (std::size_t i = 0; i < K * K; ++i) {
            const double d = s.A.data()[i] - out.mean_A.data()[i];
            out.std_A.data()[i] += d * d / n;
        }
    }
    for (double& v : out.std_A.data()) {
        v = std::sqrt(v);
    }
    out.draws = std::move(samples);
    return out;
}

// Exact Bernoulli moments of q(A) plus n_draws samples from q for predictive scoring.
inline PosteriorSummary summarize_variational(const VariationalState& q, std::size_t n_draws, Rng& rng) {
    const std::size_t K = q.K();
    PosteriorSummary out{q.p, Matrix<double>(K, K), Matrix<double>(K, K), std::vector<double>(K), {}};
    for (std::size_t k = 0; k < K; ++k) {
        out.mean_lambda0[k] = q.alpha[k] / q.beta[k];
        for (std::size_t kp = 0; kp < K; ++kp) {
            const double p = q.p(k, kp);
            out.std_A(k, kp) = std::sqrt(p * (1.0 - p));
            out.mean_W(k, kp) = q.mean_weight(k, kp);
        }
    }
    for (std::size_t i = 0; i < n_draws; ++i) {
        out.draws.push_back(sample_from_variational(q, rng));
    }
    return out;
}

// Point-estimate summary (e.g. a MAP fit) with zero posterior spread.
inline PosteriorSummary summarize_point(const ModelParams& p) {
    const std::size_t K = p.K();
    PosteriorSummary out{Matrix<double>(K, K), Matrix<double>(K, K, 0.0), p.W, p.lambda0, {p}};
    for (std::size_t i = 0; i < K * K; ++i) {
        out.mean_A.data()[i] = p.A.data()[i];
    }
    return out;
}

// Per-process homogeneous Poisson rates N_k / (T dt) estimated from training counts.
inline std::vector<double> homogeneous_rates(const CountMatrix& train) {
    std::vector<double> rates = train.totals();
    for (double& r : rates) {
        r /= static_cast<double>(train.T) * train.dt;
    }
    return rates;
}

inline double log_mean_exp(std::span<const double> xs) {
    if (xs.empty()) {
        throw std::invalid_argument("log_mean_exp: empty input");
    }
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) {
        return m;
    }
    double acc = 0.0;
    for (double x : xs) {
        acc += std::exp(x - m);
    }
    return m + std::log(acc / static_cast<double>(xs.size()));
}

struct PredictiveResult {
    double improvement = 0.0; // nats per held-out event over the homogeneous baseline
    double model_loglik = 0.0;
    double baseline_loglik = 0.0;
    double events = 0.0;
};

// Held-out predictive log likelihood. History restarts at the start of the test block:
// the convolved counts come from the test counts alone.
inline PredictiveResult predictive_ll(const CountMatrix& test, std::span<const ModelParams> draws,
                                      const BasisSet& basis, std::span<const double> baseline_rates) {
    if (draws.empty()) {
        throw std::invalid_argument("predictive_ll: need at least one posterior draw");
    }
    if (baseline_rates.size() != test.K) {
        throw std::invalid_argument("predictive_ll: baseline rates have the wrong length");
    }
    const double events = test.total();
    if (!(events > 0.0)) {
        throw UndefinedMetricError("predictive_ll: the test block contains no events");
    }
    const ConvolvedCounts shat = convolve_counts(test, basis);
    std::vector<double> lls;
    lls.reserve(draws.size());
    for (const ModelParams& p : draws) {
        lls.push_back(poisson_log_likelihood(test, compute_rates(p, shat)));
    }
    Matrix<double> base(test.T, test.K);
    for (std::size_t t = 0; t < test.T; ++t) {
        for (std::size_t k = 0; k < test.K; ++k) {
            base(t, k) = baseline_rates[k];
        }
    }
    PredictiveResult r;
    r.events = events;
    r.model_loglik = log_mean_exp(lls);
    r.baseline_loglik = poisson_log_likelihood(test, base);
    if (!std::isfinite(r.baseline_loglik)) {
        throw UndefinedMetricError("predictive_ll: the baseline assigns zero probability to the test block");
    }
    r.improvement = (r.model_loglik - r.baseline_loglik) / events;
    return r;
}

struct LinkScores {
    Matrix<double> score;
    Matrix<std::uint8_t> mask; // 1 where the entry takes part in the metric
};

inline LinkScores make_link_scores(Matrix<double> score, bool include_diagonal = false) {
    if (score.rows() != score.cols()) {
        throw std::invalid_argument("make_link_scores: score matrix must be square");
    }
    const std::size_t K = score.rows();
    Matrix<std::uint8_t> mask(K, K, 1);
    if (!include_diagonal) {
        for (std::size_t k = 0; k < K; ++k) {
            mask(k, k) = 0;
        }
    }
    return {std::move(score), std::move(mask)};
}

namespace detail {
inline void collect_links(const LinkScores& s, const Matrix<std::uint8_t>& truth, std::vector<double>& scores,
                          std::vector<std::uint8_t>& labels) {
    if (truth.rows() != s.score.rows() || truth.cols() != s.score.cols() || s.mask.rows() != s.score.rows() ||
        s.mask.cols() != s.score.cols()) {
        throw std::invalid_argument("link metrics: shape mismatch");
    }
    std::size_t pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (!s.mask.data()[i]) {
            continue;
        }
        const double v = s.score.data()[i];
        if (!std::isfinite(v)) {
            throw std::invalid_argument("link metrics: non-finite score on a masked entry");
        }
        scores.push_back(v);
        labels.push_back(truth.data()[i] ? 1 : 0);
        pos += truth.data()[i] ? 1 : 0;
    }
    if (pos == 0 || pos == labels.size()) {
        throw UndefinedMetricError("link metrics: truth needs at least one positive and one negative");
    }
}
} // namespace detail

// Mann-Whitney statistic with ties counted as one half.
inline double roc_auc(const LinkScores& s, const Matrix<std::uint8_t>& truth) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    detail::collect_links(s, truth, scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Midranks over tied groups.
    double rank_sum = 0.0, npos = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t m = i; m < j; ++m) {
            if (labels[order[m]]) {
                rank_sum += midrank;
                npos += 1.0;
            }
        }
        i = j;
    }
    const double nneg = static_cast<double>(scores.size()) - npos;
    return (rank_sum - npos * (npos + 1.0) / 2.0) / (npos * nneg);
}

struct PrPoint {
    double recall;
    double precision;
};

// Precision-recall points at every distinct threshold, starting from (0, 1).
inline std::vector<PrPoint> pr_curve(const LinkScores& s, const Matrix<std::uint8_t>& truth) {
    std::vector<double> scores;
    std::vector<std::uint8_t> labels;
    detail::collect_links(s, truth, scores, labels);
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const double npos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    std::vector<PrPoint> curve{{0.0, 1.0}};
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? tp : fp) += 1.0;
            ++j;
        }
        curve.push_back({tp / npos, tp / (tp + fp)});
        i = j;
    }
    return curve;
}

// Trapezoidal area under the precision-recall points.
inline double pr_auc(const LinkScores& s, const Matrix<std::uint8_t>& truth) {
    const std::vector<PrPoint> c = pr_curve(s, truth);
    double area = 0.0;
    for (std::size_t i = 1; i < c.size(); ++i) {
        area += (c[i].recall - c[i - 1].recall) * 0.5 * (c[i].precision + c[i - 1].precision);
    }
    return area;
}

// score(k -> k') = max over lags d in 1..D of the Pearson correlation between
// s[0 .. T-d), k and s[d .. T), k'. Pairs with a zero-variance window score 0 at that lag.
inline LinkScores xcorr_baseline(const CountMatrix& S, std::size_t max_lag, bool include_diagonal = false) {
    S.validate();
    if (max_lag == 0 || max_lag + 1 >= S.T) {
        throw std::invalid_argument("xcorr_baseline: need 1 <= max_lag < T - 1");
    }
    const std::size_t T = S.T, K = S.K;
    Matrix<double> score(K, K, -std::numeric_limits<double>::infinity());
    for (std::size_t d = 1; d <= max_lag; ++d) {
        const std::size_t n = T - d;
        for (std::size_t k = 0; k < K; ++k) {
            double mx = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                mx += S(t, k);
            }
            mx /= static_cast<double>(n);
            double vx = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                vx += (S(t, k) - mx) * (S(t, k) - mx);
            }
            for (std::size_t kp = 0; kp < K; ++kp) {
                double my = 0.0;
                for (std::size_t t = d; t < T; ++t) {
                    my += S(t, kp);
                }
                my /= static_cast<double>(n);
                double vy = 0.0, cxy = 0.0;
                for (std::size_t t = 0; t < n; ++t) {
                    const double y = S(t + d, kp) - my;
                    vy += y * y;
                    cxy += (S(t, k) - mx) * y;
                }
                const double r = (vx > 0.0 && vy > 0.0) ? cxy / std::sqrt(vx * vy) : 0.0;
                score(k, kp) = std::max(score(k, kp), r);
            }
        }
    }
    return make_link_scores(std::move(score), include_diagonal);
}

inline constexpr double kUncertaintyCap = 1e6;

// mean_A / std_A elementwise; entries with std_A < 1e-6 map to +infinity.
inline Matrix<double> uncertainty_map(const PosteriorSummary& post) {
    Matrix<double> out(post.mean_A.rows(), post.mean_A.cols());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double sd = post.std_A.data()[i];
        out.data()[i] = sd < 1e-6 ? std::numeric_limits<double>::infinity() : post.mean_A.data()[i] / sd;
    }
    return out;
}

// Binary counts: 1 where the spike probability is at least the threshold (inclusive).
inline CountMatrix threshold_spikes(const Matrix<double>& prob, double threshold = 0.7, double dt = 1.0) {
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
        throw std::invalid_argument("threshold_spikes: threshold must lie in [0, 1]");
    }
    CountMatrix S(prob.rows(), prob.cols(), dt);
    for (std::size_t i = 0; i < prob.size(); ++i) {
        const double v = prob.data()[i];
        if (!(v >= 0.0 && v <= 1.0)) {
            throw std::invalid_argument("threshold_spikes: probabilities must lie in [0, 1]");
        }
        S.data[i] = v >= threshold ? 1 : 0;
    }
    return S;
}

struct LinkReport {
    double roc_auc = 0.0;
    double pr_auc = 0.0;
};

inline LinkReport link_report(const LinkScores& s, const Matrix<std::uint8_t>& truth) {
    return {roc_auc(s, truth), pr_auc(s, truth)};
}

} // namespace nethawkes
