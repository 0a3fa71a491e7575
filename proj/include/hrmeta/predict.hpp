#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "hrmeta/meta.hpp"
#include "hrmeta/rng.hpp"

namespace hrmeta {

// The new single-arm study's treatment-vs-external-control estimate.
struct NewStudyEstimate {
    double loghr_trt_ec;
    double variance;

    void validate() const {
        if (!(variance > 0.0))
            throw std::domain_error("NewStudyEstimate: variance must be > 0");
    }
};

enum class PredictionBackend { bayes, ml };

// Draws of the adjusted treatment effect (treatment vs hypothetical
// internal control). Component draws are kept so the per-draw identity
// draws[k] = trt_ec_draws[k] - ic_ec_draws[k] can be audited.
struct AdjustedPrediction {
    std::vector<double> draws;
    std::vector<double> trt_ec_draws;
    std::vector<double> ic_ec_draws;
    PredictionBackend backend = PredictionBackend::bayes;
    int n_reference = 0;
};

struct PredictionSummary {
    double median;
    double cri_lower;
    double cri_upper;
    double prob_negative;
    bool significant_one_sided;
};

// Linear-interpolation (type-7) quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 0) throw std::domain_error("quantile: empty sample");
    if (n == 1) return sorted[0];
    const double h = p * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= n) return sorted[n - 1];
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// Conjugate normal posterior of the TRTvEC log HR under a N(0, tau^2)
// prior, sampled after the analytic update.
inline std::vector<double> draw_trt_ec_posterior(const NewStudyEstimate& new_study,
                                                 double prior_variance,
                                                 std::size_t n_draws, Rng& rng) {
    new_study.validate();
    if (!(prior_variance > 0.0))
        throw std::invalid_argument("draw_trt_ec_posterior: prior_variance must be > 0");
    if (n_draws < 1)
        throw std::invalid_argument("draw_trt_ec_posterior: n_draws must be >= 1");
    const double tau2 = prior_variance;
    const double v = new_study.variance;
    const double post_mean = new_study.loghr_trt_ec * tau2 / (tau2 + v);
    const double post_sd = std::sqrt(tau2 * v / (tau2 + v));
    std::normal_distribution<double> dist(post_mean, post_sd);
    std::vector<double> out(n_draws);
    for (auto& d : out) d = dist(rng);
    return out;
}

// One adjusted draw per meta posterior draw: sample the new study's
// TRTvEC posterior, sample the control bias N(mu_k, sigma_k^2), subtract.
inline AdjustedPrediction predict_bayes(const NewStudyEstimate& new_study,
                                        const PosteriorDraws& meta,
                                        double prior_variance, Rng& rng) {
    new_study.validate();
    if (meta.mu.empty() || meta.mu.size() != meta.sigma.size())
        throw std::domain_error("predict_bayes: empty or inconsistent meta draws");

    const std::size_t n = meta.mu.size();
    AdjustedPrediction pred;
    pred.backend = PredictionBackend::bayes;
    pred.n_reference = meta.n_reference;
    pred.trt_ec_draws = draw_trt_ec_posterior(new_study, prior_variance, n, rng);
    pred.ic_ec_draws.resize(n);
    pred.draws.resize(n);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    for (std::size_t k = 0; k < n; ++k) {
        pred.ic_ec_draws[k] = meta.mu[k] + meta.sigma[k] * std_normal(rng);
        pred.draws[k] = pred.trt_ec_draws[k] - pred.ic_ec_draws[k];
    }
    return pred;
}

// ML backend: the control bias for a new study is t-distributed with
// n-1 degrees of freedom, location mu_hat, scale sigma_hat*sqrt(1+1/n).
inline AdjustedPrediction predict_ml(const NewStudyEstimate& new_study,
                                     const MLFit& fit, std::size_t n_draws,
                                     Rng& rng) {
    new_study.validate();
    if (fit.n < 2)
        throw std::domain_error("predict_ml: need at least 2 reference studies");
    if (n_draws < 1) throw std::invalid_argument("predict_ml: n_draws must be >= 1");

    const double scale =
        fit.sigma_hat * std::sqrt(1.0 + 1.0 / static_cast<double>(fit.n));
    std::normal_distribution<double> trt_dist(new_study.loghr_trt_ec,
                                              std::sqrt(new_study.variance));
    std::student_t_distribution<double> t_dist(static_cast<double>(fit.n - 1));

    AdjustedPrediction pred;
    pred.backend = PredictionBackend::ml;
    pred.n_reference = fit.n;
    pred.trt_ec_draws.resize(n_draws);
    pred.ic_ec_draws.resize(n_draws);
    pred.draws.resize(n_draws);
    for (std::size_t k = 0; k < n_draws; ++k) {
        pred.trt_ec_draws[k] = trt_dist(rng);
        pred.ic_ec_draws[k] = fit.mu_hat + scale * t_dist(rng);
        pred.draws[k] = pred.trt_ec_draws[k] - pred.ic_ec_draws[k];
    }
    return pred;
}

// Median, central credible interval, and the one-sided decision rule
// (significant when the interval's upper limit is below zero).
inline PredictionSummary summarize(const AdjustedPrediction& pred, double alpha) {
    if (pred.draws.empty()) throw std::domain_error("summarize: no draws");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("summarize: alpha must be in (0,1)");
    std::vector<double> sorted = pred.draws;
    std::sort(sorted.begin(), sorted.end());

    PredictionSummary s;
    s.median = quantile_sorted(sorted, 0.5);
    s.cri_lower = quantile_sorted(sorted, 0.5 * alpha);
    s.cri_upper = quantile_sorted(sorted, 1.0 - 0.5 * alpha);
    std::size_t neg = 0;
    for (double d : sorted) neg += d < 0.0 ? 1 : 0;
    s.prob_negative = static_cast<double>(neg) / static_cast<double>(sorted.size());
    s.significant_one_sided = s.cri_upper < 0.0;
    return s;
}

}  // namespace hrmeta
