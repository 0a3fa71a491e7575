#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrmeta/meta.hpp"
#include "hrmeta/predict.hpp"
#include "hrmeta/rng.hpp"

namespace hrmeta {

// One leave-one-out fold: the held-out study's observed randomized log HR
// against the adjusted and unadjusted predictions, standardized by the
// posterior standard deviation of the adjusted draws.
struct LooRecord {
    std::string held_out_label;
    double observed;
    double predicted_adjusted;
    double predicted_unadjusted;
    double sd_adjusted;
    double residual_adjusted;
    double residual_unadjusted;
};

struct QQData {
    std::vector<double> sorted_residuals;
    std::vector<double> theoretical_quantiles;
};

namespace detail {

// Standard normal inverse CDF (Acklam's rational approximation with one
// Halley refinement step; absolute error well below 1e-12).
inline double qnorm(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("qnorm: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
            q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step against the CDF via erfc.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    constexpr double sqrt_2pi = 2.5066282746310002;
    const double u = e * sqrt_2pi * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

inline double sample_sd(const std::vector<double>& x) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double s = 0.0;
    for (double v : x) s += (v - mean) * (v - mean);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

inline const LogHREstimate& find_by_label(const ReferenceSet& set,
                                          const std::string& label) {
    for (const auto& s : set.studies)
        if (s.label == label) return s;
    throw std::domain_error("loo_cross_validate: label '" + label +
                            "' missing from aligned reference set");
}

}  // namespace detail

// Sorted standardized residuals paired with normal quantiles at
// (i - 0.5)/n plotting positions.
inline QQData qq_data(const std::vector<double>& residuals) {
    if (residuals.size() < 2)
        throw std::domain_error("qq_data: need at least 2 residuals");
    for (double r : residuals)
        if (!std::isfinite(r)) throw std::domain_error("qq_data: non-finite residual");

    QQData out;
    out.sorted_residuals = residuals;
    std::sort(out.sorted_residuals.begin(), out.sorted_residuals.end());
    const std::size_t n = residuals.size();
    out.theoretical_quantiles.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.theoretical_quantiles[i] =
            detail::qnorm((static_cast<double>(i) + 0.5) / static_cast<double>(n));
    return out;
}

// Leave-one-out model checking: refit the meta-analysis with each study
// held out, predict its TRTvIC log HR from the TRTvEC estimate, and
// compare to the trial's randomized estimate. The three sets must be
// aligned by label.
inline std::vector<LooRecord> loo_cross_validate(
    const ReferenceSet& ic_ec, const ReferenceSet& trt_ec,
    const ReferenceSet& trt_ic, const PriorSpec& priors, const McmcConfig& config,
    std::uint64_t seed) {
    ic_ec.validate(3);
    if (trt_ec.size() != ic_ec.size() || trt_ic.size() != ic_ec.size())
        throw std::domain_error("loo_cross_validate: reference sets differ in length");

    std::vector<LooRecord> records;
    records.reserve(ic_ec.size());
    for (std::size_t t = 0; t < ic_ec.size(); ++t) {
        const std::string& label = ic_ec.studies[t].label;
        const auto& test_trt_ec = detail::find_by_label(trt_ec, label);
        const auto& test_trt_ic = detail::find_by_label(trt_ic, label);

        ReferenceSet train;
        for (std::size_t j = 0; j < ic_ec.size(); ++j)
            if (j != t) train.studies.push_back(ic_ec.studies[j]);

        const std::uint64_t fold_seed = substream_seed(seed, mix64(0x100f) ^
                                                                 std::hash<std::string>{}(label));
        const auto meta = fit_bayes(train, priors, config, fold_seed);
        Rng rng = make_rng(substream_seed(fold_seed, 0xd0e));
        NewStudyEstimate new_study{test_trt_ec.estimate,
                                   test_trt_ec.se * test_trt_ec.se};
        const auto pred = predict_bayes(new_study, meta, 100.0, rng);

        std::vector<double> sorted = pred.draws;
        std::sort(sorted.begin(), sorted.end());

        LooRecord rec;
        rec.held_out_label = label;
        rec.observed = test_trt_ic.estimate;
        rec.predicted_adjusted = quantile_sorted(sorted, 0.5);
        rec.predicted_unadjusted = test_trt_ec.estimate;
        rec.sd_adjusted = detail::sample_sd(pred.draws);
        rec.residual_adjusted =
            (rec.observed - rec.predicted_adjusted) / rec.sd_adjusted;
        rec.residual_unadjusted =
            (rec.observed - rec.predicted_unadjusted) / rec.sd_adjusted;
        records.push_back(std::move(rec));
    }
    return records;
}

}  // namespace hrmeta
