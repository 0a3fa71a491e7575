#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "hrmeta/rng.hpp"

namespace hrmeta {

// One simulated trial arm: exponential survival, no censoring, so the
// number of events equals the sample size.
struct ArmSpec {
    double median_survival;
    int n_events;

    void validate() const {
        if (!(median_survival > 0.0))
            throw std::domain_error("ArmSpec: median_survival must be > 0");
        if (n_events < 2)
            throw std::domain_error("ArmSpec: n_events must be >= 2");
    }
};

// Pooled two-arm sample; group label 0 = comparator, 1 = index arm.
// All observations are events.
struct TwoArmSample {
    std::vector<double> times;
    std::vector<int> group;

    void validate() const {
        if (times.size() != group.size())
            throw std::invalid_argument("TwoArmSample: times/group length mismatch");
        bool has0 = false, has1 = false;
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (!(times[i] > 0.0))
                throw std::invalid_argument("TwoArmSample: times must be > 0");
            if (group[i] == 0) has0 = true;
            else if (group[i] == 1) has1 = true;
            else throw std::invalid_argument("TwoArmSample: group labels must be 0/1");
        }
        if (!has0 || !has1)
            throw std::invalid_argument("TwoArmSample: both groups must be non-empty");
    }
};

struct CoxFit {
    double loghr = 0.0;
    double se = 0.0;
    bool converged = false;
};

// Exponential rate with the requested median: median = ln(2)/rate.
inline double rate_from_median(double median) {
    if (!(median > 0.0))
        throw std::domain_error("rate_from_median: median must be > 0");
    return std::log(2.0) / median;
}

inline std::vector<double> simulate_arm(const ArmSpec& spec, Rng& rng) {
    spec.validate();
    std::exponential_distribution<double> dist(rate_from_median(spec.median_survival));
    std::vector<double> out(static_cast<std::size_t>(spec.n_events));
    for (auto& t : out) t = dist(rng);
    return out;
}

namespace detail {

// Per unique event time: risk-set counts and tied-event summaries.
struct CoxTerms {
    std::vector<double> n0;      // comparator at risk
    std::vector<double> n1;      // index at risk
    std::vector<double> d;       // events at this time (Breslow ties)
    std::vector<double> s;       // index-arm events at this time
};

inline CoxTerms cox_terms(const TwoArmSample& sample) {
    const std::size_t n = sample.times.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sample.times[a] < sample.times[b];
    });

    double total1 = 0.0;
    for (int g : sample.group) total1 += g;
    double at_risk1 = total1;
    double at_risk0 = static_cast<double>(n) - total1;

    CoxTerms terms;
    std::size_t i = 0;
    while (i < n) {
        const double t = sample.times[order[i]];
        double d = 0.0, s = 0.0;
        std::size_t j = i;
        while (j < n && sample.times[order[j]] == t) {
            d += 1.0;
            s += sample.group[order[j]];
            ++j;
        }
        terms.n0.push_back(at_risk0);
        terms.n1.push_back(at_risk1);
        terms.d.push_back(d);
        terms.s.push_back(s);
        at_risk1 -= s;
        at_risk0 -= (d - s);
        i = j;
    }
    return terms;
}

// Breslow partial log-likelihood and derivatives for the binary covariate.
inline void cox_score_info(const CoxTerms& terms, double beta, double& loglik,
                           double& score, double& info) {
    const double eb = std::exp(beta);
    loglik = 0.0;
    score = 0.0;
    info = 0.0;
    for (std::size_t k = 0; k < terms.d.size(); ++k) {
        const double denom = terms.n0[k] + terms.n1[k] * eb;
        const double p = terms.n1[k] * eb / denom;
        loglik += terms.s[k] * beta - terms.d[k] * std::log(denom);
        score += terms.s[k] - terms.d[k] * p;
        info += terms.d[k] * p * (1.0 - p);
    }
}

}  // namespace detail

// Newton-Raphson with step-halving on the Breslow partial likelihood.
// Complete separation drives |beta| off to infinity; flagged via `converged`.
inline CoxFit fit_cox_two_arm(const TwoArmSample& sample) {
    sample.validate();
    const auto terms = detail::cox_terms(sample);

    // Complete separation in event ordering: the partial likelihood has no
    // interior maximum (the score stays one-signed while beta diverges).
    double min0 = std::numeric_limits<double>::infinity(), max0 = -min0;
    double min1 = min0, max1 = -min0;
    for (std::size_t i = 0; i < sample.times.size(); ++i) {
        if (sample.group[i] == 0) {
            min0 = std::min(min0, sample.times[i]);
            max0 = std::max(max0, sample.times[i]);
        } else {
            min1 = std::min(min1, sample.times[i]);
            max1 = std::max(max1, sample.times[i]);
        }
    }
    const bool separated = max1 < min0 || max0 < min1;

    CoxFit fit;
    double beta = 0.0;
    double loglik, score, info;
    detail::cox_score_info(terms, beta, loglik, score, info);

    constexpr int max_iter = 50;
    // Converged when the score is negligible or the implied Newton step
    // (score/info) is below 1e-7; the absolute criterion alone is
    // unreachable at large n where the log-likelihood is O(1e4).
    const double score_tol = std::max(1e-8, 1e-7 * info);
    for (int iter = 0; iter < max_iter; ++iter) {
        if (std::abs(score) < score_tol) {
            fit.converged = true;
            break;
        }
        if (info < 1e-12) break;
        double step = score / info;
        double beta_new = beta + step;
        double ll_new, sc_new, in_new;
        detail::cox_score_info(terms, beta_new, ll_new, sc_new, in_new);
        int halvings = 0;
        while (ll_new < loglik && halvings < 30) {
            step *= 0.5;
            beta_new = beta + step;
            detail::cox_score_info(terms, beta_new, ll_new, sc_new, in_new);
            ++halvings;
        }
        if (ll_new < loglik) {
            // Step-halving exhausted: the log-likelihood can no longer
            // resolve moves this small. Converged if the remaining Newton
            // step is negligible.
            fit.converged = std::abs(score / info) < 1e-6;
            break;
        }
        beta = beta_new;
        loglik = ll_new;
        score = sc_new;
        info = in_new;
        if (std::abs(beta) > 30.0) break;
    }
    if (std::abs(score) < score_tol && std::abs(beta) <= 30.0) fit.converged = true;
    if (std::abs(beta) > 30.0 || separated) fit.converged = false;

    fit.loghr = beta;
    fit.se = info > 0.0 ? 1.0 / std::sqrt(info) : 0.0;
    return fit;
}

}  // namespace hrmeta
