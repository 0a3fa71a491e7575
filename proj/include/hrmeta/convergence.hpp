#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace hrmeta {

struct ConvergenceStats {
    double rhat;  // split R-hat; NaN when chains are degenerate
    double ess;   // effective sample size over all split chains
};

namespace detail {

inline double chain_mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double chain_var(const std::vector<double>& x, double mean) {
    double s = 0.0;
    for (double v : x) s += (v - mean) * (v - mean);
    return s / static_cast<double>(x.size() - 1);
}

// Biased (1/n) autocovariance at the given lag.
inline double autocov(const std::vector<double>& x, double mean, std::size_t lag) {
    const std::size_t n = x.size();
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i)
        s += (x[i] - mean) * (x[i + lag] - mean);
    return s / static_cast<double>(n);
}

}  // namespace detail

// Split R-hat and ESS from per-chain draw sequences. Chains are split in
// half; ESS uses Geyer's initial monotone positive sequence on the
// multi-chain autocorrelation estimate.
inline ConvergenceStats rhat_ess(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2)
        throw std::invalid_argument("rhat_ess: need at least 2 chains");
    for (const auto& c : chains)
        if (c.size() < 10)
            throw std::invalid_argument("rhat_ess: need at least 10 draws per chain");

    // Split each chain in half (drop one draw if odd).
    std::vector<std::vector<double>> split;
    for (const auto& c : chains) {
        const std::size_t half = c.size() / 2;
        split.emplace_back(c.begin(), c.begin() + half);
        split.emplace_back(c.begin() + half, c.begin() + 2 * half);
    }
    const std::size_t m = split.size();
    const std::size_t n = split[0].size();

    std::vector<double> means(m), vars(m);
    for (std::size_t j = 0; j < m; ++j) {
        means[j] = detail::chain_mean(split[j]);
        vars[j] = detail::chain_var(split[j], means[j]);
    }
    double w = 0.0;
    for (double v : vars) w += v;
    w /= static_cast<double>(m);

    const double grand = detail::chain_mean(means);
    double b = 0.0;
    for (double mu : means) b += (mu - grand) * (mu - grand);
    b *= static_cast<double>(n) / static_cast<double>(m - 1);

    const double var_plus =
        (static_cast<double>(n - 1) / n) * w + b / static_cast<double>(n);

    ConvergenceStats out;
    if (!(var_plus > 0.0) || !(w > 0.0)) {
        out.rhat = std::numeric_limits<double>::quiet_NaN();
        out.ess = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.rhat = std::sqrt(var_plus / w);

    // rho_t = 1 - (W - mean autocov_t) / var_plus
    const std::size_t max_lag = n - 1;
    std::vector<double> rho;
    rho.reserve(max_lag);
    double tau = 1.0;  // rho_0 contribution
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t t = 1; t + 1 < max_lag; t += 2) {
        double ac_t = 0.0, ac_t1 = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            ac_t += detail::autocov(split[j], means[j], t);
            ac_t1 += detail::autocov(split[j], means[j], t + 1);
        }
        ac_t /= static_cast<double>(m);
        ac_t1 /= static_cast<double>(m);
        const double rho_t = 1.0 - (w - ac_t) / var_plus;
        const double rho_t1 = 1.0 - (w - ac_t1) / var_plus;
        double pair = rho_t + rho_t1;
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);  // enforce monotone decrease
        prev_pair = pair;
        tau += 2.0 * pair;
    }
    out.ess = static_cast<double>(m * n) / tau;
    return out;
}

}  // namespace hrmeta
