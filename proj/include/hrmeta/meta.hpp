#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrmeta/convergence.hpp"
#include "hrmeta/rng.hpp"

namespace hrmeta {

// One reference study's internal-vs-external-control comparison on the
// log hazard ratio scale.
struct LogHREstimate {
    double estimate;
    double se;
    std::string label;
};

struct ReferenceSet {
    std::vector<LogHREstimate> studies;

    std::size_t size() const { return studies.size(); }

    void validate(std::size_t min_n) const {
        if (studies.size() < min_n)
            throw std::domain_error("ReferenceSet: too few studies");
        for (std::size_t i = 0; i < studies.size(); ++i) {
            if (!(studies[i].se > 0.0))
                throw std::domain_error("ReferenceSet: se must be > 0 (study " +
                                        studies[i].label + ")");
            for (std::size_t j = i + 1; j < studies.size(); ++j)
                if (studies[i].label == studies[j].label)
                    throw std::domain_error("ReferenceSet: duplicate label '" +
                                            studies[i].label + "'");
        }
    }
};

enum class SigmaPriorKind { half_cauchy, uniform, gamma_on_precision };

// Priors for the between-study model: normal on mu, one of three families
// on sigma (the gamma option is placed on the precision 1/sigma^2).
struct PriorSpec {
    double mu_mean = 0.0;
    double mu_variance = 100.0;
    SigmaPriorKind sigma_kind = SigmaPriorKind::half_cauchy;
    double hc_location = 0.0;
    double hc_scale = 25.0;
    double uniform_lower = 0.0;
    double uniform_upper = 100.0;
    double gamma_shape = 0.001;
    double gamma_rate = 0.001;

    void validate() const {
        if (!(mu_variance > 0.0))
            throw std::invalid_argument("PriorSpec: mu_variance must be > 0");
        switch (sigma_kind) {
            case SigmaPriorKind::half_cauchy:
                if (!(hc_scale > 0.0))
                    throw std::invalid_argument("PriorSpec: half-Cauchy scale must be > 0");
                break;
            case SigmaPriorKind::uniform:
                if (!(uniform_upper > uniform_lower) || uniform_lower < 0.0)
                    throw std::invalid_argument("PriorSpec: need 0 <= lower < upper");
                break;
            case SigmaPriorKind::gamma_on_precision:
                if (!(gamma_shape > 0.0) || !(gamma_rate > 0.0))
                    throw std::invalid_argument("PriorSpec: gamma shape/rate must be > 0");
                break;
        }
    }

    double log_prior_mu(double mu) const {
        const double d = mu - mu_mean;
        return -0.5 * d * d / mu_variance;
    }

    // Unnormalized log prior density of sigma.
    double log_prior_sigma(double sigma) const {
        constexpr double neg_inf = -std::numeric_limits<double>::infinity();
        switch (sigma_kind) {
            case SigmaPriorKind::half_cauchy: {
                if (sigma < hc_location) return neg_inf;
                const double z = (sigma - hc_location) / hc_scale;
                return -std::log1p(z * z);
            }
            case SigmaPriorKind::uniform:
                return (sigma >= uniform_lower && sigma <= uniform_upper) ? 0.0
                                                                          : neg_inf;
            case SigmaPriorKind::gamma_on_precision:
                // Gamma(shape, rate) on 1/sigma^2, transformed to sigma.
                if (!(sigma > 0.0)) return neg_inf;
                return (-2.0 * gamma_shape - 1.0) * std::log(sigma) -
                       gamma_rate / (sigma * sigma);
        }
        return neg_inf;
    }

    // Midpoint-style fallback when a dispersed initial value falls outside
    // the prior support.
    double clamp_to_support(double sigma) const {
        if (std::isfinite(log_prior_sigma(sigma))) return sigma;
        switch (sigma_kind) {
            case SigmaPriorKind::half_cauchy:
                return hc_location + hc_scale;
            case SigmaPriorKind::uniform:
                return 0.5 * (uniform_lower + uniform_upper);
            case SigmaPriorKind::gamma_on_precision:
                return 1.0;
        }
        return sigma;
    }
};

struct McmcConfig {
    int n_chains = 4;
    int n_warmup = 1000;
    int n_kept = 2500;

    void validate() const {
        if (n_chains < 2) throw std::invalid_argument("McmcConfig: need >= 2 chains");
        if (n_warmup < 500) throw std::invalid_argument("McmcConfig: need >= 500 warmup");
        if (n_kept < 1000)
            throw std::invalid_argument("McmcConfig: need >= 1000 kept draws per chain");
    }
};

struct PosteriorDraws {
    std::vector<double> mu;
    std::vector<double> sigma;  // paired with mu by index, chain-major
    int n_chains = 0;
    int n_warmup = 0;
    int n_kept = 0;
    int n_reference = 0;
    double rhat_mu = 0.0, rhat_sigma = 0.0;
    double ess_mu = 0.0, ess_sigma = 0.0;
    bool diagnostics_ok = true;
    std::string message;
};

struct MLFit {
    double mu_hat = 0.0;
    double sigma_hat = 0.0;
    int n = 0;
};

// Log density of the marginal model: each estimate ~ N(mu, sigma^2 + se^2).
inline double marginal_loglik(double mu, double sigma, const ReferenceSet& data) {
    if (data.studies.empty())
        throw std::domain_error("marginal_loglik: empty reference set");
    if (!(sigma >= 0.0))
        throw std::invalid_argument("marginal_loglik: sigma must be >= 0");
    constexpr double log2pi = 1.8378770664093454836;
    const double v = sigma * sigma;
    double ll = 0.0;
    for (const auto& s : data.studies) {
        const double tot = v + s.se * s.se;
        const double d = s.estimate - mu;
        ll += -0.5 * (log2pi + std::log(tot)) - 0.5 * d * d / tot;
    }
    return ll;
}

namespace detail {

// For fixed total variance weights, the likelihood is maximized in mu by
// the precision-weighted mean.
inline double weighted_mean(double v, const ReferenceSet& data) {
    double sw = 0.0, swx = 0.0;
    for (const auto& s : data.studies) {
        const double w = 1.0 / (v + s.se * s.se);
        sw += w;
        swx += w * s.estimate;
    }
    return swx / sw;
}

inline double profile_loglik(double v, const ReferenceSet& data) {
    return marginal_loglik(weighted_mean(v, data), std::sqrt(v), data);
}

}  // namespace detail

// Maximum likelihood for (mu, sigma), profiling mu out and maximizing the
// 1-D profile likelihood over the variance sigma^2 on [0, vmax]. Boundary
// solutions sigma_hat = 0 are legitimate and reported as such.
inline MLFit fit_ml(const ReferenceSet& data) {
    data.validate(2);
    const std::size_t n = data.size();

    double mean = 0.0;
    for (const auto& s : data.studies) mean += s.estimate;
    mean /= static_cast<double>(n);
    double spread = 0.0, max_se2 = 0.0;
    for (const auto& s : data.studies) {
        spread += (s.estimate - mean) * (s.estimate - mean);
        max_se2 = std::max(max_se2, s.se * s.se);
    }
    spread /= static_cast<double>(n);

    double vmax = 10.0 * (spread + max_se2) + 1.0;
    // Expand if the optimum presses against the upper bound.
    for (int expand = 0; expand < 8; ++expand) {
        if (detail::profile_loglik(vmax, data) <
            detail::profile_loglik(0.9 * vmax, data))
            break;
        vmax *= 10.0;
        if (expand == 7)
            throw std::runtime_error("fit_ml: optimizer failed to bracket, last vmax=" +
                                     std::to_string(vmax));
    }

    // Coarse grid to bracket, then golden-section refinement.
    const int grid_n = 400;
    int best_i = 0;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= grid_n; ++i) {
        const double v = vmax * (static_cast<double>(i) / grid_n) *
                         (static_cast<double>(i) / grid_n);  // denser near 0
        const double ll = detail::profile_loglik(v, data);
        if (ll > best_ll) {
            best_ll = ll;
            best_i = i;
        }
    }
    auto grid_v = [&](int i) {
        i = std::clamp(i, 0, grid_n);
        return vmax * (static_cast<double>(i) / grid_n) *
               (static_cast<double>(i) / grid_n);
    };
    double lo = grid_v(best_i - 1);
    double hi = grid_v(best_i + 1);

    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = lo, b = hi;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = detail::profile_loglik(x1, data);
    double f2 = detail::profile_loglik(x2, data);
    for (int it = 0; it < 200 && (b - a) > 1e-14 * (1.0 + b); ++it) {
        if (f1 > f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - gr * (b - a);
            f1 = detail::profile_loglik(x1, data);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + gr * (b - a);
            f2 = detail::profile_loglik(x2, data);
        }
    }
    double v_hat = 0.5 * (a + b);
    if (detail::profile_loglik(0.0, data) >= detail::profile_loglik(v_hat, data))
        v_hat = 0.0;

    MLFit fit;
    fit.n = static_cast<int>(n);
    fit.sigma_hat = v_hat < 1e-16 ? 0.0 : std::sqrt(v_hat);
    fit.mu_hat = detail::weighted_mean(v_hat, data);
    return fit;
}

namespace detail {

// Adaptive scale for one Metropolis coordinate: batched doubling/halving
// of the log step toward the target acceptance rate, frozen after warmup.
struct StepTuner {
    double log_step = std::log(0.5);
    double target = 0.4;
    int batch_size = 50;
    int batch_count = 0;
    int batch_accept = 0;
    int batch_index = 0;

    double step() const { return std::exp(log_step); }

    void update(bool accepted) {
        batch_count += 1;
        batch_accept += accepted ? 1 : 0;
        if (batch_count == batch_size) {
            ++batch_index;
            const double delta =
                std::min(0.25, 1.0 / std::sqrt(static_cast<double>(batch_index)));
            const double rate =
                static_cast<double>(batch_accept) / batch_count;
            log_step += (rate > target) ? delta : -delta;
            batch_count = 0;
            batch_accept = 0;
        }
    }
};

}  // namespace detail

// Posterior sampling via Metropolis-within-Gibbs on (mu, log sigma) with
// per-coordinate adaptive step sizes. The log-sigma parameterization
// carries the usual Jacobian term. Chains use independent substreams of
// the seed, so results do not depend on scheduling order.
inline PosteriorDraws fit_bayes(const ReferenceSet& data, const PriorSpec& priors,
                                const McmcConfig& config, std::uint64_t seed) {
    data.validate(1);
    priors.validate();
    config.validate();

    const double log_sigma_inits[4] = {-2.0, -1.0, 0.0, 1.0};
    double mu_init = detail::weighted_mean(0.0, data);

    auto log_post = [&](double mu, double log_sigma) {
        const double sigma = std::exp(log_sigma);
        const double lp_sigma = priors.log_prior_sigma(sigma);
        if (!std::isfinite(lp_sigma)) return -std::numeric_limits<double>::infinity();
        return marginal_loglik(mu, sigma, data) + priors.log_prior_mu(mu) +
               lp_sigma + log_sigma;
    };

    PosteriorDraws out;
    out.n_chains = config.n_chains;
    out.n_warmup = config.n_warmup;
    out.n_kept = config.n_kept;
    out.n_reference = static_cast<int>(data.size());
    out.mu.reserve(static_cast<std::size_t>(config.n_chains) * config.n_kept);
    out.sigma.reserve(static_cast<std::size_t>(config.n_chains) * config.n_kept);

    std::vector<std::vector<double>> mu_chains, sigma_chains;
    for (int c = 0; c < config.n_chains; ++c) {
        Rng rng = make_rng(substream_seed(seed, static_cast<std::uint64_t>(c)));
        std::normal_distribution<double> normal(0.0, 1.0);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        double sigma0 = priors.clamp_to_support(std::exp(log_sigma_inits[c % 4]));
        double mu = mu_init;
        double log_sigma = std::log(std::max(sigma0, 1e-300));
        double lp = log_post(mu, log_sigma);

        detail::StepTuner tune_mu, tune_ls;
        std::vector<double> mu_kept, sigma_kept;
        mu_kept.reserve(config.n_kept);
        sigma_kept.reserve(config.n_kept);

        const int total = config.n_warmup + config.n_kept;
        for (int it = 0; it < total; ++it) {
            const bool adapting = it < config.n_warmup;

            const double mu_prop = mu + tune_mu.step() * normal(rng);
            double lp_prop = log_post(mu_prop, log_sigma);
            bool acc = std::log(unif(rng)) < lp_prop - lp;
            if (acc) {
                mu = mu_prop;
                lp = lp_prop;
            }
            if (adapting) tune_mu.update(acc);

            const double ls_prop = log_sigma + tune_ls.step() * normal(rng);
            lp_prop = log_post(mu, ls_prop);
            acc = std::log(unif(rng)) < lp_prop - lp;
            if (acc) {
                log_sigma = ls_prop;
                lp = lp_prop;
            }
            if (adapting) tune_ls.update(acc);

            if (!adapting) {
                mu_kept.push_back(mu);
                sigma_kept.push_back(std::exp(log_sigma));
            }
        }
        out.mu.insert(out.mu.end(), mu_kept.begin(), mu_kept.end());
        out.sigma.insert(out.sigma.end(), sigma_kept.begin(), sigma_kept.end());
        mu_chains.push_back(std::move(mu_kept));
        sigma_chains.push_back(std::move(sigma_kept));
    }

    const auto stats_mu = rhat_ess(mu_chains);
    const auto stats_sigma = rhat_ess(sigma_chains);
    out.rhat_mu = stats_mu.rhat;
    out.rhat_sigma = stats_sigma.rhat;
    out.ess_mu = stats_mu.ess;
    out.ess_sigma = stats_sigma.ess;
    if (stats_mu.rhat > 1.05 || stats_sigma.rhat > 1.05) {
        out.diagnostics_ok = false;
        out.message = "rhat exceeds 1.05 (mu=" + std::to_string(out.rhat_mu) +
                      ", sigma=" + std::to_string(out.rhat_sigma) +
                      "); draws returned but should not be trusted";
    }
    return out;
}

}  // namespace hrmeta
