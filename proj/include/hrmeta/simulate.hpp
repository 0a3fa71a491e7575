#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrmeta/meta.hpp"
#include "hrmeta/predict.hpp"
#include "hrmeta/rng.hpp"
#include "hrmeta/survival.hpp"

namespace hrmeta {

// Lognormal study-parameter generator: `median` is the distribution's
// median (location = ln median) and `cv` is the log-scale standard
// deviation. cv = 0 degenerates to the median.
struct LognormalSpec {
    double median;
    double cv;

    void validate() const {
        if (!(median > 0.0))
            throw std::invalid_argument("LognormalSpec: median must be > 0");
        if (cv < 0.0) throw std::invalid_argument("LognormalSpec: cv must be >= 0");
    }
};

inline double draw_lognormal(const LognormalSpec& spec, Rng& rng) {
    spec.validate();
    if (spec.cv == 0.0) return spec.median;
    std::normal_distribution<double> dist(std::log(spec.median), spec.cv);
    return std::exp(dist(rng));
}

struct ScenarioSpec {
    std::string id;
    LognormalSpec survival_trt, survival_ic, survival_ec;
    LognormalSpec events_trt, events_ic, events_ec;
    // When set, the treatment median is derived from the internal-control
    // draw: median_trt = median_ic / fixed_hr.
    std::optional<double> fixed_hr;
    // One events draw shared by both randomized arms (1:1 randomization).
    bool shared_rct_events = false;

    void validate() const {
        survival_trt.validate();
        survival_ic.validate();
        survival_ec.validate();
        events_trt.validate();
        events_ic.validate();
        events_ec.validate();
        if (fixed_hr && !(*fixed_hr > 0.0))
            throw std::invalid_argument("ScenarioSpec: fixed_hr must be > 0");
    }
};

struct StudyParams {
    double median_trt, median_ic, median_ec;
    int n_trt, n_ic, n_ec;
    double true_loghr_trt_ic;
};

struct CoxTriple {
    CoxFit trt_ic;
    CoxFit trt_ec;
    CoxFit ic_ec;
    bool all_converged() const {
        return trt_ic.converged && trt_ec.converged && ic_ec.converged;
    }
};

struct ReplicationResult {
    std::size_t index;
    bool skipped;
    double true_loghr;
    double median;
    double cri_lower;
    double cri_upper;
    double bias;
    bool covered;
    bool rejected;
};

struct OperatingCharacteristics {
    std::string scenario;
    int n_reference;
    std::string method;
    std::vector<double> bias_samples;
    double coverage_rate;
    double rejection_rate;
    std::size_t n_replications;
    std::size_t n_skipped;
    std::vector<ReplicationResult> replications;
};

inline const std::vector<ScenarioSpec>& builtin_scenarios() {
    static const std::vector<ScenarioSpec> scenarios = {
        {"S1", {24, 0}, {15, 0}, {12, 0}, {100, 0}, {70, 0}, {50, 0},
         std::nullopt, false},
        {"S2", {24, 0}, {24, 0}, {18, 0}, {250, 0.2}, {250, 0.2}, {250, 0.2},
         std::nullopt, false},
        {"S3", {24, 0.4}, {24, 0.2}, {18, 0.2}, {250, 0.2}, {250, 0.2},
         {250, 0.2}, std::nullopt, false},
        {"S4", {24, 0.2}, {24, 0.2}, {18, 0.2}, {150, 0.2}, {150, 0.2},
         {250, 0.2}, 1.0, true},
        {"S5", {48, 0.2}, {24, 0.2}, {18, 0.2}, {150, 0.2}, {150, 0.2},
         {250, 0.2}, 0.5, true},
        {"S6", {35, 0.4}, {24, 0.2}, {18, 0.2}, {250, 0.2}, {250, 0.2},
         {250, 0.2}, std::nullopt, true},
    };
    return scenarios;
}

inline const ScenarioSpec& builtin_scenario(const std::string& id) {
    for (const auto& s : builtin_scenarios())
        if (s.id == id) return s;
    throw std::invalid_argument("unknown scenario id '" + id + "'");
}

namespace detail {

// Round half-to-even, clamp to the 2-event minimum.
inline int round_events(double x) {
    const double r = std::nearbyint(x);
    return r < 2.0 ? 2 : static_cast<int>(r);
}

}  // namespace detail

inline StudyParams generate_study(const ScenarioSpec& scenario, Rng& rng) {
    scenario.validate();
    StudyParams p;
    p.median_ic = draw_lognormal(scenario.survival_ic, rng);
    p.median_trt = scenario.fixed_hr ? p.median_ic / *scenario.fixed_hr
                                     : draw_lognormal(scenario.survival_trt, rng);
    p.median_ec = draw_lognormal(scenario.survival_ec, rng);

    const double ev_ic = draw_lognormal(scenario.events_ic, rng);
    const double ev_trt =
        scenario.shared_rct_events ? ev_ic : draw_lognormal(scenario.events_trt, rng);
    const double ev_ec = draw_lognormal(scenario.events_ec, rng);
    p.n_ic = detail::round_events(ev_ic);
    p.n_trt = detail::round_events(ev_trt);
    p.n_ec = detail::round_events(ev_ec);

    p.true_loghr_trt_ic = std::log(p.median_ic / p.median_trt);
    return p;
}

// Simulates the three exponential arms once and fits the three pairwise
// Cox models on the shared samples.
inline CoxTriple simulate_study(const StudyParams& params, Rng& rng) {
    const auto trt = simulate_arm({params.median_trt, params.n_trt}, rng);
    const auto ic = simulate_arm({params.median_ic, params.n_ic}, rng);
    const auto ec = simulate_arm({params.median_ec, params.n_ec}, rng);

    auto pooled = [](const std::vector<double>& comparator,
                     const std::vector<double>& index) {
        TwoArmSample s;
        s.times = comparator;
        s.times.insert(s.times.end(), index.begin(), index.end());
        s.group.assign(comparator.size(), 0);
        s.group.insert(s.group.end(), index.size(), 1);
        return s;
    };

    CoxTriple triple;
    triple.trt_ic = fit_cox_two_arm(pooled(ic, trt));
    triple.trt_ec = fit_cox_two_arm(pooled(ec, trt));
    triple.ic_ec = fit_cox_two_arm(pooled(ec, ic));
    return triple;
}

// Meta-analysis method used inside the simulation loop.
struct SimMethod {
    enum class Kind { bayes, ml };
    Kind kind = Kind::ml;
    PriorSpec priors;
    McmcConfig mcmc;
    std::size_t n_draws_ml = 10000;
    double prior_variance = 100.0;

    std::string name() const {
        if (kind == Kind::ml) return "ml";
        switch (priors.sigma_kind) {
            case SigmaPriorKind::half_cauchy: return "bayes-half-cauchy";
            case SigmaPriorKind::uniform: return "bayes-uniform";
            case SigmaPriorKind::gamma_on_precision: return "bayes-inv-gamma";
        }
        return "bayes";
    }
};

// Full operating-characteristics loop: split the generated studies into
// replications of n_reference + 1, fit the meta-analysis on the reference
// studies' ICvEC estimates, predict the held-out study's TRTvIC effect,
// and score bias / coverage / one-sided rejection against the truth.
inline OperatingCharacteristics run_scenario(const ScenarioSpec& scenario,
                                             int n_reference,
                                             std::size_t total_studies,
                                             const SimMethod& method, double alpha,
                                             std::uint64_t seed) {
    if (n_reference < 2)
        throw std::invalid_argument("run_scenario: n_reference must be >= 2");
    const std::size_t per_rep = static_cast<std::size_t>(n_reference) + 1;
    if (total_studies < per_rep)
        throw std::invalid_argument("run_scenario: total_studies < n_reference + 1");

    // Study parameters come from one dedicated stream so the replication
    // split is stable; each replication then simulates with its own
    // substream and is independent of execution order.
    Rng param_rng = make_rng(substream_seed(seed, 0xa11));
    std::vector<StudyParams> params(total_studies);
    for (auto& p : params) p = generate_study(scenario, param_rng);

    const std::size_t n_reps = total_studies / per_rep;
    OperatingCharacteristics oc;
    oc.scenario = scenario.id;
    oc.n_reference = n_reference;
    oc.method = method.name();
    oc.n_replications = n_reps;
    oc.n_skipped = 0;
    oc.replications.resize(n_reps);

    for (std::size_t rep = 0; rep < n_reps; ++rep) {
        Rng rng = make_rng(substream_seed(seed, 0xbee, rep));
        ReplicationResult& r = oc.replications[rep];
        r.index = rep;
        r.skipped = false;

        std::vector<CoxTriple> fits(per_rep);
        bool ok = true;
        for (std::size_t k = 0; k < per_rep; ++k) {
            fits[k] = simulate_study(params[rep * per_rep + k], rng);
            ok = ok && fits[k].all_converged();
        }
        if (!ok) {
            r.skipped = true;
            continue;
        }

        ReferenceSet refs;
        for (std::size_t k = 0; k + 1 < per_rep; ++k)
            refs.studies.push_back({fits[k].ic_ec.loghr, fits[k].ic_ec.se,
                                    "rep" + std::to_string(rep) + "-s" +
                                        std::to_string(k)});
        const CoxTriple& held_out = fits[per_rep - 1];
        const StudyParams& held_params = params[rep * per_rep + per_rep - 1];
        NewStudyEstimate new_study{held_out.trt_ec.loghr,
                                   held_out.trt_ec.se * held_out.trt_ec.se};

        AdjustedPrediction pred;
        if (method.kind == SimMethod::Kind::ml) {
            pred = predict_ml(new_study, fit_ml(refs), method.n_draws_ml, rng);
        } else {
            const auto meta = fit_bayes(refs, method.priors, method.mcmc,
                                        substream_seed(seed, 0xcafe, rep));
            if (!meta.diagnostics_ok) {
                r.skipped = true;
                continue;
            }
            pred = predict_bayes(new_study, meta, method.prior_variance, rng);
        }
        const auto summary = summarize(pred, alpha);

        r.true_loghr = held_params.true_loghr_trt_ic;
        r.median = summary.median;
        r.cri_lower = summary.cri_lower;
        r.cri_upper = summary.cri_upper;
        r.bias = summary.median - r.true_loghr;
        r.covered = summary.cri_lower <= r.true_loghr &&
                    r.true_loghr <= summary.cri_upper;
        r.rejected = summary.significant_one_sided;
    }

    std::size_t kept = 0, covered = 0, rejected = 0;
    for (const auto& r : oc.replications) {
        if (r.skipped) {
            ++oc.n_skipped;
            continue;
        }
        ++kept;
        oc.bias_samples.push_back(r.bias);
        covered += r.covered ? 1 : 0;
        rejected += r.rejected ? 1 : 0;
    }
    oc.coverage_rate = kept ? static_cast<double>(covered) / kept : 0.0;
    oc.rejection_rate = kept ? static_cast<double>(rejected) / kept : 0.0;
    return oc;
}

}  // namespace hrmeta
