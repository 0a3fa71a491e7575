// hrmeta command line tool: meta-analysis of internal-vs-external-control
// log hazard ratios, adjusted prediction for a new single-arm study,
// simulation of operating characteristics, and leave-one-out checking.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "hrmeta/csv.hpp"
#include "hrmeta/diagnostics.hpp"
#include "hrmeta/meta.hpp"
#include "hrmeta/predict.hpp"
#include "hrmeta/simulate.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Shared run metadata stamped into every output file so a run can be
// reproduced exactly.
struct RunMeta {
    std::string command;
    std::uint64_t seed;
    std::string config_hash;

    json to_json() const {
        return {{"command", command},
                {"seed", seed},
                {"config_hash", config_hash},
                {"version", kVersion}};
    }

    std::string csv_header() const {
        return "# command: " + command + "\n# seed: " + std::to_string(seed) +
               "\n# config_hash: " + config_hash + "\n# version: " + kVersion +
               "\n";
    }
};

struct CommonOpts {
    std::string method = "bayes";
    double mu_prior_mean = 0.0;
    double mu_prior_var = 100.0;
    std::string sigma_prior = "half-cauchy";
    double hc_location = 0.0;
    double hc_scale = 25.0;
    double sigma_lower = 0.0;
    double sigma_upper = 100.0;
    double gamma_shape = 0.001;
    double gamma_rate = 0.001;
    int chains = 4;
    int warmup = 1000;
    int draws = 2500;
    double alpha = 0.05;
    std::uint64_t seed = 1;
    std::string out_dir;
    int threads = 0;

    hrmeta::PriorSpec priors() const {
        hrmeta::PriorSpec p;
        p.mu_mean = mu_prior_mean;
        p.mu_variance = mu_prior_var;
        if (sigma_prior == "half-cauchy")
            p.sigma_kind = hrmeta::SigmaPriorKind::half_cauchy;
        else if (sigma_prior == "uniform")
            p.sigma_kind = hrmeta::SigmaPriorKind::uniform;
        else if (sigma_prior == "inv-gamma")
            p.sigma_kind = hrmeta::SigmaPriorKind::gamma_on_precision;
        else
            throw CLI::ValidationError("--sigma-prior", "unknown prior '" + sigma_prior + "'");
        p.hc_location = hc_location;
        p.hc_scale = hc_scale;
        p.uniform_lower = sigma_lower;
        p.uniform_upper = sigma_upper;
        p.gamma_shape = gamma_shape;
        p.gamma_rate = gamma_rate;
        return p;
    }

    hrmeta::McmcConfig mcmc() const { return {chains, warmup, draws}; }

    json resolved() const {
        return {{"method", method},
                {"mu_prior_mean", mu_prior_mean},
                {"mu_prior_var", mu_prior_var},
                {"sigma_prior", sigma_prior},
                {"hc_location", hc_location},
                {"hc_scale", hc_scale},
                {"sigma_lower", sigma_lower},
                {"sigma_upper", sigma_upper},
                {"gamma_shape", gamma_shape},
                {"gamma_rate", gamma_rate},
                {"chains", chains},
                {"warmup", warmup},
                {"draws", draws},
                {"alpha", alpha},
                {"seed", seed},
                {"threads", threads}};
    }
};

void add_common_options(CLI::App* cmd, CommonOpts& o, bool with_method = true) {
    if (with_method)
        cmd->add_option("--method", o.method, "Estimation backend: bayes or ml")
            ->check(CLI::IsMember({"bayes", "ml"}));
    cmd->add_option("--mu-prior-mean", o.mu_prior_mean, "Normal prior mean for mu");
    cmd->add_option("--mu-prior-var", o.mu_prior_var, "Normal prior variance for mu");
    cmd->add_option("--sigma-prior", o.sigma_prior,
                    "Prior family for sigma: half-cauchy, uniform, inv-gamma")
        ->check(CLI::IsMember({"half-cauchy", "uniform", "inv-gamma"}));
    cmd->add_option("--hc-location", o.hc_location, "Half-Cauchy location");
    cmd->add_option("--hc-scale", o.hc_scale, "Half-Cauchy scale");
    cmd->add_option("--sigma-lower", o.sigma_lower, "Uniform prior lower bound");
    cmd->add_option("--sigma-upper", o.sigma_upper, "Uniform prior upper bound");
    cmd->add_option("--gamma-shape", o.gamma_shape, "Gamma shape (on 1/sigma^2)");
    cmd->add_option("--gamma-rate", o.gamma_rate, "Gamma rate (on 1/sigma^2)");
    cmd->add_option("--chains", o.chains, "MCMC chains");
    cmd->add_option("--warmup", o.warmup, "MCMC warmup iterations per chain");
    cmd->add_option("--draws", o.draws, "MCMC kept draws per chain");
    cmd->add_option("--alpha", o.alpha, "Interval level is 1 - alpha");
    cmd->add_option("--seed", o.seed, "RNG seed (default 1)");
    cmd->add_option("--out", o.out_dir, "Output directory");
    cmd->add_option("--threads", o.threads,
                    "Worker cap (0 = available parallelism); results are "
                    "invariant to this setting");
}

// Output directory: --out flag wins, then HRMETA_OUT, then cwd.
fs::path resolve_out_dir(const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (const char* env = std::getenv("HRMETA_OUT"); env && *env) return env;
    return ".";
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
}

void write_json_file(const fs::path& path, const json& doc) {
    write_text_file(path, doc.dump(2) + "\n");
}

double draws_quantile(std::vector<double> x, double p) {
    std::sort(x.begin(), x.end());
    return hrmeta::quantile_sorted(x, p);
}

hrmeta::ReferenceSet apply_exclusions(hrmeta::ReferenceSet set,
                                      const std::vector<std::string>& exclude) {
    for (const auto& label : exclude) {
        const auto it = std::find_if(
            set.studies.begin(), set.studies.end(),
            [&](const hrmeta::LogHREstimate& s) { return s.label == label; });
        if (it == set.studies.end())
            throw std::runtime_error("--exclude: no study labeled '" + label + "'");
        set.studies.erase(it);
    }
    return set;
}

json ml_summary_json(const CommonOpts& opts, const hrmeta::ReferenceSet& refs,
                     const hrmeta::MLFit& fit) {
    json summary;
    summary["n_reference"] = refs.size();
    {
        // Wald interval for mu at the fitted sigma; none is defined for sigma.
        double prec = 0.0;
        for (const auto& s : refs.studies)
            prec += 1.0 / (fit.sigma_hat * fit.sigma_hat + s.se * s.se);
        const double z = -hrmeta::detail::qnorm(opts.alpha / 2.0);
        const double half = z / std::sqrt(prec);
        summary["mu"] = {{"estimate", fit.mu_hat},
                         {"lower", fit.mu_hat - half},
                         {"upper", fit.mu_hat + half}};
        summary["sigma"] = {{"estimate", fit.sigma_hat}};
    }
    return summary;
}

json bayes_summary_json(const CommonOpts& opts, const hrmeta::ReferenceSet& refs,
                        const hrmeta::PosteriorDraws& post) {
    json summary;
    summary["n_reference"] = refs.size();
    {
        const double lo = opts.alpha / 2.0, hi = 1.0 - opts.alpha / 2.0;
        summary["mu"] = {{"estimate", draws_quantile(post.mu, 0.5)},
                         {"lower", draws_quantile(post.mu, lo)},
                         {"upper", draws_quantile(post.mu, hi)}};
        summary["sigma"] = {{"estimate", draws_quantile(post.sigma, 0.5)},
                            {"lower", draws_quantile(post.sigma, lo)},
                            {"upper", draws_quantile(post.sigma, hi)}};
        summary["diagnostics"] = {{"rhat_mu", post.rhat_mu},
                                  {"rhat_sigma", post.rhat_sigma},
                                  {"ess_mu", post.ess_mu},
                                  {"ess_sigma", post.ess_sigma},
                                  {"ok", post.diagnostics_ok},
                                  {"message", post.message}};
    }
    return summary;
}

int run_meta(const CommonOpts& opts, const std::string& input,
             const std::vector<std::string>& exclude, const RunMeta& meta) {
    const auto refs = apply_exclusions(hrmeta::parse_reference_csv(input), exclude);
    const fs::path out_dir = resolve_out_dir(opts.out_dir);
    fs::create_directories(out_dir);

    json doc;
    doc["run"] = meta.to_json();
    if (opts.method == "ml") {
        doc["summary"] = ml_summary_json(opts, refs, hrmeta::fit_ml(refs));
    } else {
        const auto post =
            hrmeta::fit_bayes(refs, opts.priors(), opts.mcmc(), opts.seed);
        doc["summary"] = bayes_summary_json(opts, refs, post);
        std::string csv = meta.csv_header() + "mu,sigma\n";
        for (std::size_t i = 0; i < post.mu.size(); ++i)
            csv += fmt_double(post.mu[i]) + "," + fmt_double(post.sigma[i]) + "\n";
        write_text_file(out_dir / "meta_draws.csv", csv);
    }
    write_json_file(out_dir / "meta_summary.json", doc);
    std::cout << "wrote " << (out_dir / "meta_summary.json").string() << "\n";
    return 0;
}

int run_predict(const CommonOpts& opts, const std::string& input,
                const std::vector<std::string>& exclude, double trt_ec_loghr,
                double trt_ec_se, double prior_variance, std::size_t n_draws,
                const RunMeta& meta) {
    const auto refs = apply_exclusions(hrmeta::parse_reference_csv(input), exclude);
    const fs::path out_dir = resolve_out_dir(opts.out_dir);
    fs::create_directories(out_dir);

    hrmeta::NewStudyEstimate new_study{trt_ec_loghr, trt_ec_se * trt_ec_se};
    hrmeta::Rng rng = hrmeta::make_rng(hrmeta::substream_seed(opts.seed, 0x9ed));

    hrmeta::AdjustedPrediction pred;
    json meta_block;
    if (opts.method == "ml") {
        const auto fit = hrmeta::fit_ml(refs);
        pred = hrmeta::predict_ml(new_study, fit, n_draws, rng);
        meta_block = {{"mu_hat", fit.mu_hat}, {"sigma_hat", fit.sigma_hat}, {"n", fit.n}};
    } else {
        const auto post = hrmeta::fit_bayes(refs, opts.priors(), opts.mcmc(), opts.seed);
        pred = hrmeta::predict_bayes(new_study, post, prior_variance, rng);
        meta_block = {{"rhat_mu", post.rhat_mu},
                      {"rhat_sigma", post.rhat_sigma},
                      {"diagnostics_ok", post.diagnostics_ok}};
    }
    const auto summary = hrmeta::summarize(pred, opts.alpha);

    json doc;
    doc["run"] = meta.to_json();
    doc["new_study"] = {{"loghr_trt_ec", trt_ec_loghr},
                        {"se", trt_ec_se},
                        {"prior_variance", prior_variance}};
    doc["meta"] = meta_block;
    doc["summary"] = {{"median", summary.median},
                      {"cri_lower", summary.cri_lower},
                      {"cri_upper", summary.cri_upper},
                      {"prob_negative", summary.prob_negative},
                      {"significant_one_sided", summary.significant_one_sided},
                      {"alpha", opts.alpha},
                      {"n_draws", pred.draws.size()}};
    write_json_file(out_dir / "prediction_summary.json", doc);

    std::string csv = meta.csv_header() + "loghr_trt_ic,loghr_trt_ec,loghr_ic_ec\n";
    for (std::size_t i = 0; i < pred.draws.size(); ++i)
        csv += fmt_double(pred.draws[i]) + "," + fmt_double(pred.trt_ec_draws[i]) +
               "," + fmt_double(pred.ic_ec_draws[i]) + "\n";
    write_text_file(out_dir / "prediction_draws.csv", csv);
    std::cout << "wrote " << (out_dir / "prediction_summary.json").string() << "\n";
    return 0;
}

hrmeta::ScenarioSpec scenario_from_json(const json& j) {
    auto spec = [&](const json& node) {
        return hrmeta::LognormalSpec{node.at("median").get<double>(),
                                     node.at("cv").get<double>()};
    };
    hrmeta::ScenarioSpec s;
    s.id = j.value("id", "custom");
    s.survival_trt = spec(j.at("survival").at("trt"));
    s.survival_ic = spec(j.at("survival").at("ic"));
    s.survival_ec = spec(j.at("survival").at("ec"));
    s.events_trt = spec(j.at("events").at("trt"));
    s.events_ic = spec(j.at("events").at("ic"));
    s.events_ec = spec(j.at("events").at("ec"));
    if (j.contains("fixed_hr") && !j.at("fixed_hr").is_null())
        s.fixed_hr = j.at("fixed_hr").get<double>();
    s.shared_rct_events = j.value("shared_rct_events", false);
    s.validate();
    return s;
}

int run_simulate(const CommonOpts& opts, const std::string& scenario_id,
                 const std::string& scenario_file, int n_reference,
                 std::size_t total_studies, const RunMeta& meta) {
    hrmeta::ScenarioSpec scenario =
        scenario_file.empty()
            ? hrmeta::builtin_scenario(scenario_id)
            : scenario_from_json(json::parse(std::ifstream(scenario_file)));

    hrmeta::SimMethod method;
    if (opts.method == "ml") {
        method.kind = hrmeta::SimMethod::Kind::ml;
    } else {
        method.kind = hrmeta::SimMethod::Kind::bayes;
        method.priors = opts.priors();
        method.mcmc = opts.mcmc();
    }

    const auto oc = hrmeta::run_scenario(scenario, n_reference, total_studies,
                                         method, opts.alpha, opts.seed);

    const fs::path out_dir = resolve_out_dir(opts.out_dir);
    fs::create_directories(out_dir);

    std::vector<double> bias_sorted = oc.bias_samples;
    std::sort(bias_sorted.begin(), bias_sorted.end());
    json doc;
    doc["run"] = meta.to_json();
    doc["scenario"] = oc.scenario;
    doc["n_reference"] = oc.n_reference;
    doc["method"] = oc.method;
    doc["total_studies"] = total_studies;
    doc["n_replications"] = oc.n_replications;
    doc["n_skipped"] = oc.n_skipped;
    doc["median_bias"] =
        bias_sorted.empty() ? json() : json(hrmeta::quantile_sorted(bias_sorted, 0.5));
    doc["coverage_rate"] = oc.coverage_rate;
    doc["rejection_rate"] = oc.rejection_rate;
    write_json_file(out_dir / "simulate_summary.json", doc);

    std::string csv = meta.csv_header() +
                      "replication,skipped,true_loghr,median,cri_lower,cri_upper,"
                      "bias,covered,rejected\n";
    for (const auto& r : oc.replications) {
        csv += std::to_string(r.index) + "," + (r.skipped ? "1" : "0");
        if (r.skipped) {
            csv += ",,,,,,,\n";
        } else {
            csv += "," + fmt_double(r.true_loghr) + "," + fmt_double(r.median) +
                   "," + fmt_double(r.cri_lower) + "," + fmt_double(r.cri_upper) +
                   "," + fmt_double(r.bias) + "," + (r.covered ? "1" : "0") + "," +
                   (r.rejected ? "1" : "0") + "\n";
        }
    }
    write_text_file(out_dir / "replications.csv", csv);
    std::cout << "wrote " << (out_dir / "simulate_summary.json").string() << "\n";
    return 0;
}

int run_loo(const CommonOpts& opts, const std::string& ic_ec_path,
            const std::string& trt_ec_path, const std::string& trt_ic_path,
            const std::vector<std::string>& exclude, const RunMeta& meta) {
    const auto ic_ec =
        apply_exclusions(hrmeta::parse_reference_csv(ic_ec_path), exclude);
    const auto trt_ec =
        apply_exclusions(hrmeta::parse_reference_csv(trt_ec_path), exclude);
    const auto trt_ic =
        apply_exclusions(hrmeta::parse_reference_csv(trt_ic_path), exclude);

    const auto records = hrmeta::loo_cross_validate(ic_ec, trt_ec, trt_ic,
                                                    opts.priors(), opts.mcmc(),
                                                    opts.seed);
    const fs::path out_dir = resolve_out_dir(opts.out_dir);
    fs::create_directories(out_dir);

    std::string csv =
        meta.csv_header() +
        "study,observed,predicted_adjusted,predicted_unadjusted,sd_adjusted,"
        "residual_adjusted,residual_unadjusted\n";
    std::vector<double> adjusted, unadjusted;
    for (const auto& r : records) {
        csv += r.held_out_label + "," + fmt_double(r.observed) + "," +
               fmt_double(r.predicted_adjusted) + "," +
               fmt_double(r.predicted_unadjusted) + "," +
               fmt_double(r.sd_adjusted) + "," + fmt_double(r.residual_adjusted) +
               "," + fmt_double(r.residual_unadjusted) + "\n";
        adjusted.push_back(r.residual_adjusted);
        unadjusted.push_back(r.residual_unadjusted);
    }
    write_text_file(out_dir / "loo_records.csv", csv);

    std::string qq = meta.csv_header() + "kind,theoretical,residual\n";
    {
        const auto adj = hrmeta::qq_data(adjusted);
        const auto unadj = hrmeta::qq_data(unadjusted);
        for (std::size_t i = 0; i < adj.sorted_residuals.size(); ++i)
            qq += "adjusted," + fmt_double(adj.theoretical_quantiles[i]) + "," +
                  fmt_double(adj.sorted_residuals[i]) + "\n";
        for (std::size_t i = 0; i < unadj.sorted_residuals.size(); ++i)
            qq += "unadjusted," + fmt_double(unadj.theoretical_quantiles[i]) + "," +
                  fmt_double(unadj.sorted_residuals[i]) + "\n";
    }
    write_text_file(out_dir / "qq.csv", qq);
    std::cout << "wrote " << (out_dir / "loo_records.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-analytic adjustment of external-control log hazard ratios"};
    app.require_subcommand(1);
    app.fallthrough();
    // Config keys live under a [<subcommand>] section; explicit flags win.
    app.set_config("--config", "", "Config file (flags take precedence)");

    CommonOpts meta_opts, pred_opts, sim_opts, loo_opts;
    std::string meta_input, pred_input;
    std::vector<std::string> meta_exclude, loo_exclude;
    double trt_ec_loghr = 0.0, trt_ec_se = 0.0, prior_variance = 100.0;
    std::size_t n_draws = 10000;
    std::string scenario_id = "S1", scenario_file;
    int n_reference = 6;
    std::size_t total_studies = 3500;
    std::string ic_ec_path, trt_ec_path, trt_ic_path;

    auto* meta_cmd = app.add_subcommand("meta", "Fit the meta-analytic model");
    meta_cmd->add_option("--input", meta_input, "Reference CSV (study,loghr,se)")
        ->required();
    meta_cmd->add_option("--exclude", meta_exclude, "Study labels to drop");
    add_common_options(meta_cmd, meta_opts);

    auto* pred_cmd =
        app.add_subcommand("predict", "Adjusted prediction for a new study");
    pred_cmd->add_option("--input", pred_input, "Reference CSV (study,loghr,se)")
        ->required();
    pred_cmd->add_option("--trt-ec-loghr", trt_ec_loghr,
                         "New study's TRT-vs-EC log hazard ratio")
        ->required();
    pred_cmd->add_option("--trt-ec-se", trt_ec_se, "Standard error of that estimate")
        ->required();
    pred_cmd->add_option("--prior-variance", prior_variance,
                         "Prior variance for the new study's log HR");
    pred_cmd->add_option("--n-draws", n_draws, "Draw count for the ML backend");
    pred_cmd->add_option("--exclude", meta_exclude, "Study labels to drop");
    add_common_options(pred_cmd, pred_opts);

    auto* sim_cmd = app.add_subcommand("simulate", "Operating characteristics");
    sim_cmd->add_option("--scenario", scenario_id, "Built-in scenario S1..S6");
    sim_cmd->add_option("--scenario-file", scenario_file,
                        "JSON file defining a custom scenario");
    sim_cmd->add_option("--n-reference", n_reference, "Reference studies per replication");
    sim_cmd->add_option("--total", total_studies, "Total studies to generate");
    add_common_options(sim_cmd, sim_opts);

    auto* loo_cmd = app.add_subcommand("loo", "Leave-one-out model checking");
    loo_cmd->add_option("--ic-ec", ic_ec_path, "ICvEC reference CSV")->required();
    loo_cmd->add_option("--trt-ec", trt_ec_path, "TRTvEC reference CSV")->required();
    loo_cmd->add_option("--trt-ic", trt_ic_path, "TRTvIC reference CSV")->required();
    loo_cmd->add_option("--exclude", loo_exclude, "Study labels to drop");
    add_common_options(loo_cmd, loo_opts, /*with_method=*/false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (meta_cmd->parsed()) {
            json resolved = meta_opts.resolved();
            resolved["input"] = meta_input;
            resolved["exclude"] = meta_exclude;
            RunMeta meta{"meta", meta_opts.seed, hex64(fnv1a(resolved.dump()))};
            return run_meta(meta_opts, meta_input, meta_exclude, meta);
        }
        if (pred_cmd->parsed()) {
            json resolved = pred_opts.resolved();
            resolved["input"] = pred_input;
            resolved["trt_ec_loghr"] = trt_ec_loghr;
            resolved["trt_ec_se"] = trt_ec_se;
            resolved["prior_variance"] = prior_variance;
            resolved["n_draws"] = n_draws;
            resolved["exclude"] = meta_exclude;
            RunMeta meta{"predict", pred_opts.seed, hex64(fnv1a(resolved.dump()))};
            return run_predict(pred_opts, pred_input, meta_exclude, trt_ec_loghr,
                               trt_ec_se, prior_variance, n_draws, meta);
        }
        if (sim_cmd->parsed()) {
            json resolved = sim_opts.resolved();
            resolved["scenario"] = scenario_id;
            resolved["scenario_file"] = scenario_file;
            resolved["n_reference"] = n_reference;
            resolved["total"] = total_studies;
            RunMeta meta{"simulate", sim_opts.seed, hex64(fnv1a(resolved.dump()))};
            return run_simulate(sim_opts, scenario_id, scenario_file, n_reference,
                                total_studies, meta);
        }
        if (loo_cmd->parsed()) {
            json resolved = loo_opts.resolved();
            resolved["ic_ec"] = ic_ec_path;
            resolved["trt_ec"] = trt_ec_path;
            resolved["trt_ic"] = trt_ic_path;
            resolved["exclude"] = loo_exclude;
            RunMeta meta{"loo", loo_opts.seed, hex64(fnv1a(resolved.dump()))};
            return run_loo(loo_opts, ic_ec_path, trt_ec_path, trt_ic_path,
                           loo_exclude, meta);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
