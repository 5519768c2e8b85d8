#include "twophase/cli.hpp"

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "twophase/allocation.hpp"
#include "twophase/csv.hpp"
#include "twophase/errors.hpp"
#include "twophase/estimators.hpp"
#include "twophase/glm.hpp"
#include "twophase/sampling.hpp"
#include "twophase/simulation.hpp"

namespace twophase {

namespace {

void build_app(CLI::App& app, RunConfig& cfg) {
    app.require_subcommand(0, 1);
    app.set_config("--config", "", "read options from an INI/TOML config file");
    app.set_version_flag("--version", std::string(kVersion));

    auto* allocate = app.add_subcommand("allocate", "integer stratum allocation from a table");
    allocate->add_option("--table", cfg.table_path, "stratum table CSV (stratum,N,s)")
        ->required();
    allocate->add_option("--n", cfg.n, "total phase-II sample size")->required();
    allocate->add_option("--n-min", cfg.n_min, "per-stratum floor (default 2)");
    allocate->add_option("--method", cfg.method, "wright | neyman (capped to integers)")
        ->check(CLI::IsMember({"wright", "neyman"}));
    allocate->add_option("--out", cfg.out_path, "allocation CSV path")->required();
    allocate->add_option("--seed", cfg.seed, "random seed (unused, recorded)");

    auto* sample = app.add_subcommand("sample", "draw a stratified phase-II sample");
    sample->add_option("--cohort", cfg.cohort_path, "cohort CSV")->required();
    sample->add_option("--design", cfg.design, "proportional | wright | multiwave")
        ->check(CLI::IsMember({"proportional", "wright", "multiwave"}));
    sample->add_option("--n", cfg.n, "total phase-II sample size");
    sample->add_option("--n-min", cfg.n_min, "per-stratum floor (default 2)");
    sample->add_option("--table", cfg.table_path, "stratum table CSV with dispersions (wright)");
    sample->add_option("--strata-cols", cfg.strata_columns,
                       "cross-classify these columns into strata");
    sample->add_option("--strata-quantile-col", cfg.strata_quantile_column,
                       "stratify on quantiles of this column");
    sample->add_option("--strata-quantile-probs", cfg.strata_quantile_probs,
                       "quantile cutpoints, e.g. 0.2 0.8");
    sample->add_option("--waves", cfg.wave_sizes, "wave sizes for multiwave");
    sample->add_option("--prior-file", cfg.prior_path,
                       "JSON prior for the wave-1 design (multiwave)");
    sample->add_option("--family", cfg.family, "outcome family (multiwave)")
        ->check(CLI::IsMember({"linear", "logistic"}));
    sample->add_option("--response", cfg.response, "outcome response column (multiwave)");
    sample->add_option("--covariates", cfg.covariates, "outcome covariates (multiwave)");
    sample->add_option("--impute-family", cfg.impute_family, "imputation family (multiwave)");
    sample->add_option("--impute-response", cfg.impute_response,
                       "phase-II column the imputation model predicts (multiwave)");
    sample->add_option("--impute-covariates", cfg.impute_covariates,
                       "imputation covariates (multiwave)");
    sample->add_option("--out", cfg.out_path, "sampled cohort CSV path")->required();
    sample->add_option("--wave-log", cfg.wave_log_path, "wave log CSV path");
    sample->add_option("--seed", cfg.seed, "random seed");

    auto* estimate = app.add_subcommand("estimate", "design-based fit on a sampled cohort");
    estimate->add_option("--cohort", cfg.cohort_path, "sampled cohort CSV")->required();
    estimate->add_option("--estimator", cfg.estimator, "ipw | raking")
        ->check(CLI::IsMember({"ipw", "raking"}));
    estimate->add_option("--family", cfg.family, "outcome family")
        ->check(CLI::IsMember({"linear", "logistic"}));
    estimate->add_option("--response", cfg.response, "outcome response column")->required();
    estimate->add_option("--covariates", cfg.covariates, "outcome covariates")->required();
    estimate->add_option("--impute-family", cfg.impute_family, "imputation family (raking)");
    estimate->add_option("--impute-response", cfg.impute_response,
                         "phase-II column the imputation model predicts (raking)");
    estimate->add_option("--impute-covariates", cfg.impute_covariates,
                         "imputation covariates (raking)");
    estimate->add_option("--out", cfg.out_path, "coefficient CSV path")->required();
    estimate->add_option("--seed", cfg.seed, "random seed (unused, recorded)");

    auto* simulate = app.add_subcommand("simulate", "run a packaged scenario");
    simulate->add_option("--scenario", cfg.scenario,
                         "priors_binary | raking_continuous | case_control");
    simulate->add_option("--reps", cfg.replicates, "replicate count");
    simulate->add_option("-N,--cohort-size", cfg.cohort_size, "phase-I cohort size");
    simulate->add_option("-n,--sample-size", cfg.sample_size, "phase-II sample size");
    simulate->add_option("--designs", cfg.designs, "design tags (scenario catalogue)");
    simulate->add_option("--estimators", cfg.estimators, "ipw and/or raking");
    simulate->add_option("--waves", cfg.wave_sizes, "wave sizes (priors_binary)");
    simulate->add_option("--mode", cfg.mode, "oracle | feasible dispersion mode")
        ->check(CLI::IsMember({"oracle", "feasible"}));
    simulate->add_option("--prior-draws", cfg.prior_draws, "prior design draws");
    simulate->add_option("--p0", cfg.p0, "case-control prevalence at x = 0");
    simulate->add_option("--beta-x", cfg.beta_x, "case-control log odds ratio");
    simulate->add_option("--workers", cfg.workers, "worker threads");
    simulate->add_option("--seed", cfg.seed, "random seed");
    simulate->add_option("--out", cfg.out_path, "metrics CSV path")->required();
}

std::string subcommand_of(const CLI::App& app) {
    for (const auto* sub : app.get_subcommands()) return sub->get_name();
    return "";
}

ScenarioConfig scenario_config_from(const RunConfig& cfg) {
    if (cfg.scenario.empty())
        throw ConfigError(
            "simulate needs --scenario; valid scenarios: priors_binary, raking_continuous, "
            "case_control");
    ScenarioConfig sc;
    sc.scenario = scenario_from_string(cfg.scenario);
    sc.cohort_size = cfg.cohort_size;
    sc.sample_size = cfg.sample_size;
    sc.replicates = cfg.replicates;
    sc.seed = cfg.seed;
    sc.designs = cfg.designs;
    sc.estimators = cfg.estimators;
    sc.wave_sizes = cfg.wave_sizes;
    sc.prior_draws = cfg.prior_draws;
    if (!cfg.mode.empty())
        sc.mode = cfg.mode == "oracle" ? DispersionMode::oracle : DispersionMode::feasible;
    sc.workers = cfg.workers;
    sc.p0 = cfg.p0;
    sc.beta_x = cfg.beta_x;
    sc.n_min = cfg.n_min;
    apply_scenario_defaults(sc);
    return sc;
}

void resolve(RunConfig& cfg) {
    if (cfg.subcommand == "simulate") {
        ScenarioConfig sc = scenario_config_from(cfg);
        cfg.cohort_size = sc.cohort_size;
        cfg.sample_size = sc.sample_size;
        cfg.replicates = sc.replicates;
        cfg.designs = sc.designs;
        cfg.estimators = sc.estimators;
        cfg.wave_sizes = sc.wave_sizes;
        cfg.mode = sc.mode == DispersionMode::oracle ? "oracle" : "feasible";
    }
}

void write_metadata(const RunConfig& cfg) {
    if (cfg.out_path.empty()) return;
    std::ofstream out(cfg.out_path + ".meta.json");
    out << cfg.metadata_json() << "\n";
}

PriorSpec read_prior_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open prior file " + path, 0, 0);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad prior JSON: ") + e.what(), 0, 0);
    }
    PriorSpec prior;
    for (const auto& entry : j.at("beta"))
        prior.beta.push_back({entry.at("mean").get<double>(), entry.at("sd").get<double>()});
    for (const auto& entry : j.at("alpha"))
        prior.alpha.push_back({entry.at("mean").get<double>(), entry.at("sd").get<double>()});
    prior.draws = j.value("draws", 500);
    prior.sigma_x = j.value("sigma_x", 1.0);
    prior.sigma_y = j.value("sigma_y", 1.0);
    return prior;
}

StratumTable table_from_strata(const CohortFrame& frame) {
    StratumTable table;
    const auto sizes = frame.stratum_sizes();
    table.strata.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k)
        table.strata[k] = {static_cast<int>(k), sizes[k], 1.0};
    return table;
}

int run_allocate(const RunConfig& cfg) {
    StratumTable table = read_stratum_table_csv(cfg.table_path);
    Allocation alloc;
    if (cfg.method == "neyman") {
        Eigen::VectorXd raw = neyman_allocation(table, cfg.n);
        alloc = cap_and_redistribute(raw, table, cfg.n, cfg.n_min);
    } else {
        alloc = wright_allocation(table, cfg.n, cfg.n_min);
    }
    write_allocation_csv(alloc, table, cfg.out_path);
    write_metadata(cfg);
    return 0;
}

void require_columns(const CohortFrame& frame, const std::vector<std::string>& names) {
    for (const auto& name : names)
        if (!frame.has_column(name))
            throw ParseError("cohort file lacks column " + name + " declared by the model", 1, 1);
}

ModelSpec outcome_spec(const RunConfig& cfg) {
    ModelSpec spec;
    spec.family = family_from_string(cfg.family);
    spec.response = cfg.response;
    spec.covariates = cfg.covariates;
    spec.validate();
    return spec;
}

ModelSpec imputation_spec(const RunConfig& cfg) {
    ModelSpec spec;
    if (cfg.impute_response.empty() || cfg.impute_covariates.empty())
        throw ConfigError("raking needs --impute-response and --impute-covariates");
    spec.family = cfg.impute_family.empty() ? Family::linear
                                            : family_from_string(cfg.impute_family);
    spec.response = cfg.impute_response;
    spec.covariates = cfg.impute_covariates;
    spec.validate();
    return spec;
}

int run_sample(const RunConfig& cfg) {
    CohortFrame frame = read_cohort_csv(cfg.cohort_path);
    if (!cfg.strata_columns.empty()) {
        auto res = stratify(frame, StratificationRule::cross_classify(cfg.strata_columns));
        frame.set_strata(res.stratum, res.n_strata);
    } else if (!cfg.strata_quantile_column.empty()) {
        auto res = stratify(frame, StratificationRule::quantile_cut(cfg.strata_quantile_column,
                                                                    cfg.strata_quantile_probs));
        frame.set_strata(res.stratum, res.n_strata);
    }
    if (!frame.has_strata())
        throw ConfigError("cohort has no stratum column and no stratification rule was given");

    Rng rng(cfg.seed);
    WaveLog log;
    CohortFrame sampled;
    if (cfg.design == "multiwave") {
        if (cfg.wave_sizes.empty()) throw ConfigError("multiwave needs --waves");
        WavePlan plan;
        plan.sizes = cfg.wave_sizes;
        plan.n_min = cfg.n_min;
        if (!cfg.prior_path.empty()) {
            plan.wave1 = Wave1Design::prior;
            plan.prior = read_prior_json(cfg.prior_path);
        }
        ModelSpec outcome = outcome_spec(cfg);
        ModelSpec imputation = imputation_spec(cfg);
        require_columns(frame, outcome.covariates);
        require_columns(frame, imputation.covariates);
        const auto terms = outcome.term_names();
        int target = 1;
        for (std::size_t j = 0; j < terms.size(); ++j)
            if (terms[j] == imputation.response) target = static_cast<int>(j);
        MultiwaveResult mw = multiwave_run(frame, outcome, imputation, plan, target, rng);
        sampled = std::move(mw.frame);
        log = std::move(mw.log);
    } else {
        if (cfg.n < 1) throw ConfigError("sampling needs --n");
        Allocation alloc;
        if (cfg.design == "wright") {
            if (cfg.table_path.empty()) throw ConfigError("wright design needs --table");
            StratumTable table = read_stratum_table_csv(cfg.table_path);
            if (table.size() != static_cast<std::size_t>(frame.n_strata()))
                throw ConfigError("dispersion table does not match the cohort strata");
            alloc = wright_allocation(table, cfg.n, cfg.n_min);
        } else {
            alloc = proportional_allocation(table_from_strata(frame), cfg.n, cfg.n_min);
        }
        sampled = sample_stratified(frame, alloc, rng);
        WaveRecord record;
        record.wave = 1;
        record.increment = alloc.counts;
        record.cumulative = alloc.counts;
        log.waves.push_back(std::move(record));
    }
    write_cohort_csv(sampled, cfg.out_path);
    if (!cfg.wave_log_path.empty()) write_wave_log_csv(log, cfg.wave_log_path);
    write_metadata(cfg);
    return 0;
}

int run_estimate(const RunConfig& cfg) {
    CohortFrame frame = read_cohort_csv(cfg.cohort_path);
    ModelSpec outcome = outcome_spec(cfg);
    require_columns(frame, {outcome.response});
    require_columns(frame, outcome.covariates);
    if (!frame.has_sampling()) throw ConfigError("cohort has no R/w columns; sample first");

    FitResult fit;
    if (cfg.estimator == "raking") {
        ModelSpec imputation = imputation_spec(cfg);
        require_columns(frame, imputation.covariates);
        FitResult imp = fit_imputation_model(frame, imputation);
        auto xhat = predict_xhat(imp, frame, imputation);
        Eigen::MatrixXd aux = phase1_influence(frame, outcome, imputation.response, xhat);
        fit = raking_fit(frame, outcome, aux).fit;
    } else {
        fit = ipw_fit(frame, outcome);
    }

    std::ofstream out(cfg.out_path);
    if (!out) throw ParseError("cannot open file for writing: " + cfg.out_path, 0, 0);
    out << "coefficient,estimate,se,estimator\n";
    const Eigen::VectorXd se = fit.se();
    for (Eigen::Index j = 0; j < fit.beta.size(); ++j)
        out << fit.term_names[static_cast<std::size_t>(j)] << "," << format_double(fit.beta[j])
            << "," << format_double(se[j]) << "," << cfg.estimator << "\n";
    write_metadata(cfg);
    if (!fit.converged) throw SingularInformation("estimator did not converge");
    return 0;
}

int run_simulate(const RunConfig& cfg) {
    ScenarioConfig sc = scenario_config_from(cfg);
    ReplicationResult result = run_replications(sc);
    write_metrics_csv(result.metrics, cfg.out_path);
    write_metadata(cfg);
    return 0;
}

}  // namespace

std::string RunConfig::metadata_json() const {
    nlohmann::json j;
    j["version"] = kVersion;
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["workers"] = workers;
    j["out"] = out_path;
    if (subcommand == "allocate") {
        j["table"] = table_path;
        j["method"] = method;
        j["n"] = n;
        j["n_min"] = n_min;
    } else if (subcommand == "sample") {
        j["cohort"] = cohort_path;
        j["design"] = design;
        j["n"] = n;
        j["n_min"] = n_min;
        j["table"] = table_path;
        j["strata_cols"] = strata_columns;
        j["strata_quantile_col"] = strata_quantile_column;
        j["strata_quantile_probs"] = strata_quantile_probs;
        j["waves"] = wave_sizes;
        j["prior_file"] = prior_path;
        j["family"] = family;
        j["response"] = response;
        j["covariates"] = covariates;
        j["impute_family"] = impute_family;
        j["impute_response"] = impute_response;
        j["impute_covariates"] = impute_covariates;
        j["wave_log"] = wave_log_path;
    } else if (subcommand == "estimate") {
        j["cohort"] = cohort_path;
        j["estimator"] = estimator;
        j["family"] = family;
        j["response"] = response;
        j["covariates"] = covariates;
        j["impute_family"] = impute_family;
        j["impute_response"] = impute_response;
        j["impute_covariates"] = impute_covariates;
    } else if (subcommand == "simulate") {
        j["scenario"] = scenario;
        j["cohort_size"] = cohort_size;
        j["sample_size"] = sample_size;
        j["replicates"] = replicates;
        j["designs"] = designs;
        j["estimators"] = estimators;
        j["waves"] = wave_sizes;
        j["mode"] = mode;
        j["prior_draws"] = prior_draws;
        j["p0"] = p0;
        j["beta_x"] = beta_x;
    }
    return j.dump(2);
}

RunConfig parse_config(const std::vector<std::string>& args) {
    RunConfig cfg;
    CLI::App app{"two-phase subsample design and analysis"};
    build_app(app, cfg);
    std::vector<const char*> argv;
    argv.push_back("twophase");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        throw ConfigError(app.help());
    } catch (const CLI::ParseError& e) {
        throw ConfigError(std::string("usage error: ") + e.what());
    }
    cfg.subcommand = subcommand_of(app);
    if (cfg.subcommand.empty()) throw ConfigError("a subcommand is required\n" + app.help());
    resolve(cfg);
    return cfg;
}

int run_cli(int argc, char** argv) {
    RunConfig cfg;
    CLI::App app{"two-phase subsample design and analysis"};
    build_app(app, cfg);
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    cfg.subcommand = subcommand_of(app);
    try {
        if (cfg.subcommand.empty())
            throw ConfigError("a subcommand is required (allocate, sample, estimate, simulate)");
        resolve(cfg);
        if (cfg.subcommand == "allocate") return run_allocate(cfg);
        if (cfg.subcommand == "sample") return run_sample(cfg);
        if (cfg.subcommand == "estimate") return run_estimate(cfg);
        if (cfg.subcommand == "simulate") return run_simulate(cfg);
        throw ConfigError("unknown subcommand " + cfg.subcommand);
    } catch (const ParseError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace twophase
