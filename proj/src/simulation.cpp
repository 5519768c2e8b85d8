#include "twophase/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "twophase/allocation.hpp"
#include "twophase/errors.hpp"
#include "twophase/estimators.hpp"
#include "twophase/glm.hpp"
#include "twophase/sampling.hpp"

namespace twophase {

Scenario scenario_from_string(const std::string& name) {
    if (name == "priors_binary") return Scenario::priors_binary;
    if (name == "raking_continuous") return Scenario::raking_continuous;
    if (name == "case_control") return Scenario::case_control;
    throw ConfigError("unknown scenario: " + name +
                      " (expected priors_binary, raking_continuous or case_control)");
}

std::string to_string(Scenario scenario) {
    switch (scenario) {
        case Scenario::priors_binary: return "priors_binary";
        case Scenario::raking_continuous: return "raking_continuous";
        case Scenario::case_control: return "case_control";
    }
    return "?";
}

namespace {

double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

const std::vector<std::string>& design_catalogue(Scenario scenario) {
    static const std::vector<std::string> priors{"well.strong", "well.weak",  "poor.strong",
                                                 "poor.weak",   "prop.two",   "prop.one",
                                                 "census"};
    static const std::vector<std::string> raking{"if-ipw", "if-gr", "census"};
    static const std::vector<std::string> cc{"if-neyman", "proportional", "census"};
    switch (scenario) {
        case Scenario::priors_binary: return priors;
        case Scenario::raking_continuous: return raking;
        case Scenario::case_control: return cc;
    }
    return priors;
}

}  // namespace

void apply_scenario_defaults(ScenarioConfig& config) {
    switch (config.scenario) {
        case Scenario::priors_binary:
            if (config.cohort_size == 0) config.cohort_size = 1000;
            if (config.sample_size == 0) config.sample_size = 300;
            if (config.replicates == 0) config.replicates = 1000;
            if (config.designs.empty())
                config.designs = {"well.strong", "well.weak", "poor.strong", "poor.weak",
                                  "prop.two"};
            if (config.wave_sizes.empty())
                config.wave_sizes = {50, config.sample_size - 50};
            if (!config.mode) config.mode = DispersionMode::feasible;
            break;
        case Scenario::raking_continuous:
            if (config.cohort_size == 0) config.cohort_size = 4000;
            if (config.sample_size == 0) config.sample_size = 600;
            if (config.replicates == 0) config.replicates = 2000;
            if (config.designs.empty()) config.designs = {"if-ipw", "if-gr"};
            if (!config.mode) config.mode = DispersionMode::oracle;
            break;
        case Scenario::case_control:
            if (config.cohort_size == 0) config.cohort_size = 100000;
            if (config.sample_size == 0) config.sample_size = 200;
            if (config.replicates == 0) config.replicates = 1;
            if (config.designs.empty()) config.designs = {"if-neyman", "proportional"};
            if (!config.mode) config.mode = DispersionMode::oracle;
            break;
    }
    if (config.estimators.empty()) {
        config.estimators = config.scenario == Scenario::case_control
                                ? std::vector<std::string>{"ipw"}
                                : std::vector<std::string>{"ipw", "raking"};
    }
    if (config.workers < 1) config.workers = 1;
    if (config.sample_size > config.cohort_size)
        throw ConfigError("sample size exceeds cohort size");
    if (config.replicates < 1) throw ConfigError("replicate count must be at least 1");

    const auto& catalogue = design_catalogue(config.scenario);
    for (const auto& d : config.designs)
        if (std::find(catalogue.begin(), catalogue.end(), d) == catalogue.end())
            throw ConfigError("design " + d + " is not in the " + to_string(config.scenario) +
                              " catalogue");
    for (const auto& e : config.estimators)
        if (e != "ipw" && e != "raking")
            throw ConfigError("unknown estimator " + e + " (expected ipw or raking)");
    if (config.scenario == Scenario::case_control)
        for (const auto& e : config.estimators)
            if (e == "raking")
                throw ConfigError("case_control has no imputation model; raking unavailable");
    if (config.scenario == Scenario::priors_binary) {
        int total = 0;
        for (int s : config.wave_sizes) total += s;
        if (total != config.sample_size)
            throw ConfigError("wave sizes must sum to the sample size");
    }
}

CohortFrame gen_priors_scenario(int n_rows, Rng& rng) {
    std::vector<double> x(n_rows), a(n_rows), z1(n_rows), z2(n_rows), y(n_rows);
    for (int i = 0; i < n_rows; ++i) {
        x[i] = rng.bernoulli(0.15) ? 1.0 : 0.0;
        a[i] = rng.bernoulli(x[i] > 0.5 ? 0.8 : 0.2) ? 1.0 : 0.0;
        z1[i] = rng.uniform();
        z2[i] = rng.bernoulli(0.6) ? 1.0 : 0.0;
        y[i] = rng.bernoulli(expit(-2.0 + 0.5 * x[i] + z1[i] + z2[i])) ? 1.0 : 0.0;
    }
    CohortFrame frame(static_cast<std::size_t>(n_rows));
    frame.add_column("X", std::move(x));
    frame.add_column("A", std::move(a));
    frame.add_column("Z1", std::move(z1));
    frame.add_column("Z2", std::move(z2));
    frame.add_column("Y", std::move(y));
    auto res = stratify(frame, StratificationRule::cross_classify({"A", "Y", "Z2"}));
    frame.set_strata(res.stratum, res.n_strata);
    return frame;
}

CohortFrame gen_raking_scenario(int n_rows, Rng& rng) {
    std::vector<double> x(n_rows), xt(n_rows), z1(n_rows), z2(n_rows), y(n_rows);
    for (int i = 0; i < n_rows; ++i) {
        x[i] = rng.normal();
        xt[i] = x[i] + 0.5 * rng.normal();
        z1[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
        z2[i] = rng.normal();
        y[i] = 1.0 + 0.0 * x[i] + z1[i] + z2[i] + rng.normal();
    }
    CohortFrame frame(static_cast<std::size_t>(n_rows));
    frame.add_column("X", std::move(x));
    frame.add_column("Xtilde", std::move(xt));
    frame.add_column("Z1", std::move(z1));
    frame.add_column("Z2", std::move(z2));
    frame.add_column("Y", std::move(y));
    auto res = stratify(frame, StratificationRule::quantile_cut("Xtilde", {0.2, 0.8}));
    frame.set_strata(res.stratum, res.n_strata);
    return frame;
}

CohortFrame gen_case_control_scenario(int n_rows, double p0, double beta_x, Rng& rng) {
    if (!(p0 > 0.0 && p0 < 1.0)) throw ConfigError("p0 must lie in (0, 1)");
    const double intercept = std::log(p0 / (1.0 - p0));
    std::vector<double> x(n_rows), y(n_rows);
    for (int i = 0; i < n_rows; ++i) {
        x[i] = rng.normal();
        y[i] = rng.bernoulli(expit(intercept + beta_x * x[i])) ? 1.0 : 0.0;
    }
    CohortFrame frame(static_cast<std::size_t>(n_rows));
    frame.add_column("X", std::move(x));
    frame.add_column("Y", std::move(y));
    auto res = stratify(frame, StratificationRule::cross_classify({"Y"}));
    frame.set_strata(res.stratum, res.n_strata);
    return frame;
}

namespace {

struct ScenarioContext {
    ScenarioConfig cfg;
    ModelSpec outcome;
    ModelSpec imputation;  // unused for case_control
    Eigen::VectorXd beta_true;
    Eigen::VectorXd alpha_truth;
    double sigma_x_truth = 1.0;
    int target_column = 1;
    std::string target_name = "X";
    std::string reference_design;
};

CohortFrame generate(const ScenarioContext& ctx, Rng& rng) {
    switch (ctx.cfg.scenario) {
        case Scenario::priors_binary: return gen_priors_scenario(ctx.cfg.cohort_size, rng);
        case Scenario::raking_continuous: return gen_raking_scenario(ctx.cfg.cohort_size, rng);
        case Scenario::case_control:
            return gen_case_control_scenario(ctx.cfg.cohort_size, ctx.cfg.p0, ctx.cfg.beta_x, rng);
    }
    throw ConfigError("bad scenario");
}

// pseudo-true imputation coefficients: the imputation model fitted on one
// very large synthetic cohort with a fixed internal seed
void fill_truths(ScenarioContext& ctx) {
    if (ctx.cfg.scenario == Scenario::case_control) return;
    const bool need_alpha = ctx.cfg.scenario == Scenario::priors_binary ||
                            ctx.cfg.mode == DispersionMode::feasible;
    if (!need_alpha) return;
    constexpr int kBigCohort = 400000;
    Rng rng(271828182845ULL);
    ScenarioContext big = ctx;
    big.cfg.cohort_size = kBigCohort;
    CohortFrame frame = generate(big, rng);
    FitResult fit = fit_model(frame, ctx.imputation);
    ctx.alpha_truth = fit.beta;
    ctx.sigma_x_truth = std::sqrt(std::max(fit.dispersion, 0.0));
}

ScenarioContext make_context(const ScenarioConfig& config) {
    ScenarioContext ctx;
    ctx.cfg = config;
    apply_scenario_defaults(ctx.cfg);
    switch (ctx.cfg.scenario) {
        case Scenario::priors_binary:
            ctx.outcome = {Family::logistic, "Y", {"X", "Z1", "Z2"}, true};
            ctx.imputation = {Family::logistic, "X", {"Z1", "Z2", "A", "Y"}, true};
            ctx.beta_true = Eigen::Vector4d(-2.0, 0.5, 1.0, 1.0);
            ctx.reference_design = "prop.two";
            break;
        case Scenario::raking_continuous:
            ctx.outcome = {Family::linear, "Y", {"X", "Z1", "Z2"}, true};
            ctx.imputation = {Family::linear, "X", {"Xtilde", "Z1", "Z2", "Y"}, true};
            ctx.beta_true = Eigen::Vector4d(1.0, 0.0, 1.0, 1.0);
            ctx.reference_design = "if-ipw";
            break;
        case Scenario::case_control:
            ctx.outcome = {Family::logistic, "Y", {"X"}, true};
            ctx.beta_true = Eigen::Vector2d(std::log(ctx.cfg.p0 / (1.0 - ctx.cfg.p0)),
                                            ctx.cfg.beta_x);
            ctx.reference_design = "proportional";
            break;
    }
    ctx.target_column = 1;  // X follows the intercept in every outcome model
    ctx.target_name = "X";
    fill_truths(ctx);
    return ctx;
}

PriorSpec make_prior(const std::string& tag, const ScenarioContext& ctx) {
    const bool well = tag.rfind("well", 0) == 0;
    const bool strong = tag.find("strong") != std::string::npos;
    const double offset = well ? -std::sqrt(0.1) / 2.0 : -0.5;
    const double sd = std::sqrt(strong ? 0.1 : 1.0);
    PriorSpec prior;
    prior.draws = ctx.cfg.prior_draws;
    prior.sigma_x = ctx.sigma_x_truth;
    for (Eigen::Index j = 0; j < ctx.beta_true.size(); ++j)
        prior.beta.push_back({ctx.beta_true[j] + offset, sd});
    for (Eigen::Index j = 0; j < ctx.alpha_truth.size(); ++j)
        prior.alpha.push_back({ctx.alpha_truth[j] + offset, sd});
    return prior;
}

struct WaveEstimates {
    Eigen::VectorXd beta;
    Eigen::VectorXd alpha;
    double sigma_x = 1.0;
    bool valid = false;
};

WaveEstimates pilot_estimates(const CohortFrame& frame, const ScenarioContext& ctx) {
    WaveEstimates est;
    try {
        FitResult imp = fit_imputation_model(frame, ctx.imputation);
        FitResult out = ipw_fit(frame, ctx.outcome);
        if (!imp.converged || !out.converged || imp.separation || out.separation) return est;
        est.beta = out.beta;
        est.alpha = imp.beta;
        est.sigma_x = std::sqrt(std::max(imp.dispersion, 0.0));
        est.valid = true;
    } catch (const Error&) {
    }
    return est;
}

StratumTable unit_dispersion_table(const CohortFrame& frame) {
    StratumTable table;
    const auto sizes = frame.stratum_sizes();
    table.strata.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k)
        table.strata[k] = {static_cast<int>(k), sizes[k], sizes[k] > 0 ? 1.0 : 0.0};
    return table;
}

Allocation census_allocation(const CohortFrame& frame, int n_min) {
    const auto sizes = frame.stratum_sizes();
    Allocation alloc;
    alloc.n_min = n_min;
    alloc.counts.resize(sizes.size());
    alloc.exhausted.assign(sizes.size(), 1);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        alloc.counts[k] = static_cast<int>(sizes[k]);
        alloc.total += alloc.counts[k];
    }
    return alloc;
}

// full-cohort raking auxiliaries at analysis time: imputation fitted on the
// sampled rows with design weights, phase-1 model refitted with xhat
Eigen::MatrixXd analysis_auxiliaries(const CohortFrame& frame, const ScenarioContext& ctx) {
    FitResult imp = fit_imputation_model(frame, ctx.imputation);
    if (!imp.converged) throw SingularInformation("imputation model did not converge");
    auto xhat = predict_xhat(imp, frame, ctx.imputation);
    return phase1_influence(frame, ctx.outcome, ctx.imputation.response, xhat);
}

// oracle design-time dispersions from the full cohort (phase-II values known
// to the simulator)
StratumTable oracle_dispersions(const CohortFrame& frame, const ScenarioContext& ctx,
                                bool raking_target) {
    FitResult full = fit_model(frame, ctx.outcome);
    if (raking_target) {
        FitResult imp = fit_model(frame, ctx.imputation);
        auto xhat = predict_xhat(imp, frame, ctx.imputation);
        Eigen::MatrixXd aux =
            phase1_influence(frame, ctx.outcome, ctx.imputation.response, xhat);
        return raking_optimal_dispersions(full.influence, aux, frame.stratum(), frame.n_strata(),
                                          ctx.target_column);
    }
    return influence_dispersions(full.influence, frame.stratum(), frame.n_strata(),
                                 ctx.target_column);
}

struct DesignOutcome {
    CohortFrame frame;
    Eigen::VectorXd share;  // realised allocation share per stratum
};

// two-stage feasible variant: proportional pilot, model-implied dispersions
// at the pilot estimates, Wright continuation for the remainder
DesignOutcome run_feasible_if_design(const CohortFrame& cohort, const ScenarioContext& ctx,
                                     bool raking_target, Rng& rng) {
    const int n = ctx.cfg.sample_size;
    const int pilot = std::max(ctx.cfg.n_min * cohort.n_strata(), n / 3);
    const auto sizes = cohort.stratum_sizes();
    StratumTable table = unit_dispersion_table(cohort);

    Allocation alloc1 = proportional_allocation(table, pilot, ctx.cfg.n_min);
    Rng rng_sample = rng.split(0);
    CohortFrame sampled = sample_stratified(cohort, alloc1, rng_sample);
    WaveEstimates est = pilot_estimates(sampled, ctx);

    Allocation final_alloc;
    if (est.valid) {
        Rng rng_mc = rng.split(1);
        StratumTable disp;
        if (raking_target) {
            FitResult imp = fit_imputation_model(sampled, ctx.imputation);
            auto xhat = predict_xhat(imp, sampled, ctx.imputation);
            Eigen::MatrixXd aux =
                phase1_influence(sampled, ctx.outcome, ctx.imputation.response, xhat);
            disp = model_implied_dispersions(sampled, ctx.outcome, ctx.imputation, est.beta,
                                             est.alpha, est.sigma_x, ctx.target_column, rng_mc,
                                             &aux);
        } else {
            disp = model_implied_dispersions(sampled, ctx.outcome, ctx.imputation, est.beta,
                                             est.alpha, est.sigma_x, ctx.target_column, rng_mc);
        }
        final_alloc = wright_increment(disp, alloc1.counts, n - pilot, ctx.cfg.n_min);
    } else {
        final_alloc = wright_increment(table, alloc1.counts, n - pilot, ctx.cfg.n_min);
    }

    // draw the increment from the not-yet-sampled units
    std::vector<std::uint8_t> r(sampled.phase2());
    std::vector<std::vector<std::size_t>> pool(sizes.size());
    for (std::size_t i = 0; i < cohort.n_rows(); ++i)
        if (!r[i]) pool[static_cast<std::size_t>(cohort.stratum()[i])].push_back(i);
    Rng rng_inc = rng.split(2);
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const int inc = final_alloc.counts[k] - alloc1.counts[k];
        for (int t = 0; t < inc; ++t) {
            const std::size_t j =
                static_cast<std::size_t>(t) +
                static_cast<std::size_t>(rng_inc.below(pool[k].size() - static_cast<std::size_t>(t)));
            std::swap(pool[k][static_cast<std::size_t>(t)], pool[k][j]);
            r[pool[k][static_cast<std::size_t>(t)]] = 1;
        }
    }
    std::vector<double> pi(cohort.n_rows(), 0.0), w(cohort.n_rows(), 0.0);
    for (std::size_t i = 0; i < cohort.n_rows(); ++i) {
        const auto k = static_cast<std::size_t>(cohort.stratum()[i]);
        if (sizes[k] > 0)
            pi[i] = static_cast<double>(final_alloc.counts[k]) / static_cast<double>(sizes[k]);
        if (r[i]) w[i] = 1.0 / pi[i];
    }
    DesignOutcome out{cohort, Eigen::VectorXd()};
    out.frame.set_sampling(std::move(r), std::move(pi), std::move(w));
    out.share.resize(static_cast<Eigen::Index>(final_alloc.counts.size()));
    for (std::size_t k = 0; k < final_alloc.counts.size(); ++k)
        out.share[static_cast<Eigen::Index>(k)] =
            static_cast<double>(final_alloc.counts[k]) / static_cast<double>(n);
    return out;
}

Eigen::VectorXd share_of(const Allocation& alloc) {
    Eigen::VectorXd share(static_cast<Eigen::Index>(alloc.counts.size()));
    for (std::size_t k = 0; k < alloc.counts.size(); ++k)
        share[static_cast<Eigen::Index>(k)] =
            static_cast<double>(alloc.counts[k]) / static_cast<double>(alloc.total);
    return share;
}

DesignOutcome run_design(const CohortFrame& cohort, const ScenarioContext& ctx,
                         const std::string& tag, Rng& rng) {
    const int n = ctx.cfg.sample_size;
    const int n_min = ctx.cfg.n_min;

    if (tag == "census") {
        Allocation alloc = census_allocation(cohort, n_min);
        Rng rng_sample = rng.split(0);
        return {sample_stratified(cohort, alloc, rng_sample), share_of(alloc)};
    }

    if (ctx.cfg.scenario == Scenario::priors_binary) {
        if (tag == "prop.one") {
            Allocation alloc = proportional_allocation(unit_dispersion_table(cohort), n, n_min);
            Rng rng_sample = rng.split(0);
            return {sample_stratified(cohort, alloc, rng_sample), share_of(alloc)};
        }
        WavePlan plan;
        plan.sizes = ctx.cfg.wave_sizes;
        plan.n_min = n_min;
        if (tag == "prop.two") {
            plan.wave1 = Wave1Design::proportional;
        } else {
            plan.wave1 = Wave1Design::prior;
            plan.prior = make_prior(tag, ctx);
        }
        MultiwaveResult mw = multiwave_run(cohort, ctx.outcome, ctx.imputation, plan,
                                           ctx.target_column, rng);
        const auto& last = mw.log.waves.back();
        Eigen::VectorXd share(static_cast<Eigen::Index>(last.cumulative.size()));
        for (std::size_t k = 0; k < last.cumulative.size(); ++k)
            share[static_cast<Eigen::Index>(k)] =
                static_cast<double>(last.cumulative[k]) / static_cast<double>(n);
        return {std::move(mw.frame), std::move(share)};
    }

    if (ctx.cfg.scenario == Scenario::raking_continuous) {
        const bool raking_target = tag == "if-gr";
        if (ctx.cfg.mode == DispersionMode::feasible)
            return run_feasible_if_design(cohort, ctx, raking_target, rng);
        StratumTable disp = oracle_dispersions(cohort, ctx, raking_target);
        Allocation alloc = wright_allocation(disp, n, n_min);
        Rng rng_sample = rng.split(0);
        return {sample_stratified(cohort, alloc, rng_sample), share_of(alloc)};
    }

    // case_control
    Allocation alloc;
    if (tag == "if-neyman") {
        StratumTable disp = oracle_dispersions(cohort, ctx, false);
        Eigen::VectorXd raw = neyman_allocation(disp, n);
        alloc = cap_and_redistribute(raw, disp, n, n_min);
    } else {
        alloc = proportional_allocation(unit_dispersion_table(cohort), n, n_min);
    }
    Rng rng_sample = rng.split(0);
    return {sample_stratified(cohort, alloc, rng_sample), share_of(alloc)};
}

struct CellOutcome {
    Eigen::VectorXd beta;
    Eigen::VectorXd se;
    bool failed = false;
};

struct ReplicateOutcome {
    std::vector<Eigen::VectorXd> shares;
    Eigen::VectorXd prop_share;
    std::vector<CellOutcome> cells;  // designs x estimators, estimator fastest
    bool failed = false;
};

CellOutcome run_estimator(const CohortFrame& sampled, const ScenarioContext& ctx,
                          const std::string& estimator) {
    CellOutcome cell;
    try {
        if (estimator == "ipw") {
            FitResult fit = ipw_fit(sampled, ctx.outcome);
            cell.failed = !fit.converged || fit.separation;
            cell.beta = fit.beta;
            cell.se = fit.se();
        } else {
            Eigen::MatrixXd aux = analysis_auxiliaries(sampled, ctx);
            RakingFit rak = raking_fit(sampled, ctx.outcome, aux);
            cell.failed = !rak.fit.converged || rak.fit.separation ||
                          !rak.calibration.converged;
            cell.beta = rak.fit.beta;
            cell.se = rak.fit.se();
        }
    } catch (const Error&) {
        cell.failed = true;
    }
    return cell;
}

ReplicateOutcome run_replicate(const ScenarioContext& ctx, int replicate, const Rng& master) {
    Rng rng_rep = master.split(static_cast<std::uint64_t>(replicate));
    Rng rng_gen = rng_rep.split(0);
    CohortFrame cohort = generate(ctx, rng_gen);

    ReplicateOutcome out;
    const auto sizes = cohort.stratum_sizes();
    out.prop_share.resize(static_cast<Eigen::Index>(sizes.size()));
    for (std::size_t k = 0; k < sizes.size(); ++k)
        out.prop_share[static_cast<Eigen::Index>(k)] =
            static_cast<double>(sizes[k]) / static_cast<double>(cohort.n_rows());

    for (std::size_t d = 0; d < ctx.cfg.designs.size(); ++d) {
        Rng rng_design = rng_rep.split(1 + d);
        DesignOutcome design;
        bool design_failed = false;
        try {
            design = run_design(cohort, ctx, ctx.cfg.designs[d], rng_design);
        } catch (const Error&) {
            design_failed = true;
        }
        if (design_failed) {
            out.shares.emplace_back(Eigen::VectorXd::Zero(out.prop_share.size()));
            for (std::size_t e = 0; e < ctx.cfg.estimators.size(); ++e) {
                CellOutcome cell;
                cell.failed = true;
                out.cells.push_back(std::move(cell));
            }
            out.failed = true;
            continue;
        }
        out.shares.push_back(design.share);
        for (const auto& estimator : ctx.cfg.estimators) {
            CellOutcome cell = run_estimator(design.frame, ctx, estimator);
            if (cell.failed) out.failed = true;
            out.cells.push_back(std::move(cell));
        }
    }
    return out;
}

double stddev(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

// delete-1 jackknife standard error of the empirical standard deviation
double jackknife_se_of_sd(const std::vector<double>& x) {
    const std::size_t n = x.size();
    if (n < 3) return 0.0;
    double s1 = 0.0, s2 = 0.0;
    for (double v : x) {
        s1 += v;
        s2 += v * v;
    }
    std::vector<double> loo(n);
    for (std::size_t r = 0; r < n; ++r) {
        const double m = (s1 - x[r]) / static_cast<double>(n - 1);
        const double ss = (s2 - x[r] * x[r]) - static_cast<double>(n - 1) * m * m;
        loo[r] = std::sqrt(std::max(ss, 0.0) / static_cast<double>(n - 2));
    }
    double mean = 0.0;
    for (double v : loo) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : loo) ss += (v - mean) * (v - mean);
    return std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace

ReplicationResult run_replications(const ScenarioConfig& config) {
    ScenarioContext ctx = make_context(config);
    const int R = ctx.cfg.replicates;
    const Rng master(ctx.cfg.seed);

    std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(R));
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= R) return;
            try {
                outcomes[static_cast<std::size_t>(r)] = run_replicate(ctx, r, master);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    const int n_workers = std::min(ctx.cfg.workers, R);
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    const std::size_t n_designs = ctx.cfg.designs.size();
    const std::size_t n_estimators = ctx.cfg.estimators.size();
    const auto coef_names = ctx.outcome.term_names();
    const std::size_t p = coef_names.size();

    ReplicationResult result;
    result.metrics.scenario = to_string(ctx.cfg.scenario);
    result.target_coefficient = ctx.target_name;

    std::vector<int> used_reps;
    for (int r = 0; r < R; ++r)
        if (!outcomes[static_cast<std::size_t>(r)].failed) used_reps.push_back(r);
    result.replicates_used = static_cast<int>(used_reps.size());
    result.failures = R - result.replicates_used;
    if (static_cast<double>(result.failures) >
        ctx.cfg.failure_limit * static_cast<double>(R))
        throw SimulationFailure("failure rate " + std::to_string(result.failures) + "/" +
                                std::to_string(R) + " above the configured limit");

    // allocation shares averaged over the used replicates
    if (!used_reps.empty()) {
        result.mean_proportional_share =
            Eigen::VectorXd::Zero(outcomes[static_cast<std::size_t>(used_reps[0])].prop_share.size());
        for (int r : used_reps)
            result.mean_proportional_share += outcomes[static_cast<std::size_t>(r)].prop_share;
        result.mean_proportional_share /= static_cast<double>(used_reps.size());
        for (std::size_t d = 0; d < n_designs; ++d) {
            Eigen::VectorXd mean =
                Eigen::VectorXd::Zero(result.mean_proportional_share.size());
            for (int r : used_reps) mean += outcomes[static_cast<std::size_t>(r)].shares[d];
            mean /= static_cast<double>(used_reps.size());
            result.mean_allocation_share[ctx.cfg.designs[d]] = mean;
        }
    }

    // per-cell aggregation; the reference design's empirical SEs first
    std::vector<std::vector<double>> reference_se(n_estimators,
                                                  std::vector<double>(p, 0.0));
    auto cell_index = [&](std::size_t d, std::size_t e) { return d * n_estimators + e; };
    auto collect = [&](std::size_t d, std::size_t e, std::size_t j) {
        std::vector<double> draws;
        draws.reserve(used_reps.size());
        for (int r : used_reps)
            draws.push_back(
                outcomes[static_cast<std::size_t>(r)].cells[cell_index(d, e)].beta[
                    static_cast<Eigen::Index>(j)]);
        return draws;
    };

    for (std::size_t e = 0; e < n_estimators; ++e) {
        const auto ref =
            std::find(ctx.cfg.designs.begin(), ctx.cfg.designs.end(), ctx.reference_design);
        if (ref == ctx.cfg.designs.end()) continue;
        const auto d = static_cast<std::size_t>(ref - ctx.cfg.designs.begin());
        for (std::size_t j = 0; j < p; ++j) reference_se[e][j] = stddev(collect(d, e, j));
    }

    for (std::size_t d = 0; d < n_designs; ++d) {
        for (std::size_t e = 0; e < n_estimators; ++e) {
            CellDraws cell_draws;
            for (int r : used_reps) {
                const auto& cell = outcomes[static_cast<std::size_t>(r)].cells[cell_index(d, e)];
                cell_draws.estimate.push_back(cell.beta[ctx.target_column]);
                cell_draws.estimated_se.push_back(cell.se[ctx.target_column]);
            }
            result.cells[{ctx.cfg.designs[d], ctx.cfg.estimators[e]}] = cell_draws;

            for (std::size_t j = 0; j < p; ++j) {
                std::vector<double> draws = collect(d, e, j);
                MetricsRow row;
                row.design = ctx.cfg.designs[d];
                row.estimator = ctx.cfg.estimators[e];
                row.coefficient = coef_names[j];
                double mean = 0.0, mean_se = 0.0;
                for (int r : used_reps) {
                    const auto& cell =
                        outcomes[static_cast<std::size_t>(r)].cells[cell_index(d, e)];
                    mean_se += cell.se[static_cast<Eigen::Index>(j)];
                }
                for (double v : draws) mean += v;
                if (!draws.empty()) {
                    mean /= static_cast<double>(draws.size());
                    mean_se /= static_cast<double>(draws.size());
                }
                row.bias = mean - ctx.beta_true[static_cast<Eigen::Index>(j)];
                row.empirical_se = stddev(draws);
                row.mean_estimated_se = mean_se;
                row.mc_se_empirical_se = jackknife_se_of_sd(draws);
                const double ref_se = reference_se[e][j];
                row.relative_efficiency =
                    row.empirical_se > 0.0 && ref_se > 0.0
                        ? (ref_se * ref_se) / (row.empirical_se * row.empirical_se)
                        : 1.0;
                row.replicates_used = result.replicates_used;
                row.failures = result.failures;
                result.metrics.rows.push_back(std::move(row));
            }
        }
    }
    return result;
}

}  // namespace twophase
