#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "twophase/frame.hpp"
#include "twophase/rng.hpp"

namespace twophase {

enum class Scenario { priors_binary, raking_continuous, case_control };
Scenario scenario_from_string(const std::string& name);
std::string to_string(Scenario scenario);

// Whether design-stage dispersions come from full-cohort influence values
// (oracle) or from quantities estimable at design time (feasible).
enum class DispersionMode { oracle, feasible };

struct ScenarioConfig {
    Scenario scenario = Scenario::priors_binary;
    int cohort_size = 0;  // 0 means scenario default
    int sample_size = 0;
    int replicates = 0;
    std::uint64_t seed = 1729;  // documented default, never wall-clock
    std::vector<std::string> designs;
    std::vector<std::string> estimators;
    std::vector<int> wave_sizes;
    int prior_draws = 500;
    std::optional<DispersionMode> mode;
    int workers = 1;
    double p0 = 0.05;       // case-control prevalence at x = 0
    double beta_x = 0.0;    // case-control log odds ratio
    int n_min = 2;
    double failure_limit = 0.02;
};

// Fills every unset field with the scenario's documented default.
void apply_scenario_defaults(ScenarioConfig& config);

CohortFrame gen_priors_scenario(int n_rows, Rng& rng);
CohortFrame gen_raking_scenario(int n_rows, Rng& rng);
CohortFrame gen_case_control_scenario(int n_rows, double p0, double beta_x, Rng& rng);

struct MetricsRow {
    std::string design;
    std::string estimator;
    std::string coefficient;
    double bias = 0.0;
    double empirical_se = 0.0;
    double mean_estimated_se = 0.0;
    double relative_efficiency = 1.0;  // vs the scenario's reference design
    double mc_se_empirical_se = 0.0;   // delete-1 jackknife
    int replicates_used = 0;
    int failures = 0;
};

struct MetricsTable {
    std::string scenario;
    std::vector<MetricsRow> rows;
};

// Target-coefficient draws for one (design, estimator) cell, in replicate
// order over the used replicates.
struct CellDraws {
    std::vector<double> estimate;
    std::vector<double> estimated_se;
};

struct ReplicationResult {
    MetricsTable metrics;
    std::map<std::pair<std::string, std::string>, CellDraws> cells;
    std::map<std::string, Eigen::VectorXd> mean_allocation_share;
    Eigen::VectorXd mean_proportional_share;
    std::string target_coefficient;
    int replicates_used = 0;
    int failures = 0;
};

// Runs the configured scenario end to end. The result is a pure function of
// the configuration and seed; worker count only affects wall time.
ReplicationResult run_replications(const ScenarioConfig& config);

}  // namespace twophase
