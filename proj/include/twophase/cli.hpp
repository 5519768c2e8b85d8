#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace twophase {

inline constexpr const char* kVersion = "0.1.0";

// Fully resolved command-line configuration. Every default is recorded here
// and written to the metadata sidecar next to each output file.
struct RunConfig {
    std::string subcommand;

    // common
    std::string out_path;
    std::uint64_t seed = 1729;
    int workers = 1;

    // allocate
    std::string table_path;
    std::string method = "wright";
    int n = 0;
    int n_min = 2;

    // sample / estimate
    std::string cohort_path;
    std::string design = "proportional";
    std::vector<std::string> strata_columns;
    std::string strata_quantile_column;
    std::vector<double> strata_quantile_probs;
    std::vector<int> wave_sizes;
    std::string wave_log_path;
    std::string prior_path;

    std::string family = "logistic";
    std::string response;
    std::vector<std::string> covariates;
    std::string impute_family;
    std::string impute_response;
    std::vector<std::string> impute_covariates;
    std::string estimator = "ipw";

    // simulate
    std::string scenario;
    int cohort_size = 0;
    int sample_size = 0;
    int replicates = 0;
    std::vector<std::string> designs;
    std::vector<std::string> estimators;
    std::string mode;
    int prior_draws = 500;
    double p0 = 0.05;
    double beta_x = 0.0;

    std::string metadata_json() const;
};

// Parses argv into a resolved RunConfig. Throws ConfigError on usage
// problems; --help is reported through ConfigError with the help text.
RunConfig parse_config(const std::vector<std::string>& args);

// Full dispatch; returns the process exit code (0 ok, 1 usage, 2 data,
// 3 numerical failure).
int run_cli(int argc, char** argv);

}  // namespace twophase
