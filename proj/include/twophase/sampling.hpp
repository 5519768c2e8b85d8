#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "twophase/allocation.hpp"
#include "twophase/frame.hpp"
#include "twophase/glm.hpp"
#include "twophase/rng.hpp"

namespace twophase {

// Either a cross-classification of discrete columns or quantile cutpoints on
// one continuous column.
struct StratificationRule {
    enum class Kind { cross, quantile };
    Kind kind = Kind::cross;
    std::vector<std::string> columns;  // cross-classification
    std::string column;                // quantile
    std::vector<double> probabilities;

    static StratificationRule cross_classify(std::vector<std::string> columns);
    static StratificationRule quantile_cut(std::string column, std::vector<double> probabilities);
    void validate() const;
};

struct StratifyResult {
    std::vector<int> stratum;  // 0-based, one per row
    int n_strata = 0;
    StratumTable table;  // populations filled, dispersions zero
    bool has_empty = false;
};

// Assigns every row to exactly one stratum. Quantile cutpoints are order
// statistics with left-closed, right-open intervals.
StratifyResult stratify(const CohortFrame& frame, const StratificationRule& rule);

// Stratified simple random sampling without replacement; sets R, pi = n_k/N_k
// and w = 1/pi on a copy of the frame.
CohortFrame sample_stratified(CohortFrame frame, const Allocation& allocation, Rng& rng);

struct WaveRecord {
    int wave = 0;
    std::vector<int> increment;
    std::vector<int> cumulative;
    Eigen::VectorXd beta_estimate;   // outcome-model estimates that drove the wave
    Eigen::VectorXd alpha_estimate;  // imputation-model estimates
    std::uint64_t rng_stream = 0;
    bool fit_failed = false;  // estimation failed; wave fell back to proportional
};

struct WaveLog {
    std::vector<WaveRecord> waves;
};

enum class Wave1Design { proportional, prior };

struct WavePlan {
    std::vector<int> sizes;  // one entry per wave
    Wave1Design wave1 = Wave1Design::proportional;
    PriorSpec prior;  // used when wave1 == prior
    int n_min = 2;
};

struct MultiwaveResult {
    CohortFrame frame;  // combined R / pi / w over all waves
    WaveLog log;
};

// Adaptive multiwave sampling: wave 1 per its design, later waves Wright-
// allocated on model-implied dispersions at the current estimates, drawn from
// the not-yet-sampled units. Final weights treat the combined sample per
// stratum as one without-replacement draw of its cumulative size.
MultiwaveResult multiwave_run(const CohortFrame& cohort, const ModelSpec& outcome,
                              const ModelSpec& imputation, const WavePlan& plan,
                              int target_column, Rng& rng);

// Proportional-to-size integer allocation (Wright with equal dispersions).
Allocation proportional_allocation(const StratumTable& table, int n, int n_min = 2);

}  // namespace twophase
