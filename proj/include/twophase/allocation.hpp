#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "twophase/frame.hpp"
#include "twophase/glm.hpp"
#include "twophase/rng.hpp"

namespace twophase {

// One stratum of the allocation problem. Strata with population = 0 are
// carried along but treated as absent by every allocator.
struct Stratum {
    int id = 0;  // 0-based, aligned with CohortFrame stratum ids
    std::int64_t population = 0;
    double dispersion = 0.0;
};

struct StratumTable {
    std::vector<Stratum> strata;

    std::size_t size() const { return strata.size(); }
    std::int64_t total_population() const;
    void validate() const;
};

struct Allocation {
    std::vector<int> counts;  // aligned with the StratumTable
    int total = 0;
    int n_min = 2;
    std::vector<std::uint8_t> exhausted;  // n_k == N_k

    void validate(const StratumTable& table) const;
};

struct NormalPrior {
    double mean = 0.0;
    double sd = 0.0;
};

// Independent normal priors over the outcome-model and imputation-model
// coefficients, with the number of design draws.
struct PriorSpec {
    std::vector<NormalPrior> beta;
    std::vector<NormalPrior> alpha;
    int draws = 500;
    // residual scales for linear families (treated as known, not drawn)
    double sigma_x = 1.0;
    double sigma_y = 1.0;
};

// Continuous Neyman shares n * N_k s_k / sum_j N_j s_j. Throws
// AllDispersionZero when every N_k s_k product vanishes.
Eigen::VectorXd neyman_allocation(const StratumTable& table, int n);

// Exact integer allocation minimising sum_k (N_k s_k)^2 / n_k subject to
// min(n_min, N_k) <= n_k <= N_k and sum n_k = n, by greedy selection of
// priority values N_k s_k / sqrt(m(m+1)). Ties break to the lowest index.
Allocation wright_allocation(const StratumTable& table, int n, int n_min = 2);

// Same greedy continuation from per-stratum counts already taken: adds
// `increment` units optimally given that current counts cannot be undone.
Allocation wright_increment(const StratumTable& table, const std::vector<int>& current,
                            int increment, int n_min = 2);

// Variance objective sum_k (N_k s_k)^2 / n_k (strata with N_k s_k = 0 drop out).
double allocation_objective(const StratumTable& table, const std::vector<int>& counts);

// Integerise a real-valued allocation: entries at or beyond their cap/floor
// are pinned, the remaining budget is Wright-allocated over the rest.
Allocation cap_and_redistribute(const Eigen::VectorXd& raw, const StratumTable& table, int n,
                                int n_min = 2);

// Per-stratum dispersions for designs targeting a raking analysis: the
// target influence column is regressed on the auxiliaries (with intercept)
// over all rows by OLS, and the stratum standard deviations of the residuals
// become the dispersions.
StratumTable raking_optimal_dispersions(const Eigen::MatrixXd& influence,
                                        const Eigen::MatrixXd& auxiliaries,
                                        const std::vector<int>& stratum, int n_strata,
                                        int target_column);

// Per-stratum standard deviation of the target-coefficient influence values
// implied by the outcome and imputation models at the given parameters: the
// phase-II covariate is integrated out of the score against the imputation
// model (exact enumeration for a logistic imputation model, point-based
// Monte Carlo for a linear one). When `auxiliaries` is non-null the returned
// dispersions are of the residuals after projecting the influence values on
// the auxiliaries, the raking-design analogue.
StratumTable model_implied_dispersions(const CohortFrame& frame, const ModelSpec& outcome,
                                       const ModelSpec& imputation, const Eigen::VectorXd& beta,
                                       const Eigen::VectorXd& alpha, double imputation_sd,
                                       int target_column, Rng& rng,
                                       const Eigen::MatrixXd* auxiliaries = nullptr);

// Wright allocation on prior-averaged model-implied dispersions: draws
// (beta*, alpha*) from the prior `draws` times, averages the dispersion
// vectors entrywise, allocates once.
Allocation allocation_from_prior(const PriorSpec& prior, const CohortFrame& frame,
                                 const ModelSpec& outcome, const ModelSpec& imputation,
                                 int target_column, int n, int n_min, Rng& rng);

// Empirical per-stratum population standard deviations of one influence
// column; the plug-in used by oracle designs.
StratumTable influence_dispersions(const Eigen::MatrixXd& influence,
                                   const std::vector<int>& stratum, int n_strata,
                                   int target_column);

}  // namespace twophase
