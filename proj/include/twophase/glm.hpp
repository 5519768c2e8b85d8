#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "twophase/frame.hpp"

namespace twophase {

enum class Family { linear, logistic };

Family family_from_string(const std::string& name);
std::string to_string(Family family);

// Outcome / imputation / phase-1 model description over frame columns.
struct ModelSpec {
    Family family = Family::linear;
    std::string response;
    std::vector<std::string> covariates;
    bool include_intercept = true;

    void validate() const;
    std::vector<std::string> term_names() const;
};

enum class VcovKind { model_based, sandwich, design };

struct FitResult {
    Eigen::VectorXd beta;
    // total variance against the superpopulation parameter; for design-based
    // fits this is the phase-1 sandwich plus the phase-2 subsampling part
    Eigen::MatrixXd vcov;
    // phase-2 (subsampling) component alone: stratified without-replacement
    // variance with finite population corrections; zero at a census
    Eigen::MatrixXd vcov_phase2;
    VcovKind vcov_kind = VcovKind::sandwich;
    // per-fitted-row influence values, scaled so that the estimator's
    // deviation from its target is approximately mean(w_i h_i)
    Eigen::MatrixXd influence;
    Eigen::VectorXd score;  // weighted score at beta
    bool converged = false;
    int iterations = 0;
    bool separation = false;  // logistic only: some stratum fully saturated
    double dispersion = 1.0;  // linear: weighted residual variance estimate
    std::vector<std::string> term_names;

    Eigen::VectorXd se() const;
};

struct FitOptions {
    int max_iterations = 50;
    double tolerance = 1e-10;
    // optional stratum ids aligned with the fitted rows, used by the
    // separation check; empty means one stratum
    std::vector<int> strata;
    // optional independent normal penalty on the coefficients (maximum a
    // posteriori fit); empty means none
    Eigen::VectorXd penalty_mean;
    Eigen::VectorXd penalty_sd;
};

// Weighted GLM by Newton-Raphson with step-halving. Weights must be strictly
// positive; rank deficiency of the weighted design throws SingularDesign.
// Hitting the iteration cap returns converged=false rather than throwing.
FitResult fit_weighted_glm(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                           const Eigen::VectorXd& weights, Family family,
                           const FitOptions& options = {});

// Influence matrix h_i = n * A^{-1} u_i of a solved fit, where u_i is the
// per-unit score and A the weighted information at beta.
Eigen::MatrixXd influence_functions(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                                    const Eigen::VectorXd& weights, Family family,
                                    const Eigen::VectorXd& beta);

// Design matrix and response for the given rows of a frame. Throws
// ConfigError when a required cell is missing (NaN).
struct DesignData {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> term_names;
};
DesignData build_design(const CohortFrame& frame, const ModelSpec& model,
                        const std::vector<std::size_t>& rows);
std::vector<std::size_t> all_rows(const CohortFrame& frame);

// Full-cohort unweighted fit of a model.
FitResult fit_model(const CohortFrame& frame, const ModelSpec& model);

// Imputation model for the phase-II column, fitted on the sampled rows with
// the design weights (unit weights when no sampling columns are present).
FitResult fit_imputation_model(const CohortFrame& frame, const ModelSpec& imputation);

// Model-scale predictions over all cohort rows: fitted probability for a
// logistic imputation model, linear predictor for a linear one.
std::vector<double> predict_xhat(const FitResult& fit, const CohortFrame& frame,
                                 const ModelSpec& imputation);

// Phase-1 fit: the outcome model on the full cohort with the phase-II column
// replaced by xhat. Its influence matrix is the raking auxiliary set.
FitResult fit_phase1_model(const CohortFrame& frame, const ModelSpec& outcome,
                           const std::string& phase2_column, const std::vector<double>& xhat);
Eigen::MatrixXd phase1_influence(const CohortFrame& frame, const ModelSpec& outcome,
                                 const std::string& phase2_column,
                                 const std::vector<double>& xhat);

}  // namespace twophase
