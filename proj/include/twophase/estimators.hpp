#pragma once

#include <Eigen/Dense>

#include "twophase/calibration.hpp"
#include "twophase/frame.hpp"
#include "twophase/glm.hpp"

namespace twophase {

// IPW fit of the model on the sampled rows with design-based variance:
// stratified without-replacement variance of the Horvitz-Thompson total of
// the unit scores, pushed through the estimating-equation linearisation.
FitResult ipw_fit(const CohortFrame& frame, const ModelSpec& model);

struct RakingFit {
    FitResult fit;
    CalibrationResult calibration;
};

// Generalised raking estimator: calibrates the design weights to the cohort
// totals of the auxiliaries, fits the model with the adjusted weights, and
// estimates the design variance from the stratified totals of the residuals
// of the influence values regressed on the auxiliaries.
RakingFit raking_fit(const CohortFrame& frame, const ModelSpec& model,
                     const Eigen::MatrixXd& auxiliaries,
                     CalibrationDistance distance = CalibrationDistance::raking);

}  // namespace twophase
