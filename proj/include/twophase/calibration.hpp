#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace twophase {

enum class CalibrationDistance { linear, raking };

struct CalibrationResult {
    // adjusted weight g_i * w_i per cohort row, zero where R = 0
    std::vector<double> weights;
    Eigen::VectorXd lambda;  // multipliers in the internal (intercept, centred) basis
    CalibrationDistance distance = CalibrationDistance::raking;
    bool converged = false;
    bool fell_back = false;  // raking Newton diverged, linear distance used instead
    double max_violation = 0.0;  // relative sup-norm of the constraint residual
    int iterations = 0;
};

// Adjusts design weights so that weighted sample totals of the auxiliaries
// match their cohort totals, with g(u) = 1 + u (linear) or g(u) = exp(u)
// (raking). An intercept constraint (weights sum to N) is always included;
// auxiliary columns are centred by their cohort means, which is equivalent
// given the intercept constraint. Raking divergence falls back to the linear
// distance with a flag.
CalibrationResult calibrate_weights(const Eigen::MatrixXd& auxiliaries,
                                    const std::vector<std::uint8_t>& phase2,
                                    const std::vector<double>& weights,
                                    CalibrationDistance distance = CalibrationDistance::raking);

// Process-wide high-water mark of the relative constraint violation over all
// converged calibrations, for verification runs.
double calibration_violation_high_water();
long calibration_converged_count();
void reset_calibration_violation_high_water();

}  // namespace twophase
