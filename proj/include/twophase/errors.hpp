#pragma once

#include <stdexcept>
#include <string>

namespace twophase {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Rank-deficient design matrix on the weighted support.
struct SingularDesign : Error {
    explicit SingularDesign(const std::string& msg) : Error(msg) {}
};

// Summed score-derivative matrix numerically singular.
struct SingularInformation : Error {
    explicit SingularInformation(const std::string& msg) : Error(msg) {}
};

// Every stratum dispersion is zero; Neyman shares undefined.
struct AllDispersionZero : Error {
    explicit AllDispersionZero(const std::string& msg) : Error(msg) {}
};

// Requested allocation cannot satisfy floors/caps.
struct Infeasible : Error {
    explicit Infeasible(const std::string& msg) : Error(msg) {}
};

// Auxiliary matrix rank-deficient in the residual regression.
struct SingularAuxiliaries : Error {
    explicit SingularAuxiliaries(const std::string& msg) : Error(msg) {}
};

// Calibration constraints rank-deficient on the sampled rows.
struct RankDeficientConstraints : Error {
    explicit RankDeficientConstraints(const std::string& msg) : Error(msg) {}
};

// Raking Newton diverged and the linear fallback failed too.
struct CalibrationDivergence : Error {
    explicit CalibrationDivergence(const std::string& msg) : Error(msg) {}
};

// Remaining wave budget cannot satisfy the per-stratum floors.
struct WaveInfeasible : Error {
    explicit WaveInfeasible(const std::string& msg) : Error(msg) {}
};

// Invalid run/scenario configuration or misuse of a container.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed input file; carries 1-based row/column location.
struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t row, std::size_t column)
        : Error(msg + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
          row(row),
          column(column) {}
    std::size_t row = 0;
    std::size_t column = 0;
};

// Replicate failure rate above the configured threshold.
struct SimulationFailure : Error {
    explicit SimulationFailure(const std::string& msg) : Error(msg) {}
};

}  // namespace twophase
