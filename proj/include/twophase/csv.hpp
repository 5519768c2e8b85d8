#pragma once

#include <string>
#include <vector>

#include "twophase/allocation.hpp"
#include "twophase/frame.hpp"
#include "twophase/sampling.hpp"
#include "twophase/simulation.hpp"

namespace twophase {

// Numbers are written with enough digits to round-trip doubles exactly.
std::string format_double(double value);

// Cohort CSV: header row, numeric cells, empty cell = missing. The columns
// stratum, R, pi and w are recognised as sampling bookkeeping; stratum ids
// are 1-based in files.
CohortFrame read_cohort_csv(const std::string& path);
void write_cohort_csv(const CohortFrame& frame, const std::string& path);

// StratumTable CSV: stratum,N,s
StratumTable read_stratum_table_csv(const std::string& path);
void write_stratum_table_csv(const StratumTable& table, const std::string& path);

// Allocation CSV: stratum,N,n,exhausted
void write_allocation_csv(const Allocation& allocation, const StratumTable& table,
                          const std::string& path);

// WaveLog CSV: one row per wave per stratum
void write_wave_log_csv(const WaveLog& log, const std::string& path);

// Long-format metrics CSV: scenario,design,estimator,coefficient,metric,value
std::string metrics_to_csv(const MetricsTable& table);
void write_metrics_csv(const MetricsTable& table, const std::string& path);

}  // namespace twophase
