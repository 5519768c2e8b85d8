#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

namespace twophase {

inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Phase-I dataset: named numeric columns plus sampling bookkeeping.
// Missing cells are NaN; after phase-II sampling, X is non-missing exactly
// where the phase-II indicator R is 1. Stratum ids are 0-based internally
// (1-based in CSV files).
class CohortFrame {
  public:
    CohortFrame() = default;
    explicit CohortFrame(std::size_t n_rows) : n_rows_(n_rows) {}

    std::size_t n_rows() const { return n_rows_; }

    bool has_column(const std::string& name) const { return index_.count(name) > 0; }
    const std::vector<double>& column(const std::string& name) const;
    std::vector<double>& column(const std::string& name);
    void add_column(const std::string& name, std::vector<double> values);
    const std::vector<std::string>& column_names() const { return names_; }

    bool has_strata() const { return !stratum_.empty(); }
    const std::vector<int>& stratum() const { return stratum_; }
    int n_strata() const { return n_strata_; }
    void set_strata(std::vector<int> ids, int n_strata);
    // population count per stratum
    std::vector<std::int64_t> stratum_sizes() const;

    bool has_sampling() const { return !phase2_.empty(); }
    const std::vector<std::uint8_t>& phase2() const { return phase2_; }
    const std::vector<double>& prob() const { return prob_; }
    const std::vector<double>& weight() const { return weight_; }
    void set_sampling(std::vector<std::uint8_t> r, std::vector<double> pi, std::vector<double> w);
    std::vector<std::size_t> sampled_rows() const;

  private:
    std::size_t n_rows_ = 0;
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<double>> columns_;

    std::vector<int> stratum_;
    int n_strata_ = 0;

    std::vector<std::uint8_t> phase2_;
    std::vector<double> prob_;
    std::vector<double> weight_;
};

}  // namespace twophase
