#include "twophase/frame.hpp"

#include "twophase/errors.hpp"

namespace twophase {

const std::vector<double>& CohortFrame::column(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no such column: " + name);
    return columns_[it->second];
}

std::vector<double>& CohortFrame::column(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no such column: " + name);
    return columns_[it->second];
}

void CohortFrame::add_column(const std::string& name, std::vector<double> values) {
    if (n_rows_ == 0 && names_.empty()) n_rows_ = values.size();
    if (values.size() != n_rows_)
        throw ConfigError("column " + name + " has " + std::to_string(values.size()) +
                          " rows, frame has " + std::to_string(n_rows_));
    auto it = index_.find(name);
    if (it != index_.end()) {
        columns_[it->second] = std::move(values);
        return;
    }
    index_.emplace(name, columns_.size());
    names_.push_back(name);
    columns_.push_back(std::move(values));
}

void CohortFrame::set_strata(std::vector<int> ids, int n_strata) {
    if (ids.size() != n_rows_) throw ConfigError("stratum vector length mismatch");
    for (int id : ids)
        if (id < 0 || id >= n_strata) throw ConfigError("stratum id out of range");
    stratum_ = std::move(ids);
    n_strata_ = n_strata;
}

std::vector<std::int64_t> CohortFrame::stratum_sizes() const {
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(n_strata_), 0);
    for (int id : stratum_) sizes[static_cast<std::size_t>(id)]++;
    return sizes;
}

void CohortFrame::set_sampling(std::vector<std::uint8_t> r, std::vector<double> pi,
                               std::vector<double> w) {
    if (r.size() != n_rows_ || pi.size() != n_rows_ || w.size() != n_rows_)
        throw ConfigError("sampling vectors length mismatch");
    for (std::size_t i = 0; i < n_rows_; ++i)
        if (r[i] && !(w[i] > 0.0)) throw ConfigError("sampled unit with non-positive weight");
    phase2_ = std::move(r);
    prob_ = std::move(pi);
    weight_ = std::move(w);
}

std::vector<std::size_t> CohortFrame::sampled_rows() const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < phase2_.size(); ++i)
        if (phase2_[i]) rows.push_back(i);
    return rows;
}

}  // namespace twophase
