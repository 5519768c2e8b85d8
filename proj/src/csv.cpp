#include "twophase/csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "twophase/errors.hpp"

namespace twophase {

std::string format_double(double value) {
    if (std::isnan(value)) return "";
    // shortest representation that round-trips
    char buf[40];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == value) break;
    }
    return buf;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

double parse_cell(const std::string& field, std::size_t row, std::size_t col) {
    if (field.empty()) return missing_value();
    std::size_t pos = 0;
    double value;
    try {
        value = std::stod(field, &pos);
    } catch (const std::exception&) {
        throw ParseError("cannot parse numeric field '" + field + "'", row, col);
    }
    if (pos != field.size())
        throw ParseError("trailing characters in numeric field '" + field + "'", row, col);
    return value;
}

std::vector<std::vector<std::string>> read_rows(const std::string& path,
                                                std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file " + path, 0, 0);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty file " + path, 1, 1);
    header = split_line(line);
    std::vector<std::vector<std::string>> rows;
    std::size_t row_number = 1;
    while (std::getline(in, line)) {
        ++row_number;
        if (line.empty()) continue;
        auto fields = split_line(line);
        if (fields.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(fields.size()),
                             row_number, 1);
        rows.push_back(std::move(fields));
    }
    return rows;
}

}  // namespace

CohortFrame read_cohort_csv(const std::string& path) {
    std::vector<std::string> header;
    auto rows = read_rows(path, header);
    const std::size_t n = rows.size();

    CohortFrame frame(n);
    std::vector<int> stratum;
    std::vector<std::uint8_t> r;
    std::vector<double> pi, w;
    int max_stratum = -1;

    for (std::size_t j = 0; j < header.size(); ++j) {
        const std::string& name = header[j];
        if (name.empty()) throw ParseError("empty column name", 1, j + 1);
        std::vector<double> values(n);
        for (std::size_t i = 0; i < n; ++i) values[i] = parse_cell(rows[i][j], i + 2, j + 1);

        if (name == "stratum") {
            stratum.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double v = values[i];
                if (std::isnan(v) || v != std::floor(v) || v < 1)
                    throw ParseError("stratum ids must be integers >= 1", i + 2, j + 1);
                stratum[i] = static_cast<int>(v) - 1;
                max_stratum = std::max(max_stratum, stratum[i]);
            }
        } else if (name == "R") {
            r.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (values[i] != 0.0 && values[i] != 1.0)
                    throw ParseError("R must be 0 or 1", i + 2, j + 1);
                r[i] = values[i] == 1.0;
            }
        } else if (name == "pi") {
            pi = std::move(values);
        } else if (name == "w") {
            w = std::move(values);
        } else {
            frame.add_column(name, std::move(values));
        }
    }
    if (!stratum.empty()) frame.set_strata(std::move(stratum), max_stratum + 1);
    if (!r.empty()) {
        // files that record R without pi/w get unit weights on sampled rows
        if (pi.empty()) {
            pi.assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                if (r[i]) pi[i] = 1.0;
        }
        if (w.empty()) {
            w.assign(n, 0.0);
            for (std::size_t i = 0; i < n; ++i)
                if (r[i] && pi[i] > 0.0) w[i] = 1.0 / pi[i];
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (std::isnan(pi[i])) pi[i] = 0.0;
            if (std::isnan(w[i])) w[i] = 0.0;
        }
        frame.set_sampling(std::move(r), std::move(pi), std::move(w));
    }
    return frame;
}

void write_cohort_csv(const CohortFrame& frame, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path, 0, 0);
    bool first = true;
    for (const auto& name : frame.column_names()) {
        out << (first ? "" : ",") << name;
        first = false;
    }
    if (frame.has_strata()) out << ",stratum";
    if (frame.has_sampling()) out << ",R,pi,w";
    out << "\n";
    for (std::size_t i = 0; i < frame.n_rows(); ++i) {
        first = true;
        for (const auto& name : frame.column_names()) {
            out << (first ? "" : ",") << format_double(frame.column(name)[i]);
            first = false;
        }
        if (frame.has_strata()) out << "," << frame.stratum()[i] + 1;
        if (frame.has_sampling())
            out << "," << int(frame.phase2()[i]) << "," << format_double(frame.prob()[i]) << ","
                << format_double(frame.weight()[i]);
        out << "\n";
    }
}

StratumTable read_stratum_table_csv(const std::string& path) {
    std::vector<std::string> header;
    auto rows = read_rows(path, header);
    if (header.size() != 3 || header[0] != "stratum" || header[1] != "N" || header[2] != "s")
        throw ParseError("expected header stratum,N,s", 1, 1);
    StratumTable table;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        Stratum s;
        const double id = parse_cell(rows[i][0], i + 2, 1);
        const double pop = parse_cell(rows[i][1], i + 2, 2);
        s.dispersion = parse_cell(rows[i][2], i + 2, 3);
        if (std::isnan(id) || id != std::floor(id) || id < 1)
            throw ParseError("stratum ids must be integers >= 1", i + 2, 1);
        if (std::isnan(pop) || pop != std::floor(pop) || pop < 0)
            throw ParseError("populations must be nonnegative integers", i + 2, 2);
        s.id = static_cast<int>(id) - 1;
        s.population = static_cast<std::int64_t>(pop);
        table.strata.push_back(s);
    }
    return table;
}

void write_stratum_table_csv(const StratumTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path, 0, 0);
    out << "stratum,N,s\n";
    for (const auto& s : table.strata)
        out << s.id + 1 << "," << s.population << "," << format_double(s.dispersion) << "\n";
}

void write_allocation_csv(const Allocation& allocation, const StratumTable& table,
                          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path, 0, 0);
    out << "stratum,N,n,exhausted\n";
    for (std::size_t k = 0; k < allocation.counts.size(); ++k)
        out << table.strata[k].id + 1 << "," << table.strata[k].population << ","
            << allocation.counts[k] << "," << int(allocation.exhausted[k]) << "\n";
}

void write_wave_log_csv(const WaveLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path, 0, 0);
    out << "wave,stratum,increment,cumulative,rng_stream,fit_failed,estimates\n";
    for (const auto& wave : log.waves) {
        std::ostringstream est;
        est << "beta:";
        for (Eigen::Index j = 0; j < wave.beta_estimate.size(); ++j)
            est << (j ? ";" : "") << format_double(wave.beta_estimate[j]);
        est << "|alpha:";
        for (Eigen::Index j = 0; j < wave.alpha_estimate.size(); ++j)
            est << (j ? ";" : "") << format_double(wave.alpha_estimate[j]);
        for (std::size_t k = 0; k < wave.increment.size(); ++k)
            out << wave.wave << "," << k + 1 << "," << wave.increment[k] << ","
                << wave.cumulative[k] << "," << wave.rng_stream << "," << int(wave.fit_failed)
                << "," << est.str() << "\n";
    }
}

std::string metrics_to_csv(const MetricsTable& table) {
    std::ostringstream out;
    out << "scenario,design,estimator,coefficient,metric,value\n";
    auto emit = [&](const MetricsRow& row, const std::string& metric, const std::string& value) {
        out << table.scenario << "," << row.design << "," << row.estimator << ","
            << row.coefficient << "," << metric << "," << value << "\n";
    };
    for (const auto& row : table.rows) {
        emit(row, "bias", format_double(row.bias));
        emit(row, "empirical_se", format_double(row.empirical_se));
        emit(row, "mean_estimated_se", format_double(row.mean_estimated_se));
        emit(row, "relative_efficiency", format_double(row.relative_efficiency));
        emit(row, "mc_se_empirical_se", format_double(row.mc_se_empirical_se));
        emit(row, "replicates_used", std::to_string(row.replicates_used));
        emit(row, "failures", std::to_string(row.failures));
    }
    return out.str();
}

void write_metrics_csv(const MetricsTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open file for writing: " + path, 0, 0);
    out << metrics_to_csv(table);
}

}  // namespace twophase
