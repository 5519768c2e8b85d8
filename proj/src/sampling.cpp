#include "twophase/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "twophase/errors.hpp"

namespace twophase {

StratificationRule StratificationRule::cross_classify(std::vector<std::string> columns) {
    StratificationRule rule;
    rule.kind = Kind::cross;
    rule.columns = std::move(columns);
    rule.validate();
    return rule;
}

StratificationRule StratificationRule::quantile_cut(std::string column,
                                                    std::vector<double> probabilities) {
    StratificationRule rule;
    rule.kind = Kind::quantile;
    rule.column = std::move(column);
    rule.probabilities = std::move(probabilities);
    rule.validate();
    return rule;
}

void StratificationRule::validate() const {
    if (kind == Kind::cross) {
        if (columns.empty()) throw ConfigError("cross-classification needs at least one column");
    } else {
        if (column.empty()) throw ConfigError("quantile rule needs a column");
        if (probabilities.empty()) throw ConfigError("quantile rule needs cutpoint probabilities");
        double last = -1.0;
        for (double p : probabilities) {
            if (!(p > 0.0 && p < 1.0)) throw ConfigError("quantile probabilities must lie in (0,1)");
            if (p <= last) throw ConfigError("quantile probabilities must be strictly increasing");
            last = p;
        }
    }
}

namespace {

constexpr std::size_t kMaxLevels = 64;

StratifyResult stratify_cross(const CohortFrame& frame, const StratificationRule& rule) {
    const std::size_t n = frame.n_rows();
    std::vector<std::vector<double>> levels;  // sorted distinct values per column
    std::vector<const std::vector<double>*> cols;
    for (const auto& name : rule.columns) {
        const auto& c = frame.column(name);
        std::vector<double> uniq;
        for (double v : c) {
            if (std::isnan(v)) throw ConfigError("missing value in stratification column " + name);
            uniq.push_back(v);
        }
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        if (uniq.size() > kMaxLevels)
            throw ConfigError("column " + name + " has too many levels to cross-classify");
        levels.push_back(std::move(uniq));
        cols.push_back(&c);
    }
    // mixed radix, last column fastest
    std::size_t n_cells = 1;
    for (const auto& l : levels) n_cells *= l.size();
    if (n_cells > 4096) throw ConfigError("cross-classification produces too many strata");

    StratifyResult out;
    out.n_strata = static_cast<int>(n_cells);
    out.stratum.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t id = 0;
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const auto& l = levels[c];
            const auto it = std::lower_bound(l.begin(), l.end(), (*cols[c])[i]);
            id = id * l.size() + static_cast<std::size_t>(it - l.begin());
        }
        out.stratum[i] = static_cast<int>(id);
    }
    return out;
}

StratifyResult stratify_quantile(const CohortFrame& frame, const StratificationRule& rule) {
    const auto& c = frame.column(rule.column);
    const std::size_t n = frame.n_rows();
    std::vector<double> sorted;
    sorted.reserve(n);
    for (double v : c) {
        if (std::isnan(v))
            throw ConfigError("missing value in stratification column " + rule.column);
        sorted.push_back(v);
    }
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> cuts;
    for (double p : rule.probabilities) {
        auto idx = static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
        idx = std::min(idx, n - 1);
        cuts.push_back(sorted[idx]);
    }

    StratifyResult out;
    out.n_strata = static_cast<int>(cuts.size()) + 1;
    out.stratum.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        int id = 0;
        for (double q : cuts)
            if (c[i] >= q) ++id;
        out.stratum[i] = id;
    }
    return out;
}

}  // namespace

StratifyResult stratify(const CohortFrame& frame, const StratificationRule& rule) {
    rule.validate();
    StratifyResult out = rule.kind == StratificationRule::Kind::cross
                             ? stratify_cross(frame, rule)
                             : stratify_quantile(frame, rule);
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(out.n_strata), 0);
    for (int id : out.stratum) sizes[static_cast<std::size_t>(id)]++;
    out.table.strata.resize(static_cast<std::size_t>(out.n_strata));
    for (int k = 0; k < out.n_strata; ++k) {
        auto& s = out.table.strata[static_cast<std::size_t>(k)];
        s.id = k;
        s.population = sizes[static_cast<std::size_t>(k)];
        s.dispersion = 0.0;
        if (s.population == 0) out.has_empty = true;
    }
    return out;
}

namespace {

// draw `take` indices uniformly without replacement from `pool` (modified)
void draw_without_replacement(std::vector<std::size_t>& pool, std::size_t take, Rng& rng,
                              std::vector<std::uint8_t>& selected) {
    for (std::size_t i = 0; i < take; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
        selected[pool[i]] = 1;
    }
}

}  // namespace

CohortFrame sample_stratified(CohortFrame frame, const Allocation& allocation, Rng& rng) {
    if (!frame.has_strata()) throw ConfigError("frame has no strata to sample from");
    const auto sizes = frame.stratum_sizes();
    if (allocation.counts.size() != sizes.size())
        throw ConfigError("allocation does not match the frame's strata");

    const std::size_t n = frame.n_rows();
    std::vector<std::uint8_t> r(n, 0);
    std::vector<double> pi(n, 0.0), w(n, 0.0);

    std::vector<std::vector<std::size_t>> members(sizes.size());
    for (std::size_t i = 0; i < n; ++i)
        members[static_cast<std::size_t>(frame.stratum()[i])].push_back(i);

    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const int take = allocation.counts[k];
        if (take > static_cast<int>(members[k].size()))
            throw ConfigError("allocation exceeds stratum population");
        if (members[k].empty()) continue;
        const double prob = static_cast<double>(take) / static_cast<double>(members[k].size());
        for (std::size_t i : members[k]) pi[i] = prob;
        if (take > 0) draw_without_replacement(members[k], static_cast<std::size_t>(take), rng, r);
    }
    for (std::size_t i = 0; i < n; ++i)
        if (r[i]) w[i] = 1.0 / pi[i];
    frame.set_sampling(std::move(r), std::move(pi), std::move(w));
    return frame;
}

Allocation proportional_allocation(const StratumTable& table, int n, int n_min) {
    StratumTable equal = table;
    for (auto& s : equal.strata) s.dispersion = s.population > 0 ? 1.0 : 0.0;
    return wright_allocation(equal, n, n_min);
}

namespace {

StratumTable table_from_frame(const CohortFrame& frame) {
    StratumTable table;
    const auto sizes = frame.stratum_sizes();
    table.strata.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        table.strata[k].id = static_cast<int>(k);
        table.strata[k].population = sizes[k];
        table.strata[k].dispersion = sizes[k] > 0 ? 1.0 : 0.0;
    }
    return table;
}

struct WaveEstimates {
    Eigen::VectorXd beta;
    Eigen::VectorXd alpha;
    double sigma_x = 1.0;
    bool valid = false;
};

FitOptions penalty_options(const std::vector<NormalPrior>& prior) {
    FitOptions options;
    options.penalty_mean.resize(static_cast<Eigen::Index>(prior.size()));
    options.penalty_sd.resize(static_cast<Eigen::Index>(prior.size()));
    for (std::size_t j = 0; j < prior.size(); ++j) {
        options.penalty_mean[static_cast<Eigen::Index>(j)] = prior[j].mean;
        options.penalty_sd[static_cast<Eigen::Index>(j)] = prior[j].sd;
    }
    return options;
}

// wave estimates from the cumulative sample; prior designs regularise the
// wave-1 fits toward the design prior (maximum a posteriori), which is what
// lets small first waves drive a usable second-wave design
WaveEstimates estimate_from_sample(const CohortFrame& frame, const ModelSpec& outcome,
                                   const ModelSpec& imputation, const PriorSpec* prior) {
    WaveEstimates est;
    try {
        auto rows = frame.sampled_rows();
        Eigen::VectorXd w(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i)
            w[static_cast<Eigen::Index>(i)] = frame.weight()[rows[i]];

        auto imp_design = build_design(frame, imputation, rows);
        FitOptions imp_options;
        if (prior) imp_options = penalty_options(prior->alpha);
        for (std::size_t r : rows) imp_options.strata.push_back(frame.stratum()[r]);
        FitResult imp =
            fit_weighted_glm(imp_design.X, imp_design.y, w, imputation.family, imp_options);

        auto design = build_design(frame, outcome, rows);
        FitOptions options;
        if (prior) options = penalty_options(prior->beta);
        for (std::size_t r : rows) options.strata.push_back(frame.stratum()[r]);
        FitResult out = fit_weighted_glm(design.X, design.y, w, outcome.family, options);
        if (!imp.converged || !out.converged || imp.separation || out.separation) return est;
        est.beta = out.beta;
        est.alpha = imp.beta;
        est.sigma_x = std::sqrt(std::max(imp.dispersion, 0.0));
        est.valid = true;
    } catch (const Error&) {
        est.valid = false;
    }
    return est;
}

}  // namespace

MultiwaveResult multiwave_run(const CohortFrame& cohort, const ModelSpec& outcome,
                              const ModelSpec& imputation, const WavePlan& plan,
                              int target_column, Rng& rng) {
    if (!cohort.has_strata()) throw ConfigError("multiwave run needs a stratified cohort");
    if (plan.sizes.empty()) throw ConfigError("wave plan is empty");
    for (int s : plan.sizes)
        if (s < 1) throw ConfigError("wave sizes must be positive");

    const std::size_t n = cohort.n_rows();
    const auto sizes = cohort.stratum_sizes();
    const std::size_t K = sizes.size();

    MultiwaveResult result;
    result.frame = cohort;

    std::vector<std::uint8_t> sampled(n, 0);
    std::vector<int> cumulative(K, 0);
    std::vector<std::vector<std::size_t>> unsampled(K);
    for (std::size_t i = 0; i < n; ++i)
        unsampled[static_cast<std::size_t>(cohort.stratum()[i])].push_back(i);

    WaveEstimates estimates;
    for (std::size_t wave = 0; wave < plan.sizes.size(); ++wave) {
        Rng rng_sample = rng.split(2 * wave);
        Rng rng_design = rng.split(2 * wave + 1);

        WaveRecord record;
        record.wave = static_cast<int>(wave) + 1;
        record.rng_stream = 2 * wave;

        Allocation alloc;
        if (wave == 0) {
            if (plan.wave1 == Wave1Design::prior) {
                alloc = allocation_from_prior(plan.prior, cohort, outcome, imputation,
                                              target_column, plan.sizes[0], plan.n_min,
                                              rng_design);
            } else {
                alloc = proportional_allocation(table_from_frame(cohort), plan.sizes[0],
                                                plan.n_min);
            }
        } else if (estimates.valid) {
            StratumTable table =
                model_implied_dispersions(result.frame, outcome, imputation, estimates.beta,
                                          estimates.alpha, estimates.sigma_x, target_column,
                                          rng_design);
            // strata the model cannot speak about inherit the largest dispersion
            double max_s = 0.0;
            for (const auto& s : table.strata)
                if (std::isfinite(s.dispersion)) max_s = std::max(max_s, s.dispersion);
            for (auto& s : table.strata)
                if (!std::isfinite(s.dispersion)) s.dispersion = max_s;
            record.beta_estimate = estimates.beta;
            record.alpha_estimate = estimates.alpha;
            alloc = wright_increment(table, cumulative, plan.sizes[wave], plan.n_min);
        } else {
            record.fit_failed = true;
            alloc = wright_increment(table_from_frame(cohort), cumulative, plan.sizes[wave],
                                     plan.n_min);
        }

        record.increment.resize(K);
        record.cumulative.resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            const int inc = alloc.counts[k] - cumulative[k];
            if (inc < 0) throw ConfigError("wave increment went negative");
            if (inc > static_cast<int>(unsampled[k].size()))
                throw WaveInfeasible("increment exceeds unsampled units in stratum " +
                                     std::to_string(k));
            if (inc > 0) {
                draw_without_replacement(unsampled[k], static_cast<std::size_t>(inc), rng_sample,
                                         sampled);
                unsampled[k].erase(unsampled[k].begin(), unsampled[k].begin() + inc);
            }
            cumulative[k] += inc;
            record.increment[k] = inc;
            record.cumulative[k] = cumulative[k];
        }

        // combined weights so far: one without-replacement draw per stratum
        std::vector<double> pi(n, 0.0), w(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(cohort.stratum()[i]);
            if (sizes[k] > 0 && cumulative[k] > 0)
                pi[i] = static_cast<double>(cumulative[k]) / static_cast<double>(sizes[k]);
            if (sampled[i]) w[i] = 1.0 / pi[i];
        }
        result.frame.set_sampling(sampled, std::move(pi), std::move(w));

        if (wave + 1 < plan.sizes.size())
            estimates = estimate_from_sample(
                result.frame, outcome, imputation,
                plan.wave1 == Wave1Design::prior ? &plan.prior : nullptr);
        result.log.waves.push_back(std::move(record));
    }
    return result;
}

}  // namespace twophase
