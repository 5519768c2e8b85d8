#include "twophase/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "twophase/errors.hpp"

namespace twophase {

std::int64_t StratumTable::total_population() const {
    std::int64_t total = 0;
    for (const auto& s : strata) total += s.population;
    return total;
}

void StratumTable::validate() const {
    if (strata.empty()) throw ConfigError("stratum table is empty");
    for (const auto& s : strata) {
        if (s.population < 0) throw ConfigError("negative stratum population");
        if (!(s.dispersion >= 0.0) || !std::isfinite(s.dispersion))
            throw ConfigError("stratum dispersion must be finite and nonnegative");
    }
    if (total_population() <= 0) throw ConfigError("no population in any stratum");
}

void Allocation::validate(const StratumTable& table) const {
    if (counts.size() != table.size()) throw ConfigError("allocation/table size mismatch");
    int sum = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const auto& s = table.strata[k];
        if (s.population == 0) {
            if (counts[k] != 0) throw ConfigError("allocation to an empty stratum");
            continue;
        }
        const int floor_k = static_cast<int>(std::min<std::int64_t>(n_min, s.population));
        if (counts[k] < floor_k || counts[k] > s.population)
            throw ConfigError("allocation outside [floor, cap] in stratum " +
                              std::to_string(s.id));
        sum += counts[k];
    }
    if (sum != total) throw ConfigError("allocation counts do not sum to total");
}

Eigen::VectorXd neyman_allocation(const StratumTable& table, int n) {
    table.validate();
    if (n < 1) throw ConfigError("allocation size must be at least 1");
    const std::size_t K = table.size();
    Eigen::VectorXd product(K);
    for (std::size_t k = 0; k < K; ++k)
        product[static_cast<Eigen::Index>(k)] =
            static_cast<double>(table.strata[k].population) * table.strata[k].dispersion;
    const double denom = product.sum();
    if (!(denom > 0.0))
        throw AllDispersionZero("every N_k * s_k product is zero; Neyman shares undefined");
    return (static_cast<double>(n) / denom) * product;
}

namespace {

struct GreedyState {
    std::vector<int> counts;
    std::vector<double> product;  // N_k s_k
};

// one unit to the stratum with the highest priority N_k s_k / sqrt(m(m+1));
// ties and all-zero priorities go to the lowest eligible index
void greedy_add(const StratumTable& table, GreedyState& state, int units) {
    const std::size_t K = table.size();
    for (int u = 0; u < units; ++u) {
        double best = -1.0;
        std::size_t best_k = K;
        for (std::size_t k = 0; k < K; ++k) {
            if (state.counts[k] >= table.strata[k].population) continue;
            const double m = static_cast<double>(state.counts[k]);
            double priority;
            if (m == 0.0)
                priority = state.product[k] > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
            else
                priority = state.product[k] / std::sqrt(m * (m + 1.0));
            if (priority > best) {
                best = priority;
                best_k = k;
            }
        }
        if (best_k == K) throw Infeasible("allocation exceeds total population");
        state.counts[best_k]++;
    }
}

Allocation finish_allocation(const StratumTable& table, std::vector<int> counts, int n_min) {
    Allocation out;
    out.counts = std::move(counts);
    out.n_min = n_min;
    out.total = 0;
    out.exhausted.assign(table.size(), 0);
    for (std::size_t k = 0; k < table.size(); ++k) {
        out.total += out.counts[k];
        out.exhausted[k] = table.strata[k].population > 0 &&
                           out.counts[k] == static_cast<int>(table.strata[k].population);
    }
    out.validate(table);
    return out;
}

GreedyState make_state(const StratumTable& table) {
    GreedyState state;
    state.counts.assign(table.size(), 0);
    state.product.resize(table.size());
    for (std::size_t k = 0; k < table.size(); ++k)
        state.product[k] =
            static_cast<double>(table.strata[k].population) * table.strata[k].dispersion;
    return state;
}

}  // namespace

Allocation wright_allocation(const StratumTable& table, int n, int n_min) {
    table.validate();
    if (n_min < 0) throw ConfigError("n_min must be nonnegative");
    GreedyState state = make_state(table);
    std::int64_t floor_total = 0;
    for (std::size_t k = 0; k < table.size(); ++k) {
        const auto pop = table.strata[k].population;
        const int floor_k = static_cast<int>(std::min<std::int64_t>(n_min, pop));
        state.counts[k] = floor_k;
        floor_total += floor_k;
    }
    if (n < floor_total)
        throw Infeasible("allocation size " + std::to_string(n) + " below the floor total " +
                         std::to_string(floor_total));
    if (n > table.total_population())
        throw Infeasible("allocation size " + std::to_string(n) + " above the population " +
                         std::to_string(table.total_population()));
    greedy_add(table, state, n - static_cast<int>(floor_total));
    return finish_allocation(table, std::move(state.counts), n_min);
}

Allocation wright_increment(const StratumTable& table, const std::vector<int>& current,
                            int increment, int n_min) {
    table.validate();
    if (current.size() != table.size()) throw ConfigError("current counts size mismatch");
    if (increment < 0) throw ConfigError("negative wave increment");
    GreedyState state = make_state(table);
    state.counts = current;
    // mandatory floor lifts first
    int budget = increment;
    for (std::size_t k = 0; k < table.size(); ++k) {
        const auto pop = table.strata[k].population;
        if (current[k] > pop) throw ConfigError("current counts exceed stratum population");
        const int floor_k = static_cast<int>(std::min<std::int64_t>(n_min, pop));
        const int lift = std::max(0, floor_k - current[k]);
        if (lift > budget)
            throw WaveInfeasible("wave budget cannot satisfy per-stratum floors");
        state.counts[k] += lift;
        budget -= lift;
    }
    std::int64_t capacity = 0;
    for (std::size_t k = 0; k < table.size(); ++k)
        capacity += table.strata[k].population - state.counts[k];
    if (budget > capacity) throw WaveInfeasible("wave budget exceeds remaining population");
    greedy_add(table, state, budget);
    return finish_allocation(table, std::move(state.counts), n_min);
}

double allocation_objective(const StratumTable& table, const std::vector<int>& counts) {
    double objective = 0.0;
    for (std::size_t k = 0; k < table.size(); ++k) {
        const double product =
            static_cast<double>(table.strata[k].population) * table.strata[k].dispersion;
        if (product == 0.0) continue;
        objective += product * product / static_cast<double>(counts[k]);
    }
    return objective;
}

Allocation cap_and_redistribute(const Eigen::VectorXd& raw, const StratumTable& table, int n,
                                int n_min) {
    table.validate();
    const std::size_t K = table.size();
    if (static_cast<std::size_t>(raw.size()) != K) throw ConfigError("raw allocation size mismatch");

    std::vector<int> fixed(K, -1);  // -1 means free

    // continuous shares proportional to raw over the free strata, lifted to
    // the floors (water-filling); strata the shares push past their cap get
    // pinned there, then the shares are re-solved on the rest
    for (int pass = 0; pass < static_cast<int>(K); ++pass) {
        std::vector<std::size_t> free_index;
        double budget = static_cast<double>(n);
        double raw_total = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (fixed[k] >= 0) {
                budget -= fixed[k];
                continue;
            }
            if (table.strata[k].population == 0) continue;
            free_index.push_back(k);
            raw_total += std::max(raw[static_cast<Eigen::Index>(k)], 0.0);
        }
        if (free_index.empty() || raw_total <= 0.0) break;

        auto filled = [&](double t) {
            double total = 0.0;
            for (std::size_t k : free_index) {
                const double floor_k = static_cast<double>(
                    std::min<std::int64_t>(n_min, table.strata[k].population));
                total += std::max(floor_k, std::max(raw[static_cast<Eigen::Index>(k)], 0.0) * t);
            }
            return total;
        };
        double lo = 0.0, hi = 2.0;
        while (filled(hi) < budget && hi < 1e12) hi *= 2.0;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (filled(mid) < budget ? lo : hi) = mid;
        }
        const double t = 0.5 * (lo + hi);

        bool pinned_any = false;
        for (std::size_t k : free_index) {
            const double floor_k = static_cast<double>(
                std::min<std::int64_t>(n_min, table.strata[k].population));
            const double share =
                std::max(floor_k, std::max(raw[static_cast<Eigen::Index>(k)], 0.0) * t);
            if (share >= static_cast<double>(table.strata[k].population)) {
                fixed[k] = static_cast<int>(table.strata[k].population);
                pinned_any = true;
            }
        }
        if (!pinned_any) break;
    }

    StratumTable sub;
    std::vector<std::size_t> free_index;
    int budget = n;
    for (std::size_t k = 0; k < K; ++k) {
        if (fixed[k] >= 0) {
            budget -= fixed[k];
            continue;
        }
        free_index.push_back(k);
        sub.strata.push_back(table.strata[k]);
    }
    std::vector<int> counts(K, 0);
    for (std::size_t k = 0; k < K; ++k) counts[k] = std::max(fixed[k], 0);
    if (free_index.empty()) {
        if (budget != 0) throw Infeasible("pinned allocation does not match the budget");
        return finish_allocation(table, std::move(counts), n_min);
    }
    Allocation cand = wright_allocation(sub, budget, n_min);
    for (std::size_t j = 0; j < free_index.size(); ++j)
        counts[free_index[j]] = cand.counts[j];
    return finish_allocation(table, std::move(counts), n_min);
}

namespace {

StratumTable dispersions_from_values(const Eigen::VectorXd& values,
                                     const std::vector<int>& stratum, int n_strata) {
    std::vector<double> sum(static_cast<std::size_t>(n_strata), 0.0);
    std::vector<double> sumsq(static_cast<std::size_t>(n_strata), 0.0);
    std::vector<std::int64_t> count(static_cast<std::size_t>(n_strata), 0);
    for (Eigen::Index i = 0; i < values.size(); ++i) {
        const auto k = static_cast<std::size_t>(stratum[static_cast<std::size_t>(i)]);
        sum[k] += values[i];
        sumsq[k] += values[i] * values[i];
        count[k]++;
    }
    StratumTable table;
    table.strata.resize(static_cast<std::size_t>(n_strata));
    for (int k = 0; k < n_strata; ++k) {
        auto& s = table.strata[static_cast<std::size_t>(k)];
        s.id = k;
        s.population = count[static_cast<std::size_t>(k)];
        if (s.population > 0) {
            const double m = sum[static_cast<std::size_t>(k)] / static_cast<double>(s.population);
            const double v =
                sumsq[static_cast<std::size_t>(k)] / static_cast<double>(s.population) - m * m;
            s.dispersion = std::sqrt(std::max(v, 0.0));
        }
    }
    return table;
}

}  // namespace

StratumTable influence_dispersions(const Eigen::MatrixXd& influence,
                                   const std::vector<int>& stratum, int n_strata,
                                   int target_column) {
    if (influence.rows() != static_cast<Eigen::Index>(stratum.size()))
        throw ConfigError("influence/stratum size mismatch");
    return dispersions_from_values(influence.col(target_column), stratum, n_strata);
}

StratumTable raking_optimal_dispersions(const Eigen::MatrixXd& influence,
                                        const Eigen::MatrixXd& auxiliaries,
                                        const std::vector<int>& stratum, int n_strata,
                                        int target_column) {
    const Eigen::Index n = influence.rows();
    if (auxiliaries.rows() != n || static_cast<Eigen::Index>(stratum.size()) != n)
        throw ConfigError("influence/auxiliary/stratum size mismatch");
    if (auxiliaries.cols() < 1) throw ConfigError("need at least one auxiliary column");

    Eigen::MatrixXd B(n, auxiliaries.cols() + 1);
    B.col(0).setOnes();
    B.rightCols(auxiliaries.cols()) = auxiliaries;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
    if (qr.rank() < B.cols())
        throw SingularAuxiliaries("auxiliary matrix is rank deficient with intercept");
    Eigen::VectorXd target = influence.col(target_column);
    Eigen::VectorXd residual = target - B * qr.solve(target);
    StratumTable table = dispersions_from_values(residual, stratum, n_strata);
    // dispersions that are zero up to roundoff relative to the target scale
    // are zero (perfect auxiliaries)
    const double scale = std::sqrt(target.squaredNorm() / static_cast<double>(n));
    for (auto& s : table.strata)
        if (s.dispersion < 1e-10 * (1.0 + scale)) s.dispersion = 0.0;
    return table;
}

namespace {

struct KnownDesign {
    Eigen::MatrixXd X0;   // outcome design with the phase-II column set to 0
    Eigen::Index x_slot;  // column index of the phase-II covariate
};

KnownDesign build_known_design(const CohortFrame& frame, const ModelSpec& outcome,
                               const std::string& unknown) {
    outcome.validate();
    KnownDesign out;
    const auto terms = outcome.term_names();
    const Eigen::Index n = static_cast<Eigen::Index>(frame.n_rows());
    out.X0.resize(n, static_cast<Eigen::Index>(terms.size()));
    out.x_slot = -1;
    Eigen::Index col = 0;
    if (outcome.include_intercept) out.X0.col(col++).setOnes();
    for (const auto& name : outcome.covariates) {
        if (name == unknown) {
            out.X0.col(col).setZero();
            out.x_slot = col;
        } else {
            const auto& c = frame.column(name);
            for (Eigen::Index i = 0; i < n; ++i) out.X0(i, col) = c[static_cast<std::size_t>(i)];
        }
        ++col;
    }
    if (out.x_slot < 0)
        throw ConfigError("outcome model does not contain the phase-II covariate " + unknown);
    return out;
}

Eigen::MatrixXd imputation_design(const CohortFrame& frame, const ModelSpec& imputation) {
    imputation.validate();
    const Eigen::Index n = static_cast<Eigen::Index>(frame.n_rows());
    Eigen::MatrixXd W(n, static_cast<Eigen::Index>(imputation.term_names().size()));
    Eigen::Index col = 0;
    if (imputation.include_intercept) W.col(col++).setOnes();
    for (const auto& name : imputation.covariates) {
        const auto& c = frame.column(name);
        for (Eigen::Index i = 0; i < n; ++i) W(i, col) = c[static_cast<std::size_t>(i)];
        ++col;
    }
    return W;
}

inline Eigen::ArrayXd expit_array(const Eigen::ArrayXd& x) {
    return 1.0 / (1.0 + (-x).exp());
}

StratumTable dispersions_from_moments(const CohortFrame& frame,
                                      const std::vector<double>& s1,
                                      const std::vector<double>& s2,
                                      const std::vector<double>& mass) {
    StratumTable table;
    const auto sizes = frame.stratum_sizes();
    table.strata.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        auto& s = table.strata[k];
        s.id = static_cast<int>(k);
        s.population = sizes[k];
        if (mass[k] > 0.0) {
            const double m = s1[k] / mass[k];
            const double v = s2[k] / mass[k] - m * m;
            s.dispersion = std::sqrt(std::max(v, 0.0));
        }
    }
    return table;
}

}  // namespace

StratumTable model_implied_dispersions(const CohortFrame& frame, const ModelSpec& outcome,
                                       const ModelSpec& imputation, const Eigen::VectorXd& beta,
                                       const Eigen::VectorXd& alpha, double imputation_sd,
                                       int target_column, Rng& rng,
                                       const Eigen::MatrixXd* auxiliaries) {
    if (!frame.has_strata()) throw ConfigError("frame has no strata");
    const Eigen::Index n = static_cast<Eigen::Index>(frame.n_rows());
    const int n_strata = frame.n_strata();
    const auto& stratum = frame.stratum();

    KnownDesign kd = build_known_design(frame, outcome, imputation.response);
    const Eigen::Index p = kd.X0.cols();
    if (beta.size() != p) throw ConfigError("beta length does not match the outcome design");
    if (target_column < 0 || target_column >= p) throw ConfigError("target column out of range");
    Eigen::MatrixXd W = imputation_design(frame, imputation);
    if (alpha.size() != W.cols())
        throw ConfigError("alpha length does not match the imputation design");

    const auto& yc = frame.column(outcome.response);
    Eigen::ArrayXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = yc[static_cast<std::size_t>(i)];

    Eigen::ArrayXd base = (kd.X0 * beta).array();  // linear predictor at X = 0
    const double beta_x = beta[kd.x_slot];
    Eigen::ArrayXd eta_imp = (W * alpha).array();

    const Eigen::Index q_aux = auxiliaries ? auxiliaries->cols() + 1 : 0;
    auto aux_row = [&](Eigen::Index i) {
        Eigen::VectorXd a(q_aux);
        a[0] = 1.0;
        a.tail(q_aux - 1) = auxiliaries->row(i).transpose();
        return a;
    };

    std::vector<double> s1(static_cast<std::size_t>(n_strata), 0.0);
    std::vector<double> s2(static_cast<std::size_t>(n_strata), 0.0);
    std::vector<double> mass(static_cast<std::size_t>(n_strata), 0.0);

    if (imputation.family == Family::logistic) {
        // binary phase-II covariate: enumerate X in {0, 1} exactly
        Eigen::ArrayXd px = expit_array(eta_imp);
        Eigen::ArrayXd resid0, resid1, v0, v1;
        if (outcome.family == Family::logistic) {
            Eigen::ArrayXd p0 = expit_array(base);
            Eigen::ArrayXd p1 = expit_array(base + beta_x);
            resid0 = y - p0;
            resid1 = y - p1;
            v0 = p0 * (1.0 - p0);
            v1 = p1 * (1.0 - p1);
        } else {
            resid0 = y - base;
            resid1 = y - (base + beta_x);
            v0 = Eigen::ArrayXd::Ones(n);
            v1 = v0;
        }
        Eigen::MatrixXd X1 = kd.X0;
        X1.col(kd.x_slot).setOnes();
        Eigen::VectorXd w0 = ((1.0 - px) * v0).matrix();
        Eigen::VectorXd w1 = (px * v1).matrix();
        Eigen::MatrixXd A = kd.X0.transpose() * w0.asDiagonal() * kd.X0 +
                            X1.transpose() * w1.asDiagonal() * X1;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        Eigen::VectorXd m = ldlt.solve(static_cast<double>(n) *
                                       Eigen::VectorXd::Unit(p, target_column));
        if (ldlt.info() != Eigen::Success || !m.allFinite())
            throw SingularInformation("expected information matrix singular");

        Eigen::ArrayXd s0 = (kd.X0 * m).array();
        Eigen::ArrayXd h0 = s0 * resid0;
        Eigen::ArrayXd h1 = (s0 + m[kd.x_slot]) * resid1;
        Eigen::ArrayXd e1 = (1.0 - px) * h0 + px * h1;
        Eigen::ArrayXd e2 = (1.0 - px) * h0.square() + px * h1.square();

        if (auxiliaries) {
            Eigen::MatrixXd G = Eigen::MatrixXd::Zero(q_aux, q_aux);
            Eigen::VectorXd c = Eigen::VectorXd::Zero(q_aux);
            for (Eigen::Index i = 0; i < n; ++i) {
                Eigen::VectorXd a = aux_row(i);
                G.noalias() += a * a.transpose();
                c.noalias() += a * e1[i];
            }
            Eigen::LDLT<Eigen::MatrixXd> gld(G);
            Eigen::VectorXd proj = gld.solve(c);
            if (gld.info() != Eigen::Success || !proj.allFinite())
                throw SingularAuxiliaries("auxiliary cross-product matrix singular");
            for (Eigen::Index i = 0; i < n; ++i) {
                const double fit = proj.dot(aux_row(i));
                const auto k = static_cast<std::size_t>(stratum[static_cast<std::size_t>(i)]);
                s1[k] += e1[i] - fit;
                s2[k] += e2[i] - 2.0 * fit * e1[i] + fit * fit;
                mass[k] += 1.0;
            }
        } else {
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto k = static_cast<std::size_t>(stratum[static_cast<std::size_t>(i)]);
                s1[k] += e1[i];
                s2[k] += e2[i];
                mass[k] += 1.0;
            }
        }
        return dispersions_from_moments(frame, s1, s2, mass);
    }

    // continuous phase-II covariate: stratified Monte Carlo points
    constexpr int kPointsPerStratum = 200;
    Eigen::ArrayXd mu_x = eta_imp;
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(n_strata));
    for (Eigen::Index i = 0; i < n; ++i)
        members[static_cast<std::size_t>(stratum[static_cast<std::size_t>(i)])].push_back(i);

    struct Point {
        Eigen::Index row;
        int stratum;
        double x;
    };
    std::vector<Point> points;
    points.reserve(static_cast<std::size_t>(n_strata) * kPointsPerStratum);
    for (int k = 0; k < n_strata; ++k) {
        const auto& idx = members[static_cast<std::size_t>(k)];
        if (idx.empty()) continue;
        for (int t = 0; t < kPointsPerStratum; ++t) {
            const Eigen::Index i = idx[static_cast<std::size_t>(t) % idx.size()];
            points.push_back({i, k, mu_x[i] + imputation_sd * rng.normal()});
        }
    }

    Eigen::MatrixXd A(p, p);
    if (outcome.family == Family::linear) {
        Eigen::MatrixXd Xmu = kd.X0;
        Xmu.col(kd.x_slot) = mu_x.matrix();
        A = Xmu.transpose() * Xmu;
        A(kd.x_slot, kd.x_slot) += static_cast<double>(n) * imputation_sd * imputation_sd;
    } else {
        A.setZero();
        const auto sizes = frame.stratum_sizes();
        for (const auto& pt : points) {
            Eigen::VectorXd x = kd.X0.row(pt.row).transpose();
            x[kd.x_slot] = pt.x;
            const double eta = base[pt.row] + beta_x * pt.x;
            const double pr = 1.0 / (1.0 + std::exp(-eta));
            const double weight = static_cast<double>(sizes[static_cast<std::size_t>(pt.stratum)]) /
                                  kPointsPerStratum;
            A.noalias() += (weight * pr * (1.0 - pr)) * x * x.transpose();
        }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    Eigen::VectorXd m =
        ldlt.solve(static_cast<double>(n) * Eigen::VectorXd::Unit(p, target_column));
    if (ldlt.info() != Eigen::Success || !m.allFinite())
        throw SingularInformation("expected information matrix singular");
    Eigen::ArrayXd s0 = (kd.X0 * m).array();

    auto point_h = [&](const Point& pt) {
        const double s = s0[pt.row] + m[kd.x_slot] * pt.x;
        double resid;
        if (outcome.family == Family::logistic) {
            const double eta = base[pt.row] + beta_x * pt.x;
            resid = y[pt.row] - 1.0 / (1.0 + std::exp(-eta));
        } else {
            resid = y[pt.row] - (base[pt.row] + beta_x * pt.x);
        }
        return s * resid;
    };

    Eigen::VectorXd proj;
    if (auxiliaries) {
        const auto sizes = frame.stratum_sizes();
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(q_aux, q_aux);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(q_aux);
        for (const auto& pt : points) {
            const double weight = static_cast<double>(sizes[static_cast<std::size_t>(pt.stratum)]) /
                                  kPointsPerStratum;
            Eigen::VectorXd a = aux_row(pt.row);
            G.noalias() += weight * a * a.transpose();
            c.noalias() += (weight * point_h(pt)) * a;
        }
        Eigen::LDLT<Eigen::MatrixXd> gld(G);
        proj = gld.solve(c);
        if (gld.info() != Eigen::Success || !proj.allFinite())
            throw SingularAuxiliaries("auxiliary cross-product matrix singular");
    }

    for (const auto& pt : points) {
        double h = point_h(pt);
        if (auxiliaries) h -= proj.dot(aux_row(pt.row));
        const auto k = static_cast<std::size_t>(pt.stratum);
        s1[k] += h;
        s2[k] += h * h;
        mass[k] += 1.0;
    }
    return dispersions_from_moments(frame, s1, s2, mass);
}

Allocation allocation_from_prior(const PriorSpec& prior, const CohortFrame& frame,
                                 const ModelSpec& outcome, const ModelSpec& imputation,
                                 int target_column, int n, int n_min, Rng& rng) {
    if (prior.draws < 1) throw ConfigError("prior draw count must be at least 1");
    const std::size_t p = outcome.term_names().size();
    const std::size_t q = imputation.term_names().size();
    if (prior.beta.size() != p)
        throw ConfigError("prior has " + std::to_string(prior.beta.size()) +
                          " beta entries, outcome model has " + std::to_string(p));
    if (prior.alpha.size() != q)
        throw ConfigError("prior has " + std::to_string(prior.alpha.size()) +
                          " alpha entries, imputation model has " + std::to_string(q));

    std::vector<double> s_sum;
    StratumTable averaged;
    for (int d = 0; d < prior.draws; ++d) {
        Rng rng_par = rng.split(2 * static_cast<std::uint64_t>(d));
        Rng rng_mc = rng.split(2 * static_cast<std::uint64_t>(d) + 1);
        Eigen::VectorXd beta(p), alpha(q);
        for (std::size_t j = 0; j < p; ++j)
            beta[static_cast<Eigen::Index>(j)] =
                rng_par.normal(prior.beta[j].mean, prior.beta[j].sd);
        for (std::size_t j = 0; j < q; ++j)
            alpha[static_cast<Eigen::Index>(j)] =
                rng_par.normal(prior.alpha[j].mean, prior.alpha[j].sd);
        StratumTable table = model_implied_dispersions(frame, outcome, imputation, beta, alpha,
                                                       prior.sigma_x, target_column, rng_mc);
        if (d == 0) {
            averaged = table;
            s_sum.assign(table.size(), 0.0);
        }
        for (std::size_t k = 0; k < table.size(); ++k) s_sum[k] += table.strata[k].dispersion;
    }
    for (std::size_t k = 0; k < averaged.size(); ++k)
        averaged.strata[k].dispersion = s_sum[k] / static_cast<double>(prior.draws);
    return wright_allocation(averaged, n, n_min);
}

}  // namespace twophase
