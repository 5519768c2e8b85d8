#include "twophase/calibration.hpp"

#include <atomic>
#include <cmath>

#include "twophase/errors.hpp"

namespace twophase {

namespace {

std::atomic<double> g_violation_high_water{0.0};
std::atomic<long> g_converged_count{0};

void record_violation(double v) {
    g_converged_count.fetch_add(1);
    double current = g_violation_high_water.load();
    while (v > current && !g_violation_high_water.compare_exchange_weak(current, v)) {
    }
}

struct Problem {
    Eigen::MatrixXd B;        // n_sampled x m internal constraint basis
    Eigen::VectorXd w;        // design weights on sampled rows
    Eigen::VectorXd target;   // cohort totals of the internal basis
    Eigen::VectorXd denom;    // per-constraint scale for relative residuals
    std::vector<std::size_t> rows;
};

Problem build_problem(const Eigen::MatrixXd& aux, const std::vector<std::uint8_t>& phase2,
                      const std::vector<double>& weights) {
    const Eigen::Index N = aux.rows();
    if (static_cast<Eigen::Index>(phase2.size()) != N ||
        static_cast<Eigen::Index>(weights.size()) != N)
        throw ConfigError("auxiliary/indicator/weight size mismatch");

    Problem p;
    for (std::size_t i = 0; i < phase2.size(); ++i)
        if (phase2[i]) {
            if (!(weights[i] > 0.0)) throw ConfigError("sampled unit with non-positive weight");
            p.rows.push_back(i);
        }
    if (p.rows.empty()) throw ConfigError("no sampled rows to calibrate");
    const Eigen::Index ns = static_cast<Eigen::Index>(p.rows.size());

    Eigen::RowVectorXd mean = aux.colwise().mean();
    // drop columns that are constant over the cohort; the intercept
    // constraint already carries them
    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < aux.cols(); ++j) {
        const double spread = (aux.col(j).array() - mean[j]).abs().maxCoeff();
        if (spread > 1e-12 * (1.0 + std::abs(mean[j]))) active.push_back(j);
    }

    const Eigen::Index m = static_cast<Eigen::Index>(active.size()) + 1;
    p.B.resize(ns, m);
    p.w.resize(ns);
    p.B.col(0).setOnes();
    for (Eigen::Index i = 0; i < ns; ++i) p.w[i] = weights[p.rows[static_cast<std::size_t>(i)]];

    p.target.resize(m);
    p.target[0] = static_cast<double>(N);
    for (Eigen::Index j = 0; j < m - 1; ++j) {
        const Eigen::Index src = active[static_cast<std::size_t>(j)];
        const double sd = std::sqrt((aux.col(src).array() - mean[src]).square().mean());
        for (Eigen::Index i = 0; i < ns; ++i)
            p.B(i, j + 1) =
                (aux(static_cast<Eigen::Index>(p.rows[static_cast<std::size_t>(i)]), src) -
                 mean[src]) /
                sd;
        p.target[j + 1] = 0.0;  // centred columns have zero cohort total
    }

    p.denom.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double mass = (p.w.array() * p.B.col(j).array().abs()).sum();
        p.denom[j] = std::max({1.0, std::abs(p.target[j]), mass});
    }
    return p;
}

double relative_violation(const Problem& p, const Eigen::VectorXd& residual) {
    return (residual.array() / p.denom.array()).abs().maxCoeff();
}

struct Attempt {
    Eigen::VectorXd lambda;
    Eigen::VectorXd g;
    double violation = 0.0;
    int iterations = 0;
    bool ok = false;
};

Attempt solve_distance(const Problem& p, CalibrationDistance distance) {
    const Eigen::Index m = p.B.cols();
    Attempt a;
    a.lambda = Eigen::VectorXd::Zero(m);

    constexpr int kMaxIterations = 100;
    constexpr double kTol = 1e-10;
    for (int iter = 0; iter < kMaxIterations; ++iter) {
        Eigen::ArrayXd u = (p.B * a.lambda).array();
        if (distance == CalibrationDistance::raking && u.maxCoeff() > 500.0) return a;  // diverged
        if (distance == CalibrationDistance::raking)
            a.g = u.exp().matrix();
        else
            a.g = (1.0 + u).matrix();
        Eigen::VectorXd gw = p.w.cwiseProduct(a.g);
        Eigen::VectorXd residual = p.B.transpose() * gw - p.target;
        a.violation = relative_violation(p, residual);
        a.iterations = iter;
        if (!std::isfinite(a.violation)) return a;
        if (a.violation < kTol) {
            a.ok = true;
            return a;
        }
        // Jacobian: sum w g'(u) b b'; g' = g for raking, 1 for linear
        Eigen::VectorXd jw = distance == CalibrationDistance::raking ? gw : p.w;
        Eigen::MatrixXd J = p.B.transpose() * jw.asDiagonal() * p.B;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(J);
        Eigen::VectorXd step = ldlt.solve(residual);
        if (ldlt.info() != Eigen::Success || !step.allFinite())
            throw RankDeficientConstraints("calibration constraints rank deficient on the sample");
        a.lambda -= step;
    }
    // accept a near-solution within the documented tolerance
    a.ok = a.violation < 1e-8;
    return a;
}

}  // namespace

CalibrationResult calibrate_weights(const Eigen::MatrixXd& aux,
                                    const std::vector<std::uint8_t>& phase2,
                                    const std::vector<double>& weights,
                                    CalibrationDistance distance) {
    Problem p = build_problem(aux, phase2, weights);

    {
        // the sampled rows must span the constraint basis
        Eigen::MatrixXd scaled = p.w.cwiseSqrt().asDiagonal() * p.B;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
        if (qr.rank() < p.B.cols())
            throw RankDeficientConstraints(
                "sampled auxiliaries do not span the cohort auxiliary space");
    }

    CalibrationResult out;
    out.distance = distance;
    Attempt a = solve_distance(p, distance);
    if (!a.ok && distance == CalibrationDistance::raking) {
        a = solve_distance(p, CalibrationDistance::linear);
        out.distance = CalibrationDistance::linear;
        out.fell_back = true;
    }
    if (!a.ok)
        throw CalibrationDivergence("calibration failed to converge under both distances");

    out.lambda = a.lambda;
    out.converged = true;
    out.max_violation = a.violation;
    out.iterations = a.iterations;
    out.weights.assign(phase2.size(), 0.0);
    for (std::size_t i = 0; i < p.rows.size(); ++i)
        out.weights[p.rows[i]] = p.w[static_cast<Eigen::Index>(i)] * a.g[static_cast<Eigen::Index>(i)];
    record_violation(a.violation);
    return out;
}

double calibration_violation_high_water() { return g_violation_high_water.load(); }

long calibration_converged_count() { return g_converged_count.load(); }

void reset_calibration_violation_high_water() {
    g_violation_high_water.store(0.0);
    g_converged_count.store(0);
}

}  // namespace twophase
