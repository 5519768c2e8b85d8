#include "twophase/glm.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "twophase/errors.hpp"

namespace twophase {

namespace {

double expit(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// log-likelihood up to constants; logistic uses the eta-based form to avoid
// log(0) at saturated fits
double weighted_loglik(const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, Family family) {
    double ll = 0.0;
    if (family == Family::logistic) {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double e = eta[i];
            const double log1pe = e > 30.0 ? e : std::log1p(std::exp(e));
            ll += w[i] * (y[i] * e - log1pe);
        }
    } else {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double r = y[i] - eta[i];
            ll -= 0.5 * w[i] * r * r;
        }
    }
    return ll;
}

void mean_and_variance(const Eigen::VectorXd& eta, Family family, Eigen::VectorXd& mu,
                       Eigen::VectorXd& var) {
    const Eigen::Index n = eta.size();
    mu.resize(n);
    var.resize(n);
    if (family == Family::logistic) {
        for (Eigen::Index i = 0; i < n; ++i) {
            mu[i] = expit(eta[i]);
            var[i] = mu[i] * (1.0 - mu[i]);
        }
    } else {
        mu = eta;
        var.setOnes();
    }
}

// all units of some stratum have fitted probabilities within eps of 0/1
bool saturated_stratum(const Eigen::VectorXd& mu, const std::vector<int>& strata, double eps) {
    if (strata.empty()) {
        for (Eigen::Index i = 0; i < mu.size(); ++i)
            if (std::min(mu[i], 1.0 - mu[i]) >= eps) return false;
        return mu.size() > 0;
    }
    std::unordered_set<int> seen(strata.begin(), strata.end());
    for (int k : seen) {
        bool all_saturated = true;
        for (Eigen::Index i = 0; i < mu.size(); ++i) {
            if (strata[static_cast<std::size_t>(i)] != k) continue;
            if (std::min(mu[i], 1.0 - mu[i]) >= eps) {
                all_saturated = false;
                break;
            }
        }
        if (all_saturated) return true;
    }
    return false;
}

}  // namespace

Family family_from_string(const std::string& name) {
    if (name == "linear") return Family::linear;
    if (name == "logistic") return Family::logistic;
    throw ConfigError("unknown family: " + name + " (expected linear or logistic)");
}

std::string to_string(Family family) {
    return family == Family::linear ? "linear" : "logistic";
}

void ModelSpec::validate() const {
    if (response.empty()) throw ConfigError("model has no response column");
    if (covariates.empty() && !include_intercept)
        throw ConfigError("model needs covariates or an intercept");
    for (const auto& c : covariates)
        if (c == response) throw ConfigError("response column " + response + " also a covariate");
}

std::vector<std::string> ModelSpec::term_names() const {
    std::vector<std::string> names;
    if (include_intercept) names.push_back("(Intercept)");
    names.insert(names.end(), covariates.begin(), covariates.end());
    return names;
}

Eigen::VectorXd FitResult::se() const {
    return vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

FitResult fit_weighted_glm(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& w, Family family, const FitOptions& options) {
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    if (y.size() != n || w.size() != n) throw ConfigError("design/response/weight size mismatch");
    if (n < p) throw SingularDesign("fewer rows than coefficients");
    if ((w.array() <= 0.0).any()) throw ConfigError("weights must be strictly positive");
    if (family == Family::logistic && ((y.array() < 0.0).any() || (y.array() > 1.0).any()))
        throw ConfigError("logistic response must lie in [0, 1]");

    {
        Eigen::MatrixXd scaled = w.cwiseSqrt().asDiagonal() * X;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
        if (qr.rank() < p) throw SingularDesign("weighted design matrix is rank deficient");
    }

    const bool penalised = options.penalty_mean.size() > 0;
    Eigen::VectorXd pen_precision;
    if (penalised) {
        if (options.penalty_mean.size() != p || options.penalty_sd.size() != p)
            throw ConfigError("penalty vectors must match the coefficient count");
        if ((options.penalty_sd.array() <= 0.0).any())
            throw ConfigError("penalty sds must be positive");
        pen_precision = options.penalty_sd.array().square().inverse().matrix();
    }
    auto penalty_ll = [&](const Eigen::VectorXd& beta) {
        if (!penalised) return 0.0;
        return -0.5 * (pen_precision.array() *
                       (beta - options.penalty_mean).array().square())
                          .sum();
    };
    auto penalty_score = [&](const Eigen::VectorXd& beta) {
        if (!penalised) return Eigen::VectorXd(Eigen::VectorXd::Zero(p));
        return Eigen::VectorXd(
            (-pen_precision.array() * (beta - options.penalty_mean).array()).matrix());
    };

    FitResult result;
    result.beta = Eigen::VectorXd::Zero(p);

    Eigen::VectorXd eta = X * result.beta;
    Eigen::VectorXd mu, var;
    mean_and_variance(eta, family, mu, var);
    double ll = weighted_loglik(eta, y, w, family) + penalty_ll(result.beta);

    Eigen::VectorXd score =
        X.transpose() * (w.cwiseProduct(y - mu)) + penalty_score(result.beta);
    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (score.lpNorm<Eigen::Infinity>() < options.tolerance) {
            result.converged = true;
            break;
        }
        Eigen::MatrixXd info = X.transpose() * (w.cwiseProduct(var)).asDiagonal() * X;
        if (penalised) info += pen_precision.asDiagonal();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        Eigen::VectorXd delta = ldlt.solve(score);
        if (ldlt.info() != Eigen::Success || !delta.allFinite())
            throw SingularInformation("information matrix numerically singular");

        double step = 1.0;
        Eigen::VectorXd beta_new, eta_new;
        double ll_new = 0.0;
        for (int half = 0; half < 30; ++half) {
            beta_new = result.beta + step * delta;
            eta_new = X * beta_new;
            ll_new = weighted_loglik(eta_new, y, w, family) + penalty_ll(beta_new);
            if (ll_new >= ll - 1e-12 * (1.0 + std::abs(ll))) break;
            step *= 0.5;
        }
        result.beta = beta_new;
        eta = eta_new;
        ll = ll_new;
        mean_and_variance(eta, family, mu, var);
        score = X.transpose() * (w.cwiseProduct(y - mu)) + penalty_score(result.beta);
        result.iterations = iter + 1;
    }
    if (score.lpNorm<Eigen::Infinity>() < options.tolerance) result.converged = true;
    result.score = score;

    if (family == Family::logistic) {
        result.separation = saturated_stratum(mu, options.strata, 1e-12);
        // a stratum that is nearly saturated at the solution is probed with
        // further Newton steps on a copy: a separated fit keeps drifting to
        // full saturation, an interior fit stays put
        if (!result.separation && !penalised && saturated_stratum(mu, options.strata, 1e-6)) {
            Eigen::VectorXd beta_probe = result.beta;
            Eigen::VectorXd mu_probe = mu, var_probe = var;
            for (int t = 0; t < 20 && !result.separation; ++t) {
                Eigen::MatrixXd info =
                    X.transpose() * (w.cwiseProduct(var_probe)).asDiagonal() * X;
                Eigen::LDLT<Eigen::MatrixXd> probe(info);
                Eigen::VectorXd delta =
                    probe.solve(X.transpose() * (w.cwiseProduct(y - mu_probe)));
                if (probe.info() != Eigen::Success || !delta.allFinite()) break;
                beta_probe += delta;
                Eigen::VectorXd eta_probe = X * beta_probe;
                mean_and_variance(eta_probe, family, mu_probe, var_probe);
                result.separation = saturated_stratum(mu_probe, options.strata, 1e-12);
                if (!saturated_stratum(mu_probe, options.strata, 1e-6)) break;
            }
        }
    }

    // per-unit scores and weighted information at the solution
    Eigen::MatrixXd U = (y - mu).asDiagonal() * X;
    Eigen::MatrixXd info = X.transpose() * (w.cwiseProduct(var)).asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success)
        throw SingularInformation("information matrix numerically singular at solution");
    result.influence = static_cast<double>(n) * ldlt.solve(U.transpose()).transpose();
    if (!result.influence.allFinite())
        throw SingularInformation("influence solve produced non-finite values");

    // meat = sum_i w_i^2 u_i u_i' with u_i = (y_i - mu_i) x_i
    Eigen::VectorXd meat_w = (w.array() * (y - mu).array()).square();
    Eigen::MatrixXd meat = X.transpose() * meat_w.asDiagonal() * X;
    result.vcov = ldlt.solve(ldlt.solve(meat).transpose());
    result.vcov_phase2 = Eigen::MatrixXd::Zero(p, p);
    result.vcov_kind = VcovKind::sandwich;

    if (family == Family::linear) {
        const double denom = std::max(w.sum() - static_cast<double>(p), 1.0);
        result.dispersion = (w.array() * (y - mu).array().square()).sum() / denom;
    }
    return result;
}

Eigen::MatrixXd influence_functions(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& w, Family family,
                                    const Eigen::VectorXd& beta) {
    const Eigen::Index n = X.rows();
    Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd mu, var;
    mean_and_variance(eta, family, mu, var);
    Eigen::MatrixXd U = (y - mu).asDiagonal() * X;
    Eigen::MatrixXd info = X.transpose() * (w.cwiseProduct(var)).asDiagonal() * X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    Eigen::MatrixXd h = static_cast<double>(n) * ldlt.solve(U.transpose()).transpose();
    if (ldlt.info() != Eigen::Success || !h.allFinite())
        throw SingularInformation("information matrix numerically singular");
    return h;
}

DesignData build_design(const CohortFrame& frame, const ModelSpec& model,
                        const std::vector<std::size_t>& rows) {
    model.validate();
    DesignData out;
    out.term_names = model.term_names();
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index p = static_cast<Eigen::Index>(out.term_names.size());
    out.X.resize(n, p);
    out.y.resize(n);

    const auto& yc = frame.column(model.response);
    Eigen::Index col = 0;
    if (model.include_intercept) out.X.col(col++).setOnes();
    for (const auto& name : model.covariates) {
        const auto& c = frame.column(name);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = c[rows[static_cast<std::size_t>(i)]];
            if (std::isnan(v))
                throw ConfigError("missing value in column " + name + " at row " +
                                  std::to_string(rows[static_cast<std::size_t>(i)] + 1));
            out.X(i, col) = v;
        }
        ++col;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = yc[rows[static_cast<std::size_t>(i)]];
        if (std::isnan(v))
            throw ConfigError("missing value in response " + model.response + " at row " +
                              std::to_string(rows[static_cast<std::size_t>(i)] + 1));
        out.y[i] = v;
    }
    return out;
}

std::vector<std::size_t> all_rows(const CohortFrame& frame) {
    std::vector<std::size_t> rows(frame.n_rows());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return rows;
}

namespace {

FitOptions options_with_strata(const CohortFrame& frame, const std::vector<std::size_t>& rows) {
    FitOptions options;
    if (frame.has_strata()) {
        options.strata.reserve(rows.size());
        for (std::size_t r : rows) options.strata.push_back(frame.stratum()[r]);
    }
    return options;
}

}  // namespace

FitResult fit_model(const CohortFrame& frame, const ModelSpec& model) {
    auto rows = all_rows(frame);
    auto design = build_design(frame, model, rows);
    auto fit = fit_weighted_glm(design.X, design.y, Eigen::VectorXd::Ones(design.X.rows()),
                                model.family, options_with_strata(frame, rows));
    fit.term_names = design.term_names;
    return fit;
}

FitResult fit_imputation_model(const CohortFrame& frame, const ModelSpec& imputation) {
    std::vector<std::size_t> rows =
        frame.has_sampling() ? frame.sampled_rows() : all_rows(frame);
    if (rows.empty()) throw ConfigError("no sampled rows to fit the imputation model on");
    auto design = build_design(frame, imputation, rows);
    Eigen::VectorXd w(design.X.rows());
    if (frame.has_sampling()) {
        for (Eigen::Index i = 0; i < w.size(); ++i)
            w[i] = frame.weight()[rows[static_cast<std::size_t>(i)]];
    } else {
        w.setOnes();
    }
    auto fit = fit_weighted_glm(design.X, design.y, w, imputation.family,
                                options_with_strata(frame, rows));
    fit.term_names = design.term_names;
    return fit;
}

std::vector<double> predict_xhat(const FitResult& fit, const CohortFrame& frame,
                                 const ModelSpec& imputation) {
    auto rows = all_rows(frame);
    // response values are not needed for prediction; reuse the response
    // column slot only to satisfy build_design's interface
    DesignData design;
    design.term_names = imputation.term_names();
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index p = static_cast<Eigen::Index>(design.term_names.size());
    design.X.resize(n, p);
    Eigen::Index col = 0;
    if (imputation.include_intercept) design.X.col(col++).setOnes();
    for (const auto& name : imputation.covariates) {
        const auto& c = frame.column(name);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = c[static_cast<std::size_t>(i)];
            if (std::isnan(v))
                throw ConfigError("missing value in column " + name + " at row " +
                                  std::to_string(i + 1));
            design.X(i, col) = v;
        }
        ++col;
    }
    Eigen::VectorXd eta = design.X * fit.beta;
    std::vector<double> xhat(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        xhat[static_cast<std::size_t>(i)] =
            imputation.family == Family::logistic ? expit(eta[i]) : eta[i];
    return xhat;
}

FitResult fit_phase1_model(const CohortFrame& frame, const ModelSpec& outcome,
                           const std::string& phase2_column, const std::vector<double>& xhat) {
    if (xhat.size() != frame.n_rows()) throw ConfigError("xhat length mismatch");
    CohortFrame working = frame;
    working.add_column(phase2_column, xhat);
    return fit_model(working, outcome);
}

Eigen::MatrixXd phase1_influence(const CohortFrame& frame, const ModelSpec& outcome,
                                 const std::string& phase2_column,
                                 const std::vector<double>& xhat) {
    return fit_phase1_model(frame, outcome, phase2_column, xhat).influence;
}

}  // namespace twophase
