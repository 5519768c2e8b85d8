#include "twophase/estimators.hpp"

#include <cmath>

#include "twophase/errors.hpp"

namespace twophase {

namespace {

struct SampledDesign {
    DesignData design;
    Eigen::VectorXd w;
    std::vector<std::size_t> rows;
    std::vector<int> strata;
};

SampledDesign sampled_design(const CohortFrame& frame, const ModelSpec& model) {
    if (!frame.has_sampling()) throw ConfigError("frame has no phase-II sample");
    SampledDesign out;
    out.rows = frame.sampled_rows();
    if (out.rows.empty()) throw ConfigError("no sampled rows");
    out.design = build_design(frame, model, out.rows);
    out.w.resize(static_cast<Eigen::Index>(out.rows.size()));
    for (Eigen::Index i = 0; i < out.w.size(); ++i)
        out.w[i] = frame.weight()[out.rows[static_cast<std::size_t>(i)]];
    if (frame.has_strata()) {
        out.strata.reserve(out.rows.size());
        for (std::size_t r : out.rows) out.strata.push_back(frame.stratum()[r]);
    } else {
        out.strata.assign(out.rows.size(), 0);
    }
    return out;
}

// stratified without-replacement variance of a Horvitz-Thompson total of the
// row vectors in `values`: sum_k N_k (N_k - n_k) / n_k * sample_cov_k
Eigen::MatrixXd stratified_total_variance(const Eigen::MatrixXd& values,
                                          const std::vector<int>& strata,
                                          const std::vector<std::int64_t>& populations) {
    const Eigen::Index p = values.cols();
    const std::size_t K = populations.size();
    std::vector<std::int64_t> counts(K, 0);
    for (int k : strata) counts[static_cast<std::size_t>(k)]++;

    Eigen::MatrixXd total = Eigen::MatrixXd::Zero(p, p);
    for (std::size_t k = 0; k < K; ++k) {
        const auto n_k = counts[k];
        const auto N_k = populations[k];
        if (n_k < 2 || N_k <= n_k) continue;  // censused or degenerate stratum adds nothing
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
        for (std::size_t i = 0; i < strata.size(); ++i)
            if (strata[i] == static_cast<int>(k)) mean += values.row(static_cast<Eigen::Index>(i));
        mean /= static_cast<double>(n_k);
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
        for (std::size_t i = 0; i < strata.size(); ++i) {
            if (strata[i] != static_cast<int>(k)) continue;
            Eigen::VectorXd d = values.row(static_cast<Eigen::Index>(i)).transpose() - mean;
            cov.noalias() += d * d.transpose();
        }
        cov /= static_cast<double>(n_k - 1);
        const double factor = static_cast<double>(N_k) * static_cast<double>(N_k - n_k) /
                              static_cast<double>(n_k);
        total += factor * cov;
    }
    return total;
}

std::vector<std::int64_t> populations_or_single(const CohortFrame& frame) {
    if (frame.has_strata()) return frame.stratum_sizes();
    return {static_cast<std::int64_t>(frame.n_rows())};
}

}  // namespace

FitResult ipw_fit(const CohortFrame& frame, const ModelSpec& model) {
    SampledDesign sd = sampled_design(frame, model);
    FitOptions options;
    options.strata = sd.strata;
    FitResult fit = fit_weighted_glm(sd.design.X, sd.design.y, sd.w, model.family, options);
    fit.term_names = sd.design.term_names;

    // unit scores and HT-estimated cohort information at the solution
    Eigen::VectorXd eta = sd.design.X * fit.beta;
    Eigen::VectorXd mu(eta.size()), var(eta.size());
    if (model.family == Family::logistic) {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-eta[i]));
            mu[i] = p;
            var[i] = p * (1.0 - p);
        }
    } else {
        mu = eta;
        var.setOnes();
    }
    Eigen::MatrixXd U = (sd.design.y - mu).asDiagonal() * sd.design.X;
    Eigen::MatrixXd A =
        sd.design.X.transpose() * (sd.w.cwiseProduct(var)).asDiagonal() * sd.design.X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw SingularInformation("weighted information singular in ipw_fit");

    Eigen::MatrixXd ht_var = stratified_total_variance(U, sd.strata, populations_or_single(frame));
    fit.vcov_phase2 = ldlt.solve(ldlt.solve(ht_var).transpose());
    // phase 1: the cohort itself is an iid draw from the superpopulation,
    // score variance estimated by the weighted sample total of u u'
    Eigen::VectorXd w_resid = (sd.w.array() * (sd.design.y - mu).array().square()).matrix();
    Eigen::MatrixXd phase1 = sd.design.X.transpose() * w_resid.asDiagonal() * sd.design.X;
    fit.vcov = fit.vcov_phase2 + ldlt.solve(ldlt.solve(phase1).transpose());
    fit.vcov_kind = VcovKind::design;
    return fit;
}

RakingFit raking_fit(const CohortFrame& frame, const ModelSpec& model,
                     const Eigen::MatrixXd& auxiliaries, CalibrationDistance distance) {
    if (!frame.has_sampling()) throw ConfigError("frame has no phase-II sample");
    if (auxiliaries.rows() != static_cast<Eigen::Index>(frame.n_rows()))
        throw ConfigError("auxiliaries must cover every cohort row");

    RakingFit out;
    out.calibration = calibrate_weights(auxiliaries, frame.phase2(), frame.weight(), distance);

    SampledDesign sd = sampled_design(frame, model);
    Eigen::VectorXd gw(sd.w.size());
    for (Eigen::Index i = 0; i < gw.size(); ++i)
        gw[i] = out.calibration.weights[sd.rows[static_cast<std::size_t>(i)]];

    FitOptions options;
    options.strata = sd.strata;
    FitResult fit = fit_weighted_glm(sd.design.X, sd.design.y, gw, model.family, options);
    fit.term_names = sd.design.term_names;

    Eigen::VectorXd eta = sd.design.X * fit.beta;
    Eigen::VectorXd mu(eta.size()), var(eta.size());
    if (model.family == Family::logistic) {
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double p = 1.0 / (1.0 + std::exp(-eta[i]));
            mu[i] = p;
            var[i] = p * (1.0 - p);
        }
    } else {
        mu = eta;
        var.setOnes();
    }
    Eigen::MatrixXd U = (sd.design.y - mu).asDiagonal() * sd.design.X;
    Eigen::MatrixXd A =
        sd.design.X.transpose() * (gw.cwiseProduct(var)).asDiagonal() * sd.design.X;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success)
        throw SingularInformation("weighted information singular in raking_fit");
    Eigen::MatrixXd h = ldlt.solve(U.transpose()).transpose();  // A^{-1} u_i rows

    // residuals of the influence values on (1, a) over the sampled rows,
    // design-weighted; their stratified totals drive the variance
    const Eigen::Index ns = h.rows();
    Eigen::MatrixXd B(ns, auxiliaries.cols() + 1);
    B.col(0).setOnes();
    for (Eigen::Index i = 0; i < ns; ++i)
        B.row(i).tail(auxiliaries.cols()) =
            auxiliaries.row(static_cast<Eigen::Index>(sd.rows[static_cast<std::size_t>(i)]));
    Eigen::MatrixXd BtW = B.transpose() * sd.w.asDiagonal();
    Eigen::MatrixXd G = BtW * B;
    Eigen::LDLT<Eigen::MatrixXd> gld(G);
    Eigen::MatrixXd coef = gld.solve(BtW * h);
    if (gld.info() != Eigen::Success || !coef.allFinite())
        throw SingularAuxiliaries("auxiliary regression singular in raking_fit");
    Eigen::MatrixXd resid = h - B * coef;

    fit.vcov_phase2 = stratified_total_variance(resid, sd.strata, populations_or_single(frame));
    // phase 1: full score variance, the census target moves with the cohort
    Eigen::VectorXd gw_resid = (gw.array() * (sd.design.y - mu).array().square()).matrix();
    Eigen::MatrixXd phase1 = sd.design.X.transpose() * gw_resid.asDiagonal() * sd.design.X;
    fit.vcov = fit.vcov_phase2 + ldlt.solve(ldlt.solve(phase1).transpose());
    fit.vcov_kind = VcovKind::design;
    out.fit = fit;
    return out;
}

}  // namespace twophase
