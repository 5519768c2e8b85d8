#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "twophase/allocation.hpp"
#include "twophase/estimators.hpp"
#include "twophase/rng.hpp"
#include "twophase/sampling.hpp"
#include "twophase/simulation.hpp"

using namespace twophase;

namespace {

StratumTable proportional_table(const CohortFrame& frame) {
    StratumTable table;
    const auto sizes = frame.stratum_sizes();
    table.strata.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k)
        table.strata[k] = {static_cast<int>(k), sizes[k], 1.0};
    return table;
}

}  // namespace

TEST_CASE("census ipw fit reproduces the full-cohort fit with zero variance") {
    Rng rng(21);
    CohortFrame frame = gen_priors_scenario(600, rng);
    ModelSpec outcome{Family::logistic, "Y", {"X", "Z1", "Z2"}, true};
    auto full = fit_model(frame, outcome);

    const auto sizes = frame.stratum_sizes();
    std::vector<std::uint8_t> r(frame.n_rows(), 1);
    std::vector<double> pi(frame.n_rows(), 1.0), w(frame.n_rows(), 1.0);
    frame.set_sampling(r, pi, w);

    auto fit = ipw_fit(frame, outcome);
    CHECK((fit.beta - full.beta).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((fit.influence - full.influence).lpNorm<Eigen::Infinity>() < 1e-8);
    // no subsampling variance; the total equals the full-cohort sandwich
    CHECK(fit.vcov_phase2.lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((fit.vcov - full.vcov).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("single-stratum intercept-only fit matches the SRS variance formula") {
    const int N = 40, n = 10;
    Rng rng(8);
    std::vector<double> y(N);
    for (int i = 0; i < N; ++i) y[i] = rng.normal(2.0, 1.5);
    CohortFrame frame(N);
    frame.add_column("y", y);
    frame.set_strata(std::vector<int>(N, 0), 1);

    StratumTable table;
    table.strata = {{0, N, 1.0}};
    Allocation alloc = wright_allocation(table, n, 2);
    Rng srng(99);
    CohortFrame sampled = sample_stratified(frame, alloc, srng);

    ModelSpec mean_model{Family::linear, "y", {}, true};
    auto fit = ipw_fit(sampled, mean_model);

    double sum = 0.0, ss = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < sampled.n_rows(); ++i)
        if (sampled.phase2()[i]) {
            sum += y[i];
            ++count;
        }
    const double mean = sum / count;
    for (std::size_t i = 0; i < sampled.n_rows(); ++i)
        if (sampled.phase2()[i]) ss += (y[i] - mean) * (y[i] - mean);
    const double s2 = ss / (count - 1);
    const double textbook = (1.0 - double(n) / N) * s2 / n;

    CHECK(fit.beta[0] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(fit.vcov_phase2(0, 0) == doctest::Approx(textbook).epsilon(1e-12));
}

TEST_CASE("census raking fit equals the full-cohort fit") {
    Rng rng(23);
    CohortFrame frame = gen_raking_scenario(800, rng);
    ModelSpec outcome{Family::linear, "Y", {"X", "Z1", "Z2"}, true};
    auto full = fit_model(frame, outcome);

    std::vector<std::uint8_t> r(frame.n_rows(), 1);
    std::vector<double> pi(frame.n_rows(), 1.0), w(frame.n_rows(), 1.0);
    frame.set_sampling(r, pi, w);

    ModelSpec imputation{Family::linear, "X", {"Xtilde", "Z1", "Z2", "Y"}, true};
    auto imp = fit_imputation_model(frame, imputation);
    auto xhat = predict_xhat(imp, frame, imputation);
    Eigen::MatrixXd aux = phase1_influence(frame, outcome, "X", xhat);

    auto rak = raking_fit(frame, outcome, aux);
    REQUIRE(rak.calibration.converged);
    CHECK((rak.fit.beta - full.beta).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(rak.fit.vcov_phase2.lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("pure-noise auxiliaries leave raking at the ipw fit") {
    Rng master(500);
    const int reps = 200;
    std::vector<double> ipw_draws, rak_draws;
    for (int r = 0; r < reps; ++r) {
        Rng rng = master.split(static_cast<std::uint64_t>(r));
        CohortFrame frame = gen_raking_scenario(800, rng);
        Allocation alloc = proportional_allocation(proportional_table(frame), 160, 2);
        Rng srng = rng.split(1);
        CohortFrame sampled = sample_stratified(frame, alloc, srng);

        ModelSpec outcome{Family::linear, "Y", {"X", "Z1", "Z2"}, true};
        auto ipw = ipw_fit(sampled, outcome);

        Eigen::MatrixXd noise(frame.n_rows(), 2);
        Rng nrng = rng.split(2);
        for (Eigen::Index i = 0; i < noise.rows(); ++i) {
            noise(i, 0) = nrng.normal();
            noise(i, 1) = nrng.normal();
        }
        auto rak = raking_fit(sampled, outcome, noise);
        if (!ipw.converged || !rak.fit.converged) continue;
        ipw_draws.push_back(ipw.beta[1]);
        rak_draws.push_back(rak.fit.beta[1]);
    }
    auto sd = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= x.size();
        double ss = 0.0;
        for (double v : x) ss += (v - m) * (v - m);
        return std::sqrt(ss / (x.size() - 1));
    };
    CHECK(sd(rak_draws) == doctest::Approx(sd(ipw_draws)).epsilon(0.10));
}

TEST_CASE("informative auxiliaries cut the raking variance well below ipw") {
    Rng master(501);
    const int reps = 200;
    std::vector<double> ipw_draws, rak_draws;
    for (int r = 0; r < reps; ++r) {
        Rng rng = master.split(static_cast<std::uint64_t>(r));
        CohortFrame frame = gen_raking_scenario(1000, rng);
        Allocation alloc = proportional_allocation(proportional_table(frame), 200, 2);
        Rng srng = rng.split(1);
        CohortFrame sampled = sample_stratified(frame, alloc, srng);

        ModelSpec outcome{Family::linear, "Y", {"X", "Z1", "Z2"}, true};
        auto ipw = ipw_fit(sampled, outcome);
        // oracle auxiliaries: the full-cohort influence values themselves
        auto full = fit_model(frame, outcome);
        auto rak = raking_fit(sampled, outcome, full.influence);
        if (!ipw.converged || !rak.fit.converged) continue;
        ipw_draws.push_back(ipw.beta[1]);
        rak_draws.push_back(rak.fit.beta[1]);
    }
    auto variance = [](const std::vector<double>& x) {
        double m = 0.0;
        for (double v : x) m += v;
        m /= x.size();
        double ss = 0.0;
        for (double v : x) ss += (v - m) * (v - m);
        return ss / (x.size() - 1);
    };
    CHECK(variance(rak_draws) < 0.8 * variance(ipw_draws));
}
