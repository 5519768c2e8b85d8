#include <doctest.h>

#include <cmath>
#include <vector>

#include "twophase/errors.hpp"
#include "twophase/sampling.hpp"
#include "twophase/simulation.hpp"

using namespace twophase;

namespace {

CohortFrame tiny_frame(std::vector<double> values) {
    CohortFrame frame(values.size());
    frame.add_column("v", std::move(values));
    return frame;
}

}  // namespace

TEST_CASE("quantile stratification uses left-closed order-statistic cuts") {
    CohortFrame frame = tiny_frame({1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
    auto res = stratify(frame, StratificationRule::quantile_cut("v", {0.2, 0.8}));
    REQUIRE(res.n_strata == 3);
    CHECK(res.table.strata[0].population == 2);
    CHECK(res.table.strata[1].population == 6);
    CHECK(res.table.strata[2].population == 2);
    CHECK_FALSE(res.has_empty);
}

TEST_CASE("cross-classification partitions the cohort") {
    Rng rng(12);
    CohortFrame frame = gen_priors_scenario(2000, rng);
    auto res = stratify(frame, StratificationRule::cross_classify({"A", "Y", "Z2"}));
    REQUIRE(res.n_strata == 8);
    std::int64_t total = 0;
    for (const auto& s : res.table.strata) total += s.population;
    CHECK(total == 2000);
}

TEST_CASE("constant column gives one stratum; missing cells are flagged") {
    CohortFrame frame = tiny_frame({5, 5, 5, 5});
    auto res = stratify(frame, StratificationRule::cross_classify({"v"}));
    CHECK(res.n_strata == 1);
    CHECK(res.table.strata[0].population == 4);

    // two binary columns with one combination absent
    CohortFrame frame2(4);
    frame2.add_column("a", {0, 0, 1, 1});
    frame2.add_column("b", {0, 1, 1, 1});
    auto res2 = stratify(frame2, StratificationRule::cross_classify({"a", "b"}));
    CHECK(res2.n_strata == 4);
    CHECK(res2.has_empty);
}

TEST_CASE("census sampling selects everyone with unit weight") {
    CohortFrame frame = tiny_frame({1, 2, 3, 4, 5, 6});
    frame.set_strata({0, 0, 0, 1, 1, 1}, 2);
    StratumTable table;
    table.strata = {{0, 3, 1.0}, {1, 3, 1.0}};
    Allocation alloc = wright_allocation(table, 6, 1);
    Rng rng(3);
    CohortFrame sampled = sample_stratified(frame, alloc, rng);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(sampled.phase2()[i] == 1);
        CHECK(sampled.weight()[i] == doctest::Approx(1.0));
        CHECK(sampled.prob()[i] == doctest::Approx(1.0));
    }
}

TEST_CASE("inclusion frequencies match the design probabilities") {
    CohortFrame frame = tiny_frame({10, 20, 30, 40});
    frame.set_strata({0, 0, 1, 1}, 2);
    Allocation alloc;
    alloc.counts = {1, 1};
    alloc.total = 2;
    alloc.n_min = 1;
    alloc.exhausted = {0, 0};

    const int reps = 10000;
    std::vector<int> hits(4, 0);
    Rng master(2025);
    for (int r = 0; r < reps; ++r) {
        Rng rng = master.split(static_cast<std::uint64_t>(r));
        CohortFrame sampled = sample_stratified(frame, alloc, rng);
        for (std::size_t i = 0; i < 4; ++i) hits[i] += sampled.phase2()[i];
    }
    for (std::size_t i = 0; i < 4; ++i) {
        const double freq = hits[i] / static_cast<double>(reps);
        CHECK(std::abs(freq - 0.5) < 0.015);  // 3 binomial SEs
    }
}

TEST_CASE("sampling with the same seed is identical") {
    Rng rng(91);
    CohortFrame frame = gen_priors_scenario(500, rng);
    StratumTable table;
    const auto sizes = frame.stratum_sizes();
    table.strata.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k)
        table.strata[k] = {static_cast<int>(k), sizes[k], 1.0};
    Allocation alloc = proportional_allocation(table, 100, 2);
    Rng r1(77), r2(77);
    CohortFrame a = sample_stratified(frame, alloc, r1);
    CohortFrame b = sample_stratified(frame, alloc, r2);
    CHECK(a.phase2() == b.phase2());
}

TEST_CASE("horvitz-thompson totals are unbiased over repeated draws") {
    CohortFrame frame = tiny_frame({3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8});
    frame.set_strata({0, 0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1}, 2);
    double population_total = 0.0;
    for (double v : frame.column("v")) population_total += v;

    Allocation alloc;
    alloc.counts = {3, 2};
    alloc.total = 5;
    alloc.n_min = 1;
    alloc.exhausted = {0, 0};

    const int reps = 10000;
    double sum = 0.0, sumsq = 0.0;
    Rng master(31337);
    for (int r = 0; r < reps; ++r) {
        Rng rng = master.split(static_cast<std::uint64_t>(r));
        CohortFrame sampled = sample_stratified(frame, alloc, rng);
        double ht = 0.0;
        for (std::size_t i = 0; i < sampled.n_rows(); ++i)
            if (sampled.phase2()[i]) ht += sampled.weight()[i] * sampled.column("v")[i];
        sum += ht;
        sumsq += ht * ht;
    }
    const double mean = sum / reps;
    const double se = std::sqrt((sumsq / reps - mean * mean) / reps);
    CHECK(std::abs(mean - population_total) < 3.0 * se);
}

TEST_CASE("two-wave run keeps the books straight") {
    Rng rng(2);
    CohortFrame cohort = gen_priors_scenario(1000, rng);
    ModelSpec outcome{Family::logistic, "Y", {"X", "Z1", "Z2"}, true};
    ModelSpec imputation{Family::logistic, "X", {"Z1", "Z2", "A", "Y"}, true};
    WavePlan plan;
    plan.sizes = {150, 150};

    Rng run_rng = rng.split(4);
    MultiwaveResult mw = multiwave_run(cohort, outcome, imputation, plan, 1, run_rng);
    REQUIRE(mw.log.waves.size() == 2);

    int total = 0;
    for (std::size_t k = 0; k < mw.log.waves[1].cumulative.size(); ++k) {
        total += mw.log.waves[1].cumulative[k];
        CHECK(mw.log.waves[1].cumulative[k] >= mw.log.waves[0].cumulative[k]);
    }
    CHECK(total == 300);

    int sampled_count = 0;
    for (std::size_t i = 0; i < mw.frame.n_rows(); ++i) {
        if (mw.frame.phase2()[i]) {
            ++sampled_count;
            CHECK(mw.frame.prob()[i] > 0.0);
            CHECK(mw.frame.prob()[i] <= 1.0);
        }
    }
    CHECK(sampled_count == 300);
    CHECK(mw.log.waves[1].beta_estimate.size() == 4);

    // same seed, same run
    Rng again = rng.split(4);
    MultiwaveResult mw2 = multiwave_run(cohort, outcome, imputation, plan, 1, again);
    CHECK(mw2.frame.phase2() == mw.frame.phase2());
}

TEST_CASE("single wave with the full budget is plain proportional sampling") {
    Rng rng(13);
    CohortFrame cohort = gen_priors_scenario(800, rng);
    ModelSpec outcome{Family::logistic, "Y", {"X", "Z1", "Z2"}, true};
    ModelSpec imputation{Family::logistic, "X", {"Z1", "Z2", "A", "Y"}, true};
    WavePlan plan;
    plan.sizes = {240};

    Rng run_rng = rng.split(1);
    MultiwaveResult mw = multiwave_run(cohort, outcome, imputation, plan, 1, run_rng);

    StratumTable table;
    const auto sizes = cohort.stratum_sizes();
    table.strata.resize(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k)
        table.strata[k] = {static_cast<int>(k), sizes[k], 1.0};
    Allocation prop = proportional_allocation(table, 240, 2);
    CHECK(mw.log.waves[0].cumulative == prop.counts);
    for (std::size_t i = 0; i < mw.frame.n_rows(); ++i)
        if (mw.frame.phase2()[i]) {
            const auto k = static_cast<std::size_t>(cohort.stratum()[i]);
            CHECK(mw.frame.weight()[i] ==
                  doctest::Approx(static_cast<double>(sizes[k]) / prop.counts[k]));
        }
}
