#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "twophase/calibration.hpp"
#include "twophase/errors.hpp"
#include "twophase/rng.hpp"

using namespace twophase;

TEST_CASE("pre-satisfied intercept constraint leaves the weights alone") {
    const int N = 8;
    Eigen::MatrixXd aux = Eigen::MatrixXd::Ones(N, 1);
    std::vector<std::uint8_t> r(N, 0);
    std::vector<double> w(N, 0.0);
    r[1] = r[4] = 1;
    w[1] = w[4] = 4.0;  // weights already sum to N
    auto cal = calibrate_weights(aux, r, w, CalibrationDistance::raking);
    REQUIRE(cal.converged);
    CHECK(cal.lambda.lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(cal.weights[1] == doctest::Approx(4.0));
    CHECK(cal.weights[4] == doctest::Approx(4.0));
}

TEST_CASE("two-unit calibration solves the constraint system exactly") {
    // cohort of 10; auxiliary totals (10, 4); sampled rows carry a = (1,0)
    // and (1,2) with design weight 2 each
    const int N = 10;
    Eigen::MatrixXd aux(N, 2);
    aux.col(0).setOnes();
    aux.col(1).setConstant(0.25);  // eight background rows contribute 2
    aux(0, 1) = 0.0;
    aux(1, 1) = 2.0;
    std::vector<std::uint8_t> r(N, 0);
    std::vector<double> w(N, 0.0);
    r[0] = r[1] = 1;
    w[0] = w[1] = 2.0;

    // oracle: v0 + v1 = 10 and 0*v0 + 2*v1 = 4 as a direct 2x2 solve
    Eigen::Matrix2d constraints;
    constraints << 1, 1, 0, 2;
    Eigen::Vector2d totals(10, 4);
    Eigen::Vector2d oracle = constraints.colPivHouseholderQr().solve(totals);
    CHECK(oracle[0] == doctest::Approx(8.0));
    CHECK(oracle[1] == doctest::Approx(2.0));

    for (auto distance : {CalibrationDistance::linear, CalibrationDistance::raking}) {
        auto cal = calibrate_weights(aux, r, w, distance);
        REQUIRE(cal.converged);
        CHECK_FALSE(cal.fell_back);
        CHECK(cal.weights[0] == doctest::Approx(oracle[0]).epsilon(1e-9));
        CHECK(cal.weights[1] == doctest::Approx(oracle[1]).epsilon(1e-9));
        CHECK(cal.max_violation < 1e-8);
    }
}

TEST_CASE("converged calibration reproduces auxiliary totals") {
    Rng rng(64);
    const int N = 400;
    Eigen::MatrixXd aux(N, 3);
    std::vector<std::uint8_t> r(N, 0);
    std::vector<double> w(N, 0.0);
    for (int i = 0; i < N; ++i) {
        aux(i, 0) = rng.normal();
        aux(i, 1) = rng.uniform();
        aux(i, 2) = rng.bernoulli(0.3);
        if (rng.bernoulli(0.25)) {
            r[i] = 1;
            w[i] = 4.0;
        }
    }
    if (std::count(r.begin(), r.end(), 1) < 10) r[0] = 1, w[0] = 4.0;

    auto cal = calibrate_weights(aux, r, w, CalibrationDistance::raking);
    REQUIRE(cal.converged);
    Eigen::VectorXd target = aux.colwise().sum();
    Eigen::VectorXd achieved = Eigen::VectorXd::Zero(3);
    double weight_total = 0.0;
    for (int i = 0; i < N; ++i)
        if (r[i]) {
            achieved += cal.weights[i] * aux.row(i).transpose();
            weight_total += cal.weights[i];
            CHECK(cal.weights[i] > 0.0);  // raking keeps weights positive
        }
    CHECK(weight_total == doctest::Approx(double(N)).epsilon(1e-9));
    for (int j = 0; j < 3; ++j)
        CHECK(achieved[j] == doctest::Approx(target[j]).epsilon(1e-8));
}

TEST_CASE("linear calibration reproduces the GREG identity for totals") {
    Rng rng(12);
    const int N = 120;
    Eigen::MatrixXd aux(N, 2);
    Eigen::VectorXd y(N);
    std::vector<std::uint8_t> r(N, 0);
    std::vector<double> w(N, 0.0);
    for (int i = 0; i < N; ++i) {
        aux(i, 0) = rng.normal();
        aux(i, 1) = rng.uniform() * 2.0;
        y[i] = 1.0 + aux(i, 0) + 0.5 * aux(i, 1) + rng.normal();
        if (i % 4 == 0) {
            r[i] = 1;
            w[i] = 4.0;
        }
    }
    auto cal = calibrate_weights(aux, r, w, CalibrationDistance::linear);
    REQUIRE(cal.converged);

    double greg = 0.0;
    for (int i = 0; i < N; ++i)
        if (r[i]) greg += cal.weights[i] * y[i];

    // classical GREG: HT + (T_B - tHT_B)' * weighted regression slope,
    // with B = (1, a)
    Eigen::MatrixXd B(N, 3);
    B.col(0).setOnes();
    B.rightCols(2) = aux;
    Eigen::Vector3d tb = B.colwise().sum();
    Eigen::Vector3d tb_ht = Eigen::Vector3d::Zero();
    Eigen::Matrix3d G = Eigen::Matrix3d::Zero();
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    double y_ht = 0.0;
    for (int i = 0; i < N; ++i) {
        if (!r[i]) continue;
        tb_ht += w[i] * B.row(i).transpose();
        G += w[i] * B.row(i).transpose() * B.row(i);
        c += w[i] * B.row(i).transpose() * y[i];
        y_ht += w[i] * y[i];
    }
    Eigen::Vector3d slope = G.ldlt().solve(c);
    const double greg_identity = y_ht + (tb - tb_ht).dot(slope);
    CHECK(greg == doctest::Approx(greg_identity).epsilon(1e-9));
}

TEST_CASE("unreachable raking constraints fall back to the linear distance") {
    // the cohort total of the second column sits outside the cone the
    // positive raking weights can reach
    const int N = 3;
    Eigen::MatrixXd aux(N, 2);
    aux << 1, 0, 1, 1, 1, -5;
    std::vector<std::uint8_t> r{1, 1, 0};
    std::vector<double> w{1.0, 1.0, 0.0};
    auto cal = calibrate_weights(aux, r, w, CalibrationDistance::raking);
    REQUIRE(cal.converged);
    CHECK(cal.fell_back);
    CHECK(cal.distance == CalibrationDistance::linear);
    // constraints still met, with a negative weight
    CHECK(cal.weights[0] + cal.weights[1] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(cal.weights[1] * 1.0 == doctest::Approx(-4.0).epsilon(1e-8));
}

TEST_CASE("auxiliary direction missing from the sample is rejected") {
    const int N = 6;
    Eigen::MatrixXd aux(N, 2);
    aux.col(0).setOnes();
    aux.col(1).setZero();
    aux(5, 1) = 3.0;  // only the unsampled row varies
    std::vector<std::uint8_t> r{1, 1, 1, 0, 0, 0};
    std::vector<double> w{2, 2, 2, 0, 0, 0};
    CHECK_THROWS_AS(calibrate_weights(aux, r, w, CalibrationDistance::raking),
                    RankDeficientConstraints);
}
