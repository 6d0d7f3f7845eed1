#include <array>

#include "support.hpp"

using namespace gc_test;

TEST_CASE("zero delay gives the merged 2-state model", "[oracle]") {
    const auto m = markovian_limit(reference_model());
    const double h = 1e-11;
    const auto am = build_augmented(m, h);
    CHECK(am.N == 0);
    CHECK(am.dim() == 2);
    CHECK(am.F == Eigen::MatrixXd(Mat2::Identity() + h * m.A));
    CHECK(am.G == Eigen::MatrixXd(m.B + m.Bd));
    CHECK(am.H == Eigen::MatrixXd(h * m.C));
    CHECK(am.J == m.Dd);
    CHECK_FALSE(am.cross_noise_cov().isZero(0));
}

TEST_CASE("N = 2 stacked structure", "[oracle]") {
    const auto m = reference_model();
    const double h = m.T / 2;
    const auto am = build_augmented(m, h);
    REQUIRE(am.N == 2);
    REQUIRE(am.dim() == 10);  // x_k, x_k-1, x_k-2, dw_k-1, dw_k-2

    const Eigen::MatrixXd& F = am.F;
    CHECK(F.block(0, 0, 2, 2) == Eigen::MatrixXd(Mat2::Identity() + h * m.A));
    CHECK(F.block(0, 4, 2, 2) == Eigen::MatrixXd(h * m.Ad));
    CHECK(F.block(0, 8, 2, 2) == Eigen::MatrixXd(m.Bd));
    CHECK(F.block(2, 0, 2, 2) == Eigen::MatrixXd(Mat2::Identity()));
    CHECK(F.block(4, 2, 2, 2) == Eigen::MatrixXd(Mat2::Identity()));
    CHECK(F.block(8, 6, 2, 2) == Eigen::MatrixXd(Mat2::Identity()));
    // every other block of the shift rows is exactly zero
    for (Eigen::Index r = 2; r < 10; r += 2)
        for (Eigen::Index c = 0; c < 10; c += 2) {
            const bool shift = (r == 2 && c == 0) || (r == 4 && c == 2) || (r == 8 && c == 6);
            if (!shift) CHECK(F.block(r, c, 2, 2).isZero(0));
        }

    CHECK(am.G.block(0, 0, 2, 2) == Eigen::MatrixXd(m.B));
    CHECK(am.G.block(6, 0, 2, 2) == Eigen::MatrixXd(Mat2::Identity()));
    CHECK(am.H.block(0, 0, 2, 2) == Eigen::MatrixXd(h * m.C));
    CHECK(am.H.block(0, 4, 2, 2) == Eigen::MatrixXd(h * m.Cd));
    CHECK(am.H.block(0, 8, 2, 2) == Eigen::MatrixXd(m.Dd));
    // dw_k-N is part of the state, so the fresh increment reaches only the process
    CHECK(am.cross_noise_cov().isZero(0));

    const Eigen::MatrixXd M = Eigen::MatrixXd::Random(10, 7);
    CHECK((am.apply_transition(M) - F * M).norm() < 1e-12 * (F * M).norm());
}

TEST_CASE("non-divisible step is rejected", "[oracle]") {
    CHECK_THROWS_AS(build_augmented(reference_model(), reference_model().T / 7.5), ConfigError);
}

TEST_CASE("stacked simulation matches the delay simulator", "[oracle]") {
    const auto m = reference_model();
    for (auto pre : {Prehistory::zero, Prehistory::hold_initial}) {
        for (std::size_t div : {1, 3, 20}) {
            const double h = m.T / double(div);
            const auto grid = make_grid(m.T, h, 8e-8);
            const auto dw = draw_increments(grid, 77);
            const Vec2 x0(-4.0, 4.0);
            const auto direct = simulate_with_noise(m, grid, x0, pre, dw);
            const auto stacked = simulate_augmented(build_augmented(m, h), grid, x0, pre, dw);
            double worst = 0;
            for (std::size_t k = 0; k < direct.x.size(); ++k)
                worst = std::max(worst, (direct.x[k] - stacked.x[k]).norm() / std::max(1.0, direct.x[k].norm()));
            for (std::size_t k = 0; k < direct.dy.size(); ++k)
                worst = std::max(worst, (direct.dy[k] - stacked.dy[k]).norm() / std::max(1e-3, direct.dy[k].norm()));
            CHECK(worst < 1e-12);
        }
    }
}

TEST_CASE("three predictor steps by hand", "[oracle]") {
    // Merged model at a coarse step so every quantity is O(1).
    StateSpaceModel m;
    m.A << -0.5, 1.0, -1.0, -0.5;
    m.Bd << 0.0, 0.6, -0.6, 0.0;
    m.C << 0.0, 0.4, -0.4, 0.0;
    m.Dd = Mat2::Identity();
    const double h = 0.1;
    const auto am = build_augmented(m, h);

    const auto grid = make_grid(0.0, h, 3 * h);
    const std::vector<Vec2> dy{{0.12, -0.05}, {-0.30, 0.21}, {0.07, 0.02}};
    const auto est = augmented_kalman(am, {grid, dy}, Vec2(1.0, 0.0), Mat2::Identity());
    auto close = [](double got, double want) { return std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)); };

    using A2 = std::array<std::array<double, 2>, 2>;
    auto mul = [](const A2& a, const A2& b) {
        A2 r{};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        return r;
    };
    auto tr = [](const A2& a) { return A2{{{a[0][0], a[1][0]}, {a[0][1], a[1][1]}}}; };
    auto add = [](const A2& a, const A2& b, double s = 1.0) {
        return A2{{{a[0][0] + s * b[0][0], a[0][1] + s * b[0][1]}, {a[1][0] + s * b[1][0], a[1][1] + s * b[1][1]}}};
    };
    auto inv = [](const A2& a) {
        const double d = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        return A2{{{a[1][1] / d, -a[0][1] / d}, {-a[1][0] / d, a[0][0] / d}}};
    };
    const A2 F{{{1 - 0.05, 0.1}, {-0.1, 1 - 0.05}}};
    const A2 G{{{0.0, 0.6}, {-0.6, 0.0}}};
    const A2 H{{{0.0, 0.04}, {-0.04, 0.0}}};
    const A2 Q = mul(G, tr(G));
    const A2 Qh{{{h * Q[0][0], h * Q[0][1]}, {h * Q[1][0], h * Q[1][1]}}};
    const A2 Sh{{{h * G[0][0], h * G[0][1]}, {h * G[1][0], h * G[1][1]}}};
    const A2 Rh{{{h, 0.0}, {0.0, h}}};

    std::array<double, 2> x{1.0, 0.0};
    A2 P{{{1.0, 0.0}, {0.0, 1.0}}};
    for (int k = 0; k < 3; ++k) {
        const A2 S = add(mul(mul(H, P), tr(H)), Rh);
        const A2 K = mul(add(mul(mul(F, P), tr(H)), Sh), inv(S));
        const std::array<double, 2> nu{dy[k](0) - (H[0][0] * x[0] + H[0][1] * x[1]),
                                       dy[k](1) - (H[1][0] * x[0] + H[1][1] * x[1])};
        CHECK(close(est.innovations[k](0), nu[0]));
        CHECK(close(est.innovations[k](1), nu[1]));
        x = {F[0][0] * x[0] + F[0][1] * x[1] + K[0][0] * nu[0] + K[0][1] * nu[1],
             F[1][0] * x[0] + F[1][1] * x[1] + K[1][0] * nu[0] + K[1][1] * nu[1]};
        P = add(add(mul(mul(F, P), tr(F)), Qh), mul(mul(K, S), tr(K)), -1.0);
        UNSCOPED_INFO("step " << k + 1 << ": xhat = (" << x[0] << ", " << x[1] << "), P11 = " << P[0][0]
                              << ", P12 = " << P[0][1] << ", P22 = " << P[1][1]);
        CHECK(close(est.xhat[k + 1](0), x[0]));
        CHECK(close(est.xhat[k + 1](1), x[1]));
        CHECK(close(est.P_top[k + 1](0, 0), P[0][0]));
        CHECK(close(est.P_top[k + 1](0, 1), P[0][1]));
        CHECK(close(est.P_top[k + 1](1, 1), P[1][1]));
    }
}

TEST_CASE("noise-free exact start has zero error", "[oracle]") {
    const auto m = reference_model();
    const double h = m.T / 20;
    SimConfig c;
    c.h = h;
    c.horizon = 1e-7;
    c.x0 = {-4.0, 4.0};
    c.noise_variance_scale = 0.0;
    const auto tr = simulate(m, c);
    const auto est = augmented_kalman(build_augmented(m, h), measurements(tr), c.x0, Mat2::Identity());
    for (std::size_t k = 0; k < tr.x.size(); ++k) CHECK((est.xhat[k] - tr.x[k]).norm() <= 1e-12 * (1.0 + tr.x[k].norm()) * double(k));
    CHECK(est.cross_delay.size() == tr.x.size());
    CHECK(est.cross_delay[tr.grid.delay_steps - 1].isZero(0));
}

TEST_CASE("singular innovation covariance is reported", "[oracle]") {
    StateSpaceModel m;
    m.Dd.setZero();
    const double h = 0.1;
    const auto am = build_augmented(m, h);
    const auto grid = make_grid(0.0, h, 3 * h);
    const std::vector<Vec2> dy(3, Vec2::Zero());
    CHECK_THROWS_AS(augmented_kalman(am, {grid, dy}, Vec2::Zero(), Mat2::Zero()), ModelError);
}

TEST_CASE("Riccati flow settles on the algebraic solution", "[oracle]") {
    const auto merged = markovian_limit(reference_model());
    const auto sol = riccati_markov(merged, Mat2::Identity(), 1e-7, 1e-11);
    const Mat2 P = sol.P.back();
    const auto t = markov_terms(merged);
    const double scale = t.Q.norm();
    CHECK(are_residual(merged, P).norm() / scale < 1e-6);
    CHECK(rel(P, Mat2::Identity()) < 1e-6);  // the merged cavity is measured perfectly through its own emission
    CHECK_THROWS_AS(riccati_markov(reference_model(), Mat2::Identity(), 1e-7, 1e-11), ConfigError);
}

TEST_CASE("without noise or measurement the flow is Lyapunov decay", "[oracle]") {
    StateSpaceModel m;
    m.A << -1.0, 2.0, -2.0, -1.0;
    const auto sol = riccati_markov(m, 2.0 * Mat2::Identity(), 5.0, 0.01);
    for (std::size_t k = 1; k < sol.P.size(); ++k) CHECK(sol.P[k].trace() < sol.P[k - 1].trace());
    // P(t) = e^{At} P0 e^{A^T t} = 2 e^{-2t} I for this rotation-plus-decay A
    CHECK(sol.P.back().trace() == Catch::Approx(4.0 * std::exp(-10.0)).epsilon(1e-8));
}
