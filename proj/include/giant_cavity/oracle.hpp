#pragma once

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "covariance.hpp"
#include "filter.hpp"
#include "model.hpp"
#include "sde_sim.hpp"
#include "types.hpp"

namespace giant_cavity {

/// Euler discretization of the delay model lifted to a Markov state
///   z_k = [x_k, x_{k-1}, ..., x_{k-N}, dw_{k-1}, ..., dw_{k-N}]
/// driven by the fresh increment dw_k ~ N(0, h I):
///   z_{k+1} = F z_k + G dw_k,   dy_k = H z_k + J dw_k.
/// For N = 0 the state is x_k alone and J = D_d carries the noise shared
/// with the process.
struct AugmentedModel {
    std::size_t N = 0;
    double h = 0.0;
    Eigen::MatrixXd F, G, H;
    Mat2 J = Mat2::Zero();

    // Blocks of the Euler recursion, kept for the structured product.
    Mat2 top_self = Mat2::Identity();
    Mat2 top_delayed = Mat2::Zero();
    Mat2 top_noise = Mat2::Zero();

    Eigen::Index dim() const { return F.rows(); }
    Eigen::Index state_slot(std::size_t i) const { return static_cast<Eigen::Index>(2 * i); }
    Eigen::Index noise_slot(std::size_t i) const { return static_cast<Eigen::Index>(2 * (N + 1) + 2 * (i - 1)); }

    Eigen::MatrixXd process_noise_cov() const { return h * G * G.transpose(); }
    Mat2 measurement_noise_cov() const { return h * J * J.transpose(); }
    Eigen::MatrixXd cross_noise_cov() const { return h * G * J.transpose(); }

    /// F * M using the shift-register structure, O(dim * cols).
    Eigen::MatrixXd apply_transition(const Eigen::MatrixXd& M) const {
        if (N == 0) return top_self * M;
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(M.rows(), M.cols());
        out.topRows(2) = top_self * M.topRows(2) + top_delayed * M.middleRows(state_slot(N), 2) +
                         top_noise * M.middleRows(noise_slot(N), 2);
        out.middleRows(2, static_cast<Eigen::Index>(2 * N)) = M.topRows(static_cast<Eigen::Index>(2 * N));
        if (N > 1)
            out.middleRows(noise_slot(2), static_cast<Eigen::Index>(2 * (N - 1))) =
                M.middleRows(noise_slot(1), static_cast<Eigen::Index>(2 * (N - 1)));
        return out;
    }
};

inline std::size_t delay_cells(double T, double h) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("step must be positive and finite", "h");
    const double cells = std::round(T / h);
    if (std::abs(cells * h - T) > 1e-6 * T || (T > 0.0 && cells < 1.0))
        throw ConfigError("step does not divide the delay", "h");
    return static_cast<std::size_t>(cells);
}

inline AugmentedModel build_augmented(const StateSpaceModel& m, double h) {
    if (!is_finite(m)) throw ConfigError("model has non-finite entries or a negative delay", "model");
    AugmentedModel am;
    am.N = delay_cells(m.T, h);
    am.h = h;
    const std::size_t N = am.N;

    if (N == 0) {
        am.top_self = Mat2::Identity() + h * (m.A + m.Ad);
        am.F = am.top_self;
        am.G = m.B + m.Bd;
        am.H = h * (m.C + m.Cd);
        am.J = m.Dd;
        return am;
    }

    const auto n = static_cast<Eigen::Index>(2 * (N + 1) + 2 * N);
    am.top_self = Mat2::Identity() + h * m.A;
    am.top_delayed = h * m.Ad;
    am.top_noise = m.Bd;

    am.F = Eigen::MatrixXd::Zero(n, n);
    am.F.block(0, 0, 2, 2) = am.top_self;
    am.F.block(0, am.state_slot(N), 2, 2) += am.top_delayed;
    am.F.block(0, am.noise_slot(N), 2, 2) = am.top_noise;
    for (std::size_t i = 1; i <= N; ++i) am.F.block(am.state_slot(i), am.state_slot(i - 1), 2, 2).setIdentity();
    for (std::size_t i = 2; i <= N; ++i) am.F.block(am.noise_slot(i), am.noise_slot(i - 1), 2, 2).setIdentity();

    am.G = Eigen::MatrixXd::Zero(n, 2);
    am.G.block(0, 0, 2, 2) = m.B;
    am.G.block(am.noise_slot(1), 0, 2, 2).setIdentity();

    am.H = Eigen::MatrixXd::Zero(2, n);
    am.H.block(0, 0, 2, 2) = h * m.C;
    am.H.block(0, am.state_slot(N), 2, 2) += h * m.Cd;
    am.H.block(0, am.noise_slot(N), 2, 2) = m.Dd;
    am.J.setZero();
    return am;
}

/// Stacked state at k = 0 for a known start and known noise prehistory.
inline Eigen::VectorXd initial_stack(const AugmentedModel& am, const Vec2& x0, Prehistory pre,
                                     std::span<const Vec2> noise_prehistory) {
    Eigen::VectorXd z = Eigen::VectorXd::Zero(am.dim());
    z.head<2>() = x0;
    for (std::size_t i = 1; i <= am.N; ++i) {
        if (pre == Prehistory::hold_initial) z.segment<2>(am.state_slot(i)) = x0;
        // noise_prehistory is ordered from j = -N, so dw_{-i} sits at N - i.
        if (!noise_prehistory.empty()) z.segment<2>(am.noise_slot(i)) = noise_prehistory[am.N - i];
    }
    return z;
}

/// Run the stacked recursion on a shared noise record (dw for j = -N..K-1).
inline Trajectory simulate_augmented(const AugmentedModel& am, const TimeGrid& grid, const Vec2& x0, Prehistory pre,
                                     const std::vector<Vec2>& dw) {
    if (grid.delay_steps != am.N) throw ConfigError("grid delay does not match the augmented model", "grid");
    if (dw.size() != grid.delay_steps + grid.steps) throw ConfigError("noise record length does not match", "dw");
    Trajectory tr;
    tr.grid = grid;
    tr.prehistory = pre;
    tr.dw = dw;
    tr.x.resize(grid.steps + 1);
    tr.dy.resize(grid.steps);
    Eigen::VectorXd z = initial_stack(am, x0, pre, std::span<const Vec2>(dw).first(am.N));
    tr.x[0] = z.head<2>();
    for (std::size_t k = 0; k < grid.steps; ++k) {
        const Vec2& fresh = dw[k + am.N];
        tr.dy[k] = am.H * z + am.J * fresh;
        z = am.F * z + am.G * fresh;
        tr.x[k + 1] = z.head<2>();
    }
    return tr;
}

/// Exact discrete Kalman predictor on the stacked model.
struct AugmentedEstimate {
    std::vector<Vec2> xhat;         // top block of E[z_k | dy_0..dy_{k-1}]
    std::vector<Vec2> innovations;  // dy_k - H z^_k
    std::vector<Mat2> P_top;        // E[e_k e_k^T]
    std::vector<Mat2> cross_delay;  // E[e_k e_{k-N}^T]; zero while x_{k-N} is known prehistory
    Eigen::MatrixXd final_covariance;
};

/// Standard one-step Kalman predictor with correlated process and
/// measurement noise (cross-covariance h G J^T). Prehistory states are
/// known (zero) or tied to x_0 (hold-initial); prehistory noise is
/// unknown with covariance h I.
inline AugmentedEstimate augmented_kalman(const AugmentedModel& am, MeasurementView y, const Vec2& xhat0,
                                          const Mat2& p0_init, Prehistory pre = Prehistory::zero) {
    if (y.grid.delay_steps != am.N || std::abs(y.grid.h - am.h) > 1e-12 * am.h)
        throw ConfigError("measurement grid does not match the augmented model", "grid");
    if (y.dy.size() != y.grid.steps) throw ConfigError("measurement record length does not match its grid", "dy");
    require_symmetric_psd(p0_init, "P0");

    const std::size_t N = am.N;
    const double h = am.h;
    Eigen::VectorXd z = initial_stack(am, xhat0, pre, {});
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(am.dim(), am.dim());
    P.topLeftCorner<2, 2>() = p0_init;
    if (pre == Prehistory::hold_initial)
        for (std::size_t i = 0; i <= N; ++i)
            for (std::size_t j = 0; j <= N; ++j) P.block(am.state_slot(i), am.state_slot(j), 2, 2) = p0_init;
    for (std::size_t i = 1; i <= N; ++i) P.block(am.noise_slot(i), am.noise_slot(i), 2, 2) = h * Mat2::Identity();

    const Eigen::MatrixXd Q = am.process_noise_cov();
    const Eigen::MatrixXd S_cross = am.cross_noise_cov();
    const Mat2 R = am.measurement_noise_cov();

    AugmentedEstimate out;
    const std::size_t steps = y.grid.steps;
    out.xhat.reserve(steps + 1);
    out.P_top.reserve(steps + 1);
    out.cross_delay.reserve(steps + 1);
    out.innovations.reserve(steps);

    auto record = [&] {
        out.xhat.push_back(z.head<2>());
        out.P_top.push_back(P.topLeftCorner<2, 2>());
        out.cross_delay.push_back(N == 0 ? Mat2(P.topLeftCorner<2, 2>())
                                         : Mat2(P.block(0, am.state_slot(N), 2, 2)));
    };
    record();

    for (std::size_t k = 0; k < steps; ++k) {
        const Mat2 S = am.H * P * am.H.transpose() + R;
        Eigen::LDLT<Mat2> ldlt(S);
        if (ldlt.info() != Eigen::Success || !(S.determinant() > 0.0))
            throw ModelError("innovation covariance is singular at step " + std::to_string(k));
        const Eigen::MatrixXd FP = am.apply_transition(P);
        const Eigen::MatrixXd FPFt = am.apply_transition(FP.transpose());
        const Eigen::MatrixXd cross = FP * am.H.transpose() + S_cross;
        const Eigen::MatrixXd gainT = ldlt.solve(cross.transpose());  // (cross S^-1)^T
        const Vec2 nu = y.dy[k] - am.H * z;
        z = am.apply_transition(z) + gainT.transpose() * nu;
        P = FPFt + Q - gainT.transpose() * S * gainT;
        P = 0.5 * (P + P.transpose()).eval();
        out.innovations.push_back(nu);
        record();
    }
    out.final_covariance = P;
    return out;
}

/// Kalman-Bucy Riccati flow of a zero-delay model, with the noise shared
/// between process (B + B_d) and measurement (D_d):
///   dP/dt = A P + P A^T + Q - (P C^T + S) R^-1 (P C^T + S)^T
/// integrated with classical RK4 on `substeps` sub-intervals per step.
struct RiccatiSolution {
    double h = 0.0;
    std::vector<Mat2> P;
};

struct MarkovTerms {
    Mat2 A, Q, C, S, R_inv;
};

inline MarkovTerms markov_terms(const StateSpaceModel& m) {
    if (m.T != 0.0) throw ConfigError("Riccati oracle needs a zero-delay model", "T");
    const Mat2 noise = m.B + m.Bd;
    MarkovTerms t;
    t.A = m.A + m.Ad;
    t.Q = noise * noise.transpose();
    t.C = m.C + m.Cd;
    t.S = noise * m.Dd.transpose();
    t.R_inv = measurement_precision(m);
    return t;
}

inline Mat2 riccati_rhs(const MarkovTerms& t, const Mat2& P) {
    const Mat2 k = P * t.C.transpose() + t.S;
    return t.A * P + P * t.A.transpose() + t.Q - k * t.R_inv * k.transpose();
}

/// Residual of the algebraic Riccati equation at P.
inline Mat2 are_residual(const StateSpaceModel& m, const Mat2& P) { return riccati_rhs(markov_terms(m), P); }

inline RiccatiSolution riccati_markov(const StateSpaceModel& m, const Mat2& p0_init, double horizon, double h,
                                      int substeps = 4) {
    const MarkovTerms t = markov_terms(m);
    require_symmetric_psd(p0_init, "P0");
    if (substeps < 1) throw ConfigError("substeps must be positive", "substeps");
    const TimeGrid grid = make_grid(0.0, h, horizon);
    const double dt = h / substeps;

    RiccatiSolution sol;
    sol.h = h;
    sol.P.reserve(grid.steps + 1);
    Mat2 P = p0_init;
    sol.P.push_back(P);
    for (std::size_t k = 0; k < grid.steps; ++k) {
        for (int s = 0; s < substeps; ++s) {
            const Mat2 k1 = riccati_rhs(t, P);
            const Mat2 k2 = riccati_rhs(t, P + 0.5 * dt * k1);
            const Mat2 k3 = riccati_rhs(t, P + 0.5 * dt * k2);
            const Mat2 k4 = riccati_rhs(t, P + dt * k3);
            P = symmetrized(P + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        }
        sol.P.push_back(P);
    }
    return sol;
}

}  // namespace giant_cavity
