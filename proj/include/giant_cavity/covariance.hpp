#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "model.hpp"
#include "types.hpp"

namespace giant_cavity {

enum class Integrator { euler, rk4 };

inline std::string to_string(Integrator i) { return i == Integrator::euler ? "euler" : "rk4"; }

inline Integrator integrator_from_string(const std::string& s) {
    if (s == "euler") return Integrator::euler;
    if (s == "rk4") return Integrator::rk4;
    throw ConfigError("unknown integrator '" + s + "' (expected euler or rk4)", "integrator");
}

/// G = P0 C^T + P1 C_d^T and the filter gain K = G (D_d D_d^T)^-1.
struct Gain {
    Mat2 G;
    Mat2 K;
};

inline Gain gain(const Mat2& p0, const Mat2& p1, const StateSpaceModel& m) {
    Gain g;
    g.G = p0 * m.C.transpose() + p1 * m.Cd.transpose();
    g.K = g.G * measurement_precision(m);
    return g;
}

/// Error covariance P_0(t_k) and delayed cross-covariances
/// P_j(t_k) = E[e(t) e^T(t - jT)], j = 1..j_max, plus the gain history.
struct CovarianceLattice {
    TimeGrid grid;
    std::size_t j_max = 0;
    Integrator integrator = Integrator::euler;
    std::vector<std::vector<Mat2>> P;  // P[j][k]
    std::vector<Mat2> G;               // G[k]
    std::vector<Mat2> gain;            // K[k]
    double max_relative_asymmetry = 0.0;  // largest ||P0 - P0^T|| / ||P0|| before symmetrization

    const Mat2& p(std::size_t j, std::size_t k) const { return P.at(j).at(k); }
};

inline void require_symmetric_psd(const Mat2& p, const char* field) {
    if (!p.allFinite()) throw ConfigError("initial covariance must be finite", field);
    const double scale = std::max(1.0, p.norm());
    if ((p - p.transpose()).norm() > 1e-12 * scale) throw ConfigError("initial covariance must be symmetric", field);
    Eigen::SelfAdjointEigenSolver<Mat2> es(symmetrized(p));
    if (es.eigenvalues().minCoeff() < -1e-12 * scale)
        throw ConfigError("initial covariance must be positive semidefinite", field);
}

namespace detail {

/// Right-hand sides of the coupled covariance ODEs for the active set
/// {P_0..P_m}. `kk` is the grid index used for delayed lookups.
struct LatticeRhs {
    const StateSpaceModel& m;
    const Mat2& precision;
    const CovarianceLattice& lat;

    std::vector<Mat2> operator()(const std::vector<Mat2>& cur, std::size_t kk) const {
        const std::size_t n = lat.grid.delay_steps;
        const std::size_t active = cur.size();
        const Mat2 p1 = active > 1 ? cur[1] : Mat2::Zero();
        const Mat2 k_now = (cur[0] * m.C.transpose() + p1 * m.Cd.transpose()) * precision;
        const Mat2 a_cl = m.A - k_now * m.C;
        const Mat2 ad_cl = m.Ad - k_now * m.Cd;
        const Mat2 bd_cl = m.Bd - k_now * m.Dd;

        std::vector<Mat2> d(active);
        d[0] = a_cl * cur[0] + cur[0] * a_cl.transpose() + ad_cl * p1.transpose() + p1 * ad_cl.transpose() +
               m.B * m.B.transpose() + bd_cl * bd_cl.transpose();

        for (std::size_t j = 1; j < active; ++j) {
            const std::size_t lag = kk - j * n;
            const Mat2& k_lag = lat.gain[lag];
            const Mat2 a_lag = m.A - k_lag * m.C;
            const Mat2 ad_lag = m.Ad - k_lag * m.Cd;
            const Mat2& prev_delayed = lat.P[j - 1][kk - n];
            const Mat2 next = j + 1 < active ? cur[j + 1] : Mat2::Zero();
            d[j] = a_cl * cur[j] + ad_cl * prev_delayed + cur[j] * a_lag.transpose() + next * ad_lag.transpose();
            if (j == 1) d[j] += bd_cl * m.B.transpose();
        }
        return d;
    }
};

inline void axpy(std::vector<Mat2>& y, double a, const std::vector<Mat2>& x) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

}  // namespace detail

/// Interval-wise propagation of P_0 and the cross-covariances.
///
/// On [mT, (m+1)T) the active set {P_0..P_m} is integrated jointly; the
/// highest index closes with P_{m+1} = 0, delayed quantities P_{j-1}(t-T)
/// and K(t-jT) are read back from the lattice, and each P_j starts from 0
/// at t = jT. A zero-delay model is collapsed with markovian_limit first.
inline CovarianceLattice propagate(const StateSpaceModel& model, const Mat2& p0_init, double horizon, double h,
                                   Integrator integrator = Integrator::euler) {
    if (!is_finite(model)) throw ConfigError("model has non-finite entries or a negative delay", "model");
    require_symmetric_psd(p0_init, "P0");

    const bool markov = model.T == 0.0;
    const StateSpaceModel m = markov ? markovian_limit(model) : model;
    const Mat2 precision = measurement_precision(m);

    CovarianceLattice lat;
    lat.grid = make_grid(model.T, h, horizon);
    lat.integrator = integrator;
    const std::size_t n = lat.grid.delay_steps;
    const std::size_t steps = lat.grid.steps;
    lat.j_max = markov ? 0 : steps / n;
    lat.P.assign(lat.j_max + 1, std::vector<Mat2>(steps + 1, Mat2::Zero()));
    lat.G.resize(steps + 1);
    lat.gain.resize(steps + 1);
    lat.P[0][0] = symmetrized(p0_init);

    const detail::LatticeRhs rhs{m, precision, lat};
    std::vector<Mat2> cur;
    for (std::size_t k = 0;; ++k) {
        const Mat2 p1 = lat.j_max >= 1 ? lat.P[1][k] : Mat2::Zero();
        const Gain g = gain(lat.P[0][k], p1, m);
        lat.G[k] = g.G;
        lat.gain[k] = g.K;
        if (k == steps) break;

        const std::size_t active = markov ? 1 : std::min(lat.j_max, k / n) + 1;
        cur.resize(active);
        for (std::size_t j = 0; j < active; ++j) cur[j] = lat.P[j][k];

        std::vector<Mat2> next = cur;
        if (integrator == Integrator::euler) {
            detail::axpy(next, h, rhs(cur, k));
        } else {
            // Half-step stages read delayed values at the nearest index (k + 1).
            const auto k1 = rhs(cur, k);
            auto stage = cur;
            detail::axpy(stage, h / 2, k1);
            const auto k2 = rhs(stage, n > 0 ? k + 1 : k);
            stage = cur;
            detail::axpy(stage, h / 2, k2);
            const auto k3 = rhs(stage, n > 0 ? k + 1 : k);
            stage = cur;
            detail::axpy(stage, h, k3);
            const auto k4 = rhs(stage, n > 0 ? k + 1 : k);
            detail::axpy(next, h / 6, k1);
            detail::axpy(next, h / 3, k2);
            detail::axpy(next, h / 3, k3);
            detail::axpy(next, h / 6, k4);
        }

        const double scale = next[0].norm();
        if (scale > 0.0)
            lat.max_relative_asymmetry =
                std::max(lat.max_relative_asymmetry, (next[0] - next[0].transpose()).norm() / scale);
        next[0] = symmetrized(next[0]);
        for (std::size_t j = 0; j < active; ++j) lat.P[j][k + 1] = next[j];
    }
    return lat;
}

}  // namespace giant_cavity
