#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Dense>

#include "filter.hpp"
#include "sde_sim.hpp"
#include "types.hpp"

namespace giant_cavity {

/// Rectangular phase-space grid; q indexes rows, p indexes columns.
struct GridSpec {
    double q_min = -4.0, q_max = 4.0;
    double p_min = -4.0, p_max = 4.0;
    std::size_t n_q = 201, n_p = 201;

    double dq() const { return (q_max - q_min) / static_cast<double>(n_q - 1); }
    double dp() const { return (p_max - p_min) / static_cast<double>(n_p - 1); }
    double q(std::size_t i) const { return q_min + static_cast<double>(i) * dq(); }
    double p(std::size_t j) const { return p_min + static_cast<double>(j) * dp(); }

    static GridSpec centered(const Vec2& center, double half_width, std::size_t n) {
        return {center.x() - half_width, center.x() + half_width, center.y() - half_width,
                center.y() + half_width, n, n};
    }
};

inline void validate(const GridSpec& g) {
    if (g.n_q < 2) throw ConfigError("need at least 2 points", "n_q");
    if (g.n_p < 2) throw ConfigError("need at least 2 points", "n_p");
    if (!(g.q_max > g.q_min) || !std::isfinite(g.q_min) || !std::isfinite(g.q_max))
        throw ConfigError("q range must be finite and increasing", "q_min");
    if (!(g.p_max > g.p_min) || !std::isfinite(g.p_min) || !std::isfinite(g.p_max))
        throw ConfigError("p range must be finite and increasing", "p_min");
}

struct WignerGrid {
    GridSpec spec;
    Eigen::MatrixXd values;  // n_q x n_p
};

/// (2/pi) exp(-2 [(q - <q>)^2 + (p - <p>)^2])
inline double coherent_value(double q, double p, const Vec2& center) {
    const double dq = q - center.x();
    const double dp = p - center.y();
    return 2.0 / std::numbers::pi * std::exp(-2.0 * (dq * dq + dp * dp));
}

template <class F>
WignerGrid evaluate_on(const GridSpec& spec, F&& f) {
    validate(spec);
    WignerGrid g{spec, Eigen::MatrixXd(spec.n_q, spec.n_p)};
    for (std::size_t i = 0; i < spec.n_q; ++i)
        for (std::size_t j = 0; j < spec.n_p; ++j)
            g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f(spec.q(i), spec.p(j));
    return g;
}

inline WignerGrid coherent_wigner(const Vec2& center, const GridSpec& spec) {
    if (!center.allFinite()) throw ConfigError("center must be finite", "center");
    return evaluate_on(spec, [&](double q, double p) { return coherent_value(q, p, center); });
}

/// Two-lobe cat approximation: centre (q0, p0), lobe offset beta,
/// packet width sigma.
struct CatParams {
    double q0 = 0.0, p0 = 0.0;
    double beta = 0.0;
    double sigma = 1.0;
};

/// Fringe-resolution bound on the q spacing: sigma^2 pi / (4 |beta|).
inline double max_cat_spacing(const CatParams& cp) {
    return cp.beta == 0.0 ? INFINITY : cp.sigma * cp.sigma * std::numbers::pi / (4.0 * std::abs(cp.beta));
}

/// Unnormalized 1/2 (W+ + W- + W_int).
inline double cat_value(double q, double p, const CatParams& cp) {
    const double s2 = cp.sigma * cp.sigma;
    const double dq = q - cp.q0;
    const double dp = p - cp.p0;
    const double momentum = -s2 * dp * dp;
    const double plus = std::exp(-(dq - cp.beta) * (dq - cp.beta) / s2 + momentum);
    const double minus = std::exp(-(dq + cp.beta) * (dq + cp.beta) / s2 + momentum);
    const double fringe = std::exp(-dq * dq / s2 + momentum) * std::cos(2.0 * cp.beta / s2 * dq - 2.0 * cp.beta * s2 * dp);
    return 0.5 * (plus + minus + fringe);
}

/// Divide by max |W|; no-op on an all-zero grid.
inline void normalize_max_abs(WignerGrid& g) {
    const double peak = g.values.cwiseAbs().maxCoeff();
    if (peak > 0.0) g.values /= peak;
}

inline WignerGrid cat_wigner(const CatParams& cp, const GridSpec& spec) {
    if (!(cp.sigma > 0.0) || !std::isfinite(cp.sigma)) throw ConfigError("sigma must be positive", "sigma");
    if (!std::isfinite(cp.beta) || !std::isfinite(cp.q0) || !std::isfinite(cp.p0))
        throw ConfigError("cat parameters must be finite", "beta");
    validate(spec);
    if (spec.dq() > max_cat_spacing(cp) * (1.0 + 1e-12))
        throw ConfigError("q spacing " + std::to_string(spec.dq()) + " does not resolve the interference fringes (need <= " +
                              std::to_string(max_cat_spacing(cp)) + ")",
                          "n_q");
    auto g = evaluate_on(spec, [&](double q, double p) { return cat_value(q, p, cp); });
    normalize_max_abs(g);
    return g;
}

/// Smallest n such that a grid of this width resolves the cat fringes.
inline std::size_t min_cat_points(const CatParams& cp, double width) {
    const double spacing = max_cat_spacing(cp);
    if (!std::isfinite(spacing)) return 2;
    return static_cast<std::size_t>(std::ceil(width / spacing)) + 1;
}

/// 2-D trapezoidal rule over the grid.
inline double trapezoid_integral(const WignerGrid& g) {
    const auto nq = g.values.rows();
    const auto np = g.values.cols();
    double sum = 0.0;
    for (Eigen::Index i = 0; i < nq; ++i) {
        const double wi = (i == 0 || i == nq - 1) ? 0.5 : 1.0;
        for (Eigen::Index j = 0; j < np; ++j) {
            const double wj = (j == 0 || j == np - 1) ? 0.5 : 1.0;
            sum += wi * wj * g.values(i, j);
        }
    }
    return sum * g.spec.dq() * g.spec.dp();
}

/// Phase-space centre (q_k, p_k) of a stored sample.
inline Vec2 state_to_wigner_inputs(const Trajectory& tr, std::size_t k) {
    if (k >= tr.x.size()) throw ConfigError("grid index out of range", "k");
    return tr.x[k];
}

inline Vec2 state_to_wigner_inputs(const EstimateTrajectory& est, std::size_t k) {
    if (k >= est.xhat.size()) throw ConfigError("grid index out of range", "k");
    return est.xhat[k];
}

}  // namespace giant_cavity
