#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "model.hpp"
#include "types.hpp"

namespace giant_cavity {

/// What delayed states read before t = 0.
enum class Prehistory {
    zero,          // x(t) = 0 for t < 0: delayed terms switch on at t = T
    hold_initial,  // x(t) = x(0) for t < 0
};

inline std::string to_string(Prehistory p) { return p == Prehistory::zero ? "zero" : "hold-initial"; }

inline Prehistory prehistory_from_string(const std::string& s) {
    if (s == "zero") return Prehistory::zero;
    if (s == "hold-initial" || s == "hold_initial") return Prehistory::hold_initial;
    throw ConfigError("unknown prehistory '" + s + "' (expected zero or hold-initial)", "prehistory");
}

struct SimConfig {
    double horizon = 0.0;
    double h = 0.0;
    std::uint64_t seed = 0;
    Vec2 x0 = Vec2::Zero();
    Prehistory prehistory = Prehistory::zero;
    double noise_variance_scale = 1.0;
};

/// Sample `k - N` of a delayed sequence, falling back on the prehistory
/// convention for negative indices.
inline Vec2 delayed_sample(std::span<const Vec2> xs, std::size_t k, std::size_t delay_steps, Prehistory pre) {
    if (k >= delay_steps) return xs[k - delay_steps];
    return pre == Prehistory::zero ? Vec2::Zero() : xs.front();
}

/// One simulated run. dw holds increments for j = -N..K-1 (see dw_at).
struct Trajectory {
    TimeGrid grid;
    Prehistory prehistory = Prehistory::zero;
    double delay_snap_error = 0.0;
    std::vector<Vec2> x;   // K + 1 samples
    std::vector<Vec2> dw;  // N + K increments, dw[j + N]
    std::vector<Vec2> dy;  // K increments

    const Vec2& dw_at(std::ptrdiff_t j) const {
        return dw.at(static_cast<std::size_t>(j + static_cast<std::ptrdiff_t>(grid.delay_steps)));
    }
};

/// Euler-Maruyama integration of the delay SDE with caller-supplied
/// increments (dw.size() == N + K, ordered from j = -N).
inline Trajectory simulate_with_noise(const StateSpaceModel& m, const TimeGrid& grid, const Vec2& x0,
                                      Prehistory pre, std::vector<Vec2> dw) {
    const std::size_t n = grid.delay_steps;
    const std::size_t steps = grid.steps;
    if (dw.size() != n + steps) throw ConfigError("noise record length does not match the grid", "dw");
    if (!x0.allFinite()) throw ConfigError("initial state must be finite", "x0");

    Trajectory tr;
    tr.grid = grid;
    tr.prehistory = pre;
    tr.dw = std::move(dw);
    tr.x.resize(steps + 1);
    tr.dy.resize(steps);
    tr.x[0] = x0;

    const double h = grid.h;
    for (std::size_t k = 0; k < steps; ++k) {
        const Vec2& xk = tr.x[k];
        const Vec2 xd = delayed_sample(tr.x, k, n, pre);
        const Vec2& dw_now = tr.dw[k + n];
        const Vec2& dw_del = tr.dw[k];
        tr.x[k + 1] = xk + (m.A * xk + m.Ad * xd) * h + m.B * dw_now + m.Bd * dw_del;
        tr.dy[k] = (m.C * xk + m.Cd * xd) * h + m.Dd * dw_del;
    }
    return tr;
}

/// Gaussian increments with covariance scale * h * I for j = -N..K-1.
inline std::vector<Vec2> draw_increments(const TimeGrid& grid, std::uint64_t seed, double scale = 1.0) {
    if (!(scale >= 0.0) || !std::isfinite(scale))
        throw ConfigError("noise variance scale must be non-negative", "noise_variance_scale");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(scale * grid.h);
    std::vector<Vec2> dw(grid.delay_steps + grid.steps);
    for (auto& v : dw) {
        const double a = normal(rng);
        const double b = normal(rng);
        v = Vec2(a * sd, b * sd);
    }
    return dw;
}

inline Trajectory simulate(const StateSpaceModel& m, const SimConfig& cfg) {
    if (!is_finite(m)) throw ConfigError("model has non-finite entries or a negative delay", "model");
    double snap = 0.0;
    const TimeGrid grid = make_grid(m.T, cfg.h, cfg.horizon, &snap);
    auto tr = simulate_with_noise(m, grid, cfg.x0, cfg.prehistory,
                                  draw_increments(grid, cfg.seed, cfg.noise_variance_scale));
    tr.delay_snap_error = snap;
    return tr;
}

/// Field increments b(x, t) dt in quadrature form on the trajectory grid.
struct FieldSeries {
    std::size_t first_index = 0;   // grid index of increments.front()
    std::vector<Vec2> increments;  // one per grid cell
};

namespace detail {
inline double heaviside(double v) { return v > 0.0 ? 1.0 : (v == 0.0 ? 0.5 : 0.0); }
}  // namespace detail

/// Propagating waveguide field at `position` (metres, first coupler at 0,
/// second at L): free input field plus the emissions of both couplers that
/// have reached `position`, with theta(0) = 1/2 where `position` sits on a
/// coupler. Emission times read the nearest grid sample; times before 0
/// follow the trajectory's prehistory convention.
///
/// Valid for position in [-L, 2L]. Increments start at `t_start` and stop
/// where the stored input noise runs out.
inline FieldSeries waveguide_field(const Trajectory& traj, const StateSpaceModel& m, double position,
                                   const PhysicalParams& p, double t_start = 0.0) {
    validate(p);
    if (!(position >= -p.L && position <= 2.0 * p.L))
        throw ConfigError("position outside the validity window [-L, 2L]", "x");
    if (std::abs(traj.grid.delay() - m.T) > 1e-6 * m.T + 1e-300)
        throw ConfigError("trajectory grid delay does not match the model", "model");

    const double h = traj.grid.h;
    const auto n = static_cast<std::ptrdiff_t>(traj.grid.delay_steps);
    const auto steps = static_cast<std::ptrdiff_t>(traj.grid.steps);
    const auto shift = static_cast<std::ptrdiff_t>(std::llround(position / (p.v_g * h)));

    const std::ptrdiff_t earliest = std::max<std::ptrdiff_t>(0, shift - n);
    const auto first = static_cast<std::ptrdiff_t>(std::llround(t_start / h));
    if (first < earliest)
        throw ConfigError("field at this position needs input noise before the stored history; earliest valid time is " +
                              std::to_string(static_cast<double>(earliest) * h) + " s",
                          "t_start");
    const std::ptrdiff_t last = std::min(steps - 1, steps - 1 + shift);
    if (first > last) throw ConfigError("no field samples available after t_start", "t_start");

    const double s = std::sqrt(resolved_gamma(p) / 2.0);
    const Mat2 emit = complex_to_real(0.0, -s);
    const double gate[2] = {detail::heaviside(position), detail::heaviside(position - p.L)};
    const std::ptrdiff_t offset[2] = {0, n};

    FieldSeries out;
    out.first_index = static_cast<std::size_t>(first);
    out.increments.reserve(static_cast<std::size_t>(last - first + 1));
    for (std::ptrdiff_t k = first; k <= last; ++k) {
        Vec2 v = traj.dw_at(k - shift);
        for (int c = 0; c < 2; ++c) {
            if (gate[c] == 0.0) continue;
            const std::ptrdiff_t i = k - shift + offset[c];
            Vec2 a;
            if (i >= 0)
                a = traj.x[static_cast<std::size_t>(i)];
            else
                a = traj.prehistory == Prehistory::zero ? Vec2::Zero() : traj.x.front();
            v += gate[c] * (emit * a) * h;
        }
        out.increments.push_back(v);
    }
    return out;
}

}  // namespace giant_cavity
