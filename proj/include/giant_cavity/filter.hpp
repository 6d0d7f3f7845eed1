#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "covariance.hpp"
#include "model.hpp"
#include "sde_sim.hpp"
#include "types.hpp"

namespace giant_cavity {

/// Measurement increments dy_k, k = 0..K-1, together with their grid.
struct MeasurementView {
    TimeGrid grid;
    std::span<const Vec2> dy;
};

inline MeasurementView measurements(const Trajectory& tr) { return {tr.grid, tr.dy}; }

struct EstimateTrajectory {
    TimeGrid grid;
    Prehistory prehistory = Prehistory::zero;
    std::vector<Vec2> xhat;  // K + 1 samples
    std::vector<Vec2> dnu;   // K innovation increments
};

/// Euler discretization of the delay filter
///   dx^ = A x^ dt + A_d x^(t-T) dt + K(t) (dy - C x^ dt - C_d x^(t-T) dt)
/// with K(t_k) taken from the lattice at the left endpoint.
inline EstimateTrajectory run_filter(const StateSpaceModel& m, const CovarianceLattice& lat, MeasurementView y,
                                     const Vec2& xhat0, Prehistory pre = Prehistory::zero) {
    if (!(lat.grid == y.grid)) throw ConfigError("lattice and measurement record are on different grids", "grid");
    if (y.dy.size() != y.grid.steps) throw ConfigError("measurement record length does not match its grid", "dy");
    if (std::abs(y.grid.delay() - m.T) > 1e-6 * m.T)
        throw ConfigError("model delay does not match the measurement grid", "model");
    if (!xhat0.allFinite()) throw ConfigError("initial estimate must be finite", "xhat0");

    const std::size_t n = y.grid.delay_steps;
    const std::size_t steps = y.grid.steps;
    const double h = y.grid.h;

    EstimateTrajectory est;
    est.grid = y.grid;
    est.prehistory = pre;
    est.xhat.resize(steps + 1);
    est.dnu.resize(steps);
    est.xhat[0] = xhat0;
    for (std::size_t k = 0; k < steps; ++k) {
        const Vec2& xk = est.xhat[k];
        const Vec2 xd = delayed_sample(est.xhat, k, n, pre);
        const Vec2 dnu = y.dy[k] - (m.C * xk + m.Cd * xd) * h;
        est.xhat[k + 1] = xk + (m.A * xk + m.Ad * xd) * h + lat.gain[k] * dnu;
        est.dnu[k] = dnu;
    }
    return est;
}

/// Sample autocorrelation of the innovation increments.
struct WhitenessReport {
    Mat2 lag0_cov;                  // mean of dnu dnu^T (estimates D_d D_d^T h)
    std::vector<Mat2> correlation;  // normalized, lags 1..max_lag
    double band = 0.0;              // 3 / sqrt(K)

    std::size_t outside_band() const {
        std::size_t c = 0;
        for (const auto& r : correlation)
            c += static_cast<std::size_t>((r.array().abs() > band).count());
        return c;
    }
    std::size_t entries() const { return 4 * correlation.size(); }
    bool white() const { return outside_band() == 0; }
};

inline WhitenessReport innovation_whiteness(std::span<const Vec2> dnu, std::size_t max_lag) {
    const std::size_t n = dnu.size();
    if (max_lag == 0) throw ConfigError("max_lag must be at least 1", "max_lag");
    if (n < 10 * max_lag) throw ConfigError("innovation record shorter than 10 * max_lag", "max_lag");

    Vec2 mean = Vec2::Zero();
    for (const auto& v : dnu) mean += v;
    mean /= static_cast<double>(n);

    auto lag_cov = [&](std::size_t lag) {
        Mat2 c = Mat2::Zero();
        for (std::size_t k = 0; k + lag < n; ++k) c += (dnu[k + lag] - mean) * (dnu[k] - mean).transpose();
        return Mat2(c / static_cast<double>(n));
    };

    WhitenessReport r;
    r.lag0_cov = lag_cov(0);
    r.band = 3.0 / std::sqrt(static_cast<double>(n));
    const Vec2 sd = r.lag0_cov.diagonal().cwiseSqrt();
    const Mat2 norm = sd * sd.transpose();
    r.correlation.reserve(max_lag);
    for (std::size_t lag = 1; lag <= max_lag; ++lag) r.correlation.push_back(lag_cov(lag).cwiseQuotient(norm));
    return r;
}

inline WhitenessReport innovation_whiteness(const EstimateTrajectory& est, std::size_t max_lag) {
    return innovation_whiteness(std::span<const Vec2>(est.dnu), max_lag);
}

}  // namespace giant_cavity
