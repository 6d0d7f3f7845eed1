#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace giant_cavity {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

/// Raised when a configuration or a call's inputs violate a documented
/// precondition. `field()` names the offending setting when there is one.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& message, std::string field = {})
        : std::invalid_argument(field.empty() ? message : field + ": " + message),
          message_(message),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::string field_;
};

/// Raised when a model cannot support the requested operation
/// (e.g. a singular measurement-noise covariance).
class ModelError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Uniform time grid shared by trajectories, lattices and estimates.
///
/// t_k = k * h for k = 0..steps; the delay is exactly `delay_steps` cells.
struct TimeGrid {
    double h = 0.0;
    std::size_t delay_steps = 0;
    std::size_t steps = 0;

    double time(std::size_t k) const { return static_cast<double>(k) * h; }
    double delay() const { return static_cast<double>(delay_steps) * h; }
    double horizon() const { return time(steps); }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;
};

/// Snap the delay onto a grid of step `h` and size the horizon.
///
/// Throws ConfigError when T/h is further than 1e-6 * T from an integer, or
/// when a positive delay would collapse to zero cells. `snap_error` receives
/// |N h - T| when non-null.
inline TimeGrid make_grid(double delay, double h, double horizon, double* snap_error = nullptr) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("step must be positive and finite", "h");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw ConfigError("horizon must be positive and finite", "horizon");
    if (!(delay >= 0.0) || !std::isfinite(delay)) throw ConfigError("delay must be non-negative", "T");

    const double cells = std::round(delay / h);
    const double err = std::abs(cells * h - delay);
    if (err > 1e-6 * delay)
        throw ConfigError("delay " + std::to_string(delay) + " s is not an integer multiple of step " +
                              std::to_string(h) + " s",
                          "h");
    if (delay > 0.0 && cells < 1.0) throw ConfigError("step is longer than the delay", "h");

    const double steps = std::round(horizon / h);
    if (steps < 1.0) throw ConfigError("horizon shorter than one step", "horizon");

    if (snap_error) *snap_error = err;
    return TimeGrid{h, static_cast<std::size_t>(cells), static_cast<std::size_t>(steps)};
}

inline Mat2 symmetrized(const Mat2& m) { return 0.5 * (m + m.transpose()); }

}  // namespace giant_cavity
