#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include "types.hpp"

namespace giant_cavity {

/// Physical description of a cavity coupled to a waveguide at two points
/// separated by L. Frequencies are angular (rad/s); the coupling is given
/// either as a decay rate or as (V_q, v_g).
struct PhysicalParams {
    double omega_c = 0.0;
    std::optional<double> gamma;
    std::optional<double> coupling_strength;  // V_q
    double L = 0.0;
    double v_g = 1.0;
};

/// dx = A x dt + A_d x(t-T) dt + B dw(t) + B_d dw(t-T)
/// dy = C x dt + C_d x(t-T) dt + D_d dw(t-T)
struct StateSpaceModel {
    Mat2 A = Mat2::Zero();
    Mat2 Ad = Mat2::Zero();
    Mat2 B = Mat2::Zero();
    Mat2 Bd = Mat2::Zero();
    Mat2 C = Mat2::Zero();
    Mat2 Cd = Mat2::Zero();
    Mat2 Dd = Mat2::Identity();
    double T = 0.0;

    Mat2 measurement_noise_cov() const { return Dd * Dd.transpose(); }
};

/// Real 2x2 representation of multiplication by a complex number in the
/// (q, p) = sqrt(2) (Re a, Im a) quadrature basis.
inline Mat2 complex_to_real(double re, double im) {
    Mat2 m;
    m << re, -im, im, re;
    return m;
}

/// gamma = 4 pi V_q^2 / v_g.
inline double gamma_from_coupling(double coupling_strength, double v_g) {
    if (!(v_g > 0.0) || !std::isfinite(v_g)) throw ConfigError("group velocity must be positive", "v_g");
    if (!std::isfinite(coupling_strength)) throw ConfigError("coupling strength must be finite", "V_q");
    return 4.0 * std::numbers::pi * coupling_strength * coupling_strength / v_g;
}

inline double resolved_gamma(const PhysicalParams& p) {
    if (p.gamma && p.coupling_strength)
        throw ConfigError("give either gamma or V_q, not both", "gamma");
    if (p.gamma) {
        if (!(*p.gamma >= 0.0) || !std::isfinite(*p.gamma))
            throw ConfigError("decay rate must be non-negative and finite", "gamma");
        return *p.gamma;
    }
    if (p.coupling_strength) return gamma_from_coupling(*p.coupling_strength, p.v_g);
    throw ConfigError("missing coupling: set gamma or V_q", "gamma");
}

inline void validate(const PhysicalParams& p) {
    if (!(p.omega_c >= 0.0) || !std::isfinite(p.omega_c))
        throw ConfigError("angular frequency must be non-negative and finite", "omega_c");
    if (!(p.v_g > 0.0) || !std::isfinite(p.v_g)) throw ConfigError("group velocity must be positive", "v_g");
    if (!(p.L >= 0.0) || !std::isfinite(p.L)) throw ConfigError("separation must be non-negative", "L");
    (void)resolved_gamma(p);
}

/// Quadrature model of the two-point-coupled cavity.
///
/// The complex mode equation
///   da/dt = (-i w - g/2) a - (g/2) a(t-T) - i sqrt(g/2) [b_in(t) + b_in(t-T)]
///   b_out = b_in(t-T) - i sqrt(g/2) [a(t) + a(t-T)]
/// maps to real 2x2 blocks via complex_to_real, so D_d = I.
inline StateSpaceModel build_model(const PhysicalParams& p) {
    validate(p);
    const double g = resolved_gamma(p);
    const double s = std::sqrt(g / 2.0);

    StateSpaceModel m;
    m.A = complex_to_real(-g / 2.0, -p.omega_c);
    m.Ad = complex_to_real(-g / 2.0, 0.0);
    m.B = complex_to_real(0.0, -s);
    m.Bd = m.B;
    m.C = m.B;
    m.Cd = m.B;
    m.Dd = Mat2::Identity();
    m.T = p.L / p.v_g;
    return m;
}

/// Zero-delay collapse. With T = 0 both noise channels are the same
/// increment, so the merged noise is carried on the (now undelayed)
/// "delayed" channel: B' = 0, B_d' = B + B_d.
inline StateSpaceModel markovian_limit(const StateSpaceModel& m) {
    StateSpaceModel r;
    r.A = m.A + m.Ad;
    r.Ad = Mat2::Zero();
    r.B = Mat2::Zero();
    r.Bd = m.B + m.Bd;
    r.C = m.C + m.Cd;
    r.Cd = Mat2::Zero();
    r.Dd = m.Dd;
    r.T = 0.0;
    return r;
}

inline bool is_finite(const StateSpaceModel& m) {
    return m.A.allFinite() && m.Ad.allFinite() && m.B.allFinite() && m.Bd.allFinite() && m.C.allFinite() &&
           m.Cd.allFinite() && m.Dd.allFinite() && std::isfinite(m.T) && m.T >= 0.0;
}

/// (D_d D_d^T)^-1, throwing ModelError when it does not exist.
inline Mat2 measurement_precision(const StateSpaceModel& m) {
    const Mat2 r = m.measurement_noise_cov();
    const double det = r.determinant();
    if (!(std::abs(det) > 1e-300) || !std::isfinite(det))
        throw ModelError("D_d D_d^T is singular; the filter gain is undefined");
    return r.inverse();
}

}  // namespace giant_cavity
