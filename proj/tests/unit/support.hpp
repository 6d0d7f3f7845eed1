#pragma once

#include <catch_amalgamated.hpp>

#include "giant_cavity/giant_cavity.hpp"

namespace gc_test {

using namespace giant_cavity;

inline PhysicalParams reference_params() {
    PhysicalParams p;
    p.omega_c = 1e9;
    p.gamma = 8e8;
    p.v_g = 1e3;
    p.L = 1.5e-5;
    return p;
}

inline StateSpaceModel reference_model() { return build_model(reference_params()); }

inline double rel(const Mat2& a, const Mat2& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace gc_test
