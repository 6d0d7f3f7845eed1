#pragma once

#include "covariance.hpp"
#include "filter.hpp"
#include "model.hpp"
#include "oracle.hpp"
#include "sde_sim.hpp"
#include "types.hpp"
#include "wigner.hpp"
