#pragma once

#include "kfp/cauchy_solver.hpp"
#include "kfp/fundamental_solution.hpp"
#include "kfp/group_geometry.hpp"
#include "kfp/maximal_estimates.hpp"
#include "kfp/singular_integrals.hpp"
#include "kfp/spec_io.hpp"
#include "kfp/verification.hpp"
