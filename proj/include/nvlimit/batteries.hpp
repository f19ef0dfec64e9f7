#pragma once

#include <vector>

#include "nvlimit/harness.hpp"

namespace nvlimit {

/// Representation formulas against finite differences of the retarded-potential
/// oracle at manufactured spacetime points, plus the b_x = omega b_t identity.
std::vector<AuditLine> oracle_battery();

/// Exterior identity for spherical means, the light-cone sphere bound, the
/// lower bound on op, the kernel momentum envelopes.
std::vector<AuditLine> lemma_battery();

/// Free-space Poisson solve of a uniform ball, Kirchhoff against FDTD under
/// joint refinement, and order fitting on exact power-law data.
std::vector<AuditLine> solver_battery();

} // namespace nvlimit
