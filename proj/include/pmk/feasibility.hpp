#pragma once

#include "pmk/dual_core.hpp"

namespace pmk {

struct FeasibilityVerdict {
  bool member = false;
  std::optional<bool> interior;  // empty when the probe hit its budget
  Vector worst_p;                // minimizer of Xi_0(p) - m.p on the sphere
  double margin = 0.0;           // min found; >= 0 certifies nothing is violated
  std::vector<std::string> notes;
};

/// Membership test for m in S (or S-underline in subpartition mode): by
/// positive homogeneity it suffices to minimize Xi_0(p) - m.p over the unit
/// sphere. Multistart smoothed descent, seeded from cfg.seed and the
/// instance hash; negative margin yields worst_p as a separating
/// certificate. phi in ctx is ignored.
FeasibilityVerdict check_membership(const EvalContext& ctx, const Vector& m,
                                    const SolverConfig& cfg = SolverConfig());

/// Xi_0(p) - m.p at a fixed direction (exact, unsmoothed); negative values
/// certify non-membership.
double support_function_gap(const EvalContext& ctx, const Vector& m, const Vector& p);

}  // namespace pmk
