#pragma once

#include "pmk/dual_core.hpp"

namespace pmk {

enum class LpStatus { optimal, infeasible };

struct LpResult {
  LpStatus status = LpStatus::optimal;
  WeakPartition h;
  double value = 0.0;
  std::vector<int> fractional_atoms;  // atoms split across slots in the optimum
  std::vector<int> label;             // winning slot per atom; kUnassigned for
                                      // the 0-slot, fractional atoms keep their
                                      // heaviest slot
};

/// Exact finite-dimensional oracle: maximizes sum_ij phi_i(x_j) h_ij w_j
/// over weak (sub)partitions with moment constraints
///   sum_j psi_i(x_j) h_ij w_j = m_i        (target != nullptr)
/// or moments constrained to lie in K       (box != nullptr),
/// via a dense two-phase simplex with Bland's rule. Independent of the
/// smoothed dual path; guards n_agents * n_atoms <= 5000.
LpResult lp_solve(const EvalContext& ctx, const Vector* target, const ConstraintSet* box);

struct BruteForceResult {
  StrongPartition partition;
  double value = 0.0;
};

/// Enumerates every strong (sub)partition, keeps those whose moments match
/// m within tol, and returns the best by profit; empty when none match.
/// Guards (n_agents + 1)^n_atoms <= 2e6.
std::optional<BruteForceResult> brute_force_strong(const EvalContext& ctx,
                                                   const Vector& m, double tol);

}  // namespace pmk
