#pragma once

#include "pmk/partition_solver.hpp"

namespace pmk {

/// Euclidean projection onto K. Pure boxes clamp; with half-spaces present
/// Dykstra's alternating projections run to 1e-10 or the sweep cap.
Vector project_onto_K(const ConstraintSet& K, const Vector& m);

struct SelectionResult {
  Vector m_star;
  WeakPartition h;
  SolveReport report;       // final solve_dual at m_star
  double profit = 0.0;      // Xi_plus^*(m_star)
  double restart_diff = 0.0;  // |m_a - m_b| over a perturbed restart
  int ascent_iterations = 0;
};

/// Optimal-selection game: maximizes the concave value m -> Xi_plus^*(m)
/// over K (implicitly intersected with the subpartition feasible set).
/// The max over m and the min over p of the damped smoothed dual swap, so
/// the game collapses to one jointly convex minimization
///   G(p, lambda) = Xi_plus_eps(p) + (delta/2)(|p|^2+|lambda|^2)
///                + sigma_box,eps(-p - A^T lambda) + lambda.b
/// over prices p and half-space multipliers lambda >= 0; the smoothed box
/// support function's softmax weights recover m*. eps follows
/// cfg.eps_schedule, then a full solve_dual at m* realizes the subpartition
/// and a perturbed restart probes uniqueness of the argmax. The game is
/// always played with free disposal: ctx.mode is ignored and subpartitions
/// are used even for partition-mode instances.
SelectionResult select_optimal(const EvalContext& ctx, const ConstraintSet& K,
                               const SolverConfig& cfg = SolverConfig());

}  // namespace pmk
