#pragma once

#include "pmk/dual_core.hpp"
#include "pmk/feasibility.hpp"

namespace pmk {

struct SolveResult {
  Vector p_star;
  WeakPartition h;  // softmax partition at (p_star, final eps)
  SolveReport report;
};

/// Maximizes the concave dual m.p - Xi_phi(p) by minimizing its negation
/// plus quadratic damping, following the eps schedule with warm starts.
/// Each stage runs a first-order descent (Barzilai-Borwein step, Armijo
/// backtracking) on
///   F(p) = Xi_eps(p) + (delta/2)|p|^2 - m.p,
/// with delta = eps unless cfg.delta > 0 pins it. The reported dual_value
/// uses the exact Xi_phi at p_star, so it is a true bound at any accuracy.
/// p0 warm-starts the first stage.
SolveResult solve_dual(const EvalContext& ctx, const Vector& m,
                       const SolverConfig& cfg = SolverConfig(),
                       const Vector* p0 = nullptr);

/// One damped stage: minimizes Xi_eps(p) + (delta/2)|p|^2 - m.p from the
/// warm start in p (updated in place) and returns the reached value. The
/// building block behind solve_dual and the selection ascent.
double minimize_damped_dual(const EvalContext& ctx, const Vector& m, double eps,
                            double delta, double tol, int max_iters, Vector& p);

/// Expected profit sum_ij phi_i(x_j) h_ij w_j of a weak partition.
double primal_value(const EvalContext& ctx, const WeakPartition& h);

/// dual(p) - primal(h) if h's moments match m within moment_tol in the sup
/// norm; throws std::invalid_argument otherwise (the bound is meaningless
/// off-moment). Nonnegative for every feasible pair.
double weak_duality_gap(const EvalContext& ctx, const WeakPartition& h, const Vector& m,
                        const Vector& p, double moment_tol = 1e-6);

struct StrongExtraction {
  StrongPartition partition;
  std::vector<int> tied_atoms;  // atoms whose winner was not unique
  double tied_mass = 0.0;
};

/// Rounds the dual solution to a strong (sub)partition: each atom goes to
/// its winning slot, ties broken toward the lowest agent index, atoms won
/// by the 0-slot alone left unassigned. tie_tol is scaled internally by
/// the magnitude of the winning values.
StrongExtraction extract_strong(const EvalContext& ctx, const Vector& p,
                                double tie_tol = 1e-9);

struct UniquenessReport {
  double max_diff_mass = 0.0;  // largest sum_i mu(X_i^a xor X_i^b) seen
  int trials = 0;
  bool degenerate_fields = false;  // duplicate (psi_i, phi_i) rows detected
  std::string note;
};

/// Re-solves from random starts and compares the extracted strong
/// partitions atom-by-atom. Under uniqueness the disagreement mass stays
/// at tie scale; duplicated agent fields are flagged since they make the
/// minimizer non-unique by construction.
UniquenessReport uniqueness_probe(const EvalContext& ctx, const Vector& m,
                                  const SolverConfig& cfg = SolverConfig(),
                                  int trials = 3);

/// sum_i mu(X_i^a xor X_i^b): an atom whose label changes between two
/// agents counts twice (it leaves one cell and enters another), a move to
/// or from unassigned counts once.
double label_diff_mass(const DiscreteSpace& space, const StrongPartition& a,
                       const StrongPartition& b);

}  // namespace pmk
