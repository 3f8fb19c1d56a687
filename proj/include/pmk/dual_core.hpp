#pragma once

#include "pmk/problem_model.hpp"

namespace pmk {

/// Bundles the pieces every dual evaluation needs. phi == nullptr selects
/// the profit-free functionals (Xi_0 family); mode == subpartition appends
/// the virtual 0-slot to every maximum.
struct EvalContext {
  const DiscreteSpace* space = nullptr;
  const FieldMatrix* psi = nullptr;
  const FieldMatrix* phi = nullptr;
  Mode mode = Mode::partition;

  EvalContext() = default;
  EvalContext(const DiscreteSpace& s, const FieldMatrix& ps, const FieldMatrix* ph,
              Mode md)
      : space(&s), psi(&ps), phi(ph), mode(md) {}

  static EvalContext of(const ProblemInstance& inst) {
    return EvalContext(inst.space, inst.psi, &inst.phi, inst.mode);
  }

  int n_agents() const { return psi->n_agents(); }
  int n_atoms() const { return space->n_atoms(); }
  bool has_phi() const { return phi != nullptr; }
  bool subpartition() const { return mode == Mode::subpartition; }

  EvalContext without_phi() const { return EvalContext(*space, *psi, nullptr, mode); }
};

/// Smoothed maximum eps * ln(sum exp(a_k / eps)), evaluated in shifted form
/// so it is finite for every input. Satisfies
///   max(a) <= max_eps(a) <= max(a) + eps ln(len(a))
/// and is nondecreasing in eps. eps == 0 returns the exact maximum.
double max_eps(const Vector& a, double eps);

/// Pointwise duals at a single atom.
double xi0(const EvalContext& ctx, int atom, const Vector& p);
double xi0_plus(const EvalContext& ctx, int atom, const Vector& p);
double xi_phi(const EvalContext& ctx, int atom, const Vector& p);
double xi_phi_plus(const EvalContext& ctx, int atom, const Vector& p);

/// Winning slots at one atom. Agent indices come first, ascending;
/// kUnassigned marks the 0-slot when it ties within tie_tol.
struct ArgmaxInfo {
  double value = 0.0;
  std::vector<int> winners;
};

/// Uses the context's mode (0-slot iff subpartition) and phi if present.
ArgmaxInfo xi_argmax(const EvalContext& ctx, int atom, const Vector& p, double tie_tol);

/// Integrated duals: weighted tree sums of the pointwise values.
double Xi0(const EvalContext& ctx, const Vector& p);
double Xi0_plus(const EvalContext& ctx, const Vector& p);
double Xi_phi(const EvalContext& ctx, const Vector& p);
double Xi_phi_plus(const EvalContext& ctx, const Vector& p);

/// The functional matching ctx: phi if present, 0-slot iff subpartition.
double Xi_exact(const EvalContext& ctx, const Vector& p);

/// Smoothed integrated dual Xi_eps(p) (value only).
double Xi_eps(const EvalContext& ctx, const Vector& p, double eps);

struct XiEpsResult {
  double value = 0.0;
  Vector grad;  // dXi_eps/dp_i = sum_j psi_i(x_j) h_ij w_j
};

/// Value and gradient in one pass over the atoms.
XiEpsResult Xi_eps_with_grad(const EvalContext& ctx, const Vector& p, double eps);

/// Softmax weak partition at (p, eps): h_ij proportional to
/// exp((phi_i + p_i psi_i)(x_j) / eps), with an extra unit in the
/// denominator's 0-slot in subpartition mode. Rows of the gradient of
/// Xi_eps are exactly the psi-weighted moments of this h.
WeakPartition softmax_measure(const EvalContext& ctx, const Vector& p, double eps);

/// sum_j psi_i(x_j) h_ij w_j for each agent i.
Vector moment_vector(const EvalContext& ctx, const WeakPartition& h);

}  // namespace pmk
