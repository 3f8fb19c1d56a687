#include "pmk/selection.hpp"

#include "pmk/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pmk {

namespace {

Vector clamp_box(const ConstraintSet& K, Vector x) {
  if (K.lower) x = x.cwiseMax(*K.lower);
  if (K.upper) x = x.cwiseMin(*K.upper);
  return x;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// The game max_{m in K} min_p [Xi_plus_eps(p) + (delta/2)|p|^2 - m.p] is a
// concave-convex saddle over a compact K, so the max and min swap. With
// K = box [l,u] cut by half-spaces {a_r.m <= b_r}, dualizing the cuts with
// multipliers lambda >= 0 leaves a box support function that smooths with
// the same eps as everything else:
//
//   G(p, lambda) = Xi_plus_eps(p) + (delta/2)(|p|^2 + |lambda|^2)
//                + sum_i lse_eps(y_i l_i, y_i u_i) + lambda.b,
//   y = -p - sum_r lambda_r a_r.
//
// G is jointly convex and smooth; its inner softmax weights recover the
// optimal moment vector m(q) coordinatewise. Minimizing G solves the whole
// selection game in one pass of the solver's BB machinery.
struct JointEval {
  double value = 0.0;
  Vector grad;
  Vector m;
};

JointEval eval_joint(const EvalContext& gctx, const Vector& lo, const Vector& hi,
                     const std::vector<Halfspace>& cuts, double eps, double delta,
                     const Vector& q) {
  const int n = gctx.n_agents();
  const int R = static_cast<int>(cuts.size());

  const Vector p = q.head(n);
  Vector y = -p;
  for (int r = 0; r < R; ++r) y -= q[n + r] * cuts[r].a;

  const XiEpsResult xi = Xi_eps_with_grad(gctx, p, eps);

  JointEval out;
  out.value = xi.value + 0.5 * delta * q.squaredNorm();
  out.m.resize(n);
  for (int i = 0; i < n; ++i) {
    const double a = y[i] * lo[i];
    const double b = y[i] * hi[i];
    out.value += std::max(a, b) + eps * std::log1p(std::exp(-std::abs(a - b) / eps));
    out.m[i] = lo[i] + (hi[i] - lo[i]) * sigmoid((b - a) / eps);
  }
  out.grad.resize(n + R);
  out.grad.head(n) = xi.grad + delta * p - out.m;
  for (int r = 0; r < R; ++r) {
    out.value += q[n + r] * cuts[r].b;
    out.grad[n + r] = cuts[r].b - cuts[r].a.dot(out.m) + delta * q[n + r];
  }
  return out;
}

// Projected gradient: lambda components pinned at zero only block outward
// pushes.
double projected_grad_norm(const Vector& q, const Vector& g, int n) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const double gi = (i >= n && q[i] <= 0.0 && g[i] > 0.0) ? 0.0 : g[i];
    s += gi * gi;
  }
  return std::sqrt(s);
}

struct JointOutcome {
  int iterations = 0;
  bool converged = false;
};

JointOutcome minimize_joint(const EvalContext& gctx, const Vector& lo, const Vector& hi,
                            const std::vector<Halfspace>& cuts, double eps,
                            double delta, double tol, int max_iters, Vector& q) {
  const int n = gctx.n_agents();
  for (Eigen::Index i = n; i < q.size(); ++i) q[i] = std::max(q[i], 0.0);

  JointEval cur = eval_joint(gctx, lo, hi, cuts, eps, delta, q);

  const double psi_max = gctx.psi->sup_norm();
  double amax = 1.0;
  for (const Halfspace& hs : cuts) amax = std::max(amax, hs.a.cwiseAbs().maxCoeff());
  const double width = (hi - lo).maxCoeff();
  const double lip =
      (psi_max * psi_max + 0.25 * width * width * amax * amax * (1.0 + cuts.size())) /
          eps +
      delta;
  double t_bb = 1.0 / lip;

  JointOutcome out;
  for (out.iterations = 0; out.iterations < max_iters; ++out.iterations) {
    const double gnorm = projected_grad_norm(q, cur.grad, n);
    if (gnorm <= tol) {
      out.converged = true;
      return out;
    }
    double t = t_bb;
    bool accepted = false;
    Vector q_new;
    JointEval next;
    for (int back = 0; back < 60; ++back) {
      q_new = q - t * cur.grad;
      for (Eigen::Index i = n; i < q_new.size(); ++i) q_new[i] = std::max(q_new[i], 0.0);
      next = eval_joint(gctx, lo, hi, cuts, eps, delta, q_new);
      const double decrease = cur.grad.dot(q - q_new);
      if (next.value <= cur.value - 1e-4 * decrease && decrease >= 0.0) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      out.converged = gnorm <= 10.0 * tol;
      return out;
    }
    const Vector dq = q_new - q;
    const Vector dg = next.grad - cur.grad;
    const double sy = dq.dot(dg);
    t_bb = sy > 1e-300 ? dq.squaredNorm() / sy : 1.0 / lip;
    t_bb = std::clamp(t_bb, 0.01 / lip, 10.0 / delta);
    q = std::move(q_new);
    cur = std::move(next);
  }
  return out;
}

struct GameSolution {
  Vector q;
  Vector m;
  int iterations = 0;
};

GameSolution solve_game(const EvalContext& gctx, const Vector& lo, const Vector& hi,
                        const std::vector<Halfspace>& cuts, const SolverConfig& cfg,
                        Vector q) {
  GameSolution out;
  for (std::size_t s = 0; s < cfg.eps_schedule.size(); ++s) {
    const double eps = cfg.eps_schedule[s];
    const double delta = cfg.delta > 0.0 ? cfg.delta : eps;
    const bool last = s + 1 == cfg.eps_schedule.size();
    const double tol = last ? cfg.grad_tol : std::max(cfg.grad_tol, 1e-2 * eps);
    out.iterations +=
        minimize_joint(gctx, lo, hi, cuts, eps, delta, tol, cfg.max_iters, q).iterations;
  }
  const double eps_final = cfg.eps_schedule.back();
  const double delta_final = cfg.delta > 0.0 ? cfg.delta : eps_final;
  out.m = eval_joint(gctx, lo, hi, cuts, eps_final, delta_final, q).m;
  out.q = std::move(q);
  return out;
}

}  // namespace

Vector project_onto_K(const ConstraintSet& K, const Vector& m) {
  if (K.lower && K.lower->size() != m.size())
    throw std::invalid_argument("project_onto_K: lower bound size mismatch");
  if (K.upper && K.upper->size() != m.size())
    throw std::invalid_argument("project_onto_K: upper bound size mismatch");
  if (K.halfspaces.empty()) return clamp_box(K, m);

  // Dykstra's alternating projections over the box and each half-space.
  const std::size_t sets = K.halfspaces.size() + 1;
  std::vector<Vector> corr(sets, Vector::Zero(m.size()));
  Vector x = m;
  for (int sweep = 0; sweep < 5000; ++sweep) {
    const Vector x_before = x;
    for (std::size_t c = 0; c < sets; ++c) {
      const Vector y = x + corr[c];
      Vector px;
      if (c == 0) {
        px = clamp_box(K, y);
      } else {
        const Halfspace& hs = K.halfspaces[c - 1];
        if (hs.a.size() != m.size())
          throw std::invalid_argument("project_onto_K: halfspace size mismatch");
        const double viol = hs.a.dot(y) - hs.b;
        px = viol > 0.0 ? Vector(y - (viol / hs.a.squaredNorm()) * hs.a) : y;
      }
      corr[c] = y - px;
      x = std::move(px);
    }
    if ((x - x_before).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + x.cwiseAbs().maxCoeff()))
      break;
  }
  return x;
}

SelectionResult select_optimal(const EvalContext& ctx, const ConstraintSet& K,
                               const SolverConfig& cfg) {
  if (!ctx.has_phi()) throw std::logic_error("select_optimal needs profit fields");
  cfg.validate_schedule();
  const int n = ctx.n_agents();

  // The game ranges over subpartitions whatever the instance mode says.
  const EvalContext gctx(*ctx.space, *ctx.psi, ctx.phi, Mode::subpartition);

  // Attainable moments always lie in [0, integral of psi_i]; fold that box
  // into K so the support function stays finite.
  const auto& w = ctx.space->weights();
  const auto& psi = ctx.psi->values();
  Vector psi_int(n);
  for (int i = 0; i < n; ++i)
    psi_int[i] = tree_sum(ctx.n_atoms(),
                          [&](Eigen::Index j) { return psi(i, j) * w[j]; });

  ConstraintSet KB = K;
  KB.lower = K.lower ? Vector(K.lower->cwiseMax(0.0)) : Vector(Vector::Zero(n));
  KB.upper = K.upper ? Vector(K.upper->cwiseMin(psi_int)) : psi_int;
  if (((*KB.upper - *KB.lower).minCoeff()) < -1e-12)
    throw std::invalid_argument(
        "constraint set excludes every attainable moment vector");
  KB.upper = KB.upper->cwiseMax(*KB.lower);

  const int R = static_cast<int>(KB.halfspaces.size());
  const GameSolution a = solve_game(gctx, *KB.lower, *KB.upper, KB.halfspaces, cfg,
                                     Vector::Zero(n + R));
  const Vector m_a = project_onto_K(KB, a.m);

  // A perturbed restart probes whether the saddle (and so the argmax) is
  // unique; the joint objective is strictly convex, so disagreement here
  // means one run stopped short.
  std::mt19937_64 rng(cfg.seed ^ instance_hash(*ctx.space, *ctx.psi, m_a) ^
                      0x2545f4914f6cdd1dull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector q_b = a.q;
  const double jscale = 0.5 * (1.0 + a.q.cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < q_b.size(); ++i) q_b[i] += jscale * gauss(rng);
  const GameSolution b = solve_game(gctx, *KB.lower, *KB.upper, KB.halfspaces, cfg,
                                     std::move(q_b));
  const Vector m_b = project_onto_K(KB, b.m);

  SelectionResult res;
  res.m_star = m_a;
  res.restart_diff = (m_a - m_b).cwiseAbs().maxCoeff();
  res.ascent_iterations = a.iterations + b.iterations;

  SolverConfig fin = cfg;
  fin.check_feasibility = false;
  const Vector p_warm = a.q.head(n);
  const SolveResult sol = solve_dual(gctx, m_a, fin, &p_warm);
  res.h = sol.h;
  res.report = sol.report;
  res.profit = sol.report.dual_value;
  return res;
}

}  // namespace pmk
