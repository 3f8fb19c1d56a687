#include "pmk/partition_solver.hpp"

#include "pmk/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace pmk {

namespace {

struct StageOutcome {
  int iterations = 0;
  double grad_norm = 0.0;
  bool hit_cap = false;
  bool converged = false;
};

// Minimizes F(p) = Xi_eps(p) + (delta/2)|p|^2 - m.p in place. BB steps with
// Armijo backtracking; F is strictly convex and coercive for delta > 0, so
// the minimizer exists and is unique.
StageOutcome minimize_stage(const EvalContext& ctx, const Vector& m, double eps,
                            double delta, double tol, int max_iters, double p_max,
                            Vector& p) {
  auto value = [&](const Vector& q) {
    return Xi_eps(ctx, q, eps) + 0.5 * delta * q.squaredNorm() - m.dot(q);
  };

  XiEpsResult r = Xi_eps_with_grad(ctx, p, eps);
  double F = r.value + 0.5 * delta * p.squaredNorm() - m.dot(p);
  Vector g = r.grad + delta * p - m;

  const double psi_max = ctx.psi->sup_norm();
  const double lip = psi_max * psi_max / eps + delta;
  double t_bb = 1.0 / lip;

  StageOutcome out;
  int flat_steps = 0;
  for (out.iterations = 0; out.iterations < max_iters; ++out.iterations) {
    out.grad_norm = g.norm();
    if (out.grad_norm <= tol) {
      out.converged = true;
      return out;
    }
    double t = t_bb;
    bool accepted = false;
    Vector p_new;
    double F_new = 0.0;
    for (int back = 0; back < 60; ++back) {
      p_new = p - t * g;
      F_new = value(p_new);
      if (F_new <= F - 1e-4 * t * out.grad_norm * out.grad_norm) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      out.converged = out.grad_norm <= 10.0 * tol;
      return out;
    }
    XiEpsResult rn = Xi_eps_with_grad(ctx, p_new, eps);
    Vector g_new = rn.grad + delta * p_new - m;
    const Vector dp = p_new - p;
    const Vector dg = g_new - g;
    const double sy = dp.dot(dg);
    t_bb = sy > 1e-300 ? dp.squaredNorm() / sy : 1.0 / lip;
    t_bb = std::clamp(t_bb, 0.01 / lip, 10.0 / delta);
    const double drop = F - F_new;
    p = std::move(p_new);
    F = F_new;
    g = std::move(g_new);
    if (p.norm() > p_max) {
      out.hit_cap = true;
      return out;
    }
    // accepted decrements at rounding scale certify nothing; a long run of
    // them is the same stall as a failed backtrack
    if (drop <= 8.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(F))) {
      if (++flat_steps >= 30) {
        out.grad_norm = g.norm();
        out.converged = out.grad_norm <= 10.0 * tol;
        return out;
      }
    } else {
      flat_steps = 0;
    }
  }
  out.grad_norm = g.norm();
  return out;
}

FieldMatrix slice_rows(const FieldMatrix& fm, const std::vector<int>& rows) {
  Matrix sub(static_cast<Eigen::Index>(rows.size()), fm.n_atoms());
  for (std::size_t k = 0; k < rows.size(); ++k)
    sub.row(static_cast<Eigen::Index>(k)) = fm.values().row(rows[k]);
  return FieldMatrix(std::move(sub), fm.kind());
}

}  // namespace

double minimize_damped_dual(const EvalContext& ctx, const Vector& m, double eps,
                            double delta, double tol, int max_iters, Vector& p) {
  if (eps <= 0.0 || delta <= 0.0)
    throw std::invalid_argument("minimize_damped_dual needs eps > 0 and delta > 0");
  minimize_stage(ctx, m, eps, delta, tol, max_iters, 1e308, p);
  return Xi_eps(ctx, p, eps) + 0.5 * delta * p.squaredNorm() - m.dot(p);
}

SolveResult solve_dual(const EvalContext& ctx, const Vector& m, const SolverConfig& cfg,
                       const Vector* p0) {
  if (!ctx.has_phi()) throw std::logic_error("solve_dual needs profit fields");
  const int n = ctx.n_agents();
  if (m.size() != n) throw std::invalid_argument("solve_dual: target size mismatch");
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(m[i]))
      throw std::invalid_argument("solve_dual: target must be finite");
  cfg.validate_schedule();
  if (p0 && p0->size() != n)
    throw std::invalid_argument("solve_dual: warm start size mismatch");

  SolveResult res;
  res.h.mode = ctx.mode;
  SolveReport& rep = res.report;

  std::optional<FeasibilityVerdict> verdict;
  if (cfg.check_feasibility) {
    verdict = check_membership(ctx, m, cfg);
    if (!verdict->member) {
      rep.status = SolveStatus::infeasible;
      rep.certificate = verdict->worst_p;
      rep.dual_value = std::numeric_limits<double>::infinity();
      rep.primal_value = 0.0;
      rep.gap = std::numeric_limits<double>::infinity();
      res.p_star = verdict->worst_p;
      return res;
    }
  }

  // Agents with m_i == 0 are dropped from the iteration; a large negative
  // price reinstates them afterwards without touching the dual value.
  std::vector<int> active;
  for (int i = 0; i < n; ++i)
    if (m[i] != 0.0) active.push_back(i);
  const bool restricted = static_cast<int>(active.size()) < n;

  std::optional<FieldMatrix> psi_a, phi_a;
  Vector m_a(static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k) m_a[k] = m[active[k]];
  EvalContext actx = ctx;
  if (restricted && !active.empty()) {
    psi_a = slice_rows(*ctx.psi, active);
    phi_a = slice_rows(*ctx.phi, active);
    actx = EvalContext(*ctx.space, *psi_a, &*phi_a, ctx.mode);
  }

  Vector p_a = Vector::Zero(static_cast<Eigen::Index>(active.size()));
  if (p0)
    for (std::size_t k = 0; k < active.size(); ++k) p_a[k] = (*p0)[active[k]];

  bool cap_hit = false;
  bool last_converged = true;
  if (!active.empty()) {
    for (std::size_t s = 0; s < cfg.eps_schedule.size(); ++s) {
      const double eps = cfg.eps_schedule[s];
      const double delta = cfg.delta > 0.0 ? cfg.delta : eps;
      const bool last = s + 1 == cfg.eps_schedule.size();
      const double tol = last ? cfg.grad_tol : std::max(cfg.grad_tol, 1e-2 * eps);
      const StageOutcome out =
          minimize_stage(actx, m_a, eps, delta, tol, cfg.max_iters, cfg.p_max, p_a);
      rep.total_iterations += out.iterations;
      rep.stage_dual_values.push_back(Xi_exact(actx, p_a) - m_a.dot(p_a));
      if (out.hit_cap) {
        cap_hit = true;
        break;
      }
      if (last) last_converged = out.converged;
    }
  }

  // Reinstate dropped agents below every winning slot.
  Vector p = Vector::Zero(n);
  const double bound = p_a.size() > 0 ? p_a.cwiseAbs().maxCoeff() : 0.0;
  const double phi_sup = ctx.phi->sup_norm();
  const double psi_sup = ctx.psi->sup_norm();
  for (std::size_t k = 0; k < active.size(); ++k) p[active[k]] = p_a[k];
  if (restricted) {
    for (int i = 0; i < n; ++i) {
      if (m[i] != 0.0) continue;
      const double psi_min_i = ctx.psi->values().row(i).minCoeff();
      p[i] = -(2.0 * phi_sup + bound * psi_sup + 1.0) / psi_min_i;
    }
  }

  if (cap_hit) {
    // A diverging p usually means the target sits on or just outside the
    // boundary; re-probe membership at a tighter tolerance to tell which.
    SolverConfig probe = cfg;
    probe.feas_tol = 0.01 * cfg.feas_tol;
    probe.seed = cfg.seed + 17;
    verdict = check_membership(ctx, m, probe);
    if (!verdict->member) {
      rep.status = SolveStatus::infeasible;
      rep.certificate = verdict->worst_p;
    } else {
      rep.status = SolveStatus::boundary_suspected;
    }
  } else if (!last_converged) {
    rep.status = SolveStatus::iteration_limit;
  } else {
    rep.status = SolveStatus::converged;
  }

  const double eps_final = cfg.eps_schedule.back();
  res.p_star = p;
  res.h = softmax_measure(ctx, p, eps_final);
  rep.p_star = p;
  rep.dual_value = Xi_exact(ctx, p) - m.dot(p);
  rep.primal_value = primal_value(ctx, res.h);
  rep.gap = rep.dual_value - rep.primal_value;
  rep.moment_residual = moment_vector(ctx, res.h) - m;
  return res;
}

double primal_value(const EvalContext& ctx, const WeakPartition& h) {
  if (!ctx.has_phi()) throw std::logic_error("primal_value needs profit fields");
  if (h.n_agents() != ctx.n_agents() || h.n_atoms() != ctx.n_atoms())
    throw std::invalid_argument("primal_value: partition shape mismatch");
  const auto& w = ctx.space->weights();
  const auto& phi = ctx.phi->values();
  const int n = ctx.n_agents();
  return tree_sum(ctx.n_atoms(), [&](Eigen::Index j) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += phi(i, j) * h.h(i, j);
    return s * w[j];
  });
}

double weak_duality_gap(const EvalContext& ctx, const WeakPartition& h, const Vector& m,
                        const Vector& p, double moment_tol) {
  if (h.mode != ctx.mode)
    throw std::invalid_argument("weak_duality_gap: mode mismatch");
  validate(h);
  const Vector mom = moment_vector(ctx, h);
  if ((mom - m).cwiseAbs().maxCoeff() > moment_tol)
    throw std::invalid_argument(
        "weak_duality_gap: partition moments do not match the target");
  return Xi_exact(ctx, p) - m.dot(p) - primal_value(ctx, h);
}

StrongExtraction extract_strong(const EvalContext& ctx, const Vector& p,
                                double tie_tol) {
  if (p.size() != ctx.n_agents())
    throw std::invalid_argument("extract_strong: price vector size mismatch");
  const double scale = 1.0 + (ctx.has_phi() ? ctx.phi->sup_norm() : 0.0) +
                       p.cwiseAbs().maxCoeff() * ctx.psi->sup_norm();
  const double tol = tie_tol * scale;

  StrongExtraction out;
  out.partition.mode = ctx.mode;
  out.partition.label.resize(ctx.n_atoms());
  for (int j = 0; j < ctx.n_atoms(); ++j) {
    const ArgmaxInfo info = xi_argmax(ctx, j, p, tol);
    out.partition.label[j] = info.winners.front();
    if (info.winners.size() > 1) {
      out.tied_atoms.push_back(j);
      out.tied_mass += ctx.space->weight(j);
    }
  }
  return out;
}

double label_diff_mass(const DiscreteSpace& space, const StrongPartition& a,
                       const StrongPartition& b) {
  if (a.label.size() != b.label.size())
    throw std::invalid_argument("label_diff_mass: partitions differ in length");
  double mass = 0.0;
  for (std::size_t j = 0; j < a.label.size(); ++j) {
    if (a.label[j] == b.label[j]) continue;
    const int sides = (a.label[j] != kUnassigned) + (b.label[j] != kUnassigned);
    mass += sides * space.weight(static_cast<int>(j));
  }
  return mass;
}

UniquenessReport uniqueness_probe(const EvalContext& ctx, const Vector& m,
                                  const SolverConfig& cfg, int trials) {
  UniquenessReport rep;
  rep.trials = trials;

  const auto& psi = ctx.psi->values();
  const auto& phi = ctx.phi->values();
  for (int i = 0; i < ctx.n_agents() && !rep.degenerate_fields; ++i)
    for (int k = i + 1; k < ctx.n_agents(); ++k)
      if (psi.row(i) == psi.row(k) && phi.row(i) == phi.row(k)) {
        rep.degenerate_fields = true;
        break;
      }

  const SolveResult base = solve_dual(ctx, m, cfg);
  if (base.report.status == SolveStatus::infeasible) {
    rep.trials = 0;
    rep.note = "target infeasible; nothing to probe";
    return rep;
  }
  const StrongExtraction base_ext = extract_strong(ctx, base.p_star, cfg.tie_tol);

  std::mt19937_64 rng(cfg.seed ^ instance_hash(*ctx.space, *ctx.psi, m) ^
                      0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double scale = 0.5 * (1.0 + base.p_star.cwiseAbs().maxCoeff());
  for (int t = 0; t < trials; ++t) {
    SolverConfig cfg2 = cfg;
    cfg2.check_feasibility = false;
    cfg2.seed = cfg.seed + 1 + static_cast<std::uint64_t>(t);
    Vector p0 = base.p_star;
    for (Eigen::Index i = 0; i < p0.size(); ++i) p0[i] += scale * gauss(rng);
    const SolveResult alt = solve_dual(ctx, m, cfg2, &p0);
    const StrongExtraction ext = extract_strong(ctx, alt.p_star, cfg.tie_tol);
    rep.max_diff_mass = std::max(
        rep.max_diff_mass, label_diff_mass(*ctx.space, base_ext.partition, ext.partition));
  }
  rep.note = rep.degenerate_fields
                 ? "duplicate agent fields force non-uniqueness"
                 : "disagreement mass at or near tie scale indicates uniqueness";
  return rep;
}

}  // namespace pmk
