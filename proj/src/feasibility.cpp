#include "pmk/feasibility.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace pmk {

namespace {

// Smoothed support gap Xi_0_eps(p) - m.p, minimized over the unit sphere.
double smoothed_gap(const EvalContext& base, const Vector& m, const Vector& p,
                    double eps) {
  return Xi_eps(base, p, eps) - m.dot(p);
}

// Projected descent on the sphere from a unit start; returns the refined
// direction. The objective is convex, the sphere is not, hence multistart.
Vector refine_direction(const EvalContext& base, const Vector& m, Vector p,
                        double eps, int max_iters, double tol) {
  double t = 0.25;
  double f = smoothed_gap(base, m, p, eps);
  for (int it = 0; it < max_iters; ++it) {
    const XiEpsResult r = Xi_eps_with_grad(base, p, eps);
    Vector g = r.grad - m;
    g -= g.dot(p) * p;  // tangent component
    const double gn = g.norm();
    if (gn <= tol) break;
    bool accepted = false;
    for (int back = 0; back < 50; ++back) {
      Vector q = p - t * g;
      const double qn = q.norm();
      if (qn < 1e-12) {
        t *= 0.5;
        continue;
      }
      q /= qn;
      const double fq = smoothed_gap(base, m, q, eps);
      if (fq <= f - 1e-4 * t * gn * gn) {
        p = std::move(q);
        f = fq;
        t = std::min(t * 2.0, 4.0);
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
  }
  return p;
}

}  // namespace

double support_function_gap(const EvalContext& ctx, const Vector& m, const Vector& p) {
  if (m.size() != ctx.n_agents() || p.size() != ctx.n_agents())
    throw std::invalid_argument("support_function_gap: size mismatch");
  return Xi_exact(ctx.without_phi(), p) - m.dot(p);
}

FeasibilityVerdict check_membership(const EvalContext& ctx, const Vector& m,
                                    const SolverConfig& cfg) {
  const int n = ctx.n_agents();
  if (m.size() != n)
    throw std::invalid_argument("check_membership: target size mismatch");
  for (Eigen::Index i = 0; i < m.size(); ++i)
    if (!std::isfinite(m[i]))
      throw std::invalid_argument("check_membership: target must be finite");

  const EvalContext base = ctx.without_phi();

  std::vector<Vector> starts;
  for (int i = 0; i < n; ++i) {
    Vector e = Vector::Zero(n);
    e[i] = 1.0;
    starts.push_back(e);
    starts.push_back(-e);
  }
  if (m.norm() > 0.0) {
    starts.push_back(m / m.norm());
    starts.push_back(-m / m.norm());
  }
  Vector ones = Vector::Ones(n) / std::sqrt(double(n));
  starts.push_back(ones);
  starts.push_back(-ones);

  std::mt19937_64 rng(cfg.seed ^ instance_hash(*ctx.space, *ctx.psi, m));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int k = 0; k < 16; ++k) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v[i] = gauss(rng);
    const double vn = v.norm();
    if (vn > 1e-12) starts.push_back(v / vn);
  }

  FeasibilityVerdict verdict;
  verdict.margin = std::numeric_limits<double>::infinity();
  auto consider = [&](const Vector& p) {
    const double gap = Xi_exact(base, p) - m.dot(p);
    if (gap < verdict.margin) {
      verdict.margin = gap;
      verdict.worst_p = p;
    }
  };

  const double tol = 1e-9 * (1.0 + ctx.psi->sup_norm() + m.cwiseAbs().maxCoeff());
  for (const Vector& s : starts) {
    consider(s);
    Vector p = refine_direction(base, m, s, 1e-3, 150, tol);
    consider(p);
    p = refine_direction(base, m, p, 1e-5, 150, tol);
    consider(p);
    if (verdict.margin < -10.0 * cfg.feas_tol) break;  // certified already
  }

  verdict.member = verdict.margin >= -cfg.feas_tol;
  if (verdict.margin > cfg.feas_tol) {
    verdict.interior = true;
  } else if (verdict.margin < -cfg.feas_tol) {
    verdict.interior = false;
  } else {
    verdict.notes.push_back("margin within tolerance of zero; boundary suspected");
  }
  if (!verdict.member)
    verdict.notes.push_back("worst_p certifies non-membership: Xi_0(p) < m.p");
  return verdict;
}

}  // namespace pmk
