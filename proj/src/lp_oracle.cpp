#include "pmk/lp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pmk {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr int kMaxPivots = 200000;

struct SimplexOutcome {
  LpStatus status = LpStatus::optimal;
  Vector x;
  double value = 0.0;
};

// One tableau pivot at (row, col): row-reduce every other row and the
// objective row against the unit pivot.
void pivot(Matrix& T, Vector& obj, std::vector<int>& basis, int row, int col) {
  T.row(row) /= T(row, col);
  for (Eigen::Index r = 0; r < T.rows(); ++r) {
    if (r == row) continue;
    const double f = T(r, col);
    if (f != 0.0) T.row(r) -= f * T.row(row);
  }
  const double f = obj[col];
  if (f != 0.0) obj -= f * T.row(row).transpose();
  basis[row] = col;
}

// Entering column: Dantzig unless bland, then lowest eligible index.
int entering(const Vector& obj, int nv, bool bland) {
  int best = -1;
  double best_d = kPivotTol;
  for (int j = 0; j < nv; ++j) {
    if (obj[j] > best_d) {
      if (bland) return j;
      best = j;
      best_d = obj[j];
    }
  }
  return best;
}

// Leaving row by minimum ratio, ties broken toward the lowest basis index.
int leaving(const Matrix& T, const std::vector<int>& basis, int col) {
  const int rhs = static_cast<int>(T.cols()) - 1;
  int best = -1;
  double best_ratio = std::numeric_limits<double>::infinity();
  for (Eigen::Index r = 0; r < T.rows(); ++r) {
    if (T(r, col) <= kPivotTol) continue;
    const double ratio = T(r, rhs) / T(r, col);
    if (ratio < best_ratio - 1e-12 ||
        (ratio < best_ratio + 1e-12 && best >= 0 && basis[r] < basis[best])) {
      best = static_cast<int>(r);
      best_ratio = ratio;
    }
  }
  return best;
}

// Runs max-obj pivots in place until optimal; throws on an unbounded ray.
void run_phase(Matrix& T, Vector& obj, std::vector<int>& basis, int nv,
               int* pivot_budget) {
  bool bland = false;
  int stall = 0;
  const int rhs = static_cast<int>(T.cols()) - 1;
  double last_value = -obj[rhs];
  while (true) {
    const int col = entering(obj, nv, bland);
    if (col < 0) return;
    const int row = leaving(T, basis, col);
    if (row < 0) throw std::runtime_error("LP is unbounded");
    if (--*pivot_budget <= 0) throw std::runtime_error("simplex pivot budget exhausted");
    pivot(T, obj, basis, row, col);
    const double value = -obj[rhs];
    if (value > last_value + 1e-13) {
      stall = 0;
      last_value = value;
    } else if (!bland && ++stall > 64) {
      bland = true;  // anti-cycling fallback
    }
  }
}

// maximize c.x subject to Aeq x = beq, Aub x <= bub, x >= 0.
SimplexOutcome solve_standard(const Matrix& Aeq, const Vector& beq, const Matrix& Aub,
                              const Vector& bub, const Vector& c) {
  const int nv = static_cast<int>(c.size());
  const int meq = static_cast<int>(Aeq.rows());
  const int mub = static_cast<int>(Aub.rows());
  const int m = meq + mub;
  const int n_slack = mub;
  const int n_art = m;
  const int cols = nv + n_slack + n_art + 1;
  const int rhs = cols - 1;

  Matrix T = Matrix::Zero(m, cols);
  if (meq > 0) {
    T.block(0, 0, meq, nv) = Aeq;
    T.block(0, rhs, meq, 1) = beq;
  }
  if (mub > 0) {
    T.block(meq, 0, mub, nv) = Aub;
    T.block(meq, nv, mub, n_slack) = Matrix::Identity(mub, mub);
    T.block(meq, rhs, mub, 1) = bub;
  }
  for (int r = 0; r < m; ++r)
    if (T(r, rhs) < 0.0) T.row(r) = -T.row(r);
  for (int r = 0; r < m; ++r) T(r, nv + n_slack + r) = 1.0;

  std::vector<int> basis(m);
  for (int r = 0; r < m; ++r) basis[r] = nv + n_slack + r;

  // Phase 1: maximize -(sum of artificials); reduced costs fall out of the
  // all-artificial basis as the column sums.
  Vector obj = Vector::Zero(cols);
  for (int j = 0; j < nv + n_slack; ++j) obj[j] = T.col(j).sum();
  obj[rhs] = T.col(rhs).sum();  // stored negated: obj[rhs] == -value
  const double feas_tol = 1e-8 * (1.0 + T.col(rhs).cwiseAbs().sum());

  int budget = kMaxPivots;
  run_phase(T, obj, basis, nv + n_slack, &budget);

  const double art_sum = obj[rhs];
  if (art_sum > feas_tol) return {LpStatus::infeasible, Vector(), 0.0};

  // Drive leftover artificials out of the basis; rows that cannot pivot are
  // redundant and get dropped.
  std::vector<int> keep;
  for (int r = 0; r < m; ++r) {
    if (basis[r] < nv + n_slack) {
      keep.push_back(r);
      continue;
    }
    int col = -1;
    for (int j = 0; j < nv + n_slack; ++j) {
      if (std::abs(T(r, j)) > kPivotTol) {
        col = j;
        break;
      }
    }
    if (col >= 0) {
      pivot(T, obj, basis, r, col);
      keep.push_back(r);
    }
  }

  const int m2 = static_cast<int>(keep.size());
  Matrix T2(m2, nv + n_slack + 1);
  std::vector<int> basis2(m2);
  for (int k = 0; k < m2; ++k) {
    T2.block(k, 0, 1, nv + n_slack) = T.block(keep[k], 0, 1, nv + n_slack);
    T2(k, nv + n_slack) = T(keep[k], rhs);
    basis2[k] = basis[keep[k]];
  }

  // Phase 2 objective row, rebuilt from scratch for the surviving basis.
  Vector c2 = Vector::Zero(nv + n_slack);
  c2.head(nv) = c;
  Vector obj2 = Vector::Zero(nv + n_slack + 1);
  for (int j = 0; j < nv + n_slack; ++j) {
    double cb = 0.0;
    for (int k = 0; k < m2; ++k) cb += c2[basis2[k]] * T2(k, j);
    obj2[j] = c2[j] - cb;
  }
  double v0 = 0.0;
  for (int k = 0; k < m2; ++k) v0 += c2[basis2[k]] * T2(k, nv + n_slack);
  obj2[nv + n_slack] = -v0;

  run_phase(T2, obj2, basis2, nv + n_slack, &budget);

  Vector x = Vector::Zero(nv);
  for (int k = 0; k < m2; ++k)
    if (basis2[k] < nv) x[basis2[k]] = T2(k, nv + n_slack);
  const double value = c.dot(x);
  return {LpStatus::optimal, std::move(x), value};
}

}  // namespace

LpResult lp_solve(const EvalContext& ctx, const Vector* target, const ConstraintSet* box) {
  if (!ctx.has_phi()) throw std::logic_error("lp_solve needs profit fields");
  if ((target == nullptr) == (box == nullptr))
    throw std::invalid_argument("lp_solve takes exactly one of target, constraint set");
  const int n = ctx.n_agents();
  const int atoms = ctx.n_atoms();
  if (static_cast<long>(n) * atoms > 5000)
    throw std::invalid_argument("LP oracle is limited to n_agents * n_atoms <= 5000");
  if (target && target->size() != n)
    throw std::invalid_argument("target size does not match agent count");

  const auto& w = ctx.space->weights();
  const auto& psi = ctx.psi->values();
  const auto& phi = ctx.phi->values();
  const int nh = n * atoms;  // h_ij at column j*n + i
  auto var = [n](int i, int j) { return j * n + i; };

  // Column sums: equalities for partitions, <= 1 rows for subpartitions.
  const bool sub = ctx.subpartition();
  std::vector<Vector> eq_rows, ub_rows;
  std::vector<double> eq_rhs, ub_rhs;
  for (int j = 0; j < atoms; ++j) {
    Vector row = Vector::Zero(nh);
    for (int i = 0; i < n; ++i) row[var(i, j)] = 1.0;
    (sub ? ub_rows : eq_rows).push_back(std::move(row));
    (sub ? ub_rhs : eq_rhs).push_back(1.0);
  }

  auto moment_row = [&](int i) {
    Vector row = Vector::Zero(nh);
    for (int j = 0; j < atoms; ++j) row[var(i, j)] = psi(i, j) * w[j];
    return row;
  };

  if (target) {
    for (int i = 0; i < n; ++i) {
      eq_rows.push_back(moment_row(i));
      eq_rhs.push_back((*target)[i]);
    }
  } else {
    if (box->lower && box->lower->size() != n)
      throw std::invalid_argument("constraint lower bound size mismatch");
    if (box->upper && box->upper->size() != n)
      throw std::invalid_argument("constraint upper bound size mismatch");
    for (int i = 0; i < n; ++i) {
      const Vector mi = moment_row(i);
      if (box->upper) {
        ub_rows.push_back(mi);
        ub_rhs.push_back((*box->upper)[i]);
      }
      if (box->lower) {
        ub_rows.push_back(-mi);
        ub_rhs.push_back(-(*box->lower)[i]);
      }
    }
    for (const auto& hs : box->halfspaces) {
      if (hs.a.size() != n)
        throw std::invalid_argument("halfspace normal size mismatch");
      Vector row = Vector::Zero(nh);
      for (int i = 0; i < n; ++i)
        if (hs.a[i] != 0.0) row += hs.a[i] * moment_row(i);
      ub_rows.push_back(std::move(row));
      ub_rhs.push_back(hs.b);
    }
  }

  Matrix Aeq(static_cast<Eigen::Index>(eq_rows.size()), nh);
  Vector beq(static_cast<Eigen::Index>(eq_rows.size()));
  for (std::size_t r = 0; r < eq_rows.size(); ++r) {
    Aeq.row(static_cast<Eigen::Index>(r)) = eq_rows[r];
    beq[static_cast<Eigen::Index>(r)] = eq_rhs[r];
  }
  Matrix Aub(static_cast<Eigen::Index>(ub_rows.size()), nh);
  Vector bub(static_cast<Eigen::Index>(ub_rows.size()));
  for (std::size_t r = 0; r < ub_rows.size(); ++r) {
    Aub.row(static_cast<Eigen::Index>(r)) = ub_rows[r];
    bub[static_cast<Eigen::Index>(r)] = ub_rhs[r];
  }

  Vector c(nh);
  for (int j = 0; j < atoms; ++j)
    for (int i = 0; i < n; ++i) c[var(i, j)] = phi(i, j) * w[j];

  const SimplexOutcome out = solve_standard(Aeq, beq, Aub, bub, c);

  LpResult res;
  res.status = out.status;
  res.h.mode = ctx.mode;
  if (out.status == LpStatus::infeasible) return res;

  res.h.h.resize(n, atoms);
  for (int j = 0; j < atoms; ++j)
    for (int i = 0; i < n; ++i)
      res.h.h(i, j) = std::clamp(out.x[var(i, j)], 0.0, 1.0);
  res.value = out.value;

  constexpr double frac_tol = 1e-7;
  res.label.assign(atoms, kUnassigned);
  for (int j = 0; j < atoms; ++j) {
    double col_max = 0.0;
    int arg = kUnassigned;
    bool fractional = false;
    for (int i = 0; i < n; ++i) {
      const double v = res.h.h(i, j);
      if (v > frac_tol && v < 1.0 - frac_tol) fractional = true;
      if (v > col_max + 1e-15) {
        col_max = v;
        arg = i;
      }
    }
    if (col_max > 0.5 || (!sub && arg >= 0)) res.label[j] = arg;
    if (fractional) res.fractional_atoms.push_back(j);
  }
  return res;
}

std::optional<BruteForceResult> brute_force_strong(const EvalContext& ctx,
                                                   const Vector& m, double tol) {
  if (!ctx.has_phi()) throw std::logic_error("brute_force_strong needs profit fields");
  const int n = ctx.n_agents();
  const int atoms = ctx.n_atoms();
  const int slots = n + (ctx.subpartition() ? 1 : 0);  // last slot = unassigned
  double combos = 1.0;
  for (int j = 0; j < atoms; ++j) {
    combos *= slots;
    if (combos > 2e6)
      throw std::invalid_argument("brute force guard: too many assignments");
  }

  const auto& w = ctx.space->weights();
  const auto& psi = ctx.psi->values();
  const auto& phi = ctx.phi->values();

  std::vector<int> digit(atoms, 0);
  std::optional<BruteForceResult> best;
  Vector moment(n);
  while (true) {
    moment.setZero();
    double profit = 0.0;
    for (int j = 0; j < atoms; ++j) {
      const int d = digit[j];
      if (d < n) {
        moment[d] += psi(d, j) * w[j];
        profit += phi(d, j) * w[j];
      }
    }
    if ((moment - m).cwiseAbs().maxCoeff() <= tol) {
      if (!best || profit > best->value) {
        StrongPartition sp;
        sp.mode = ctx.mode;
        sp.label.resize(atoms);
        for (int j = 0; j < atoms; ++j)
          sp.label[j] = digit[j] < n ? digit[j] : kUnassigned;
        best = BruteForceResult{std::move(sp), profit};
      }
    }
    int j = 0;
    while (j < atoms && ++digit[j] == slots) digit[j++] = 0;
    if (j == atoms) break;
  }
  return best;
}

}  // namespace pmk
