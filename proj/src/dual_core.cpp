#include "pmk/dual_core.hpp"

#include "pmk/reduce.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace pmk {

namespace {

std::atomic<int> g_threads{1};

thread_local std::vector<double> t_slots;

// Writes the slot values of one atom into buf: agents first (p_i psi_i,
// plus phi_i when requested), then a trailing 0 when plus_slot is set.
// Returns the slot count.
int fill_slots(const EvalContext& ctx, int atom, const Vector& p, bool use_phi,
               bool plus_slot, std::vector<double>& buf) {
  const int n = ctx.n_agents();
  const int count = n + (plus_slot ? 1 : 0);
  if (static_cast<int>(buf.size()) < count) buf.resize(count);
  const auto& psi = ctx.psi->values();
  if (use_phi) {
    const auto& phi = ctx.phi->values();
    for (int i = 0; i < n; ++i) buf[i] = phi(i, atom) + p[i] * psi(i, atom);
  } else {
    for (int i = 0; i < n; ++i) buf[i] = p[i] * psi(i, atom);
  }
  if (plus_slot) buf[n] = 0.0;
  return count;
}

double max_of(const std::vector<double>& buf, int count) {
  double m = buf[0];
  for (int k = 1; k < count; ++k) m = std::max(m, buf[k]);
  return m;
}

double smoothed_max(const std::vector<double>& buf, int count, double eps) {
  const double m = max_of(buf, count);
  if (eps == 0.0) return m;
  double s = 0.0;
  for (int k = 0; k < count; ++k) s += std::exp((buf[k] - m) / eps);
  return m + eps * std::log(s);
}

double integrated_max(const EvalContext& ctx, const Vector& p, bool use_phi,
                      bool plus_slot) {
  if (use_phi && !ctx.has_phi())
    throw std::logic_error("profit functional requested without profit fields");
  const auto& w = ctx.space->weights();
  return tree_sum(ctx.n_atoms(), [&](Eigen::Index j) {
    const int count = fill_slots(ctx, static_cast<int>(j), p, use_phi, plus_slot, t_slots);
    return w[j] * max_of(t_slots, count);
  });
}

}  // namespace

void set_thread_count(int threads) {
  g_threads.store(std::max(1, threads), std::memory_order_relaxed);
}

int thread_count() { return g_threads.load(std::memory_order_relaxed); }

double max_eps(const Vector& a, double eps) {
  if (a.size() == 0) throw std::invalid_argument("max_eps of an empty vector");
  if (eps < 0.0) throw std::invalid_argument("max_eps needs eps >= 0");
  const double m = a.maxCoeff();
  if (eps == 0.0) return m;
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.size(); ++k) s += std::exp((a[k] - m) / eps);
  return m + eps * std::log(s);
}

double xi0(const EvalContext& ctx, int atom, const Vector& p) {
  const int count = fill_slots(ctx, atom, p, false, false, t_slots);
  return max_of(t_slots, count);
}

double xi0_plus(const EvalContext& ctx, int atom, const Vector& p) {
  return std::max(xi0(ctx, atom, p), 0.0);
}

double xi_phi(const EvalContext& ctx, int atom, const Vector& p) {
  if (!ctx.has_phi())
    throw std::logic_error("xi_phi requested without profit fields");
  const int count = fill_slots(ctx, atom, p, true, false, t_slots);
  return max_of(t_slots, count);
}

double xi_phi_plus(const EvalContext& ctx, int atom, const Vector& p) {
  return std::max(xi_phi(ctx, atom, p), 0.0);
}

ArgmaxInfo xi_argmax(const EvalContext& ctx, int atom, const Vector& p,
                     double tie_tol) {
  const int count = fill_slots(ctx, atom, p, ctx.has_phi(), ctx.subpartition(), t_slots);
  ArgmaxInfo info;
  info.value = max_of(t_slots, count);
  for (int k = 0; k < count; ++k)
    if (t_slots[k] >= info.value - tie_tol)
      info.winners.push_back(k < ctx.n_agents() ? k : kUnassigned);
  return info;
}

double Xi0(const EvalContext& ctx, const Vector& p) {
  return integrated_max(ctx, p, false, false);
}

double Xi0_plus(const EvalContext& ctx, const Vector& p) {
  return integrated_max(ctx, p, false, true);
}

double Xi_phi(const EvalContext& ctx, const Vector& p) {
  return integrated_max(ctx, p, true, false);
}

double Xi_phi_plus(const EvalContext& ctx, const Vector& p) {
  return integrated_max(ctx, p, true, true);
}

double Xi_exact(const EvalContext& ctx, const Vector& p) {
  return integrated_max(ctx, p, ctx.has_phi(), ctx.subpartition());
}

double Xi_eps(const EvalContext& ctx, const Vector& p, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("Xi_eps needs eps > 0");
  const auto& w = ctx.space->weights();
  const bool use_phi = ctx.has_phi();
  const bool plus = ctx.subpartition();
  return tree_sum(ctx.n_atoms(), [&](Eigen::Index j) {
    const int count = fill_slots(ctx, static_cast<int>(j), p, use_phi, plus, t_slots);
    return w[j] * smoothed_max(t_slots, count, eps);
  });
}

XiEpsResult Xi_eps_with_grad(const EvalContext& ctx, const Vector& p, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("Xi_eps needs eps > 0");
  const int n = ctx.n_agents();
  const auto& w = ctx.space->weights();
  const auto& psi = ctx.psi->values();
  const bool use_phi = ctx.has_phi();
  const bool plus = ctx.subpartition();

  auto leaf = [&](Eigen::Index lo, Eigen::Index hi) {
    ValueGrad acc{0.0, Vector::Zero(n)};
    std::vector<double>& slots = t_slots;
    for (Eigen::Index j = lo; j < hi; ++j) {
      const int count = fill_slots(ctx, static_cast<int>(j), p, use_phi, plus, slots);
      const double m = max_of(slots, count);
      double s = 0.0;
      for (int k = 0; k < count; ++k) {
        slots[k] = std::exp((slots[k] - m) / eps);
        s += slots[k];
      }
      acc.value += w[j] * (m + eps * std::log(s));
      const double scale = w[j] / s;
      for (int i = 0; i < n; ++i) acc.grad[i] += psi(i, j) * slots[i] * scale;
    }
    return acc;
  };
  auto out = tree_sum_valgrad(ctx.n_atoms(), n, leaf);
  return XiEpsResult{out.value, std::move(out.grad)};
}

WeakPartition softmax_measure(const EvalContext& ctx, const Vector& p, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("softmax_measure needs eps > 0");
  const int n = ctx.n_agents();
  const int atoms = ctx.n_atoms();
  const bool use_phi = ctx.has_phi();
  const bool plus = ctx.subpartition();

  WeakPartition wp;
  wp.mode = ctx.mode;
  wp.h.resize(n, atoms);
  std::vector<double> slots;
  for (int j = 0; j < atoms; ++j) {
    const int count = fill_slots(ctx, j, p, use_phi, plus, slots);
    const double m = max_of(slots, count);
    double s = 0.0;
    for (int k = 0; k < count; ++k) {
      slots[k] = std::exp((slots[k] - m) / eps);
      s += slots[k];
    }
    for (int i = 0; i < n; ++i) wp.h(i, j) = slots[i] / s;
  }
  return wp;
}

Vector moment_vector(const EvalContext& ctx, const WeakPartition& h) {
  const int n = ctx.n_agents();
  if (h.n_agents() != n || h.n_atoms() != ctx.n_atoms())
    throw std::invalid_argument("weak partition shape does not match the instance");
  const auto& w = ctx.space->weights();
  const auto& psi = ctx.psi->values();
  Vector m(n);
  for (int i = 0; i < n; ++i)
    m[i] = tree_sum(ctx.n_atoms(),
                    [&](Eigen::Index j) { return psi(i, j) * h.h(i, j) * w[j]; });
  return m;
}

}  // namespace pmk
