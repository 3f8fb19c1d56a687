#include "pmk/partition_solver.hpp"

#include "pmk/lp_oracle.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <random>

using namespace pmk;

namespace {

SolverConfig tight_config() {
  SolverConfig cfg;
  cfg.eps_schedule = {1.0,  0.3,  0.1,  0.03, 0.01, 0.003, 0.001,
                      3e-4, 1e-4, 3e-5, 1e-5, 3e-6, 1e-6};
  // gradients below ~1e-6 are unreachable at the smallest eps: the Armijo
  // test needs descent smaller than double rounding can certify
  cfg.grad_tol = 1e-6;
  return cfg;
}

}  // namespace

TEST_CASE("the smoothed dual lands on the exact optimum") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 6; ++trial) {
    const Mode mode = trial % 2 == 0 ? Mode::partition : Mode::subpartition;
    const int n = 2 + trial % 3;
    const ProblemInstance inst = testing::random_instance(rng, n, 30, mode);
    const EvalContext ctx = EvalContext::of(inst);
    const Vector m = testing::random_feasible_target(rng, inst);

    const SolveResult res = solve_dual(ctx, m, tight_config());
    CAPTURE(trial);
    REQUIRE(res.report.status == SolveStatus::converged);

    const LpResult lp = lp_solve(ctx, &m, nullptr);
    REQUIRE(lp.status == LpStatus::optimal);
    CHECK(res.report.dual_value >= lp.value - 1e-9);  // always an upper bound
    CHECK(res.report.dual_value - lp.value < 1e-4);
    CHECK(res.report.moment_residual.cwiseAbs().maxCoeff() < 1e-4);
    CHECK_NOTHROW(validate(res.h));
  }
}

TEST_CASE("reported duals bound the primal for every feasible pair") {
  std::mt19937_64 rng(42);
  const ProblemInstance inst = testing::random_instance(rng, 3, 25, Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);

  const SolveResult res = solve_dual(ctx, m, SolverConfig());
  const LpResult lp = lp_solve(ctx, &m, nullptr);
  REQUIRE(lp.status == LpStatus::optimal);

  // the oracle partition has exact moments, so the bound applies verbatim
  const double gap = weak_duality_gap(ctx, lp.h, m, res.p_star, 1e-6);
  CHECK(gap >= -1e-9);

  // any price vector gives a bound, not just the optimized one
  std::normal_distribution<double> g(0.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    Vector p(3);
    for (int i = 0; i < 3; ++i) p[i] = g(rng);
    CHECK(weak_duality_gap(ctx, lp.h, m, p, 1e-6) >= -1e-9);
  }
}

TEST_CASE("weak_duality_gap refuses off-moment partitions") {
  std::mt19937_64 rng(43);
  const ProblemInstance inst = testing::random_instance(rng, 3, 12, Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);
  const SolveResult res = solve_dual(ctx, m, SolverConfig());

  Vector off = m;
  off[0] += 0.1;
  CHECK_THROWS_AS(weak_duality_gap(ctx, res.h, off, res.p_star, 1e-6),
                  std::invalid_argument);
}

TEST_CASE("infeasible targets return a certificate instead of numbers") {
  std::mt19937_64 rng(44);
  const ProblemInstance inst = testing::random_instance(rng, 3, 15, Mode::subpartition);
  const EvalContext ctx = EvalContext::of(inst);
  Vector m = testing::random_feasible_target(rng, inst);
  m[1] += 4.0;

  const SolveResult res = solve_dual(ctx, m, SolverConfig());
  CHECK(res.report.status == SolveStatus::infeasible);
  REQUIRE(res.report.certificate.has_value());
  CHECK(support_function_gap(ctx, m, *res.report.certificate) < 0.0);
}

TEST_CASE("the iteration budget is respected and reported") {
  std::mt19937_64 rng(45);
  const ProblemInstance inst = testing::random_instance(rng, 3, 20, Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);

  SolverConfig cfg;
  cfg.eps_schedule = {1.0, 1e-3};
  cfg.max_iters = 1;
  cfg.grad_tol = 1e-12;
  const SolveResult res = solve_dual(ctx, m, cfg);
  CHECK(res.report.status == SolveStatus::iteration_limit);
  CHECK(res.report.total_iterations <= 2);
}

TEST_CASE("a tiny price cap triggers the boundary diagnosis") {
  std::mt19937_64 rng(46);
  const ProblemInstance inst = testing::random_instance(rng, 3, 20, Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);

  SolverConfig cfg;
  cfg.p_max = 1e-9;  // any real step trips the guard
  const SolveResult res = solve_dual(ctx, m, cfg);
  CHECK(res.report.status == SolveStatus::boundary_suspected);
}

TEST_CASE("agents without mass are dropped and priced out") {
  std::mt19937_64 rng(47);
  const ProblemInstance inst = testing::random_instance(rng, 3, 20, Mode::subpartition);
  const EvalContext ctx = EvalContext::of(inst);
  Vector m = testing::random_feasible_target(rng, inst);
  m[1] = 0.0;

  const SolveResult res = solve_dual(ctx, m, tight_config());
  REQUIRE(res.report.status == SolveStatus::converged);
  CHECK(res.h.h.row(1).maxCoeff() < 1e-12);
  CHECK(std::abs(res.report.moment_residual[1]) < 1e-12);

  // the reported dual matches the oracle on the full problem
  const LpResult lp = lp_solve(ctx, &m, nullptr);
  REQUIRE(lp.status == LpStatus::optimal);
  CHECK(res.report.dual_value >= lp.value - 1e-9);
  CHECK(res.report.dual_value - lp.value < 1e-4);
}

TEST_CASE("the empty target solves trivially in subpartition mode") {
  std::mt19937_64 rng(48);
  const ProblemInstance inst = testing::random_instance(rng, 2, 10, Mode::subpartition);
  const EvalContext ctx = EvalContext::of(inst);
  const SolveResult res = solve_dual(ctx, Vector::Zero(2), SolverConfig());
  REQUIRE(res.report.status == SolveStatus::converged);
  CHECK(res.report.dual_value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.h.h.maxCoeff() < 1e-12);
}

TEST_CASE("uniform profit shifts do not move the partition") {
  std::mt19937_64 rng(49);
  const ProblemInstance inst = testing::random_instance(rng, 3, 20, Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);
  const SolveResult base = solve_dual(ctx, m, SolverConfig());

  const double c = 5.0;
  const FieldMatrix phi_shift(inst.phi.values().array() + c, FieldKind::profit);
  const EvalContext shifted(inst.space, inst.psi, &phi_shift, inst.mode);

  // at the same prices: values shift by exactly c, the measure not at all
  const double dv = Xi_exact(shifted, base.p_star) - m.dot(base.p_star);
  CHECK(dv - (base.report.dual_value + c) == doctest::Approx(0.0).epsilon(1e-12));
  const WeakPartition h_shift = softmax_measure(shifted, base.p_star, 1e-4);
  CHECK((h_shift.h - base.h.h).cwiseAbs().maxCoeff() < 1e-10);

  // and an independent solve still lands on the same partition
  const SolveResult re = solve_dual(shifted, m, SolverConfig());
  CHECK(re.report.dual_value - (base.report.dual_value + c) ==
        doctest::Approx(0.0).epsilon(1e-8));
  CHECK((re.h.h - base.h.h).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("ties are detected and broken toward the lowest agent") {
  // two identical agents: every atom is a tie at the symmetric price
  Vector w = Vector::Constant(4, 0.25);
  Matrix psi = Matrix::Ones(2, 4);
  Matrix phi(2, 4);
  phi << 1, 2, 3, 4,
         1, 2, 3, 4;
  const DiscreteSpace space(w);
  const FieldMatrix psi_f(psi, FieldKind::price), phi_f(phi, FieldKind::profit);
  const EvalContext ctx(space, psi_f, &phi_f, Mode::partition);

  const StrongExtraction ext = extract_strong(ctx, Vector::Zero(2), 1e-9);
  CHECK(ext.tied_atoms.size() == 4);
  CHECK(ext.tied_mass == doctest::Approx(1.0));
  for (int lab : ext.partition.label) CHECK(lab == 0);

  // separate the agents: ties disappear
  Vector p(2);
  p << 0.5, -0.5;
  const StrongExtraction clean = extract_strong(ctx, p, 1e-9);
  CHECK(clean.tied_atoms.empty());
  for (int lab : clean.partition.label) CHECK(lab == 0);
}

TEST_CASE("unassigned atoms appear only when the free slot wins outright") {
  Vector w = Vector::Constant(2, 0.5);
  Matrix psi = Matrix::Ones(1, 2);
  Matrix phi(1, 2);
  phi << 0.4, -0.4;
  const DiscreteSpace space(w);
  const FieldMatrix psi_f(psi, FieldKind::price), phi_f(phi, FieldKind::profit);
  const EvalContext ctx(space, psi_f, &phi_f, Mode::subpartition);

  const StrongExtraction ext = extract_strong(ctx, Vector::Zero(1), 1e-9);
  CHECK(ext.partition.label[0] == 0);           // 0.4 beats the free slot
  CHECK(ext.partition.label[1] == kUnassigned);  // -0.4 loses to it

  // exact tie with the free slot goes to the agent
  Vector p(1);
  p << -0.4;
  const StrongExtraction tie = extract_strong(ctx, p, 1e-9);
  CHECK(tie.partition.label[0] == 0);
  CHECK(tie.tied_atoms == std::vector<int>{0});
}

TEST_CASE("label differences weigh moves by the cells they touch") {
  Vector w(3);
  w << 0.2, 0.3, 0.5;
  const DiscreteSpace space(w);
  StrongPartition a, b;
  a.mode = b.mode = Mode::subpartition;
  a.label = {0, 1, kUnassigned};
  b.label = {1, 1, 0};
  // atom 0 moves between agents (counts twice), atom 2 enters a cell (once)
  CHECK(label_diff_mass(space, a, b) == doctest::Approx(2 * 0.2 + 0.5));
  CHECK(label_diff_mass(space, a, a) == 0.0);
}

TEST_CASE("the uniqueness probe is quiet on generic instances") {
  std::mt19937_64 rng(50);
  const ProblemInstance inst = testing::random_instance(rng, 3, 20, Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);

  const UniquenessReport rep = uniqueness_probe(ctx, m, SolverConfig(), 2);
  CHECK_FALSE(rep.degenerate_fields);
  CHECK(rep.trials == 2);
  CHECK(rep.max_diff_mass <= 2.0 * 3 * inst.space.max_weight());
}

TEST_CASE("the uniqueness probe flags duplicated agents") {
  std::mt19937_64 rng(51);
  ProblemInstance inst = testing::random_instance(rng, 3, 15, Mode::partition);
  Matrix psi = inst.psi.values();
  Matrix phi = inst.phi.values();
  psi.row(2) = psi.row(0);
  phi.row(2) = phi.row(0);
  const FieldMatrix psi_f(psi, FieldKind::price), phi_f(phi, FieldKind::profit);
  const EvalContext ctx(inst.space, psi_f, &phi_f, Mode::partition);

  const Vector m = testing::random_feasible_target(rng, inst);
  const UniquenessReport rep = uniqueness_probe(ctx, m, SolverConfig(), 1);
  CHECK(rep.degenerate_fields);
}

TEST_CASE("solves are reproducible") {
  std::mt19937_64 rng(52);
  const ProblemInstance inst = testing::random_instance(rng, 3, 18, Mode::subpartition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);

  const SolveResult a = solve_dual(ctx, m, SolverConfig());
  const SolveResult b = solve_dual(ctx, m, SolverConfig());
  CHECK(a.p_star == b.p_star);
  CHECK(a.h.h == b.h.h);
  CHECK(a.report.dual_value == b.report.dual_value);
}
