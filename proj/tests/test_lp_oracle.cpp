#include "pmk/lp_oracle.hpp"

#include "pmk/partition_solver.hpp"

#include "pmk/dual_core.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <random>

using namespace pmk;

namespace {

// Two agents, four unit-price atoms of weight 1/4 with opposed profits.
// With target (3/8, 5/8) the optimum fills atom 0 for agent 0, splits
// atom 1 in half, and gives the rest to agent 1:
//   value = 3/4 + 1/4*2 + 1/8*1 = 1.375, exactly one fractional atom.
ProblemInstance opposed_profits(Mode mode) {
  Vector w = Vector::Constant(4, 0.25);
  Matrix psi = Matrix::Ones(2, 4);
  Matrix phi(2, 4);
  phi << 2, 1, 0, 0,
         0, 0, 1, 2;
  return ProblemInstance{DiscreteSpace(w), FieldMatrix(psi, FieldKind::price),
                         FieldMatrix(phi, FieldKind::profit), std::nullopt,
                         std::nullopt, mode};
}

}  // namespace

TEST_CASE("the oracle reproduces a hand-solved partition optimum") {
  const ProblemInstance inst = opposed_profits(Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  Vector m(2);
  m << 0.375, 0.625;

  const LpResult res = lp_solve(ctx, &m, nullptr);
  REQUIRE(res.status == LpStatus::optimal);
  CHECK(res.value == doctest::Approx(1.375).epsilon(1e-12));
  CHECK_NOTHROW(validate(res.h));
  CHECK((moment_vector(ctx, res.h) - m).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(res.fractional_atoms.size() == 1);
  CHECK(res.fractional_atoms[0] == 1);
  CHECK(res.label[0] == 0);
  CHECK(res.label[3] == 1);
}

TEST_CASE("the oracle reproduces a hand-solved subpartition optimum") {
  const ProblemInstance inst = opposed_profits(Mode::subpartition);
  const EvalContext ctx = EvalContext::of(inst);
  Vector m(2);
  m << 0.375, 0.25;

  const LpResult res = lp_solve(ctx, &m, nullptr);
  REQUIRE(res.status == LpStatus::optimal);
  CHECK(res.value == doctest::Approx(1.125).epsilon(1e-12));
  CHECK_NOTHROW(validate(res.h));
  CHECK((moment_vector(ctx, res.h) - m).cwiseAbs().maxCoeff() < 1e-9);
  // atom 2 profits nobody at these moments and stays unassigned
  CHECK(res.h.h.col(2).sum() < 1e-9);
  CHECK(res.label[2] == kUnassigned);
}

TEST_CASE("impossible targets come back infeasible") {
  const ProblemInstance inst = opposed_profits(Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  Vector m(2);
  m << 1.5, 0.5;  // above the unit price cap
  CHECK(lp_solve(ctx, &m, nullptr).status == LpStatus::infeasible);

  m << 0.3, 0.3;  // partition needs the full unit mass when psi == 1
  CHECK(lp_solve(ctx, &m, nullptr).status == LpStatus::infeasible);

  m << 0.3, 0.3;  // ... but a subpartition can leave mass out
  const ProblemInstance sub = opposed_profits(Mode::subpartition);
  CHECK(lp_solve(EvalContext::of(sub), &m, nullptr).status == LpStatus::optimal);
}

TEST_CASE("optimal bases keep at most n_agents fractional atoms") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int atoms = 10 + static_cast<int>(rng() % 30);
    const Mode mode = trial % 2 == 0 ? Mode::partition : Mode::subpartition;
    const ProblemInstance inst = testing::random_instance(rng, n, atoms, mode);
    const EvalContext ctx = EvalContext::of(inst);
    const Vector m = testing::random_feasible_target(rng, inst);

    const LpResult res = lp_solve(ctx, &m, nullptr);
    REQUIRE(res.status == LpStatus::optimal);
    CHECK_NOTHROW(validate(res.h));
    CHECK((moment_vector(ctx, res.h) - m).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(static_cast<int>(res.fractional_atoms.size()) <= n);
  }
}

TEST_CASE("the oracle dominates exhaustive strong search") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 12; ++trial) {
    const int n = 2;
    const int atoms = 7;
    const Mode mode = trial % 2 == 0 ? Mode::partition : Mode::subpartition;
    const ProblemInstance inst = testing::random_instance(rng, n, atoms, mode);
    const EvalContext ctx = EvalContext::of(inst);

    // a target realized by some strong partition, so the search cannot
    // come back empty
    const int slots = n + (mode == Mode::subpartition ? 1 : 0);
    StrongPartition sp;
    sp.mode = mode;
    for (int j = 0; j < atoms; ++j) {
      const int d = static_cast<int>(rng() % slots);
      sp.label.push_back(d < n ? d : kUnassigned);
    }
    const Vector m = moment_vector(ctx, induced_weak(sp, n));

    const auto brute = brute_force_strong(ctx, m, 1e-9);
    REQUIRE(brute.has_value());
    const LpResult lp = lp_solve(ctx, &m, nullptr);
    REQUIRE(lp.status == LpStatus::optimal);
    CHECK(lp.value >= brute->value - 1e-9);
    CHECK(primal_value(ctx, induced_weak(brute->partition, n)) ==
          doctest::Approx(brute->value).epsilon(1e-12));
  }
}

TEST_CASE("constraint-set oracles match the fixed-target oracle on a point box") {
  std::mt19937_64 rng(23);
  const ProblemInstance inst = testing::random_instance(rng, 3, 15, Mode::subpartition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);

  ConstraintSet point;
  point.lower = m;
  point.upper = m;
  const LpResult fixed = lp_solve(ctx, &m, nullptr);
  const LpResult boxed = lp_solve(ctx, nullptr, &point);
  REQUIRE(fixed.status == LpStatus::optimal);
  REQUIRE(boxed.status == LpStatus::optimal);
  CHECK(boxed.value == doctest::Approx(fixed.value).epsilon(1e-8));

  // widening the box can only help
  ConstraintSet wide;
  wide.lower = Vector(m.array() - 0.05);
  wide.upper = Vector(m.array() + 0.05);
  const LpResult wider = lp_solve(ctx, nullptr, &wide);
  REQUIRE(wider.status == LpStatus::optimal);
  CHECK(wider.value >= fixed.value - 1e-9);

  // half-spaces participate: cut away everything above the plane through m
  ConstraintSet cut = wide;
  Halfspace hs;
  hs.a = Vector::Ones(3);
  hs.b = m.sum() - 0.02;
  cut.halfspaces.push_back(hs);
  const LpResult cutres = lp_solve(ctx, nullptr, &cut);
  REQUIRE(cutres.status == LpStatus::optimal);
  CHECK(hs.a.dot(moment_vector(ctx, cutres.h)) <= hs.b + 1e-8);
}

TEST_CASE("exhaustive search respects its guard and finds exact matches") {
  const ProblemInstance inst = opposed_profits(Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);

  // moments of "agent 0 takes atoms 0 and 1": (1/2, 1/2)
  Vector m(2);
  m << 0.5, 0.5;
  const auto best = brute_force_strong(ctx, m, 1e-12);
  REQUIRE(best.has_value());
  CHECK(best->value == doctest::Approx(1.5));  // 1/4 * (2 + 1 + 1 + 2)
  CHECK(best->partition.label == std::vector<int>{0, 0, 1, 1});

  // no strong partition hits a generic fractional target exactly
  m << 0.375, 0.625;
  CHECK_FALSE(brute_force_strong(ctx, m, 1e-12).has_value());

  std::mt19937_64 rng(24);
  const ProblemInstance big = testing::random_instance(rng, 4, 30, Mode::partition);
  CHECK_THROWS_AS(
      brute_force_strong(EvalContext::of(big), Vector::Ones(4), 1e-6),
      std::invalid_argument);
}

TEST_CASE("oracle inputs are validated") {
  const ProblemInstance inst = opposed_profits(Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  Vector m(2);
  m << 0.5, 0.5;
  CHECK_THROWS_AS(lp_solve(ctx, nullptr, nullptr), std::invalid_argument);
  ConstraintSet K;
  CHECK_THROWS_AS(lp_solve(ctx, &m, &K), std::invalid_argument);
  Vector bad(3);
  bad << 1, 1, 1;
  CHECK_THROWS_AS(lp_solve(ctx, &bad, nullptr), std::invalid_argument);

  std::mt19937_64 rng(25);
  const ProblemInstance big = testing::random_instance(rng, 6, 900, Mode::partition);
  Vector m6 = Vector::Ones(6);
  CHECK_THROWS_AS(lp_solve(EvalContext::of(big), &m6, nullptr),
                  std::invalid_argument);
}

TEST_CASE("the oracle is deterministic") {
  std::mt19937_64 rng(26);
  const ProblemInstance inst = testing::random_instance(rng, 3, 20, Mode::partition);
  const EvalContext ctx = EvalContext::of(inst);
  const Vector m = testing::random_feasible_target(rng, inst);

  const LpResult a = lp_solve(ctx, &m, nullptr);
  const LpResult b = lp_solve(ctx, &m, nullptr);
  REQUIRE(a.status == LpStatus::optimal);
  CHECK(a.value == b.value);
  CHECK(a.h.h == b.h.h);
  CHECK(a.label == b.label);
}
