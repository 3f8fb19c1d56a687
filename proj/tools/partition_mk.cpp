#include "pmk/feasibility.hpp"
#include "pmk/lp_oracle.hpp"
#include "pmk/partition_solver.hpp"
#include "pmk/reduce.hpp"
#include "pmk/selection.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

// Exit codes shared with the test suite: 0 success/member/converged,
// 2 iteration limit, 3 infeasible/non-member, 4 boundary suspected,
// 5 cross-check discrepancy, 1 usage or input error.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitIterLimit = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitBoundary = 4;
constexpr int kExitMismatch = 5;

using pmk::Vector;

Vector parse_double_list(const std::string& csv, const std::string& what) {
  std::vector<double> vals;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      vals.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw std::invalid_argument("cannot parse " + what + " entry '" + tok + "'");
    }
  }
  if (vals.empty()) throw std::invalid_argument(what + " must be nonempty");
  Vector v(static_cast<Eigen::Index>(vals.size()));
  for (std::size_t k = 0; k < vals.size(); ++k)
    v[static_cast<Eigen::Index>(k)] = vals[k];
  return v;
}

struct CommonOpts {
  std::string problem_path;
  std::string output_path;
  std::uint64_t seed = 0;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("problem", o.problem_path, "problem file (JSON)")->required();
  cmd->add_option("-o,--output", o.output_path, "write a JSON result file");
  cmd->add_option("--seed", o.seed, "RNG seed for multistarts and probes")
      ->default_val(0);
  cmd->add_option("--threads", o.threads, "worker threads for reductions")
      ->envname("PARTITION_MK_THREADS")
      ->default_val(1);
}

pmk::Vector require_target(const pmk::ProblemInstance& inst,
                           const std::string& override_csv) {
  if (!override_csv.empty()) return parse_double_list(override_csv, "--target");
  if (inst.target) return *inst.target;
  throw std::invalid_argument(
      "no target: the problem file has no 'target' field and --target was not given");
}

void write_csv(const std::string& path, const pmk::ProblemInstance& inst,
               const pmk::WeakPartition& h, const std::vector<int>& label) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv file '" + path + "'");
  out << "atom,weight,label";
  for (int i = 0; i < inst.n_agents(); ++i) out << ",h_" << i;
  out << '\n';
  out.precision(17);
  for (int j = 0; j < inst.n_atoms(); ++j) {
    out << j << ',' << inst.space.weight(j) << ',' << label[j];
    for (int i = 0; i < inst.n_agents(); ++i) out << ',' << h.h(i, j);
    out << '\n';
  }
}

int exit_code_for(pmk::SolveStatus s) {
  switch (s) {
    case pmk::SolveStatus::converged: return kExitOk;
    case pmk::SolveStatus::iteration_limit: return kExitIterLimit;
    case pmk::SolveStatus::infeasible: return kExitInfeasible;
    case pmk::SolveStatus::boundary_suspected: return kExitBoundary;
  }
  return kExitError;
}

int cmd_feasible(const CommonOpts& o, const std::string& target_csv, double feas_tol) {
  const pmk::ProblemInstance inst = pmk::load_problem(o.problem_path);
  const Vector m = require_target(inst, target_csv);
  const pmk::EvalContext ctx = pmk::EvalContext::of(inst);

  const pmk::TargetDiagnostics diag = pmk::validate_target(m, inst.psi);
  for (const auto& msg : diag.messages) std::cout << "note: " << msg << '\n';

  pmk::SolverConfig cfg;
  cfg.seed = o.seed;
  cfg.feas_tol = feas_tol;
  const pmk::FeasibilityVerdict v = pmk::check_membership(ctx, m, cfg);

  std::cout << "mode: " << pmk::to_string(inst.mode) << '\n';
  std::cout << "margin: " << v.margin << '\n';
  std::cout << "worst_p:";
  for (Eigen::Index i = 0; i < v.worst_p.size(); ++i) std::cout << ' ' << v.worst_p[i];
  std::cout << '\n';
  for (const auto& note : v.notes) std::cout << "note: " << note << '\n';
  const bool boundary = v.member && !v.interior.has_value();
  std::cout << "verdict: "
            << (v.member ? (boundary ? "member (boundary suspected)" : "member")
                         : "non-member")
            << '\n';

  if (!o.output_path.empty()) {
    nlohmann::json j;
    j["member"] = v.member;
    j["margin"] = v.margin;
    if (v.interior.has_value()) j["interior"] = *v.interior;
    j["worst_p"] = std::vector<double>(v.worst_p.data(),
                                       v.worst_p.data() + v.worst_p.size());
    j["notes"] = v.notes;
    std::ofstream out(o.output_path);
    if (!out) throw std::runtime_error("cannot write '" + o.output_path + "'");
    out << j.dump(2) << '\n';
  }

  if (!v.member) return kExitInfeasible;
  return boundary ? kExitBoundary : kExitOk;
}

pmk::SolverConfig make_solver_config(const CommonOpts& o, const std::string& schedule,
                                     double grad_tol, int max_iters, bool no_feas) {
  pmk::SolverConfig cfg;
  cfg.seed = o.seed;
  cfg.grad_tol = grad_tol;
  cfg.max_iters = max_iters;
  cfg.check_feasibility = !no_feas;
  if (!schedule.empty()) {
    const Vector s = parse_double_list(schedule, "--eps-schedule");
    cfg.eps_schedule.assign(s.data(), s.data() + s.size());
  }
  return cfg;
}

void print_report(const pmk::SolveReport& rep) {
  std::cout << "status: " << pmk::to_string(rep.status) << '\n';
  if (rep.status == pmk::SolveStatus::infeasible) {
    if (rep.certificate) {
      std::cout << "certificate:";
      for (Eigen::Index i = 0; i < rep.certificate->size(); ++i)
        std::cout << ' ' << (*rep.certificate)[i];
      std::cout << '\n';
    }
    return;
  }
  std::cout << "dual_value: " << rep.dual_value << '\n';
  std::cout << "primal_value: " << rep.primal_value << '\n';
  std::cout << "gap: " << rep.gap << '\n';
  std::cout << "moment_residual_sup: "
            << (rep.moment_residual.size() > 0
                    ? rep.moment_residual.cwiseAbs().maxCoeff()
                    : 0.0)
            << '\n';
  std::cout << "iterations: " << rep.total_iterations << '\n';
}

int cmd_solve(const CommonOpts& o, const std::string& target_csv,
              const std::string& schedule, double grad_tol, int max_iters,
              bool no_feas, const std::string& csv_path) {
  const pmk::ProblemInstance inst = pmk::load_problem(o.problem_path);
  const Vector m = require_target(inst, target_csv);
  const pmk::EvalContext ctx = pmk::EvalContext::of(inst);
  const pmk::SolverConfig cfg =
      make_solver_config(o, schedule, grad_tol, max_iters, no_feas);

  const pmk::SolveResult res = pmk::solve_dual(ctx, m, cfg);
  print_report(res.report);

  if (res.report.status == pmk::SolveStatus::infeasible) {
    if (!o.output_path.empty()) {
      nlohmann::json j;
      j["status"] = pmk::to_string(res.report.status);
      if (res.report.certificate)
        j["certificate"] = std::vector<double>(
            res.report.certificate->data(),
            res.report.certificate->data() + res.report.certificate->size());
      std::ofstream out(o.output_path);
      if (!out) throw std::runtime_error("cannot write '" + o.output_path + "'");
      out << j.dump(2) << '\n';
    }
    return kExitInfeasible;
  }

  if (!o.output_path.empty()) {
    pmk::ResultDocument doc{res.report, res.h, m};
    pmk::save_result(doc, o.output_path);
  }
  if (!csv_path.empty()) {
    const pmk::StrongExtraction ext = pmk::extract_strong(ctx, res.p_star, cfg.tie_tol);
    write_csv(csv_path, inst, res.h, ext.partition.label);
  }
  return exit_code_for(res.report.status);
}

int cmd_select(const CommonOpts& o, const std::string& schedule, double grad_tol,
               int max_iters, const std::string& csv_path) {
  const pmk::ProblemInstance inst = pmk::load_problem(o.problem_path);
  if (!inst.constraints)
    throw std::invalid_argument("select needs a 'constraints' block in the problem file");
  const pmk::EvalContext ctx = pmk::EvalContext::of(inst);
  const pmk::SolverConfig cfg = make_solver_config(o, schedule, grad_tol, max_iters, true);

  const pmk::SelectionResult res = pmk::select_optimal(ctx, *inst.constraints, cfg);
  std::cout << "m_star:";
  for (Eigen::Index i = 0; i < res.m_star.size(); ++i) std::cout << ' ' << res.m_star[i];
  std::cout << '\n';
  std::cout << "profit: " << res.profit << '\n';
  std::cout << "restart_diff: " << res.restart_diff << '\n';
  std::cout << "ascent_iterations: " << res.ascent_iterations << '\n';
  print_report(res.report);

  if (!o.output_path.empty()) {
    pmk::ResultDocument doc{res.report, res.h, res.m_star};
    pmk::save_result(doc, o.output_path);
  }
  if (!csv_path.empty()) {
    pmk::EvalContext gctx(inst.space, inst.psi, &inst.phi, pmk::Mode::subpartition);
    const pmk::StrongExtraction ext =
        pmk::extract_strong(gctx, res.report.p_star, cfg.tie_tol);
    write_csv(csv_path, inst, res.h, ext.partition.label);
  }
  return exit_code_for(res.report.status);
}

int cmd_check(const CommonOpts& o, const std::string& target_csv,
              const std::string& schedule, double grad_tol, int max_iters,
              double gap_tol) {
  const pmk::ProblemInstance inst = pmk::load_problem(o.problem_path);
  const Vector m = require_target(inst, target_csv);
  const pmk::EvalContext ctx = pmk::EvalContext::of(inst);

  if (static_cast<long>(inst.n_agents()) * inst.n_atoms() > 5000)
    throw std::invalid_argument(
        "check needs n_agents * n_atoms <= 5000 for the exact oracle");

  const pmk::SolverConfig cfg =
      make_solver_config(o, schedule, grad_tol, max_iters, false);
  const pmk::SolveResult res = pmk::solve_dual(ctx, m, cfg);
  const pmk::LpResult lp = pmk::lp_solve(ctx, &m, nullptr);

  const bool solver_feasible = res.report.status != pmk::SolveStatus::infeasible;
  const bool lp_feasible = lp.status == pmk::LpStatus::optimal;
  std::cout << "solver: " << pmk::to_string(res.report.status) << '\n';
  std::cout << "oracle: " << (lp_feasible ? "optimal" : "infeasible") << '\n';

  if (solver_feasible != lp_feasible) {
    std::cout << "verdict: DISAGREE (feasibility)\n";
    return kExitMismatch;
  }
  if (!lp_feasible) {
    std::cout << "verdict: agree (both infeasible)\n";
    return kExitOk;
  }

  const double diff = std::abs(res.report.dual_value - lp.value);
  const double wdg = pmk::weak_duality_gap(ctx, lp.h, m, res.p_star, 1e-6);
  std::cout << "dual_value: " << res.report.dual_value << '\n';
  std::cout << "oracle_value: " << lp.value << '\n';
  std::cout << "difference: " << diff << '\n';
  std::cout << "weak_duality_gap(oracle h, solver p): " << wdg << '\n';
  std::cout << "fractional_atoms: " << lp.fractional_atoms.size() << " (bound "
            << inst.n_agents() << ")\n";

  bool ok = diff <= gap_tol && wdg >= -1e-9 &&
            static_cast<int>(lp.fractional_atoms.size()) <= inst.n_agents();
  std::cout << "verdict: " << (ok ? "agree" : "DISAGREE") << '\n';
  return ok ? kExitOk : kExitMismatch;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semi-discrete optimal partition toolkit"};
  app.set_version_flag("--version", "partition_mk 0.1.0");
  app.require_subcommand(1);

  CommonOpts feas_o, solve_o, select_o, check_o;
  std::string feas_target, solve_target, check_target;
  std::string solve_sched, select_sched, check_sched;
  std::string solve_csv, select_csv;
  double feas_tol = 1e-7;
  double solve_grad = 1e-7, select_grad = 1e-7, check_grad = 1e-7;
  int solve_iters = 5000, select_iters = 5000, check_iters = 5000;
  double gap_tol = 1e-3;
  bool no_feas = false;

  CLI::App* feasible = app.add_subcommand(
      "feasible", "test whether a target moment vector is attainable");
  add_common(feasible, feas_o);
  feasible->add_option("--target", feas_target, "override target (comma separated)");
  feasible->add_option("--feas-tol", feas_tol, "membership margin tolerance")
      ->default_val(1e-7);

  CLI::App* solve = app.add_subcommand(
      "solve", "solve the optimal (sub)partition problem for a target");
  add_common(solve, solve_o);
  solve->add_option("--target", solve_target, "override target (comma separated)");
  solve->add_option("--eps-schedule", solve_sched,
                    "comma separated decreasing smoothing levels");
  solve->add_option("--grad-tol", solve_grad, "final stage gradient tolerance")
      ->default_val(1e-7);
  solve->add_option("--max-iters", solve_iters, "iteration cap per stage")
      ->default_val(5000);
  solve->add_flag("--no-feas-check", no_feas, "skip the membership pre-check");
  solve->add_option("--csv", solve_csv, "write per-atom assignments as CSV");

  CLI::App* select = app.add_subcommand(
      "select", "pick the most profitable target inside the constraint set");
  add_common(select, select_o);
  select->add_option("--eps-schedule", select_sched,
                     "comma separated decreasing smoothing levels");
  select->add_option("--grad-tol", select_grad, "final stage gradient tolerance")
      ->default_val(1e-7);
  select->add_option("--max-iters", select_iters, "iteration cap per stage")
      ->default_val(5000);
  select->add_option("--csv", select_csv, "write per-atom assignments as CSV");

  CLI::App* check = app.add_subcommand(
      "check", "cross-validate the solver against the exact oracle");
  add_common(check, check_o);
  check->add_option("--target", check_target, "override target (comma separated)");
  check->add_option("--eps-schedule", check_sched,
                    "comma separated decreasing smoothing levels");
  check->add_option("--grad-tol", check_grad, "final stage gradient tolerance")
      ->default_val(1e-7);
  check->add_option("--max-iters", check_iters, "iteration cap per stage")
      ->default_val(5000);
  check->add_option("--gap-tol", gap_tol, "allowed |dual - oracle| difference")
      ->default_val(1e-3);

  CLI11_PARSE(app, argc, argv);

  try {
    if (feasible->parsed()) {
      pmk::set_thread_count(feas_o.threads);
      return cmd_feasible(feas_o, feas_target, feas_tol);
    }
    if (solve->parsed()) {
      pmk::set_thread_count(solve_o.threads);
      return cmd_solve(solve_o, solve_target, solve_sched, solve_grad, solve_iters,
                       no_feas, solve_csv);
    }
    if (select->parsed()) {
      pmk::set_thread_count(select_o.threads);
      return cmd_select(select_o, select_sched, select_grad, select_iters, select_csv);
    }
    if (check->parsed()) {
      pmk::set_thread_count(check_o.threads);
      return cmd_check(check_o, check_target, check_sched, check_grad, check_iters,
                       gap_tol);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
