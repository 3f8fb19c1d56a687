#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace pmk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Assignment mode: partitions exhaust the space, subpartitions may leave
/// mass unassigned (the virtual 0-slot).
enum class Mode { partition, subpartition };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

/// Atom label for "no agent" in subpartition mode.
inline constexpr int kUnassigned = -1;

/// Finitely many weighted atoms approximating the underlying probability
/// measure. Weights are validated positive and normalized to sum 1.
class DiscreteSpace {
 public:
  explicit DiscreteSpace(Vector weights);

  int n_atoms() const { return static_cast<int>(weights_.size()); }
  double weight(int atom) const { return weights_[atom]; }
  const Vector& weights() const { return weights_; }
  double max_weight() const { return weights_.maxCoeff(); }

 private:
  Vector weights_;
};

enum class FieldKind { price, profit };

/// Per-agent sampled field values on the atoms: row i = agent i, column j =
/// atom j. Price fields must be strictly positive; profit fields finite.
class FieldMatrix {
 public:
  FieldMatrix(Matrix values, FieldKind kind);

  int n_agents() const { return static_cast<int>(values_.rows()); }
  int n_atoms() const { return static_cast<int>(values_.cols()); }
  double operator()(int agent, int atom) const { return values_(agent, atom); }
  const Matrix& values() const { return values_; }
  FieldKind kind() const { return kind_; }

  /// Largest absolute entry (sup norm over agents and atoms).
  double sup_norm() const;
  /// Sup norm of a single agent row.
  double row_sup_norm(int agent) const;

 private:
  Matrix values_;
  FieldKind kind_;
};

/// Fractional assignment matrix h (agents x atoms); rows are the densities
/// of the decomposition mu_i = h_i mu.
struct WeakPartition {
  Matrix h;
  Mode mode = Mode::partition;

  int n_agents() const { return static_cast<int>(h.rows()); }
  int n_atoms() const { return static_cast<int>(h.cols()); }
};

/// Throws std::invalid_argument when an invariant fails: entries in [0,1],
/// column sums == 1 (partition, 1e-9) or <= 1 + 1e-9 (subpartition).
void validate(const WeakPartition& wp);

/// 0/1 assignment: label[j] is the owning agent or kUnassigned.
struct StrongPartition {
  std::vector<int> label;
  Mode mode = Mode::partition;
};

void validate(const StrongPartition& sp, int n_agents);

/// The induced 0/1 weak partition.
WeakPartition induced_weak(const StrongPartition& sp, int n_agents);

struct Halfspace {
  Vector a;
  double b = 0.0;  // a.m <= b
};

/// Closed convex constraint set K: optional box [lower, upper] intersected
/// with finitely many half-spaces.
struct ConstraintSet {
  std::optional<Vector> lower;
  std::optional<Vector> upper;
  std::vector<Halfspace> halfspaces;

  bool contains(const Vector& m, double tol) const;
};

struct SolverConfig {
  std::vector<double> eps_schedule;  // strictly decreasing, all > 0
  double delta = 0.0;      // damping; 0 means "tie delta = eps per stage"
  double grad_tol = 1e-7;
  double feas_tol = 1e-7;
  double tie_tol = 1e-9;   // scaled by problem magnitude where applied
  double gap_tol = 1e-3;
  int max_iters = 5000;    // per eps stage
  double p_max = 1e4;      // divergence guard on |p|
  bool check_feasibility = true;
  std::uint64_t seed = 0;

  SolverConfig();

  /// 1.0, 0.3, 0.1, ... geometric down to 1e-4.
  static std::vector<double> default_eps_schedule();

  void validate_schedule() const;
};

enum class SolveStatus { converged, boundary_suspected, infeasible, iteration_limit };

std::string to_string(SolveStatus s);
SolveStatus solve_status_from_string(const std::string& s);

struct SolveReport {
  double dual_value = 0.0;    // Xi_phi(p*) - m.p*, exact (unregularized)
  double primal_value = 0.0;  // sum_ij phi_i(x_j) h_ij w_j
  double gap = 0.0;           // dual - primal
  Vector p_star;
  SolveStatus status = SolveStatus::converged;
  std::optional<Vector> certificate;  // non-membership direction, if any

  // diagnostics
  std::vector<double> stage_dual_values;  // exact dual value after each eps stage
  Vector moment_residual;                 // moment(h) - m
  int total_iterations = 0;
};

/// A full problem instance as read from a problem file.
struct ProblemInstance {
  DiscreteSpace space;
  FieldMatrix psi;
  FieldMatrix phi;
  std::optional<Vector> target;
  std::optional<ConstraintSet> constraints;
  Mode mode = Mode::partition;

  int n_agents() const { return psi.n_agents(); }
  int n_atoms() const { return space.n_atoms(); }
};

ProblemInstance load_problem(const std::string& path);
ProblemInstance parse_problem(const std::string& json_text);
void save_problem(const ProblemInstance& inst, const std::string& path);
std::string serialize_problem(const ProblemInstance& inst);

/// Result document: a SolveReport plus the h matrix (row-major), written by
/// the solve/select commands and re-readable for round-trips.
struct ResultDocument {
  SolveReport report;
  WeakPartition h;
  std::optional<Vector> target;  // m (solve) or m* (select)
};

void save_result(const ResultDocument& doc, const std::string& path);
ResultDocument load_result(const std::string& path);
std::string serialize_result(const ResultDocument& doc);
ResultDocument parse_result(const std::string& json_text);

struct TargetDiagnostics {
  std::vector<int> flagged;  // agent indices failing the necessary bound
  std::vector<std::string> messages;

  bool ok() const { return flagged.empty(); }
};

/// Necessary-bound screen: flags m_i outside [-sup|psi_i|, sup|psi_i|] or
/// non-finite. Never certifies membership.
TargetDiagnostics validate_target(const Vector& m, const FieldMatrix& psi);

/// FNV-1a over the instance bytes; seeds deterministic multistarts.
std::uint64_t instance_hash(const DiscreteSpace& space, const FieldMatrix& psi,
                            const Vector& m);

}  // namespace pmk
