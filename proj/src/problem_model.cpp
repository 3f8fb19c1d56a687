#include "pmk/problem_model.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pmk {

using nlohmann::json;

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

Vector vector_from_json(const json& arr, const std::string& what) {
  require(arr.is_array(), what + " must be an array");
  Vector v(arr.size());
  for (std::size_t k = 0; k < arr.size(); ++k) {
    require(arr[k].is_number(), what + " entries must be numbers");
    v[static_cast<Eigen::Index>(k)] = arr[k].get<double>();
  }
  return v;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

}  // namespace

std::string to_string(Mode mode) {
  return mode == Mode::partition ? "partition" : "subpartition";
}

Mode mode_from_string(const std::string& s) {
  if (s == "partition") return Mode::partition;
  if (s == "subpartition") return Mode::subpartition;
  throw std::invalid_argument("unknown mode '" + s + "'");
}

DiscreteSpace::DiscreteSpace(Vector weights) : weights_(std::move(weights)) {
  require(weights_.size() > 0, "space needs at least one atom");
  double total = 0.0;
  for (Eigen::Index j = 0; j < weights_.size(); ++j) {
    require(std::isfinite(weights_[j]) && weights_[j] > 0.0,
            "atom weights must be finite and positive");
    total += weights_[j];
  }
  weights_ /= total;
}

FieldMatrix::FieldMatrix(Matrix values, FieldKind kind)
    : values_(std::move(values)), kind_(kind) {
  require(values_.rows() > 0 && values_.cols() > 0, "field matrix must be nonempty");
  for (Eigen::Index i = 0; i < values_.rows(); ++i) {
    for (Eigen::Index j = 0; j < values_.cols(); ++j) {
      require(std::isfinite(values_(i, j)), "field values must be finite");
      if (kind_ == FieldKind::price)
        require(values_(i, j) > 0.0, "price fields must be strictly positive");
    }
  }
}

double FieldMatrix::sup_norm() const { return values_.cwiseAbs().maxCoeff(); }

double FieldMatrix::row_sup_norm(int agent) const {
  return values_.row(agent).cwiseAbs().maxCoeff();
}

void validate(const WeakPartition& wp) {
  constexpr double tol = 1e-9;
  require(wp.h.rows() > 0 && wp.h.cols() > 0, "weak partition must be nonempty");
  for (Eigen::Index j = 0; j < wp.h.cols(); ++j) {
    double col = 0.0;
    for (Eigen::Index i = 0; i < wp.h.rows(); ++i) {
      const double v = wp.h(i, j);
      require(std::isfinite(v) && v >= -tol && v <= 1.0 + tol,
              "weak partition entries must lie in [0, 1]");
      col += v;
    }
    if (wp.mode == Mode::partition)
      require(std::abs(col - 1.0) <= tol * wp.h.rows() + tol,
              "partition columns must sum to 1");
    else
      require(col <= 1.0 + tol * wp.h.rows() + tol,
              "subpartition columns must sum to at most 1");
  }
}

void validate(const StrongPartition& sp, int n_agents) {
  for (int lab : sp.label) {
    require(lab >= kUnassigned && lab < n_agents, "strong partition label out of range");
    if (lab == kUnassigned)
      require(sp.mode == Mode::subpartition,
              "partition mode admits no unassigned atoms");
  }
}

WeakPartition induced_weak(const StrongPartition& sp, int n_agents) {
  validate(sp, n_agents);
  WeakPartition wp;
  wp.mode = sp.mode;
  wp.h = Matrix::Zero(n_agents, static_cast<Eigen::Index>(sp.label.size()));
  for (std::size_t j = 0; j < sp.label.size(); ++j)
    if (sp.label[j] != kUnassigned)
      wp.h(sp.label[j], static_cast<Eigen::Index>(j)) = 1.0;
  return wp;
}

bool ConstraintSet::contains(const Vector& m, double tol) const {
  if (lower && ((m - *lower).minCoeff() < -tol)) return false;
  if (upper && ((*upper - m).minCoeff() < -tol)) return false;
  for (const auto& hs : halfspaces)
    if (hs.a.dot(m) > hs.b + tol) return false;
  return true;
}

SolverConfig::SolverConfig() : eps_schedule(default_eps_schedule()) {}

std::vector<double> SolverConfig::default_eps_schedule() {
  return {1.0, 0.3, 0.1, 0.03, 0.01, 0.003, 0.001, 3e-4, 1e-4};
}

void SolverConfig::validate_schedule() const {
  require(!eps_schedule.empty(), "eps schedule must be nonempty");
  double prev = std::numeric_limits<double>::infinity();
  for (double e : eps_schedule) {
    require(std::isfinite(e) && e > 0.0, "eps values must be positive");
    require(e < prev, "eps schedule must be strictly decreasing");
    prev = e;
  }
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::boundary_suspected: return "boundary_suspected";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

SolveStatus solve_status_from_string(const std::string& s) {
  if (s == "converged") return SolveStatus::converged;
  if (s == "boundary_suspected") return SolveStatus::boundary_suspected;
  if (s == "infeasible") return SolveStatus::infeasible;
  if (s == "iteration_limit") return SolveStatus::iteration_limit;
  throw std::invalid_argument("unknown solve status '" + s + "'");
}

ProblemInstance parse_problem(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("problem file is not valid JSON: ") +
                                e.what());
  }
  require(j.is_object(), "problem file must be a JSON object");
  require(j.contains("n_agents") && j["n_agents"].is_number_integer(),
          "problem file needs integer field 'n_agents'");
  const int n_agents = j["n_agents"].get<int>();
  require(n_agents > 0, "'n_agents' must be positive");

  require(j.contains("atoms") && j["atoms"].is_array() && !j["atoms"].empty(),
          "problem file needs a nonempty 'atoms' array");
  const auto& atoms = j["atoms"];
  const int n_atoms = static_cast<int>(atoms.size());

  Vector weights(n_atoms);
  Matrix psi(n_agents, n_atoms);
  Matrix phi(n_agents, n_atoms);
  for (int a = 0; a < n_atoms; ++a) {
    const auto& atom = atoms[a];
    require(atom.is_object() && atom.contains("weight") && atom.contains("psi") &&
                atom.contains("phi"),
            "each atom needs 'weight', 'psi' and 'phi'");
    require(atom["weight"].is_number(), "atom weight must be a number");
    weights[a] = atom["weight"].get<double>();
    const Vector ps = vector_from_json(atom["psi"], "atom psi");
    const Vector ph = vector_from_json(atom["phi"], "atom phi");
    require(ps.size() == n_agents && ph.size() == n_agents,
            "atom psi/phi must list one value per agent");
    psi.col(a) = ps;
    phi.col(a) = ph;
  }

  Mode mode = Mode::partition;
  if (j.contains("mode")) {
    require(j["mode"].is_string(), "'mode' must be a string");
    mode = mode_from_string(j["mode"].get<std::string>());
  }

  std::optional<Vector> target;
  if (j.contains("target")) {
    Vector m = vector_from_json(j["target"], "target");
    require(m.size() == n_agents, "target must list one value per agent");
    target = std::move(m);
  }

  std::optional<ConstraintSet> constraints;
  if (j.contains("constraints")) {
    const auto& c = j["constraints"];
    require(c.is_object(), "'constraints' must be an object");
    ConstraintSet K;
    if (c.contains("lower")) {
      K.lower = vector_from_json(c["lower"], "constraints.lower");
      require(K.lower->size() == n_agents, "constraints.lower size mismatch");
    }
    if (c.contains("upper")) {
      K.upper = vector_from_json(c["upper"], "constraints.upper");
      require(K.upper->size() == n_agents, "constraints.upper size mismatch");
    }
    if (c.contains("halfspaces")) {
      require(c["halfspaces"].is_array(), "constraints.halfspaces must be an array");
      for (const auto& hj : c["halfspaces"]) {
        require(hj.is_object() && hj.contains("a") && hj.contains("b"),
                "each halfspace needs 'a' and 'b'");
        Halfspace hs;
        hs.a = vector_from_json(hj["a"], "halfspace normal");
        require(hs.a.size() == n_agents, "halfspace normal size mismatch");
        require(hj["b"].is_number(), "halfspace offset must be a number");
        hs.b = hj["b"].get<double>();
        require(hs.a.norm() > 0.0, "halfspace normal must be nonzero");
        K.halfspaces.push_back(std::move(hs));
      }
    }
    if (K.lower && K.upper)
      require(((*K.upper - *K.lower).minCoeff() >= 0.0),
              "constraints.lower exceeds constraints.upper");
    constraints = std::move(K);
  }

  return ProblemInstance{DiscreteSpace(std::move(weights)),
                         FieldMatrix(std::move(psi), FieldKind::price),
                         FieldMatrix(std::move(phi), FieldKind::profit),
                         std::move(target),
                         std::move(constraints),
                         mode};
}

ProblemInstance load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open problem file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_problem(buf.str());
}

std::string serialize_problem(const ProblemInstance& inst) {
  json j;
  j["n_agents"] = inst.n_agents();
  j["mode"] = to_string(inst.mode);
  json atoms = json::array();
  for (int a = 0; a < inst.n_atoms(); ++a) {
    json atom;
    atom["weight"] = inst.space.weight(a);
    atom["psi"] = vector_to_json(inst.psi.values().col(a));
    atom["phi"] = vector_to_json(inst.phi.values().col(a));
    atoms.push_back(std::move(atom));
  }
  j["atoms"] = std::move(atoms);
  if (inst.target) j["target"] = vector_to_json(*inst.target);
  if (inst.constraints) {
    json c;
    if (inst.constraints->lower) c["lower"] = vector_to_json(*inst.constraints->lower);
    if (inst.constraints->upper) c["upper"] = vector_to_json(*inst.constraints->upper);
    if (!inst.constraints->halfspaces.empty()) {
      json hs = json::array();
      for (const auto& h : inst.constraints->halfspaces)
        hs.push_back(json{{"a", vector_to_json(h.a)}, {"b", h.b}});
      c["halfspaces"] = std::move(hs);
    }
    j["constraints"] = std::move(c);
  }
  return j.dump(2);
}

void save_problem(const ProblemInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write problem file '" + path + "'");
  out << serialize_problem(inst) << '\n';
}

std::string serialize_result(const ResultDocument& doc) {
  const SolveReport& r = doc.report;
  json j;
  j["dual_value"] = r.dual_value;
  j["primal_value"] = r.primal_value;
  j["gap"] = r.gap;
  j["status"] = to_string(r.status);
  j["p_star"] = vector_to_json(r.p_star);
  if (r.certificate) j["certificate"] = vector_to_json(*r.certificate);
  j["stage_dual_values"] = r.stage_dual_values;
  if (r.moment_residual.size() > 0)
    j["moment_residual"] = vector_to_json(r.moment_residual);
  j["total_iterations"] = r.total_iterations;
  j["mode"] = to_string(doc.h.mode);
  if (doc.target) j["target"] = vector_to_json(*doc.target);
  json rows = json::array();
  for (Eigen::Index i = 0; i < doc.h.h.rows(); ++i)
    rows.push_back(vector_to_json(doc.h.h.row(i)));
  j["h"] = std::move(rows);
  return j.dump(2);
}

void save_result(const ResultDocument& doc, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write result file '" + path + "'");
  out << serialize_result(doc) << '\n';
}

ResultDocument parse_result(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("result file is not valid JSON: ") +
                                e.what());
  }
  ResultDocument doc;
  doc.report.dual_value = j.at("dual_value").get<double>();
  doc.report.primal_value = j.at("primal_value").get<double>();
  doc.report.gap = j.at("gap").get<double>();
  doc.report.status = solve_status_from_string(j.at("status").get<std::string>());
  doc.report.p_star = vector_from_json(j.at("p_star"), "p_star");
  if (j.contains("certificate"))
    doc.report.certificate = vector_from_json(j["certificate"], "certificate");
  if (j.contains("stage_dual_values"))
    doc.report.stage_dual_values = j["stage_dual_values"].get<std::vector<double>>();
  if (j.contains("moment_residual"))
    doc.report.moment_residual = vector_from_json(j["moment_residual"], "moment_residual");
  if (j.contains("total_iterations"))
    doc.report.total_iterations = j["total_iterations"].get<int>();
  doc.h.mode = mode_from_string(j.at("mode").get<std::string>());
  const auto& rows = j.at("h");
  require(rows.is_array() && !rows.empty(), "result field 'h' must be a nonempty array");
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  Vector first = vector_from_json(rows[0], "h row");
  doc.h.h.resize(n, first.size());
  doc.h.h.row(0) = first;
  for (Eigen::Index i = 1; i < n; ++i) {
    Vector row = vector_from_json(rows[static_cast<std::size_t>(i)], "h row");
    require(row.size() == first.size(), "ragged 'h' rows in result file");
    doc.h.h.row(i) = row;
  }
  if (j.contains("target")) doc.target = vector_from_json(j["target"], "target");
  return doc;
}

ResultDocument load_result(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open result file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_result(buf.str());
}

TargetDiagnostics validate_target(const Vector& m, const FieldMatrix& psi) {
  TargetDiagnostics diag;
  if (m.size() != psi.n_agents()) {
    diag.flagged.push_back(-1);
    diag.messages.push_back("target has " + std::to_string(m.size()) +
                            " entries for " + std::to_string(psi.n_agents()) +
                            " agents");
    return diag;
  }
  for (int i = 0; i < psi.n_agents(); ++i) {
    const double cap = psi.row_sup_norm(i);
    if (!std::isfinite(m[i])) {
      diag.flagged.push_back(i);
      diag.messages.push_back("m[" + std::to_string(i) + "] is not finite");
    } else if (m[i] < 0.0) {
      diag.flagged.push_back(i);
      diag.messages.push_back("m[" + std::to_string(i) +
                              "] is negative; positive prices force m_i >= 0");
    } else if (m[i] > cap) {
      diag.flagged.push_back(i);
      diag.messages.push_back("m[" + std::to_string(i) + "] = " +
                              std::to_string(m[i]) + " exceeds sup |psi_i| = " +
                              std::to_string(cap));
    }
  }
  return diag;
}

std::uint64_t instance_hash(const DiscreteSpace& space, const FieldMatrix& psi,
                            const Vector& m) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const double* data, Eigen::Index count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    for (Eigen::Index k = 0; k < count * static_cast<Eigen::Index>(sizeof(double)); ++k) {
      h ^= bytes[k];
      h *= 1099511628211ull;
    }
  };
  mix(space.weights().data(), space.weights().size());
  mix(psi.values().data(), psi.values().size());
  mix(m.data(), m.size());
  return h;
}

}  // namespace pmk
