#include "patfeti/harness.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

namespace patfeti {

namespace {

using json = nlohmann::json;

constexpr std::pair<ProblemKind, const char*> kProblemNames[] = {
    {ProblemKind::ThermalDonut, "thermal_donut"},
    {ProblemKind::ElasticDonut, "elastic_donut"},
    {ProblemKind::DonutOneStand, "donut_one_stand"},
    {ProblemKind::DonutTwoStands, "donut_two_stands"},
    {ProblemKind::HingedElasticDonut, "hinged_elastic_donut"},
    {ProblemKind::SyntheticSpd, "synthetic_spd"},
};

const std::set<std::string> kMethods{"classical", "mrhs", "multivector"};

[[noreturn]] void config_error(const std::string& field, const std::string& what) {
  throw Error(Errc::ConfigError, field + ": " + what);
}

void reject_unknown(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) config_error(where.empty() ? "config" : where, "expected an object");
  for (const auto& item : obj.items())
    if (!allowed.count(item.key())) config_error(where.empty() ? item.key() : where + "." + item.key(), "unknown key");
}

template <class T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  const std::string field = where.empty() ? key : where + "." + key;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error(field, "wrong type");
  }
}

bool is_donut(ProblemKind k) { return k != ProblemKind::SyntheticSpd; }

bool problem_is_elastic(const ExperimentConfig& c) {
  switch (c.problem) {
    case ProblemKind::ElasticDonut:
    case ProblemKind::HingedElasticDonut: return true;
    case ProblemKind::ThermalDonut:
    case ProblemKind::SyntheticSpd: return false;
    case ProblemKind::DonutOneStand:
    case ProblemKind::DonutTwoStands: return c.elastic;
  }
  return false;
}

// Pattern sizes near 2000 dof with about 100 interface dof.
void default_divisions(const ExperimentConfig& c, int& radial, int& angular) {
  const bool el = problem_is_elastic(c);
  radial = c.radial_divs > 0 ? c.radial_divs : (el ? 25 : 50);
  angular = c.angular_divs > 0 ? c.angular_divs : (el ? 38 : 40);
}

}  // namespace

std::string_view to_string(ProblemKind kind) noexcept {
  for (const auto& [k, name] : kProblemNames)
    if (k == kind) return name;
  return "unknown";
}

ExperimentConfig default_config(ProblemKind problem) {
  ExperimentConfig c;
  c.problem = problem;
  switch (problem) {
    case ProblemKind::ThermalDonut: c.r_outer = 8.0; break;
    case ProblemKind::ElasticDonut:
      c.r_outer = 2.5;
      c.poisson = 0.495;
      break;
    case ProblemKind::HingedElasticDonut: c.r_outer = 4.0; break;
    default: break;
  }
  return c;
}

double synthetic_lambda_min(const ExperimentConfig& c) {
  if (c.lambda_min) return *c.lambda_min;
  return c.synthetic_stands == 0 ? 1e-3 : 2e-4;
}

void validate(const ExperimentConfig& c) {
  if (is_donut(c.problem) && c.n_repetitions < 3) config_error("n_repetitions", "must be >= 3 for donut problems");
  if (c.n_repetitions < 1) config_error("n_repetitions", "must be >= 1");
  if (!(c.tol > 0.0)) config_error("solver.tol", "must be > 0");
  if (!(c.rank_tol > 0.0)) config_error("solver.rank_tol", "must be > 0");
  if (c.max_iter < 1) config_error("solver.max_iter", "must be >= 1");
  if (!(c.r_inner > 0.0 && c.r_inner < c.r_outer)) config_error("geometry.r_inner", "need 0 < r_inner < r_outer");
  if (c.radial_divs < 0 || c.angular_divs < 0) config_error("geometry", "divisions must be >= 1");
  if (!(c.young > 0.0)) config_error("physics.young", "must be > 0");
  if (!(c.poisson > -1.0 && c.poisson < 0.5)) config_error("physics.poisson", "must lie in (-1, 0.5)");
  if (c.interface_size < 1) config_error("synthetic.interface_size", "must be >= 1");
  if (!(synthetic_lambda_min(c) > 0.0 && synthetic_lambda_min(c) <= c.lambda_max)) {
    config_error("synthetic.lambda_min", "need 0 < lambda_min <= lambda_max");
  }
  if (c.synthetic_stands < 0 || c.synthetic_stands > 2) config_error("synthetic.stands", "must be 0, 1 or 2");
  if (c.methods.empty()) config_error("solver.methods", "at least one method required");
  for (const auto& m : c.methods)
    if (!kMethods.count(m)) config_error("solver.methods", "unknown method '" + m + "'");
  if (!(c.stand_height > 0.0)) config_error("geometry.stand.height", "must be > 0");
  if (c.stand_height_divs < 1) config_error("geometry.stand.height_divs", "must be >= 1");
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    config_error("config", std::string("not valid JSON: ") + e.what());
  }
  reject_unknown(j, "", {"problem", "n_repetitions", "seed", "load", "output", "geometry", "physics", "synthetic", "solver"});
  if (!j.contains("problem")) config_error("problem", "missing");
  std::string problem;
  read(j, "problem", "", problem);
  std::optional<ProblemKind> kind;
  for (const auto& [k, name] : kProblemNames)
    if (problem == name) kind = k;
  if (!kind) config_error("problem", "unknown problem '" + problem + "'");
  ExperimentConfig c = default_config(*kind);
  read(j, "n_repetitions", "", c.n_repetitions);
  read(j, "seed", "", c.seed);
  read(j, "output", "", c.output);
  if (j.contains("load")) {
    std::string load;
    read(j, "load", "", load);
    if (load == "random") c.periodic_load = false;
    else if (load == "periodic") c.periodic_load = true;
    else config_error("load", "expected 'random' or 'periodic'");
  }
  if (j.contains("geometry")) {
    const json& g = j["geometry"];
    reject_unknown(g, "geometry", {"r_inner", "r_outer", "radial_divs", "angular_divs", "stand_segment_nodes", "stand", "hosts"});
    read(g, "r_inner", "geometry", c.r_inner);
    read(g, "r_outer", "geometry", c.r_outer);
    read(g, "radial_divs", "geometry", c.radial_divs);
    read(g, "angular_divs", "geometry", c.angular_divs);
    read(g, "stand_segment_nodes", "geometry", c.stand_segment_nodes);
    read(g, "hosts", "geometry", c.stand_hosts);
    if (g.contains("stand")) {
      const json& s = g["stand"];
      reject_unknown(s, "geometry.stand", {"height", "width_divs", "height_divs"});
      read(s, "height", "geometry.stand", c.stand_height);
      read(s, "width_divs", "geometry.stand", c.stand_width_divs);
      read(s, "height_divs", "geometry.stand", c.stand_height_divs);
    }
  }
  if (j.contains("physics")) {
    const json& p = j["physics"];
    reject_unknown(p, "physics", {"kind", "young", "poisson"});
    if (p.contains("kind")) {
      std::string kind;
      read(p, "kind", "physics", kind);
      if (kind == "thermal") c.elastic = false;
      else if (kind == "plane_strain") c.elastic = true;
      else config_error("physics.kind", "expected 'thermal' or 'plane_strain'");
    }
    read(p, "young", "physics", c.young);
    read(p, "poisson", "physics", c.poisson);
  }
  if (j.contains("synthetic")) {
    const json& s = j["synthetic"];
    reject_unknown(s, "synthetic", {"interface_size", "lambda_min", "lambda_max", "seed", "stands"});
    read(s, "interface_size", "synthetic", c.interface_size);
    if (s.contains("lambda_min")) {
      double lm = 0.0;
      read(s, "lambda_min", "synthetic", lm);
      c.lambda_min = lm;
    }
    read(s, "lambda_max", "synthetic", c.lambda_max);
    read(s, "seed", "synthetic", c.pattern_seed);
    read(s, "stands", "synthetic", c.synthetic_stands);
  }
  if (j.contains("solver")) {
    const json& s = j["solver"];
    reject_unknown(s, "solver", {"methods", "preconditioner", "coarse_preconditioner", "tol", "max_iter", "rank_tol",
                                 "reorthogonalize"});
    read(s, "methods", "solver", c.methods);
    std::string kind;
    if (s.contains("preconditioner")) {
      read(s, "preconditioner", "solver", kind);
      try {
        c.precond = parse_precond_kind(kind);
      } catch (const Error&) {
        config_error("solver.preconditioner", "unknown kind '" + kind + "'");
      }
    }
    if (s.contains("coarse_preconditioner")) {
      read(s, "coarse_preconditioner", "solver", kind);
      try {
        c.coarse_precond = parse_precond_kind(kind);
      } catch (const Error&) {
        config_error("solver.coarse_preconditioner", "unknown kind '" + kind + "'");
      }
    }
    read(s, "tol", "solver", c.tol);
    read(s, "max_iter", "solver", c.max_iter);
    read(s, "rank_tol", "solver", c.rank_tol);
    if (s.contains("reorthogonalize") && !s["reorthogonalize"].is_null()) {
      bool flag = false;
      read(s, "reorthogonalize", "solver", flag);
      c.reorthogonalize = flag;
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("config", "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

Problem build_problem(const ExperimentConfig& c) {
  validate(c);
  const int n = c.n_repetitions;
  Problem out;
  if (c.problem == ProblemKind::SyntheticSpd) {
    SyntheticSpec spec;
    spec.interface_size = c.interface_size;
    spec.n_sides = c.synthetic_stands > 0 ? 3 : 2;
    spec.lambda_min = synthetic_lambda_min(c);
    spec.lambda_max = c.lambda_max;
    spec.seed = c.pattern_seed;
    auto sector = std::make_shared<const PatternStiffness>(build_synthetic_pattern(spec));
    if (c.synthetic_stands == 0) {
      out.model = std::make_shared<const StructureModel>(make_ring(sector, n));
    } else {
      SyntheticSpec st = spec;
      st.n_sides = 1;
      st.seed = spec.seed + 1;
      auto stand = std::make_shared<const PatternStiffness>(build_synthetic_pattern(st));
      std::vector<int> hosts = c.stand_hosts;
      if (hosts.empty()) hosts = c.synthetic_stands == 1 ? std::vector<int>{n - 1} : std::vector<int>{0, 1};
      out.model = std::make_shared<const StructureModel>(make_ring_with_stands(sector, stand, n, hosts));
    }
  } else {
    const bool el = problem_is_elastic(c);
    const Physics physics = el ? Physics::plane_strain(c.young, c.poisson) : Physics::thermal();
    DonutGeometry g;
    g.n_sectors = n;
    g.r_inner = c.r_inner;
    g.r_outer = c.r_outer;
    default_divisions(c, g.radial_divs, g.angular_divs);
    g.clamp_inner = c.problem != ProblemKind::HingedElasticDonut;
    const bool stands = c.problem == ProblemKind::DonutOneStand || c.problem == ProblemKind::DonutTwoStands;
    if (stands) g.stand_segment_nodes = c.stand_segment_nodes;
    PatternStiffness sector = build_donut_pattern(g, physics);
    if (c.problem == ProblemKind::HingedElasticDonut) sector = apply_hinge(sector, inner_ring_center_node(sector));
    auto sector_ptr = std::make_shared<const PatternStiffness>(std::move(sector));
    if (!stands) {
      out.model = std::make_shared<const StructureModel>(make_ring(sector_ptr, n));
    } else {
      const auto& seg = sector_ptr->sides[static_cast<std::size_t>(sector_ptr->side_index("stand"))].nodes;
      const Point2 p0 = sector_ptr->mesh.nodes[static_cast<std::size_t>(seg.front())];
      const Point2 p1 = sector_ptr->mesh.nodes[static_cast<std::size_t>(seg.back())];
      StandGeometry sg;
      sg.width = std::hypot(p1.x - p0.x, p1.y - p0.y);
      sg.height = c.stand_height;
      sg.width_divs = c.stand_width_divs > 0 ? c.stand_width_divs : static_cast<int>(seg.size()) - 1;
      sg.height_divs = c.stand_height_divs;
      sg.fixed_base = true;
      auto stand = std::make_shared<const PatternStiffness>(build_stand_pattern(sg, physics));
      std::vector<int> hosts = c.stand_hosts;
      if (hosts.empty()) {
        hosts = c.problem == ProblemKind::DonutOneStand ? std::vector<int>{n - 1} : std::vector<int>{0, 1};
      }
      out.model = std::make_shared<const StructureModel>(make_ring_with_stands(sector_ptr, stand, n, hosts));
    }
  }
  out.loads = c.periodic_load ? periodic_load(*out.model, c.seed) : random_load(*out.model, c.seed);
  return out;
}

OracleSolution oracle_direct_solve(const StructureModel& model, const LoadCase& loads) {
  const int dpn = model.dofs_per_node();
  const Index n = model.n_global_nodes() * dpn;
  std::vector<Eigen::Triplet<double>> trip;
  Vector f = Vector::Zero(n);
  for (int o = 0; o < model.n_occurrences(); ++o) {
    const PatternStiffness& pat = model.pattern(model.occurrences()[static_cast<std::size_t>(o)].pattern);
    const auto& gnode = model.global_nodes()[static_cast<std::size_t>(o)];
    std::vector<std::pair<Index, Index>> free;  // (local first dof, global first dof)
    for (std::size_t v = 0; v < gnode.size(); ++v)
      if (pat.node_dof[v] >= 0) free.emplace_back(pat.node_dof[v], gnode[v] * dpn);
    const double c = model.cos_of(o);
    const double s = model.sin_of(o);
    const Vector fg = to_structure_frame(model, o, loads.forces[static_cast<std::size_t>(o)]);
    for (const auto& [la, ga] : free) {
      for (int d = 0; d < dpn; ++d) f(ga + d) += fg(la + d);
      for (const auto& [lb, gb] : free) {
        if (dpn == 1) {
          const double k = pat.stiffness(la, lb);
          if (k != 0.0) trip.emplace_back(ga, gb, k);
          continue;
        }
        Eigen::Matrix2d k = pat.stiffness.block<2, 2>(la, lb);
        if (k.isZero(0.0)) continue;
        Eigen::Matrix2d rot;
        rot << c, -s, s, c;
        k = rot * k * rot.transpose();
        for (int i = 0; i < 2; ++i)
          for (int jj = 0; jj < 2; ++jj) trip.emplace_back(ga + i, gb + jj, k(i, jj));
      }
    }
  }
  Eigen::SparseMatrix<double> kg(n, n);
  kg.setFromTriplets(trip.begin(), trip.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(kg);
  if (ldlt.info() != Eigen::Success) throw Error(Errc::SingularGlobalMatrix, "sparse LDLᵀ factorization failed");
  const Vector dvec = ldlt.vectorD();
  const double dmax = dvec.cwiseAbs().maxCoeff();
  if (!(dvec.minCoeff() > 1e-12 * dmax)) {
    throw Error(Errc::SingularGlobalMatrix, "global stiffness is singular or indefinite (pivot ratio " +
                                                std::to_string(dvec.minCoeff() / dmax) + ")");
  }
  const Vector ug = ldlt.solve(f);
  OracleSolution out;
  out.global_dofs = n;
  for (int o = 0; o < model.n_occurrences(); ++o) {
    const PatternStiffness& pat = model.pattern(model.occurrences()[static_cast<std::size_t>(o)].pattern);
    const auto& gnode = model.global_nodes()[static_cast<std::size_t>(o)];
    Vector uo(pat.free_dofs());
    for (std::size_t v = 0; v < gnode.size(); ++v)
      if (pat.node_dof[v] >= 0)
        for (int d = 0; d < dpn; ++d) uo(pat.node_dof[v] + d) = ug(gnode[v] * dpn + d);
    out.u.push_back(std::move(uo));
  }
  return out;
}

OracleCheck check_against_oracle(const StructureModel& model, const OracleSolution& oracle,
                                 const std::vector<Vector>& u, double tol) {
  if (u.size() != oracle.u.size()) throw Error(Errc::DimensionMismatch, "oracle check: occurrence count differs");
  double diff2 = 0.0;
  double ref2 = 0.0;
  double own2 = 0.0;
  for (int o = 0; o < model.n_occurrences(); ++o) {
    const Vector ug = to_structure_frame(model, o, u[static_cast<std::size_t>(o)]);
    diff2 += (ug - oracle.u[static_cast<std::size_t>(o)]).squaredNorm();
    ref2 += oracle.u[static_cast<std::size_t>(o)].squaredNorm();
    own2 += ug.squaredNorm();
  }
  OracleCheck chk;
  chk.relative_error = std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-300);
  chk.u_norm = std::sqrt(own2);
  chk.jump = interface_jump(model, u).norm();
  chk.pass = chk.relative_error <= 1e-6 && chk.jump <= 10.0 * tol * chk.u_norm;
  return chk;
}

void write_csv(std::ostream& os, const ConvergenceRecord& record) {
  os << "iter,residual_norm,active_directions,cum_local_solve_batches,wall_ms\n";
  os << std::setprecision(17);
  for (const auto& s : record.history) {
    os << s.iter << ',' << std::scientific << s.residual_norm << std::defaultfloat << ',' << s.active_directions
       << ',' << s.neumann_batches << ',' << std::fixed << std::setprecision(3) << s.wall_ms << std::defaultfloat
       << std::setprecision(17) << '\n';
  }
}

void write_summary(std::ostream& os, const ExperimentConfig& config, const StructureModel& model,
                   const ExperimentReport& report) {
  os << "problem " << to_string(config.problem) << ", " << config.n_repetitions << " repetitions, "
     << model.n_patterns() << " pattern(s), " << model.n_occurrences() << " occurrences, "
     << model.interface_size() << " interface dofs\n";
  os << "pattern dofs";
  for (const auto& p : model.patterns()) os << ' ' << p->free_dofs() << " (" << p->dirichlet.boundary().size() << " boundary)";
  os << "\npreconditioner " << to_string(config.precond) << ", tol " << config.tol << ", seed " << config.seed << "\n\n";
  os << std::left << std::setw(14) << "method" << std::setw(12) << "iterations" << std::setw(12) << "wall_ms"
     << std::setw(16) << "batches/iter" << std::setw(16) << "oracle_rel_err" << "status\n";
  for (const auto& o : report.outcomes) {
    const auto& h = o.record.history;
    double per_iter = 0.0;
    if (h.size() >= 2) per_iter = double(h.back().neumann_batches - h.front().neumann_batches) / double(h.size() - 1);
    std::ostringstream err;
    if (o.oracle) err << std::scientific << std::setprecision(2) << o.oracle->relative_error;
    else err << "-";
    std::string status = o.converged ? (o.oracle && o.oracle->pass ? "ok" : "oracle-fail") : "no-convergence";
    if (!o.error.empty()) status += " (" + o.error + ")";
    os << std::left << std::setw(14) << o.method << std::setw(12) << o.record.iterations << std::setw(12)
       << std::fixed << std::setprecision(1) << (h.empty() ? 0.0 : h.back().wall_ms) << std::defaultfloat
       << std::setw(16) << per_iter << std::setw(16) << err.str() << status << '\n';
  }
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream& log) {
  validate(config);
  const Problem problem = build_problem(config);
  const StructureModel& model = *problem.model;
  SolverOptions opt;
  opt.precond = config.precond;
  opt.coarse_precond = config.coarse_precond;
  opt.tol = config.tol;
  opt.max_iter = config.max_iter;
  opt.rank_tol = config.rank_tol;
  opt.reorthogonalize = config.reorthogonalize;

  ExperimentReport report;
  std::optional<OracleSolution> oracle;
  bool any_nonconv = false;
  bool any_oracle_fail = false;
  for (const auto& m : config.methods) {
    MethodOutcome out;
    out.method = m;
    SolveResult res;
    try {
      if (m == "classical") res = solve_classical(model, problem.loads, opt);
      else if (m == "mrhs") res = solve_classical_mrhs(model, problem.loads, opt);
      else res = solve_multivector(model, problem.loads, build_multivector_map(model), opt);
      out.converged = res.record.converged;
    } catch (const SolveFailure& f) {
      res = f.partial();
      out.error = f.what();
    }
    out.record = res.record;
    if (out.converged) {
      if (!oracle) oracle = oracle_direct_solve(model, problem.loads);
      out.oracle = check_against_oracle(model, *oracle, res.u, config.tol);
      if (!out.oracle->pass) any_oracle_fail = true;
    } else {
      any_nonconv = true;
    }
    log << m << ": " << (out.converged ? "converged" : "not converged") << " in " << out.record.iterations
        << " iterations";
    if (out.oracle) {
      log << ", oracle " << (out.oracle->pass ? "pass" : "FAIL") << " (max relative error "
          << out.oracle->relative_error << ", jump " << out.oracle->jump << ")";
    }
    if (!out.error.empty()) log << " [" << out.error << "]";
    log << '\n';
    report.outcomes.push_back(std::move(out));
  }
  report.exit_code = any_nonconv ? 2 : (any_oracle_fail ? 3 : 0);

  if (!config.output.empty()) {
    std::filesystem::create_directories(config.output);
    for (const auto& o : report.outcomes) {
      std::ofstream csv(std::filesystem::path(config.output) / (o.method + ".csv"));
      write_csv(csv, o.record);
    }
    std::ofstream sum(std::filesystem::path(config.output) / "summary.txt");
    write_summary(sum, config, model, report);
  }
  return report;
}

}  // namespace patfeti
