#include "patfeti/solver.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace patfeti {

CoarseProblem::CoarseProblem(CoarseSpace space, Matrix mg, const Matrix& gram, PrecondKind kind, bool block_path)
    : space_(std::move(space)), mg_(std::move(mg)), kind_(kind), block_path_(block_path) {
  if (space_.g.cols() == 0) return;
  gram_ = 0.5 * (gram + gram.transpose());
  gram_fact_ = factor_sym(gram_);
  if (gram_fact_.kernel_dim() > 0) {
    throw Error(Errc::SingularCoarseGram, "GᵀM̃G has " + std::to_string(gram_fact_.kernel_dim()) +
                                              " null directions out of " + std::to_string(gram_.rows()));
  }
}

DenseBlock CoarseProblem::project(const DenseBlock& x) const {
  if (empty()) return x;
  const DenseBlock c = gram_fact_.pseudo_solve_block(space_.g.transpose() * x);
  return x - mg_ * c;
}

DenseBlock CoarseProblem::project_transpose(const DenseBlock& x) const {
  if (empty()) return x;
  const DenseBlock c = gram_fact_.pseudo_solve_block(mg_.transpose() * x);
  return x - space_.g * c;
}

Vector CoarseProblem::initial_lambda() const {
  if (empty()) return Vector::Zero(space_.g.rows());
  return mg_ * gram_fact_.pseudo_solve(space_.e);
}

Vector CoarseProblem::amplitudes(const Vector& r) const {
  if (empty()) return Vector(0);
  return gram_fact_.pseudo_solve(mg_.transpose() * r);
}

CoarseProblem build_coarse(const StructureModel& model, const LoadCase& loads, PrecondKind kind,
                           SolveCounters* counters) {
  CoarseSpace space = build_G_and_e(model, loads);
  if (space.g.cols() == 0) return CoarseProblem(std::move(space), Matrix(), Matrix(), kind, false);
  Matrix mg = preconditioner_apply(model, kind, space.g, BatchMode::PerPattern, counters);
  Matrix gram;
  bool block_path = false;
  try {
    const GBlock gb = build_G_block(model);
    gram = coarse_gram_from_block(model, gb, kind);
    block_path = true;
  } catch (const Error& err) {
    if (err.code() != Errc::MixedPatterns && err.code() != Errc::TopologyMismatch) throw;
    gram = space.g.transpose() * mg;
  }
  return CoarseProblem(std::move(space), std::move(mg), gram, kind, block_path);
}

MultivectorMap identity_map(const StructureModel& model) {
  Recipe id;
  for (int i = 0; i < static_cast<int>(model.interfaces().size()); ++i) id.slots.push_back({i, 0.0});
  return {{id}};
}

MultivectorMap build_multivector_map(const StructureModel& model) {
  const RingLayout& lay = model.layout();
  const auto n = static_cast<int>(lay.ring_interfaces.size());
  MultivectorMap map = identity_map(model);
  if (n < 2) return map;
  auto phi = [&](int iface) {
    return model.occurrences()[static_cast<std::size_t>(model.interfaces()[static_cast<std::size_t>(iface)].occ_i)].angle;
  };
  auto transport = [&](int dst, int src) { return SlotSource{src, dst == src ? 0.0 : phi(dst) - phi(src)}; };
  const Recipe identity = map.recipes.front();
  map.recipes.clear();
  const int variants = lay.stand_interfaces.size() == 2 ? 2 : 1;
  for (int v = 0; v < variants; ++v) {
    for (int k = 0; k < n; ++k) {
      Recipe r = identity;
      for (int p = 0; p < n; ++p) {
        const int dst = lay.ring_interfaces[static_cast<std::size_t>(p)];
        r.slots[static_cast<std::size_t>(dst)] = transport(dst, lay.ring_interfaces[static_cast<std::size_t>((p + k) % n)]);
      }
      if (v == 1) {
        const int s0 = lay.stand_interfaces[0];
        const int s1 = lay.stand_interfaces[1];
        r.slots[static_cast<std::size_t>(s0)] = transport(s0, s1);
        r.slots[static_cast<std::size_t>(s1)] = transport(s1, s0);
      }
      map.recipes.push_back(std::move(r));
    }
  }
  return map;
}

DenseBlock expand_multivector(const Vector& w, const MultivectorMap& map, const StructureModel& model) {
  if (w.size() != model.interface_size()) {
    throw Error(Errc::DimensionMismatch, "expand_multivector: vector does not match the interface");
  }
  const auto n_if = static_cast<int>(model.interfaces().size());
  DenseBlock out(w.size(), map.width());
  for (Index k = 0; k < map.width(); ++k) {
    const Recipe& r = map.recipes[static_cast<std::size_t>(k)];
    if (static_cast<int>(r.slots.size()) != n_if) {
      throw Error(Errc::TopologyMismatch, "recipe " + std::to_string(k) + " has the wrong number of slots");
    }
    for (int i = 0; i < n_if; ++i) {
      const SlotSource& src = r.slots[static_cast<std::size_t>(i)];
      if (src.source < 0 || src.source >= n_if || model.interface_dofs(src.source) != model.interface_dofs(i)) {
        throw Error(Errc::TopologyMismatch, "recipe " + std::to_string(k) + " maps incompatible interfaces");
      }
      const Index dst0 = model.interface_offset(i);
      const Index src0 = model.interface_offset(src.source);
      const Index len = model.interface_dofs(i);
      if (!model.elastic() || src.angle == 0.0) {
        for (Index t = 0; t < len; ++t) out(dst0 + t, k) = w(src0 + t);
      } else {
        const double c = std::cos(src.angle);
        const double s = std::sin(src.angle);
        for (Index t = 0; t < len; t += 2) {
          const double x = w(src0 + t);
          const double y = w(src0 + t + 1);
          out(dst0 + t, k) = c * x - s * y;
          out(dst0 + t + 1, k) = s * x + c * y;
        }
      }
    }
  }
  return out;
}

bool recipes_commute(const StructureModel& model, const MultivectorMap& map, const CoarseProblem& coarse,
                     PrecondKind precond, double tol) {
  if (map.width() <= 1) return true;
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> normal;
  Vector x(model.interface_size());
  for (Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
  const DenseBlock px = expand_multivector(x, map, model);

  auto commutes = [&](const DenseBlock& op_px, const Vector& op_x) {
    const DenseBlock p_opx = expand_multivector(op_x, map, model);
    const double scale = std::max(op_x.norm(), 1e-300);
    for (Index k = 0; k < map.width(); ++k)
      if ((op_px.col(k) - p_opx.col(k)).norm() > tol * scale) return false;
    return true;
  };
  DenseBlock all(x.size(), px.cols() + 1);
  all << px, x;
  const DenseBlock f = dual_operator_apply(model, all);
  if (!commutes(f.leftCols(px.cols()), f.col(px.cols()))) return false;
  const DenseBlock m = preconditioner_apply(model, precond, all);
  if (!commutes(m.leftCols(px.cols()), m.col(px.cols()))) return false;
  const DenseBlock q = coarse.project(all);
  if (!commutes(q.leftCols(px.cols()), q.col(px.cols()))) return false;
  const DenseBlock qt = coarse.project_transpose(all);
  return commutes(qt.leftCols(px.cols()), qt.col(px.cols()));
}

std::vector<Vector> recover_solution(const StructureModel& model, const LoadCase& loads, const Vector& lambda,
                                     const CoarseProblem& coarse, Vector* alpha, BatchMode mode,
                                     SolveCounters* counters) {
  if (lambda.size() != model.interface_size()) throw Error(Errc::DimensionMismatch, "λ does not match the interface");
  Vector amp;
  if (!coarse.empty()) {
    const Vector d = build_natural_rhs(model, loads, mode, counters);
    const Vector fl = dual_operator_apply(model, lambda, mode, counters);
    amp = coarse.amplitudes(d - fl);
  }
  if (alpha) *alpha = amp;

  const InterfaceBlock bl = scatter(model, lambda);
  std::vector<Vector> u(static_cast<std::size_t>(model.n_occurrences()));
  for (int p = 0; p < model.n_patterns(); ++p) {
    const auto& occs = model.occurrences_of(p);
    const PatternStiffness& pat = model.pattern(p);
    const auto& bnd = pat.dirichlet.boundary();
    Matrix rhs(pat.free_dofs(), static_cast<Index>(occs.size()));
    for (std::size_t l = 0; l < occs.size(); ++l) {
      Vector f = loads.forces[static_cast<std::size_t>(occs[l])];
      for (std::size_t r = 0; r < bnd.size(); ++r)
        f(bnd[r]) -= bl.per_pattern[static_cast<std::size_t>(p)](static_cast<Index>(r), static_cast<Index>(l));
      rhs.col(static_cast<Index>(l)) = f;
    }
    Matrix sol;
    if (mode == BatchMode::PerPattern) {
      sol = pat.k_fact.pseudo_solve_block(rhs);
      if (counters && !occs.empty()) ++counters->neumann_batches;
    } else {
      sol.resize(rhs.rows(), rhs.cols());
      for (Index l = 0; l < rhs.cols(); ++l) {
        sol.col(l) = pat.k_fact.pseudo_solve(rhs.col(l));
        if (counters) ++counters->neumann_batches;
      }
    }
    for (std::size_t l = 0; l < occs.size(); ++l) {
      Vector uo = sol.col(static_cast<Index>(l));
      const int o = occs[l];
      if (pat.kernel_dim() > 0) {
        const Index c0 = coarse.space().column_offset[static_cast<std::size_t>(o)];
        uo -= pat.k_fact.kernel_basis() * amp.segment(c0, pat.kernel_dim());
      }
      u[static_cast<std::size_t>(o)] = std::move(uo);
    }
  }
  return u;
}

namespace {

using Clock = std::chrono::steady_clock;

struct EngineSetup {
  CoarseProblem coarse;
  Vector d;
  Vector lambda;
  Vector r;
  double r0 = 0.0;
};

class Recorder {
 public:
  Recorder(std::string method, const CoarseProblem& coarse, const SolveCounters& counters)
      : coarse_(coarse), counters_(counters), start_(Clock::now()) {
    record_.method = std::move(method);
  }

  void push(int iter, double rnorm, int active, int dropped, const Vector& lambda) {
    IterationStat s;
    s.iter = iter;
    s.residual_norm = rnorm;
    s.active_directions = active;
    s.dropped_directions = dropped;
    s.neumann_batches = counters_.neumann_batches;
    s.dirichlet_batches = counters_.dirichlet_batches;
    s.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start_).count();
    if (!coarse_.empty()) {
      s.coarse_residual = (coarse_.g().transpose() * lambda - coarse_.e()).norm() / std::max(coarse_.e().norm(), 1.0);
    }
    record_.history.push_back(s);
    record_.iterations = iter;
  }

  ConvergenceRecord& record() { return record_; }

 private:
  const CoarseProblem& coarse_;
  const SolveCounters& counters_;
  Clock::time_point start_;
  ConvergenceRecord record_;
};

EngineSetup setup(const StructureModel& model, const LoadCase& loads, const SolverOptions& opt, BatchMode mode,
                  SolveCounters& counters) {
  if (!(opt.tol > 0.0)) throw Error(Errc::ConfigError, "tol must be positive");
  EngineSetup s;
  s.coarse = build_coarse(model, loads, opt.coarse_precond, &counters);
  s.d = build_natural_rhs(model, loads, mode, &counters);
  s.lambda = s.coarse.initial_lambda();
  Vector res = s.d;
  if (s.lambda.cwiseAbs().maxCoeff() > 0.0) res -= dual_operator_apply(model, s.lambda, mode, &counters);
  s.r = s.coarse.project_transpose(res);
  s.r0 = s.r.norm();
  return s;
}

SolveResult finish(const StructureModel& model, const LoadCase& loads, EngineSetup& s, Recorder& rec,
                   BatchMode mode, bool converged) {
  SolveResult out;
  rec.record().converged = converged;
  out.record = rec.record();
  out.lambda = s.lambda;
  SolveCounters post;
  out.u = recover_solution(model, loads, s.lambda, s.coarse, &out.alpha, mode, &post);
  return out;
}

bool reached(double rnorm, double r0, double tol) { return r0 == 0.0 || rnorm <= tol * r0; }

SolveResult run_classical(const StructureModel& model, const LoadCase& loads, const SolverOptions& opt,
                          BatchMode mode, const char* name) {
  SolveCounters counters;
  EngineSetup s = setup(model, loads, opt, mode, counters);
  Recorder rec(name, s.coarse, counters);
  rec.push(0, s.r0, 0, 0, s.lambda);
  if (reached(s.r0, s.r0, opt.tol) || opt.tol >= 1.0) return finish(model, loads, s, rec, mode, true);

  const bool reorth = opt.reorthogonalize.value_or(false);
  std::vector<Vector> ws;
  std::vector<Vector> ps;
  std::vector<double> wps;
  Vector z = s.coarse.project(preconditioner_apply(model, opt.precond, s.r, mode, &counters));
  Vector w = z;
  for (int j = 0;; ++j) {
    const Vector p = s.coarse.project_transpose(dual_operator_apply(model, w, mode, &counters));
    const double wp = w.dot(p);
    if (!(wp > 0.0)) {
      rec.record().converged = false;
      throw SolveFailure(Errc::BreakdownZeroDenominator, "wᵀp = " + std::to_string(wp) + " at iteration " +
                                                             std::to_string(j + 1),
                         {s.lambda, {}, {}, rec.record()});
    }
    const double alpha = w.dot(s.r) / wp;
    s.lambda += alpha * w;
    s.r -= alpha * p;
    const double rn = s.r.norm();
    rec.push(j + 1, rn, 1, 0, s.lambda);
    if (reached(rn, s.r0, opt.tol)) return finish(model, loads, s, rec, mode, true);
    if (j + 1 >= opt.max_iter) {
      SolveResult partial = finish(model, loads, s, rec, mode, false);
      throw SolveFailure(Errc::MaxIterationsExceeded,
                         std::string(name) + " did not converge in " + std::to_string(opt.max_iter) + " iterations",
                         std::move(partial));
    }
    z = s.coarse.project(preconditioner_apply(model, opt.precond, s.r, mode, &counters));
    if (reorth) {
      ws.push_back(w);
      ps.push_back(p);
      wps.push_back(wp);
      Vector next = z;
      for (std::size_t k = 0; k < ws.size(); ++k) next -= (ps[k].dot(z) / wps[k]) * ws[k];
      w = std::move(next);
    } else {
      const double beta = -p.dot(z) / wp;
      w = z + beta * w;
    }
  }
}

}  // namespace

SolveResult solve_classical(const StructureModel& model, const LoadCase& loads, const SolverOptions& options) {
  return run_classical(model, loads, options, BatchMode::PerOccurrence, "classical");
}

SolveResult solve_classical_mrhs(const StructureModel& model, const LoadCase& loads, const SolverOptions& options) {
  return run_classical(model, loads, options, BatchMode::PerPattern, "mrhs");
}

SolveResult solve_multivector(const StructureModel& model, const LoadCase& loads, const MultivectorMap& map,
                              const SolverOptions& opt) {
  if (map.width() < 1) throw Error(Errc::TopologyMismatch, "empty multivector map");
  const BatchMode mode = BatchMode::PerPattern;
  SolveCounters counters;
  EngineSetup s = setup(model, loads, opt, mode, counters);
  // The commutation probe is setup work and is not charged to the iterations.
  const bool single = recipes_commute(model, map, s.coarse, opt.precond);
  Recorder rec("multivector", s.coarse, counters);
  rec.record().single_vector_orthogonalization = single;
  rec.push(0, s.r0, 0, 0, s.lambda);
  if (reached(s.r0, s.r0, opt.tol) || opt.tol >= 1.0) return finish(model, loads, s, rec, mode, true);

  const bool reorth = opt.reorthogonalize.value_or(true);
  std::vector<DenseBlock> ws;
  std::vector<DenseBlock> ps;
  const Vector z0 = s.coarse.project(preconditioner_apply(model, opt.precond, s.r, mode, &counters));
  DenseBlock w = expand_multivector(z0, map, model);
  if (!single) w = s.coarse.project(w);

  for (int j = 0;; ++j) {
    DenseBlock p = s.coarse.project_transpose(dual_operator_apply(model, w, mode, &counters));
    const Matrix eta = w.transpose() * p;
    const InvSqrtResult ns = inv_sqrt_sym(eta, opt.rank_tol);
    if (ns.effective_rank == 0) {
      const double rn = s.r.norm();
      if (reached(rn, s.r0, opt.tol)) return finish(model, loads, s, rec, mode, true);
      throw SolveFailure(Errc::TotalRankCollapse,
                         "every block direction was filtered at iteration " + std::to_string(j + 1),
                         finish(model, loads, s, rec, mode, false));
    }
    w = w * ns.transform;
    p = p * ns.transform;
    const Vector a = w.transpose() * s.r;
    s.lambda += w * a;
    s.r -= p * a;
    const double rn = s.r.norm();
    rec.push(j + 1, rn, static_cast<int>(ns.effective_rank), static_cast<int>(ns.dropped), s.lambda);
    if (reached(rn, s.r0, opt.tol)) return finish(model, loads, s, rec, mode, true);
    if (j + 1 >= opt.max_iter) {
      throw SolveFailure(Errc::MaxIterationsExceeded,
                         "multivector did not converge in " + std::to_string(opt.max_iter) + " iterations",
                         finish(model, loads, s, rec, mode, false));
    }

    if (reorth) {
      ws.push_back(w);
      ps.push_back(p);
    } else {
      ws.assign(1, w);
      ps.assign(1, p);
    }
    const Vector z = s.coarse.project(preconditioner_apply(model, opt.precond, s.r, mode, &counters));
    if (single) {
      Vector zo = z;
      for (std::size_t k = 0; k < ws.size(); ++k) zo -= ws[k] * (ps[k].transpose() * zo);
      w = expand_multivector(zo, map, model);
    } else {
      DenseBlock zb = expand_multivector(z, map, model);
      if (!s.coarse.empty()) zb = s.coarse.project(zb);
      for (std::size_t k = 0; k < ws.size(); ++k) zb -= ws[k] * (ps[k].transpose() * zb);
      w = std::move(zb);
    }
  }
}

}  // namespace patfeti
