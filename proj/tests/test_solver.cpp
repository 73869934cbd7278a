#include "support.hpp"

#include <gtest/gtest.h>

using namespace patfeti;
using namespace patfeti::testing;

namespace {

struct KktSolution {
  std::vector<Vector> u;
  Vector lambda;
};

// [K T'; T 0] [u; λ] = [f; 0] with block diagonal K, solved densely.
KktSolution kkt_solve(const StructureModel& m, const LoadCase& loads) {
  std::vector<Index> off{0};
  for (int o = 0; o < m.n_occurrences(); ++o)
    off.push_back(off.back() + m.pattern(m.occurrences()[static_cast<std::size_t>(o)].pattern).free_dofs());
  const Index nu = off.back();
  const Index nl = m.interface_size();
  Matrix a = Matrix::Zero(nu + nl, nu + nl);
  Vector rhs = Vector::Zero(nu + nl);
  for (int o = 0; o < m.n_occurrences(); ++o) {
    const auto so = static_cast<std::size_t>(o);
    const PatternStiffness& pat = m.pattern(m.occurrences()[so].pattern);
    const Index n = pat.free_dofs();
    a.block(off[so], off[so], n, n) = pat.stiffness;
    const Matrix t = dense_trace(m, o);
    a.block(off[so], nu, n, nl) = t.transpose();
    a.block(nu, off[so], nl, n) = t;
    rhs.segment(off[so], n) = loads.forces[so];
  }
  const Vector x = a.fullPivLu().solve(rhs);
  KktSolution s;
  for (int o = 0; o < m.n_occurrences(); ++o) {
    const auto so = static_cast<std::size_t>(o);
    s.u.push_back(x.segment(off[so], off[so + 1] - off[so]));
  }
  s.lambda = x.tail(nl);
  return s;
}

double max_rel(const std::vector<Vector>& u, const std::vector<Vector>& ref) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t o = 0; o < u.size(); ++o) {
    num = std::max(num, (u[o] - ref[o]).cwiseAbs().maxCoeff());
    den = std::max(den, ref[o].cwiseAbs().maxCoeff());
  }
  return num / den;
}

PatternPtr synthetic_pattern(int size, std::uint64_t seed) {
  SyntheticSpec s;
  s.interface_size = size;
  s.seed = seed;
  return std::make_shared<const PatternStiffness>(build_synthetic_pattern(s));
}

StructureModel hinged_ring(int n) { return make_ring(hinged_sector(n), n); }

StructureModel stands_ring(int n, std::vector<int> hosts) {
  auto sector = small_sector(n, Physics::plane_strain(), false, 3);
  return make_ring_with_stands(sector, small_stand(*sector, Physics::plane_strain()), n, hosts);
}

std::vector<StructureModel> solver_models() {
  std::vector<StructureModel> v;
  v.push_back(make_ring(small_sector(5, Physics::thermal()), 5));
  v.push_back(make_ring(small_sector(9, Physics::plane_strain()), 9));
  v.push_back(hinged_ring(5));
  v.push_back(stands_ring(5, {4}));
  v.push_back(stands_ring(5, {0, 1}));
  return v;
}

SolverOptions tight() {
  SolverOptions o;
  o.tol = 1e-10;
  return o;
}

}  // namespace

TEST(Coarse, ProjectorIdentities) {
  const StructureModel m = hinged_ring(7);
  const LoadCase loads = random_load(m, 4);
  const CoarseProblem c = build_coarse(m, loads, PrecondKind::Identity);
  ASSERT_FALSE(c.empty());
  EXPECT_TRUE(c.used_block_path());
  const Matrix x = random_matrix(m.interface_size(), 4, 9);
  const Matrix qx = c.project(x);
  EXPECT_LE((c.project(qx) - qx).norm(), 1e-10 * x.norm());
  EXPECT_LE((c.g().transpose() * qx).norm(), 1e-10 * x.norm());
  const Matrix qtx = c.project_transpose(x);
  EXPECT_LE((c.project_transpose(qtx) - qtx).norm(), 1e-10 * x.norm());
  EXPECT_LE((c.g().transpose() * c.initial_lambda() - c.e()).norm(), 1e-12 * c.e().norm());
}

TEST(Coarse, GenericAndBlockPathsAgree) {
  const StructureModel m = hinged_ring(5);
  const CoarseSpace cs = build_G_and_e(m, random_load(m, 1));
  for (PrecondKind kind : {PrecondKind::Identity, PrecondKind::Dirichlet}) {
    const CoarseProblem c = build_coarse(m, random_load(m, 1), kind);
    const Matrix mg = preconditioner_apply(m, kind, cs.g);
    const Matrix ref = cs.g.transpose() * mg;
    EXPECT_LE((c.gram() - ref).norm(), 1e-10 * ref.norm());
  }
}

TEST(Coarse, FullyFloatingStructureIsSingular) {
  const StructureModel m = make_ring(small_sector(5, Physics::thermal(), false), 5);
  try {
    (void)build_coarse(m, random_load(m, 1), PrecondKind::Identity);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::SingularCoarseGram);
  }
}

TEST(Engines, MatchDenseKktSolution) {
  for (const StructureModel& m : solver_models()) {
    const LoadCase loads = random_load(m, 11);
    const KktSolution ref = kkt_solve(m, loads);
    const SolveResult cl = solve_classical(m, loads, tight());
    const SolveResult mr = solve_classical_mrhs(m, loads, tight());
    const SolveResult mv = solve_multivector(m, loads, build_multivector_map(m), tight());
    for (const SolveResult* r : {&cl, &mr, &mv}) {
      EXPECT_TRUE(r->record.converged) << r->record.method;
      EXPECT_LE(max_rel(r->u, ref.u), 1e-7) << r->record.method;
      EXPECT_LE((r->lambda - ref.lambda).norm(), 1e-6 * ref.lambda.norm()) << r->record.method;
      EXPECT_LE(interface_jump(m, [&] {
                  std::vector<Vector> g;
                  for (int o = 0; o < m.n_occurrences(); ++o) g.push_back(r->u[static_cast<std::size_t>(o)]);
                  return g;
                }()).norm(),
                1e-7);
    }
  }
}

TEST(Engines, MrhsHistoryIsBitwiseClassical) {
  for (const StructureModel& m : solver_models()) {
    const LoadCase loads = random_load(m, 2);
    const SolveResult a = solve_classical(m, loads);
    const SolveResult b = solve_classical_mrhs(m, loads);
    ASSERT_EQ(a.record.history.size(), b.record.history.size());
    for (std::size_t j = 0; j < a.record.history.size(); ++j)
      EXPECT_EQ(a.record.history[j].residual_norm, b.record.history[j].residual_norm);
    EXPECT_TRUE(bitwise_equal(a.lambda, b.lambda));
  }
}

TEST(Engines, ZeroLoadGivesZeroSolution) {
  const StructureModel m = hinged_ring(5);
  LoadCase zero = random_load(m, 1);
  for (auto& f : zero.forces) f.setZero();
  for (const SolveResult& r : {solve_classical(m, zero), solve_multivector(m, zero, build_multivector_map(m))}) {
    EXPECT_TRUE(r.record.converged);
    EXPECT_EQ(r.record.iterations, 0);
    EXPECT_EQ(r.lambda.cwiseAbs().maxCoeff(), 0.0);
    for (const Vector& u : r.u) EXPECT_EQ(u.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(Engines, SelfEquilibriumHoldsEveryIteration) {
  const StructureModel m = hinged_ring(7);
  const LoadCase loads = random_load(m, 6);
  for (const SolveResult& r : {solve_classical(m, loads), solve_multivector(m, loads, build_multivector_map(m))})
    for (const IterationStat& s : r.record.history) EXPECT_LE(s.coarse_residual, 1e-8) << r.record.method;
}

TEST(Engines, MaxIterationsCarriesPartialRecord) {
  const StructureModel m = make_ring(small_sector(9, Physics::plane_strain()), 9);
  SolverOptions o;
  o.max_iter = 2;
  try {
    (void)solve_classical(m, random_load(m, 1), o);
    FAIL();
  } catch (const SolveFailure& f) {
    EXPECT_EQ(f.code(), Errc::MaxIterationsExceeded);
    EXPECT_FALSE(f.partial().record.converged);
    EXPECT_EQ(f.partial().record.history.size(), 3U);
  }
}

TEST(Engines, BatchesPerIterationFollowPatterns) {
  for (const StructureModel& m : solver_models()) {
    const LoadCase loads = random_load(m, 3);
    auto check = [&](const SolveResult& r, long per_iter) {
      const auto& h = r.record.history;
      for (std::size_t j = 2; j < h.size(); ++j)
        EXPECT_EQ(h[j].neumann_batches - h[j - 1].neumann_batches, per_iter) << r.record.method << " iteration " << j;
    };
    check(solve_classical(m, loads), m.n_occurrences());
    check(solve_classical_mrhs(m, loads), m.n_patterns());
    check(solve_multivector(m, loads, build_multivector_map(m)), m.n_patterns());
  }
}

TEST(Multivector, IdentityMapReducesToClassical) {
  const StructureModel m = hinged_ring(5);
  const LoadCase loads = random_load(m, 5);
  SolverOptions o;
  o.reorthogonalize = true;
  const SolveResult cl = solve_classical(m, loads, o);
  const SolveResult mv = solve_multivector(m, loads, identity_map(m), o);
  ASSERT_EQ(cl.record.iterations, mv.record.iterations);
  const double r0 = cl.record.history[0].residual_norm;
  for (std::size_t j = 0; j < cl.record.history.size(); ++j)
    EXPECT_NEAR(cl.record.history[j].residual_norm, mv.record.history[j].residual_norm, 1e-8 * r0);
}

// CG minimizes the F-norm of the error over its search space, so the
// comparison is made in that norm on instances whose recipes commute.
TEST(Multivector, BlockSpaceDominatesClassicalInEnergy) {
  for (const StructureModel& m : {make_ring(small_sector(5, Physics::thermal()), 5),
                                  make_ring(small_sector(9, Physics::plane_strain()), 9), hinged_ring(5)}) {
    const LoadCase loads = random_load(m, 7);
    SolverOptions o;
    o.reorthogonalize = true;
    o.tol = 1e-13;
    const Vector exact = solve_multivector(m, loads, build_multivector_map(m), o).lambda;
    const Matrix f = dual_operator_apply(m, Matrix::Identity(m.interface_size(), m.interface_size()));
    auto energy = [&](const Vector& l) { return std::sqrt((l - exact).dot(f * (l - exact))); };
    auto lambda_after = [&](bool block, int j) {
      SolverOptions oj = o;
      oj.max_iter = j;
      try {
        return block ? solve_multivector(m, loads, build_multivector_map(m), oj).lambda : solve_classical(m, loads, oj).lambda;
      } catch (const SolveFailure& fail) {
        return fail.partial().lambda;
      }
    };
    const double e0 = energy(lambda_after(false, 1));
    for (int j = 1; j <= 4; ++j) EXPECT_LE(energy(lambda_after(true, j)), energy(lambda_after(false, j)) + 1e-8 * e0) << j;
  }
}

TEST(Multivector, FirstIterationsNearlyCoincideOnSyntheticRings) {
  for (int n : {5, 9}) {
    const StructureModel m = make_ring(synthetic_pattern(20, 1), n);
    const LoadCase loads = random_load(m, 1);
    const SolveResult cl = solve_classical(m, loads);
    const SolveResult mv = solve_multivector(m, loads, build_multivector_map(m));
    const double r0 = cl.record.history[0].residual_norm;
    EXPECT_LE(std::abs(mv.record.history[1].residual_norm - cl.record.history[1].residual_norm) / r0, 0.1);
  }
}

TEST(Multivector, PeriodicLoadFiltersShiftedColumns) {
  const int n = 6;
  const StructureModel m = make_ring(small_sector(n, Physics::plane_strain()), n);
  const LoadCase loads = periodic_load(m, 3);
  const SolveResult cl = solve_classical(m, loads);
  const SolveResult mv = solve_multivector(m, loads, build_multivector_map(m));
  EXPECT_TRUE(mv.record.converged);
  EXPECT_NEAR(mv.record.iterations, cl.record.iterations, 1);
  for (std::size_t j = 1; j < mv.record.history.size(); ++j) {
    EXPECT_EQ(mv.record.history[j].active_directions, 1);
    EXPECT_EQ(mv.record.history[j].dropped_directions, n - 1);
  }
}

TEST(Multivector, NormalizedBlockIsOrthonormalInF) {
  const StructureModel m = make_ring(small_sector(5, Physics::plane_strain()), 5);
  const MultivectorMap map = build_multivector_map(m);
  const DenseBlock w = expand_multivector(random_vector(m.interface_size(), 3), map, m);
  const DenseBlock p = dual_operator_apply(m, w);
  const InvSqrtResult ns = inv_sqrt_sym(w.transpose() * p);
  const Matrix wn = w * ns.transform;
  const Matrix pn = p * ns.transform;
  EXPECT_LE((pn.transpose() * wn - Matrix::Identity(ns.effective_rank, ns.effective_rank)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Multivector, MapShapes) {
  EXPECT_EQ(build_multivector_map(make_ring(small_sector(5, Physics::thermal()), 5)).width(), 5);
  EXPECT_EQ(build_multivector_map(stands_ring(5, {4})).width(), 5);
  EXPECT_EQ(build_multivector_map(stands_ring(5, {0, 1})).width(), 10);
  const StructureModel m = make_ring(small_sector(5, Physics::plane_strain()), 5);
  const Vector w = random_vector(m.interface_size(), 1);
  const DenseBlock b = expand_multivector(w, build_multivector_map(m), m);
  EXPECT_TRUE(bitwise_equal(b.col(0), w));
}

TEST(Multivector, CommutationProbe) {
  const StructureModel ring = make_ring(small_sector(5, Physics::plane_strain()), 5);
  const CoarseProblem none = build_coarse(ring, random_load(ring, 1), PrecondKind::Identity);
  EXPECT_TRUE(recipes_commute(ring, build_multivector_map(ring), none, PrecondKind::Dirichlet));
  // Swapping two interfaces of the ring is not a symmetry.
  MultivectorMap bad = identity_map(ring);
  Recipe swap = bad.recipes[0];
  std::swap(swap.slots[0], swap.slots[1]);
  bad.recipes.push_back(swap);
  EXPECT_FALSE(recipes_commute(ring, bad, none, PrecondKind::Dirichlet));
}

TEST(Recovery, ZeroLambdaZeroLoad) {
  const StructureModel m = make_ring(small_sector(5, Physics::thermal()), 5);
  LoadCase zero = random_load(m, 1);
  for (auto& f : zero.forces) f.setZero();
  const CoarseProblem c = build_coarse(m, zero, PrecondKind::Identity);
  for (const Vector& u : recover_solution(m, zero, Vector::Zero(m.interface_size()), c))
    EXPECT_EQ(u.cwiseAbs().maxCoeff(), 0.0);
}
