#pragma once

// Dual interface solvers: classical FETI PCG, the same iteration with local
// solves batched per pattern (mrhs), and the multivector block variant.

#include "patfeti/error.hpp"
#include "patfeti/structure.hpp"

#include <optional>
#include <string>
#include <vector>

namespace patfeti {

/// Coarse space handling of the self-equilibrium constraint Gᵀλ = e:
/// Q = I − M̃G (GᵀM̃G)⁻¹ Gᵀ and λ₀ = M̃G (GᵀM̃G)⁻¹ e.
class CoarseProblem {
 public:
  CoarseProblem() = default;
  CoarseProblem(CoarseSpace space, Matrix mg, const Matrix& gram, PrecondKind kind, bool block_path);

  [[nodiscard]] bool empty() const noexcept { return space_.g.cols() == 0; }
  [[nodiscard]] const Matrix& g() const noexcept { return space_.g; }
  [[nodiscard]] const Vector& e() const noexcept { return space_.e; }
  [[nodiscard]] const CoarseSpace& space() const noexcept { return space_; }
  [[nodiscard]] const Matrix& gram() const noexcept { return gram_; }
  [[nodiscard]] PrecondKind kind() const noexcept { return kind_; }
  [[nodiscard]] bool used_block_path() const noexcept { return block_path_; }

  [[nodiscard]] DenseBlock project(const DenseBlock& x) const;            // Q x
  [[nodiscard]] DenseBlock project_transpose(const DenseBlock& x) const;  // Qᵀ x
  [[nodiscard]] Vector initial_lambda() const;
  /// (GᵀM̃G)⁻¹ GᵀM̃ r: the amplitudes α with Gα = r for r in range(G).
  [[nodiscard]] Vector amplitudes(const Vector& r) const;

 private:
  CoarseSpace space_;
  Matrix mg_;  // M̃G
  Matrix gram_;
  SymFactorization gram_fact_;
  PrecondKind kind_ = PrecondKind::Identity;
  bool block_path_ = false;
};

/// Throws SingularCoarseGram if GᵀM̃G is rank deficient. The Gram matrix is
/// computed from pattern-scale products when one pattern holds all floating
/// occurrences, and from G directly otherwise.
[[nodiscard]] CoarseProblem build_coarse(const StructureModel& model, const LoadCase& loads, PrecondKind kind,
                                         SolveCounters* counters = nullptr);

/// Destination interface slot <- transported copy of a source slot.
struct SlotSource {
  int source = 0;
  double angle = 0.0;  // frame rotation applied to the source data
};

struct Recipe {
  std::vector<SlotSource> slots;  // one per interface
};

/// Recipes turning one interface vector into a block of search directions.
/// recipes[0] is the identity.
struct MultivectorMap {
  std::vector<Recipe> recipes;
  [[nodiscard]] Index width() const noexcept { return static_cast<Index>(recipes.size()); }
};

[[nodiscard]] MultivectorMap identity_map(const StructureModel& model);

/// Ring only: the n cyclic shifts. One stand (or more): cyclic shifts with
/// stand rows held fixed. Two stands: the cyclic shifts, then the same shifts
/// with the two stand interfaces swapped.
[[nodiscard]] MultivectorMap build_multivector_map(const StructureModel& model);

/// Column k = recipe k applied to w.
[[nodiscard]] DenseBlock expand_multivector(const Vector& w, const MultivectorMap& map, const StructureModel& model);

/// Numerical check on random probes that every recipe commutes with F, the
/// preconditioner and Q, to `tol` relative.
[[nodiscard]] bool recipes_commute(const StructureModel& model, const MultivectorMap& map, const CoarseProblem& coarse,
                                   PrecondKind precond, double tol = 1e-8);

struct SolverOptions {
  PrecondKind precond = PrecondKind::Dirichlet;
  PrecondKind coarse_precond = PrecondKind::Identity;
  double tol = 1e-8;
  int max_iter = 500;
  std::optional<bool> reorthogonalize;  // default: off for classical, on for multivector
  double rank_tol = kDefaultRankTol;
};

struct IterationStat {
  int iter = 0;
  double residual_norm = 0.0;
  int active_directions = 0;
  int dropped_directions = 0;
  long neumann_batches = 0;    // cumulative, setup included
  long dirichlet_batches = 0;  // cumulative, setup included
  double wall_ms = 0.0;
  double coarse_residual = 0.0;  // ‖Gᵀλ − e‖ / max(‖e‖, 1)
};

struct ConvergenceRecord {
  std::string method;
  std::vector<IterationStat> history;
  bool converged = false;
  int iterations = 0;
  bool single_vector_orthogonalization = false;
};

struct SolveResult {
  Vector lambda;
  Vector alpha;
  std::vector<Vector> u;  // per occurrence, pattern frame, free dofs
  ConvergenceRecord record;
};

/// Raised when an engine stops without converging; carries the partial run.
class SolveFailure : public Error {
 public:
  SolveFailure(Errc code, const std::string& message, SolveResult partial)
      : Error(code, message), partial_(std::move(partial)) {}
  [[nodiscard]] const SolveResult& partial() const noexcept { return partial_; }

 private:
  SolveResult partial_;
};

[[nodiscard]] SolveResult solve_classical(const StructureModel& model, const LoadCase& loads,
                                          const SolverOptions& options = {});
[[nodiscard]] SolveResult solve_classical_mrhs(const StructureModel& model, const LoadCase& loads,
                                               const SolverOptions& options = {});
[[nodiscard]] SolveResult solve_multivector(const StructureModel& model, const LoadCase& loads,
                                            const MultivectorMap& map, const SolverOptions& options = {});

/// u⁽ˢ⁾ = K⁽ˢ⁾⁺(f⁽ˢ⁾ − t⁽ˢ⁾ᵀB⁽ˢ⁾ᵀλ) − R⁽ˢ⁾α⁽ˢ⁾, α from the coarse problem.
[[nodiscard]] std::vector<Vector> recover_solution(const StructureModel& model, const LoadCase& loads,
                                                   const Vector& lambda, const CoarseProblem& coarse,
                                                   Vector* alpha = nullptr, BatchMode mode = BatchMode::PerPattern,
                                                   SolveCounters* counters = nullptr);

}  // namespace patfeti
