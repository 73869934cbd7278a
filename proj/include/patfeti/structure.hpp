#pragma once

// Occurrences of patterns glued along interfaces, and the interface-level
// operators of the dual problem: signed rotated assembly, scaling, the dual
// Schur complement F, the preconditioners and the coarse space data.

#include "patfeti/fem.hpp"
#include "patfeti/linalg.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace patfeti {

using PatternPtr = std::shared_ptr<const PatternStiffness>;

struct Occurrence {
  int pattern = 0;
  double angle = 0.0;  // placement rotation, pattern frame -> structure frame
  Point2 translation;
};

/// Pairs side `side_i` of `occ_i` with side `side_j` of `occ_j`, node by node
/// in side order. B of occ_i carries +orientation, B of occ_j −orientation.
struct Interface {
  int occ_i = 0;
  int side_i = 0;
  int occ_j = 0;
  int side_j = 0;
  int orientation = 1;
};

/// Cyclic structure metadata used to build permutation recipes.
/// ring_interfaces[k] joins ring_occurrences[k] and ring_occurrences[k+1].
struct RingLayout {
  std::vector<int> ring_occurrences;
  std::vector<int> ring_interfaces;
  std::vector<int> stand_interfaces;  // in stand order
};

enum class PrecondKind { Dirichlet, Lumped, Superlumped, Identity };
enum class BatchMode { PerOccurrence, PerPattern };
enum class Combine { Sum, Average };

std::string_view to_string(PrecondKind kind) noexcept;
PrecondKind parse_precond_kind(std::string_view name);

/// Local solve accounting. A batch is one call into a factorization,
/// whatever the number of right hand sides.
struct SolveCounters {
  long neumann_batches = 0;
  long dirichlet_batches = 0;
};

/// Interface data stored from the point of view of the patterns: for pattern
/// p, a (boundary dofs of p) × (n_vectors · occurrences of p) block. Column
/// v·n_occ(p) + l holds vector v seen from the l-th occurrence of p, in the
/// pattern frame. Rows follow the pattern boundary (sides concatenated,
/// node-major); rows of sides that are not on any interface are zero.
struct InterfaceBlock {
  Index n_vectors = 0;
  std::vector<DenseBlock> per_pattern;
};

class StructureModel {
 public:
  struct SideLink {
    int interface = -1;
    double sign = 0.0;
  };

  StructureModel(std::vector<PatternPtr> patterns, std::vector<Occurrence> occurrences,
                 std::vector<Interface> interfaces, RingLayout layout = {});

  [[nodiscard]] const std::vector<PatternPtr>& patterns() const noexcept { return patterns_; }
  [[nodiscard]] const PatternStiffness& pattern(int p) const { return *patterns_[static_cast<std::size_t>(p)]; }
  [[nodiscard]] const std::vector<Occurrence>& occurrences() const noexcept { return occurrences_; }
  [[nodiscard]] const std::vector<Interface>& interfaces() const noexcept { return interfaces_; }
  [[nodiscard]] const RingLayout& layout() const noexcept { return layout_; }
  [[nodiscard]] int n_patterns() const noexcept { return static_cast<int>(patterns_.size()); }
  [[nodiscard]] int n_occurrences() const noexcept { return static_cast<int>(occurrences_.size()); }
  [[nodiscard]] int dofs_per_node() const noexcept { return dpn_; }
  [[nodiscard]] bool elastic() const noexcept { return dpn_ == 2; }

  [[nodiscard]] Index interface_size() const noexcept { return total_; }
  [[nodiscard]] Index interface_offset(int i) const { return iface_offset_[static_cast<std::size_t>(i)]; }
  [[nodiscard]] Index interface_dofs(int i) const;

  [[nodiscard]] const std::vector<int>& occurrences_of(int p) const { return pattern_occ_[static_cast<std::size_t>(p)]; }
  [[nodiscard]] int local_index(int occ) const { return local_index_[static_cast<std::size_t>(occ)]; }
  [[nodiscard]] const SideLink& side_link(int occ, int side) const;
  [[nodiscard]] Index boundary_size(int p) const;
  [[nodiscard]] Index boundary_offset(int p, int side) const;

  /// Multiplicity scaling D: weight of each occurrence on each interface dof.
  /// Entry k of weights_i()/weights_j() is the weight of occ_i/occ_j.
  [[nodiscard]] const Vector& weights_i() const noexcept { return weight_i_; }
  [[nodiscard]] const Vector& weights_j() const noexcept { return weight_j_; }

  [[nodiscard]] double cos_of(int occ) const { return cos_[static_cast<std::size_t>(occ)]; }
  [[nodiscard]] double sin_of(int occ) const { return sin_[static_cast<std::size_t>(occ)]; }

  /// Global node numbering with interface partners merged; -1 for
  /// constrained nodes. Indexed [occ][pattern node].
  [[nodiscard]] const std::vector<std::vector<Index>>& global_nodes() const noexcept { return global_node_; }
  [[nodiscard]] Index n_global_nodes() const noexcept { return n_global_nodes_; }

  /// Dirichlet operator for one occurrence: boundary = sides on an interface.
  struct DirichletGroup {
    int pattern = 0;
    unsigned mask = 0;
    std::vector<Index> rows;  // used rows of the pattern boundary
    std::vector<int> occurrences;
    std::shared_ptr<const DirichletOperator> op;
  };
  [[nodiscard]] const std::vector<DirichletGroup>& dirichlet_groups() const noexcept { return groups_; }

 private:
  std::vector<PatternPtr> patterns_;
  std::vector<Occurrence> occurrences_;
  std::vector<Interface> interfaces_;
  RingLayout layout_;
  int dpn_ = 1;
  Index total_ = 0;
  std::vector<Index> iface_offset_;
  std::vector<std::vector<int>> pattern_occ_;
  std::vector<int> local_index_;
  std::vector<std::vector<SideLink>> links_;
  std::vector<std::vector<Index>> boundary_offsets_;
  Vector weight_i_;
  Vector weight_j_;
  std::vector<double> cos_;
  std::vector<double> sin_;
  std::vector<std::vector<Index>> global_node_;
  Index n_global_nodes_ = 0;
  std::vector<DirichletGroup> groups_;
};

/// B⁽ˢ⁾ᵀ applied to each column (optionally D-weighted), in pattern frames.
[[nodiscard]] InterfaceBlock scatter(const StructureModel& model, const DenseBlock& v, bool weighted = false);

/// Σ_s B⁽ˢ⁾(·) (Sum) or the mean of both sides of each interface (Average).
[[nodiscard]] DenseBlock gather(const StructureModel& model, const InterfaceBlock& w, Combine combine,
                                bool weighted = false);

/// F·B, F = Σ_s B⁽ˢ⁾ t⁽ˢ⁾ K⁽ˢ⁾⁺ t⁽ˢ⁾ᵀ B⁽ˢ⁾ᵀ. PerPattern issues one multi-RHS
/// solve per pattern, PerOccurrence one per occurrence; results are bitwise
/// identical.
[[nodiscard]] DenseBlock dual_operator_apply(const StructureModel& model, const DenseBlock& b,
                                             BatchMode mode = BatchMode::PerPattern,
                                             SolveCounters* counters = nullptr);

/// Σ_s D⁽ˢ⁾ B⁽ˢ⁾ M⁽ˢ⁾ B⁽ˢ⁾ᵀ D⁽ˢ⁾ with M from `kind`.
[[nodiscard]] DenseBlock preconditioner_apply(const StructureModel& model, PrecondKind kind, const DenseBlock& b,
                                              BatchMode mode = BatchMode::PerPattern,
                                              SolveCounters* counters = nullptr);

/// Per-occurrence generalized forces on free dofs, pattern frame.
struct LoadCase {
  std::vector<Vector> forces;
  std::uint64_t seed = 0;
};

/// d = Σ_s B⁽ˢ⁾ t⁽ˢ⁾ K⁽ˢ⁾⁺ f⁽ˢ⁾.
[[nodiscard]] Vector build_natural_rhs(const StructureModel& model, const LoadCase& loads,
                                       BatchMode mode = BatchMode::PerPattern, SolveCounters* counters = nullptr);

struct CoarseSpace {
  Matrix g;                       // interface_size × Σ kernel dims
  Vector e;                       // e⁽ˢ⁾ = R⁽ˢ⁾ᵀ f⁽ˢ⁾, stacked
  std::vector<Index> column_offset;  // first column of each occurrence
};

/// G columns are the signed, rotated interface traces of each occurrence's
/// kernel modes, grouped by occurrence.
[[nodiscard]] CoarseSpace build_G_and_e(const StructureModel& model, const LoadCase& loads);

/// Pattern-frame traces for the coarse operator: columns [own | neighbour
/// across side 0 | neighbour across side 1 | ...], each kernel_dim wide. The
/// neighbour block holds that neighbour's kernel trace transported into this
/// occurrence's frame; for a thermal constant mode it reduces to ±R.
struct GBlock {
  DenseBlock block;
  int pattern = -1;
  Index kernel_dim = 0;
  std::vector<int> sides;  // side order of the neighbour column groups
};

/// Throws MixedPatterns if floating occurrences span several patterns and
/// TopologyMismatch if the neighbour transport differs between occurrences.
[[nodiscard]] GBlock build_G_block(const StructureModel& model);

/// GᵀM̃G assembled from pattern-scale products of the G block.
[[nodiscard]] Matrix coarse_gram_from_block(const StructureModel& model, const GBlock& gb, PrecondKind kind);

/// Σ_s B⁽ˢ⁾ t⁽ˢ⁾ u⁽ˢ⁾ (structure frame).
[[nodiscard]] Vector interface_jump(const StructureModel& model, const std::vector<Vector>& u);

/// Pattern-frame field of one occurrence rotated into the structure frame.
[[nodiscard]] Vector to_structure_frame(const StructureModel& model, int occ, const Vector& local);
[[nodiscard]] Vector to_pattern_frame(const StructureModel& model, int occ, const Vector& global);

/// Periodic ring: occurrence s placed at angle −s·2π/n, interface s joins
/// side "a" of s with side "b" of s+1.
[[nodiscard]] StructureModel make_ring(PatternPtr sector, int n);

/// Ring plus one stand per host occurrence, glued on the host's "stand" side.
[[nodiscard]] StructureModel make_ring_with_stands(PatternPtr sector, PatternPtr stand, int n,
                                                   const std::vector<int>& hosts);

}  // namespace patfeti
