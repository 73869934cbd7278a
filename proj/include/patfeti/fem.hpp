#pragma once

// Benchmark pattern generation: annulus sectors, stands, hinges and the
// synthetic Schur complement patterns used by the academic tests.

#include "patfeti/linalg.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace patfeti {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

enum NodeTag : unsigned {
  kTagOther = 0,
  kTagInnerArc = 1U << 0,
  kTagOuterArc = 1U << 1,
  kTagInterfaceA = 1U << 2,
  kTagInterfaceB = 1U << 3,
  kTagStandBase = 1U << 4,
  kTagStandTop = 1U << 5,
  kTagStandSegment = 1U << 6,
};

struct PatternMesh {
  std::vector<Point2> nodes;
  std::vector<std::array<int, 3>> triangles;
  std::vector<unsigned> tags;  // NodeTag bitmask per node
};

/// Plain text dump: node table then element table.
void write_mesh(std::ostream& os, const PatternMesh& mesh);

enum class PhysicsKind { Thermal, PlaneStrain };

struct Physics {
  PhysicsKind kind = PhysicsKind::Thermal;
  double young = 1.0;
  double poisson = 0.3;

  static Physics thermal() { return {}; }
  static Physics plane_strain(double young = 1.0, double poisson = 0.3) {
    return {PhysicsKind::PlaneStrain, young, poisson};
  }
  [[nodiscard]] int dofs_per_node() const noexcept { return kind == PhysicsKind::Thermal ? 1 : 2; }
  [[nodiscard]] bool elastic() const noexcept { return kind == PhysicsKind::PlaneStrain; }
};

/// Ordered list of unconstrained nodes along which occurrences connect.
/// Two sides are glued node-by-node in list order.
struct Side {
  std::string name;
  std::vector<int> nodes;
};

/// Application of the primal Schur complement S = K_bb − K_bi K_ii⁻¹ K_ib
/// for one choice of boundary dofs, without forming S.
class DirichletOperator {
 public:
  DirichletOperator() = default;
  DirichletOperator(const Matrix& k, std::vector<Index> boundary);

  [[nodiscard]] const std::vector<Index>& boundary() const noexcept { return boundary_; }
  [[nodiscard]] const std::vector<Index>& interior() const noexcept { return interior_; }
  [[nodiscard]] const Matrix& k_bb() const noexcept { return k_bb_; }
  [[nodiscard]] const SymFactorization& k_ii_factorization() const noexcept { return k_ii_fact_; }

  /// S·V for a block of boundary vectors; fixed operation order per column.
  [[nodiscard]] DenseBlock apply(const DenseBlock& v) const;

 private:
  std::vector<Index> boundary_;
  std::vector<Index> interior_;
  Matrix k_bb_;
  Matrix k_bi_;
  Matrix k_ib_;
  SymFactorization k_ii_fact_;
};

/// One meshed pattern with its stiffness (Dirichlet dofs eliminated), named
/// sides, factorization and kernel. Shared read-only by every occurrence.
struct PatternStiffness {
  std::string name;
  PatternMesh mesh;
  Physics physics;
  std::vector<int> constrained_nodes;  // sorted
  std::vector<Index> node_dof;         // first free dof of each node, -1 if constrained
  Matrix stiffness;                    // K over free dofs
  std::vector<Side> sides;
  std::vector<std::vector<Index>> side_dofs;  // free dofs of each side, node-major
  SymFactorization k_fact;
  DirichletOperator dirichlet;  // boundary = all sides; holds dof partition and K_ii factorization

  [[nodiscard]] Index free_dofs() const noexcept { return stiffness.rows(); }
  [[nodiscard]] int dofs_per_node() const noexcept { return physics.dofs_per_node(); }
  [[nodiscard]] Index kernel_dim() const noexcept { return k_fact.kernel_dim(); }
  [[nodiscard]] int side_index(const std::string& side_name) const;
};

struct DonutGeometry {
  int n_sectors = 9;
  double r_inner = 1.0;
  double r_outer = 2.0;
  int radial_divs = 4;
  int angular_divs = 6;
  bool clamp_inner = true;     // inner arc Dirichlet-fixed
  int stand_segment_nodes = 0;  // > 0 adds a "stand" side of that many outer-arc nodes, centred
};

/// Structured P1 triangulation of the annulus sector [0, 2π/n_sectors].
/// Sides "a" (angle 0) and "b" (angle 2π/n_sectors) are ordered by radius.
[[nodiscard]] PatternStiffness build_donut_pattern(const DonutGeometry& geometry, const Physics& physics);

struct StandGeometry {
  double width = 1.0;
  double height = 1.0;
  int width_divs = 5;
  int height_divs = 5;
  bool fixed_base = true;
};

/// Rectangle x ∈ [−w/2, w/2], y ∈ [−h, 0]; side "top" at y = 0 ordered by
/// x, base at y = −h.
[[nodiscard]] PatternStiffness build_stand_pattern(const StandGeometry& geometry, const Physics& physics);

/// Inner-arc node at the middle of the sector (the hinge location).
[[nodiscard]] int inner_ring_center_node(const PatternStiffness& pattern);

/// Copy of an elastic pattern with both displacement dofs of `node` fixed.
[[nodiscard]] PatternStiffness apply_hinge(const PatternStiffness& pattern, int node);

struct SyntheticSpec {
  int interface_size = 20;
  int n_sides = 2;
  double lambda_min = 1e-3;
  double lambda_max = 1.0;
  std::uint64_t seed = 1;
};

/// Random SPD pattern Schur complement QᵀΛQ with log-uniform spectrum. The
/// pattern has no interior; sides are "a", "b", then "stand" (if n_sides = 3).
/// With n_sides = 1 the single side is named "top".
[[nodiscard]] PatternStiffness build_synthetic_pattern(const SyntheticSpec& spec);

/// Assemble a pattern from a mesh, physics, constrained nodes and sides.
[[nodiscard]] PatternStiffness assemble_pattern(std::string name, PatternMesh mesh, const Physics& physics,
                                                std::vector<int> constrained_nodes, std::vector<Side> sides);

/// Element stiffness of a linear triangle (conductivity 1, unit thickness).
[[nodiscard]] Matrix triangle_stiffness(const std::array<Point2, 3>& xy, const Physics& physics);

}  // namespace patfeti
