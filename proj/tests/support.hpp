#pragma once

// Small models and dense reference operators shared by the unit tests. The
// dense references are built from explicit trace matrices and Eigen
// decompositions, independently of the matrix-free library code.

#include "patfeti/harness.hpp"

#include <Eigen/Dense>

#include <memory>
#include <random>

namespace patfeti::testing {

inline PatternPtr small_sector(int n, const Physics& physics, bool clamp = true, int stand_nodes = 0) {
  DonutGeometry g;
  g.n_sectors = n;
  g.r_inner = 1.0;
  g.r_outer = 2.0;
  g.radial_divs = 3;
  g.angular_divs = 6;
  g.clamp_inner = clamp;
  g.stand_segment_nodes = stand_nodes;
  return std::make_shared<const PatternStiffness>(build_donut_pattern(g, physics));
}

inline PatternPtr hinged_sector(int n) {
  DonutGeometry g;
  g.n_sectors = n;
  g.radial_divs = 3;
  g.angular_divs = 6;
  g.clamp_inner = false;
  const PatternStiffness free = build_donut_pattern(g, Physics::plane_strain());
  return std::make_shared<const PatternStiffness>(apply_hinge(free, inner_ring_center_node(free)));
}

inline PatternPtr small_stand(const PatternStiffness& sector, const Physics& physics) {
  const auto& seg = sector.sides[static_cast<std::size_t>(sector.side_index("stand"))].nodes;
  StandGeometry sg;
  const Point2 a = sector.mesh.nodes[static_cast<std::size_t>(seg.front())];
  const Point2 b = sector.mesh.nodes[static_cast<std::size_t>(seg.back())];
  sg.width = std::hypot(b.x - a.x, b.y - a.y);
  sg.height = 0.3;
  sg.width_divs = static_cast<int>(seg.size()) - 1;
  sg.height_divs = 2;
  return std::make_shared<const PatternStiffness>(build_stand_pattern(sg, physics));
}

inline Matrix pinv(const Matrix& a) { return a.completeOrthogonalDecomposition().pseudoInverse(); }

/// Signed, rotated trace of one occurrence: interface_size × free dofs, maps
/// pattern-frame displacements to structure-frame interface values.
inline Matrix dense_trace(const StructureModel& m, int occ) {
  const PatternStiffness& pat = m.pattern(m.occurrences()[static_cast<std::size_t>(occ)].pattern);
  const int dpn = m.dofs_per_node();
  const double c = m.cos_of(occ);
  const double s = m.sin_of(occ);
  Eigen::Matrix2d rot;
  rot << c, -s, s, c;
  Matrix t = Matrix::Zero(m.interface_size(), pat.free_dofs());
  for (int k = 0; k < static_cast<int>(m.interfaces().size()); ++k) {
    const Interface& f = m.interfaces()[static_cast<std::size_t>(k)];
    for (int end = 0; end < 2; ++end) {
      const int o = end == 0 ? f.occ_i : f.occ_j;
      if (o != occ) continue;
      const int side = end == 0 ? f.side_i : f.side_j;
      const double sign = end == 0 ? f.orientation : -f.orientation;
      const auto& dofs = pat.side_dofs[static_cast<std::size_t>(side)];
      const Index off = m.interface_offset(k);
      for (std::size_t node = 0; node * dpn < dofs.size(); ++node) {
        for (int d = 0; d < dpn; ++d)
          for (int e = 0; e < dpn; ++e) {
            const double r = dpn == 1 ? 1.0 : rot(d, e);
            t(off + static_cast<Index>(node) * dpn + d, dofs[node * dpn + e]) += sign * r;
          }
      }
    }
  }
  return t;
}

inline Matrix dense_F(const StructureModel& m) {
  Matrix f = Matrix::Zero(m.interface_size(), m.interface_size());
  for (int o = 0; o < m.n_occurrences(); ++o) {
    const Matrix t = dense_trace(m, o);
    f += t * pinv(m.pattern(m.occurrences()[static_cast<std::size_t>(o)].pattern).stiffness) * t.transpose();
  }
  return f;
}

/// Boundary dofs of an occurrence that lie on some interface.
inline std::vector<Index> used_boundary(const StructureModel& m, int occ) {
  const PatternStiffness& pat = m.pattern(m.occurrences()[static_cast<std::size_t>(occ)].pattern);
  std::vector<Index> out;
  for (std::size_t s = 0; s < pat.sides.size(); ++s)
    if (m.side_link(occ, static_cast<int>(s)).interface >= 0)
      out.insert(out.end(), pat.side_dofs[s].begin(), pat.side_dofs[s].end());
  return out;
}

/// Dense Σ D T S Tᵀ D with the Schur complement on the used boundary and D = ½.
inline Matrix dense_dirichlet_precond(const StructureModel& m) {
  Matrix out = Matrix::Zero(m.interface_size(), m.interface_size());
  for (int o = 0; o < m.n_occurrences(); ++o) {
    const PatternStiffness& pat = m.pattern(m.occurrences()[static_cast<std::size_t>(o)].pattern);
    const std::vector<Index> b = used_boundary(m, o);
    std::vector<char> is_b(static_cast<std::size_t>(pat.free_dofs()), 0);
    for (Index i : b) is_b[static_cast<std::size_t>(i)] = 1;
    std::vector<Index> in;
    for (Index i = 0; i < pat.free_dofs(); ++i)
      if (!is_b[static_cast<std::size_t>(i)]) in.push_back(i);
    const Matrix& k = pat.stiffness;
    const Matrix kbb = k(b, b);
    const Matrix kbi = k(b, in);
    const Matrix kii = k(in, in);
    const Matrix s = kbb - kbi * kii.llt().solve(kbi.transpose());
    Matrix ks = Matrix::Zero(pat.free_dofs(), pat.free_dofs());
    ks(b, b) = s;
    const Matrix t = dense_trace(m, o);
    out += 0.25 * t * ks * t.transpose();
  }
  return out;
}

inline Vector random_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = u(rng);
  return v;
}

inline Matrix random_matrix(Index r, Index c, std::uint64_t seed) {
  const Vector v = random_vector(r * c, seed);
  return Eigen::Map<const Matrix>(v.data(), r, c);
}

inline bool bitwise_equal(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      if (a(i, j) != b(i, j)) return false;
  return true;
}

}  // namespace patfeti::testing
