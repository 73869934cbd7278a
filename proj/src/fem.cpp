#include "patfeti/fem.hpp"

#include "patfeti/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <set>

namespace patfeti {

namespace {

double signed_area(const Point2& p, const Point2& q, const Point2& r) {
  return 0.5 * ((q.x - p.x) * (r.y - p.y) - (r.x - p.x) * (q.y - p.y));
}

void add_triangle(PatternMesh& mesh, int n0, int n1, int n2) {
  const double area = signed_area(mesh.nodes[n0], mesh.nodes[n1], mesh.nodes[n2]);
  if (!(std::abs(area) > 0.0)) throw Error(Errc::InvalidGeometry, "degenerate triangle");
  if (area < 0.0) std::swap(n1, n2);
  mesh.triangles.push_back({n0, n1, n2});
}

void finalize(PatternStiffness& p) {
  const Index n = p.stiffness.rows();
  const int dpn = p.dofs_per_node();
  p.side_dofs.clear();
  std::set<Index> seen;
  std::vector<Index> boundary;
  for (const Side& side : p.sides) {
    std::vector<Index> dofs;
    for (int node : side.nodes) {
      const Index first = p.node_dof[static_cast<std::size_t>(node)];
      if (first < 0) throw Error(Errc::InvalidGeometry, "side " + side.name + " holds a constrained node");
      for (int c = 0; c < dpn; ++c) {
        if (!seen.insert(first + c).second) {
          throw Error(Errc::InvalidGeometry, "side " + side.name + " overlaps another side");
        }
        dofs.push_back(first + c);
        boundary.push_back(first + c);
      }
    }
    p.side_dofs.push_back(std::move(dofs));
  }
  (void)n;
  p.k_fact = factor_sym(p.stiffness);
  p.dirichlet = DirichletOperator(p.stiffness, std::move(boundary));
}

}  // namespace

int PatternStiffness::side_index(const std::string& side_name) const {
  for (std::size_t s = 0; s < sides.size(); ++s)
    if (sides[s].name == side_name) return static_cast<int>(s);
  return -1;
}

DirichletOperator::DirichletOperator(const Matrix& k, std::vector<Index> boundary) : boundary_(std::move(boundary)) {
  const Index n = k.rows();
  std::vector<char> is_boundary(static_cast<std::size_t>(n), 0);
  for (Index b : boundary_) {
    if (b < 0 || b >= n) throw Error(Errc::DimensionMismatch, "boundary dof out of range");
    is_boundary[static_cast<std::size_t>(b)] = 1;
  }
  for (Index i = 0; i < n; ++i)
    if (!is_boundary[static_cast<std::size_t>(i)]) interior_.push_back(i);
  const auto nb = static_cast<Index>(boundary_.size());
  const auto ni = static_cast<Index>(interior_.size());
  k_bb_.resize(nb, nb);
  k_bi_.resize(nb, ni);
  Matrix k_ii(ni, ni);
  for (Index j = 0; j < nb; ++j)
    for (Index i = 0; i < nb; ++i) k_bb_(i, j) = k(boundary_[i], boundary_[j]);
  for (Index j = 0; j < ni; ++j)
    for (Index i = 0; i < nb; ++i) k_bi_(i, j) = k(boundary_[i], interior_[j]);
  for (Index j = 0; j < ni; ++j)
    for (Index i = 0; i < ni; ++i) k_ii(i, j) = k(interior_[i], interior_[j]);
  k_ib_ = k_bi_.transpose();
  k_ii_fact_ = factor_sym(k_ii);
}

DenseBlock DirichletOperator::apply(const DenseBlock& v) const {
  if (v.rows() != static_cast<Index>(boundary_.size())) {
    throw Error(Errc::DimensionMismatch, "DirichletOperator::apply: wrong boundary size");
  }
  DenseBlock out = multiply_fixed(k_bb_, v);
  if (interior_.empty()) return out;
  const DenseBlock inner = k_ii_fact_.pseudo_solve_block(multiply_fixed(k_ib_, v));
  const DenseBlock corr = multiply_fixed(k_bi_, inner);
  for (Index c = 0; c < out.cols(); ++c)
    for (Index i = 0; i < out.rows(); ++i) out(i, c) -= corr(i, c);
  return out;
}

void write_mesh(std::ostream& os, const PatternMesh& mesh) {
  os << "nodes " << mesh.nodes.size() << "\n";
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    os << i << ' ' << mesh.nodes[i].x << ' ' << mesh.nodes[i].y << ' '
       << (i < mesh.tags.size() ? mesh.tags[i] : 0U) << "\n";
  }
  os << "elements " << mesh.triangles.size() << "\n";
  for (std::size_t e = 0; e < mesh.triangles.size(); ++e) {
    const auto& t = mesh.triangles[e];
    os << e << ' ' << t[0] << ' ' << t[1] << ' ' << t[2] << "\n";
  }
}

Matrix triangle_stiffness(const std::array<Point2, 3>& xy, const Physics& physics) {
  const double area = signed_area(xy[0], xy[1], xy[2]);
  if (!(area > 0.0)) throw Error(Errc::InvalidGeometry, "triangle with non-positive area");
  std::array<double, 3> b{};
  std::array<double, 3> c{};
  for (int i = 0; i < 3; ++i) {
    const Point2& pj = xy[(i + 1) % 3];
    const Point2& pk = xy[(i + 2) % 3];
    b[i] = (pj.y - pk.y) / (2.0 * area);
    c[i] = (pk.x - pj.x) / (2.0 * area);
  }
  if (!physics.elastic()) {
    Matrix ke(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ke(i, j) = area * (b[i] * b[j] + c[i] * c[j]);
    return ke;
  }
  const double e = physics.young;
  const double nu = physics.poisson;
  const double f = e / ((1.0 + nu) * (1.0 - 2.0 * nu));
  Eigen::Matrix3d d;
  d << f * (1.0 - nu), f * nu, 0.0, f * nu, f * (1.0 - nu), 0.0, 0.0, 0.0, f * (1.0 - 2.0 * nu) / 2.0;
  Eigen::Matrix<double, 3, 6> bm = Eigen::Matrix<double, 3, 6>::Zero();
  for (int i = 0; i < 3; ++i) {
    bm(0, 2 * i) = b[i];
    bm(1, 2 * i + 1) = c[i];
    bm(2, 2 * i) = c[i];
    bm(2, 2 * i + 1) = b[i];
  }
  Matrix ke = area * bm.transpose() * d * bm;
  return 0.5 * (ke + ke.transpose());
}

PatternStiffness assemble_pattern(std::string name, PatternMesh mesh, const Physics& physics,
                                  std::vector<int> constrained_nodes, std::vector<Side> sides) {
  PatternStiffness p;
  p.name = std::move(name);
  p.physics = physics;
  std::sort(constrained_nodes.begin(), constrained_nodes.end());
  constrained_nodes.erase(std::unique(constrained_nodes.begin(), constrained_nodes.end()), constrained_nodes.end());
  const auto n_nodes = static_cast<int>(mesh.nodes.size());
  for (int c : constrained_nodes)
    if (c < 0 || c >= n_nodes) throw Error(Errc::NodeNotFound, "constrained node " + std::to_string(c));

  const int dpn = physics.dofs_per_node();
  p.node_dof.assign(static_cast<std::size_t>(n_nodes), -1);
  Index next = 0;
  for (int v = 0; v < n_nodes; ++v) {
    if (std::binary_search(constrained_nodes.begin(), constrained_nodes.end(), v)) continue;
    p.node_dof[static_cast<std::size_t>(v)] = next;
    next += dpn;
  }
  p.stiffness = Matrix::Zero(next, next);
  for (const auto& tri : mesh.triangles) {
    const std::array<Point2, 3> xy{mesh.nodes[tri[0]], mesh.nodes[tri[1]], mesh.nodes[tri[2]]};
    const Matrix ke = triangle_stiffness(xy, physics);
    for (int a = 0; a < 3; ++a) {
      const Index ra = p.node_dof[static_cast<std::size_t>(tri[a])];
      if (ra < 0) continue;
      for (int b = 0; b < 3; ++b) {
        const Index rb = p.node_dof[static_cast<std::size_t>(tri[b])];
        if (rb < 0) continue;
        for (int i = 0; i < dpn; ++i)
          for (int j = 0; j < dpn; ++j) p.stiffness(ra + i, rb + j) += ke(dpn * a + i, dpn * b + j);
      }
    }
  }
  // Assembly order can leave K asymmetric at roundoff level.
  p.stiffness = (0.5 * (p.stiffness + p.stiffness.transpose())).eval();

  for (Side& side : sides) {
    std::erase_if(side.nodes, [&](int v) {
      return std::binary_search(constrained_nodes.begin(), constrained_nodes.end(), v);
    });
  }
  p.constrained_nodes = std::move(constrained_nodes);
  p.mesh = std::move(mesh);
  p.sides = std::move(sides);
  finalize(p);
  return p;
}

PatternStiffness build_donut_pattern(const DonutGeometry& g, const Physics& physics) {
  if (g.n_sectors < 3) throw Error(Errc::InvalidGeometry, "n_sectors must be >= 3");
  if (!(g.r_inner > 0.0 && g.r_inner < g.r_outer)) throw Error(Errc::InvalidGeometry, "need 0 < r_inner < r_outer");
  if (g.radial_divs < 1 || g.angular_divs < 1) throw Error(Errc::InvalidGeometry, "divisions must be >= 1");

  const int nr = g.radial_divs + 1;
  const int nt = g.angular_divs + 1;
  const double sector = 2.0 * std::numbers::pi / g.n_sectors;
  auto id = [nr](int i, int j) { return j * nr + i; };

  PatternMesh mesh;
  mesh.nodes.resize(static_cast<std::size_t>(nr * nt));
  mesh.tags.assign(mesh.nodes.size(), kTagOther);
  for (int j = 0; j < nt; ++j) {
    const double theta = sector * j / g.angular_divs;
    for (int i = 0; i < nr; ++i) {
      const double r = g.r_inner + (g.r_outer - g.r_inner) * i / g.radial_divs;
      mesh.nodes[static_cast<std::size_t>(id(i, j))] = {r * std::cos(theta), r * std::sin(theta)};
      unsigned& tag = mesh.tags[static_cast<std::size_t>(id(i, j))];
      if (i == 0) tag |= kTagInnerArc;
      if (i == nr - 1) tag |= kTagOuterArc;
      if (j == 0) tag |= kTagInterfaceA;
      if (j == nt - 1) tag |= kTagInterfaceB;
    }
  }
  for (int j = 0; j < g.angular_divs; ++j) {
    for (int i = 0; i < g.radial_divs; ++i) {
      add_triangle(mesh, id(i, j), id(i + 1, j), id(i + 1, j + 1));
      add_triangle(mesh, id(i, j), id(i + 1, j + 1), id(i, j + 1));
    }
  }

  std::vector<Side> sides(2);
  sides[0].name = "a";
  sides[1].name = "b";
  for (int i = 0; i < nr; ++i) {
    sides[0].nodes.push_back(id(i, 0));
    sides[1].nodes.push_back(id(i, nt - 1));
  }
  if (g.stand_segment_nodes > 0) {
    const int m = g.stand_segment_nodes;
    const int j0 = (g.angular_divs - (m - 1)) / 2;
    if (m < 2 || j0 < 1 || j0 + m - 1 > g.angular_divs - 1) {
      throw Error(Errc::InterfaceMismatch, "stand segment of " + std::to_string(m) +
                                               " nodes does not fit strictly inside the outer arc");
    }
    Side stand{"stand", {}};
    for (int j = j0; j < j0 + m; ++j) {
      stand.nodes.push_back(id(nr - 1, j));
      mesh.tags[static_cast<std::size_t>(id(nr - 1, j))] |= kTagStandSegment;
    }
    sides.push_back(std::move(stand));
  }

  std::vector<int> constrained;
  if (g.clamp_inner)
    for (int j = 0; j < nt; ++j) constrained.push_back(id(0, j));

  return assemble_pattern(physics.elastic() ? "elastic_sector" : "thermal_sector", std::move(mesh), physics,
                          std::move(constrained), std::move(sides));
}

PatternStiffness build_stand_pattern(const StandGeometry& g, const Physics& physics) {
  if (!(g.width > 0.0 && g.height > 0.0) || g.width_divs < 1 || g.height_divs < 1) {
    throw Error(Errc::InvalidGeometry, "stand needs positive size and divisions");
  }
  const int nx = g.width_divs + 1;
  const int ny = g.height_divs + 1;
  auto id = [nx](int i, int j) { return j * nx + i; };
  PatternMesh mesh;
  mesh.nodes.resize(static_cast<std::size_t>(nx * ny));
  mesh.tags.assign(mesh.nodes.size(), kTagOther);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double x = -0.5 * g.width + g.width * i / g.width_divs;
      const double y = -g.height + g.height * j / g.height_divs;
      mesh.nodes[static_cast<std::size_t>(id(i, j))] = {x, y};
      if (j == 0) mesh.tags[static_cast<std::size_t>(id(i, j))] |= kTagStandBase;
      if (j == ny - 1) mesh.tags[static_cast<std::size_t>(id(i, j))] |= kTagStandTop;
    }
  }
  for (int j = 0; j < g.height_divs; ++j) {
    for (int i = 0; i < g.width_divs; ++i) {
      add_triangle(mesh, id(i, j), id(i + 1, j), id(i + 1, j + 1));
      add_triangle(mesh, id(i, j), id(i + 1, j + 1), id(i, j + 1));
    }
  }
  Side top{"top", {}};
  for (int i = 0; i < nx; ++i) top.nodes.push_back(id(i, ny - 1));
  std::vector<int> constrained;
  if (g.fixed_base)
    for (int i = 0; i < nx; ++i) constrained.push_back(id(i, 0));
  return assemble_pattern(physics.elastic() ? "elastic_stand" : "thermal_stand", std::move(mesh), physics,
                          std::move(constrained), {std::move(top)});
}

int inner_ring_center_node(const PatternStiffness& pattern) {
  std::vector<int> inner;
  for (std::size_t v = 0; v < pattern.mesh.tags.size(); ++v)
    if (pattern.mesh.tags[v] & kTagInnerArc) inner.push_back(static_cast<int>(v));
  if (inner.empty()) throw Error(Errc::NodeNotFound, "pattern has no inner arc");
  std::sort(inner.begin(), inner.end(), [&](int l, int r) {
    const auto& pl = pattern.mesh.nodes[static_cast<std::size_t>(l)];
    const auto& pr = pattern.mesh.nodes[static_cast<std::size_t>(r)];
    return std::atan2(pl.y, pl.x) < std::atan2(pr.y, pr.x);
  });
  return inner[inner.size() / 2];
}

PatternStiffness apply_hinge(const PatternStiffness& pattern, int node) {
  if (!pattern.physics.elastic()) throw Error(Errc::NotElastic, "hinges only apply to elastic patterns");
  if (node < 0 || static_cast<std::size_t>(node) >= pattern.mesh.nodes.size() ||
      !(pattern.mesh.tags[static_cast<std::size_t>(node)] & kTagInnerArc)) {
    throw Error(Errc::NodeNotFound, "node " + std::to_string(node) + " is not on the inner arc");
  }
  std::vector<int> constrained = pattern.constrained_nodes;
  constrained.push_back(node);
  PatternStiffness out =
      assemble_pattern(pattern.name + "_hinged", pattern.mesh, pattern.physics, std::move(constrained), pattern.sides);
  return out;
}

PatternStiffness build_synthetic_pattern(const SyntheticSpec& spec) {
  if (spec.interface_size < 1 || spec.n_sides < 1 || spec.n_sides > 3) {
    throw Error(Errc::InvalidGeometry, "synthetic pattern needs interface_size >= 1 and 1..3 sides");
  }
  if (!(spec.lambda_min > 0.0 && spec.lambda_min <= spec.lambda_max)) {
    throw Error(Errc::InvalidGeometry, "synthetic spectrum needs 0 < lambda_min <= lambda_max");
  }
  const int n = spec.interface_size * spec.n_sides;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix gauss(n, n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) gauss(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(gauss);
  const Matrix q = qr.householderQ();
  Vector lambda(n);
  const double lmin = std::log(spec.lambda_min);
  const double lmax = std::log(spec.lambda_max);
  for (Index i = 0; i < n; ++i) lambda(i) = std::exp(lmin + (lmax - lmin) * unit(rng));
  Matrix s = q.transpose() * lambda.asDiagonal() * q;
  s = (0.5 * (s + s.transpose())).eval();

  PatternStiffness p;
  p.name = "synthetic_" + std::to_string(spec.n_sides) + "side";
  p.physics = Physics::thermal();
  p.mesh.nodes.resize(static_cast<std::size_t>(n));
  p.mesh.tags.assign(static_cast<std::size_t>(n), kTagOther);
  p.node_dof.resize(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) p.node_dof[static_cast<std::size_t>(v)] = v;
  p.stiffness = s;
  static const char* const kTwoSided[] = {"a", "b", "stand"};
  for (int k = 0; k < spec.n_sides; ++k) {
    Side side{spec.n_sides == 1 ? "top" : kTwoSided[k], {}};
    for (int i = 0; i < spec.interface_size; ++i) side.nodes.push_back(k * spec.interface_size + i);
    p.sides.push_back(std::move(side));
  }
  finalize(p);
  return p;
}

}  // namespace patfeti
