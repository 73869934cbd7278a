#include "patfeti/structure.hpp"

#include "patfeti/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

namespace patfeti {

namespace {

struct UnionFind {
  std::vector<Index> parent;
  explicit UnionFind(Index n) : parent(static_cast<std::size_t>(n)) { std::iota(parent.begin(), parent.end(), 0); }
  Index find(Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

// Column of vector v as seen from the l-th of n occurrences of a pattern.
inline Index block_col(Index v, Index n_occ, Index l) { return v * n_occ + l; }

Matrix extract_rows(const DenseBlock& x, const std::vector<Index>& rows, const std::vector<Index>& cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r), static_cast<Index>(c)) = x(rows[r], cols[c]);
  return out;
}

void put_rows(DenseBlock& x, const std::vector<Index>& rows, const std::vector<Index>& cols, const Matrix& src) {
  for (std::size_t c = 0; c < cols.size(); ++c)
    for (std::size_t r = 0; r < rows.size(); ++r) x(rows[r], cols[c]) = src(static_cast<Index>(r), static_cast<Index>(c));
}

std::vector<Index> all_indices(Index n) {
  std::vector<Index> v(static_cast<std::size_t>(n));
  std::iota(v.begin(), v.end(), 0);
  return v;
}

// t K⁺ tᵀ on boundary columns of one pattern.
Matrix neumann_boundary_solve(const PatternStiffness& pat, const Matrix& xb) {
  const auto& bnd = pat.dirichlet.boundary();
  Matrix full = Matrix::Zero(pat.free_dofs(), xb.cols());
  for (Index c = 0; c < xb.cols(); ++c)
    for (std::size_t r = 0; r < bnd.size(); ++r) full(bnd[r], c) = xb(static_cast<Index>(r), c);
  const Matrix sol = pat.k_fact.pseudo_solve_block(full);
  Matrix out(static_cast<Index>(bnd.size()), xb.cols());
  for (Index c = 0; c < xb.cols(); ++c)
    for (std::size_t r = 0; r < bnd.size(); ++r) out(static_cast<Index>(r), c) = sol(bnd[r], c);
  return out;
}

std::vector<Index> occurrence_columns(Index n_vectors, Index n_occ, Index l) {
  std::vector<Index> cols;
  for (Index v = 0; v < n_vectors; ++v) cols.push_back(block_col(v, n_occ, l));
  return cols;
}

int side_by_name(const PatternStiffness& p, const std::string& name) {
  const int s = p.side_index(name);
  if (s < 0) throw Error(Errc::InvalidTopology, "pattern " + p.name + " has no side " + name);
  return s;
}

}  // namespace

std::string_view to_string(PrecondKind kind) noexcept {
  switch (kind) {
    case PrecondKind::Dirichlet: return "dirichlet";
    case PrecondKind::Lumped: return "lumped";
    case PrecondKind::Superlumped: return "superlumped";
    case PrecondKind::Identity: return "identity";
  }
  return "unknown";
}

PrecondKind parse_precond_kind(std::string_view name) {
  for (PrecondKind k : {PrecondKind::Dirichlet, PrecondKind::Lumped, PrecondKind::Superlumped, PrecondKind::Identity})
    if (to_string(k) == name) return k;
  throw Error(Errc::ConfigError, "preconditioner: unknown kind '" + std::string(name) + "'");
}

StructureModel::StructureModel(std::vector<PatternPtr> patterns, std::vector<Occurrence> occurrences,
                               std::vector<Interface> interfaces, RingLayout layout)
    : patterns_(std::move(patterns)),
      occurrences_(std::move(occurrences)),
      interfaces_(std::move(interfaces)),
      layout_(std::move(layout)) {
  if (patterns_.empty()) throw Error(Errc::InvalidTopology, "model without patterns");
  for (const auto& p : patterns_)
    if (!p) throw Error(Errc::InvalidTopology, "null pattern");
  dpn_ = patterns_.front()->dofs_per_node();
  for (const auto& p : patterns_)
    if (p->dofs_per_node() != dpn_) throw Error(Errc::InvalidTopology, "patterns mix thermal and elastic physics");

  const auto n_occ = occurrences_.size();
  pattern_occ_.assign(patterns_.size(), {});
  local_index_.resize(n_occ);
  links_.resize(n_occ);
  cos_.resize(n_occ);
  sin_.resize(n_occ);
  for (std::size_t o = 0; o < n_occ; ++o) {
    const int p = occurrences_[o].pattern;
    if (p < 0 || p >= n_patterns()) throw Error(Errc::InvalidTopology, "occurrence references unknown pattern");
    local_index_[o] = static_cast<int>(pattern_occ_[static_cast<std::size_t>(p)].size());
    pattern_occ_[static_cast<std::size_t>(p)].push_back(static_cast<int>(o));
    links_[o].assign(pattern(p).sides.size(), SideLink{});
    cos_[o] = elastic() ? std::cos(occurrences_[o].angle) : 1.0;
    sin_[o] = elastic() ? std::sin(occurrences_[o].angle) : 0.0;
  }

  boundary_offsets_.resize(patterns_.size());
  for (std::size_t p = 0; p < patterns_.size(); ++p) {
    Index off = 0;
    for (const auto& sd : patterns_[p]->side_dofs) {
      boundary_offsets_[p].push_back(off);
      off += static_cast<Index>(sd.size());
    }
  }

  iface_offset_.reserve(interfaces_.size());
  for (std::size_t i = 0; i < interfaces_.size(); ++i) {
    const Interface& f = interfaces_[i];
    auto check_end = [&](int occ, int side) {
      if (occ < 0 || static_cast<std::size_t>(occ) >= n_occ) {
        throw Error(Errc::InvalidTopology, "interface " + std::to_string(i) + " references unknown occurrence");
      }
      if (side < 0 || static_cast<std::size_t>(side) >= links_[static_cast<std::size_t>(occ)].size()) {
        throw Error(Errc::InvalidTopology, "interface " + std::to_string(i) + " references unknown side");
      }
      if (links_[static_cast<std::size_t>(occ)][static_cast<std::size_t>(side)].interface >= 0) {
        throw Error(Errc::InvalidTopology, "occurrence side used by two interfaces");
      }
    };
    check_end(f.occ_i, f.side_i);
    check_end(f.occ_j, f.side_j);
    if (f.occ_i == f.occ_j) throw Error(Errc::InvalidTopology, "interface joins an occurrence to itself");
    if (f.orientation != 1 && f.orientation != -1) throw Error(Errc::InvalidTopology, "orientation must be ±1");
    const auto& si = pattern(occurrences_[static_cast<std::size_t>(f.occ_i)].pattern).sides[static_cast<std::size_t>(f.side_i)];
    const auto& sj = pattern(occurrences_[static_cast<std::size_t>(f.occ_j)].pattern).sides[static_cast<std::size_t>(f.side_j)];
    if (si.nodes.size() != sj.nodes.size()) {
      throw Error(Errc::InterfaceMismatch, "interface " + std::to_string(i) + ": sides have " +
                                               std::to_string(si.nodes.size()) + " and " +
                                               std::to_string(sj.nodes.size()) + " nodes");
    }
    links_[static_cast<std::size_t>(f.occ_i)][static_cast<std::size_t>(f.side_i)] = {static_cast<int>(i), double(f.orientation)};
    links_[static_cast<std::size_t>(f.occ_j)][static_cast<std::size_t>(f.side_j)] = {static_cast<int>(i), -double(f.orientation)};
    iface_offset_.push_back(total_);
    total_ += static_cast<Index>(si.nodes.size()) * dpn_;
  }

  // Every interface dof is shared by exactly two occurrences once crosspoints
  // are excluded below, so multiplicity scaling is ½ on both sides.
  weight_i_ = Vector::Constant(total_, 0.5);
  weight_j_ = Vector::Constant(total_, 0.5);

  std::vector<Index> base(n_occ + 1, 0);
  for (std::size_t o = 0; o < n_occ; ++o)
    base[o + 1] = base[o] + static_cast<Index>(pattern(occurrences_[o].pattern).mesh.nodes.size());
  UnionFind uf(base[n_occ]);
  for (const Interface& f : interfaces_) {
    const auto& si = pattern(occurrences_[static_cast<std::size_t>(f.occ_i)].pattern).sides[static_cast<std::size_t>(f.side_i)];
    const auto& sj = pattern(occurrences_[static_cast<std::size_t>(f.occ_j)].pattern).sides[static_cast<std::size_t>(f.side_j)];
    for (std::size_t t = 0; t < si.nodes.size(); ++t)
      uf.unite(base[static_cast<std::size_t>(f.occ_i)] + si.nodes[t], base[static_cast<std::size_t>(f.occ_j)] + sj.nodes[t]);
  }
  std::vector<Index> class_size(static_cast<std::size_t>(base[n_occ]), 0);
  std::vector<int> class_occ(static_cast<std::size_t>(base[n_occ]), -1);
  for (std::size_t o = 0; o < n_occ; ++o)
    for (Index v = base[o]; v < base[o + 1]; ++v) {
      const auto r = static_cast<std::size_t>(uf.find(v));
      if (++class_size[r] > 2) throw Error(Errc::InvalidTopology, "crosspoint: node shared by more than two occurrences");
      if (class_occ[r] == static_cast<int>(o)) {
        throw Error(Errc::InvalidTopology, "two nodes of one occurrence glued together");
      }
      class_occ[r] = static_cast<int>(o);
    }

  global_node_.resize(n_occ);
  std::vector<Index> number(static_cast<std::size_t>(base[n_occ]), -1);
  for (std::size_t o = 0; o < n_occ; ++o) {
    const auto& pat = pattern(occurrences_[o].pattern);
    global_node_[o].assign(pat.mesh.nodes.size(), -1);
    for (std::size_t v = 0; v < pat.mesh.nodes.size(); ++v) {
      if (pat.node_dof[v] < 0) continue;
      const auto r = static_cast<std::size_t>(uf.find(base[o] + static_cast<Index>(v)));
      if (number[r] < 0) number[r] = n_global_nodes_++;
      global_node_[o][v] = number[r];
    }
  }

  std::map<std::pair<int, unsigned>, std::size_t> group_of;
  for (std::size_t o = 0; o < n_occ; ++o) {
    const int p = occurrences_[o].pattern;
    unsigned mask = 0;
    for (std::size_t k = 0; k < links_[o].size(); ++k)
      if (links_[o][k].interface >= 0) mask |= 1U << k;
    auto [it, inserted] = group_of.try_emplace({p, mask}, groups_.size());
    if (inserted) {
      DirichletGroup g;
      g.pattern = p;
      g.mask = mask;
      const auto& pat = pattern(p);
      std::vector<Index> dofs;
      for (std::size_t k = 0; k < pat.sides.size(); ++k) {
        if (!(mask & (1U << k))) continue;
        for (std::size_t t = 0; t < pat.side_dofs[k].size(); ++t) {
          g.rows.push_back(boundary_offsets_[static_cast<std::size_t>(p)][k] + static_cast<Index>(t));
          dofs.push_back(pat.side_dofs[k][t]);
        }
      }
      const unsigned full = pat.sides.size() >= 32 ? ~0U : (1U << pat.sides.size()) - 1U;
      if (mask == full) {
        g.op = std::shared_ptr<const DirichletOperator>(patterns_[static_cast<std::size_t>(p)], &patterns_[static_cast<std::size_t>(p)]->dirichlet);
      } else {
        g.op = std::make_shared<const DirichletOperator>(pat.stiffness, std::move(dofs));
      }
      groups_.push_back(std::move(g));
    }
    groups_[it->second].occurrences.push_back(static_cast<int>(o));
  }
}

Index StructureModel::interface_dofs(int i) const {
  const auto k = static_cast<std::size_t>(i);
  return (k + 1 < iface_offset_.size() ? iface_offset_[k + 1] : total_) - iface_offset_[k];
}

const StructureModel::SideLink& StructureModel::side_link(int occ, int side) const {
  return links_[static_cast<std::size_t>(occ)][static_cast<std::size_t>(side)];
}

Index StructureModel::boundary_size(int p) const {
  return static_cast<Index>(pattern(p).dirichlet.boundary().size());
}

Index StructureModel::boundary_offset(int p, int side) const {
  return boundary_offsets_[static_cast<std::size_t>(p)][static_cast<std::size_t>(side)];
}

InterfaceBlock scatter(const StructureModel& model, const DenseBlock& v, bool weighted) {
  if (v.rows() != model.interface_size()) {
    throw Error(Errc::DimensionMismatch, "scatter: vector of " + std::to_string(v.rows()) + " rows, interface has " +
                                             std::to_string(model.interface_size()));
  }
  const Index m = v.cols();
  const int dpn = model.dofs_per_node();
  InterfaceBlock out;
  out.n_vectors = m;
  for (int p = 0; p < model.n_patterns(); ++p) {
    const auto n_occ = static_cast<Index>(model.occurrences_of(p).size());
    out.per_pattern.push_back(DenseBlock::Zero(model.boundary_size(p), m * n_occ));
  }
  const auto& ifaces = model.interfaces();
  for (std::size_t i = 0; i < ifaces.size(); ++i) {
    const Interface& f = ifaces[i];
    const Index off = model.interface_offset(static_cast<int>(i));
    const Index len = model.interface_dofs(static_cast<int>(i));
    for (int end = 0; end < 2; ++end) {
      const int occ = end == 0 ? f.occ_i : f.occ_j;
      const int side = end == 0 ? f.side_i : f.side_j;
      const Vector& w = end == 0 ? model.weights_i() : model.weights_j();
      const int p = model.occurrences()[static_cast<std::size_t>(occ)].pattern;
      const double sign = model.side_link(occ, side).sign;
      const auto n_occ = static_cast<Index>(model.occurrences_of(p).size());
      const Index row0 = model.boundary_offset(p, side);
      const double c = model.cos_of(occ);
      const double s = model.sin_of(occ);
      DenseBlock& dst = out.per_pattern[static_cast<std::size_t>(p)];
      for (Index col = 0; col < m; ++col) {
        const Index dc = block_col(col, n_occ, model.local_index(occ));
        if (dpn == 1) {
          for (Index k = 0; k < len; ++k) {
            const double x = weighted ? w(off + k) * v(off + k, col) : v(off + k, col);
            dst(row0 + k, dc) = sign * x;
          }
        } else {
          for (Index k = 0; k < len; k += 2) {
            double x = v(off + k, col);
            double y = v(off + k + 1, col);
            if (weighted) {
              x = w(off + k) * x;
              y = w(off + k + 1) * y;
            }
            dst(row0 + k, dc) = sign * (c * x + s * y);
            dst(row0 + k + 1, dc) = sign * (c * y - s * x);
          }
        }
      }
    }
  }
  return out;
}

DenseBlock gather(const StructureModel& model, const InterfaceBlock& w, Combine combine, bool weighted) {
  if (static_cast<int>(w.per_pattern.size()) != model.n_patterns()) {
    throw Error(Errc::DimensionMismatch, "gather: block has wrong pattern count");
  }
  const Index m = w.n_vectors;
  for (int p = 0; p < model.n_patterns(); ++p) {
    const auto n_occ = static_cast<Index>(model.occurrences_of(p).size());
    const DenseBlock& b = w.per_pattern[static_cast<std::size_t>(p)];
    if (b.rows() != model.boundary_size(p) || b.cols() != m * n_occ) {
      throw Error(Errc::DimensionMismatch, "gather: block of pattern " + std::to_string(p) + " has wrong shape");
    }
  }
  const int dpn = model.dofs_per_node();
  DenseBlock out(model.interface_size(), m);
  const auto& ifaces = model.interfaces();

  // Contribution of one end, rotated back to the structure frame.
  auto contribution = [&](int occ, int side, const Vector& wt, Index off, Index k, Index col, double* res) {
    const int p = model.occurrences()[static_cast<std::size_t>(occ)].pattern;
    const auto n_occ = static_cast<Index>(model.occurrences_of(p).size());
    const DenseBlock& b = w.per_pattern[static_cast<std::size_t>(p)];
    const Index row = model.boundary_offset(p, side) + k;
    const Index bc = block_col(col, n_occ, model.local_index(occ));
    const double sign = model.side_link(occ, side).sign;
    if (dpn == 1) {
      res[0] = weighted ? sign * (wt(off + k) * b(row, bc)) : sign * b(row, bc);
      return;
    }
    const double c = model.cos_of(occ);
    const double s = model.sin_of(occ);
    const double x = b(row, bc);
    const double y = b(row + 1, bc);
    double gx = c * x - s * y;
    double gy = s * x + c * y;
    if (weighted) {
      gx = wt(off + k) * gx;
      gy = wt(off + k + 1) * gy;
    }
    res[0] = sign * gx;
    res[1] = sign * gy;
  };

  for (std::size_t i = 0; i < ifaces.size(); ++i) {
    const Interface& f = ifaces[i];
    const Index off = model.interface_offset(static_cast<int>(i));
    const Index len = model.interface_dofs(static_cast<int>(i));
    for (Index col = 0; col < m; ++col) {
      for (Index k = 0; k < len; k += dpn) {
        double a[2] = {0.0, 0.0};
        double b[2] = {0.0, 0.0};
        contribution(f.occ_i, f.side_i, model.weights_i(), off, k, col, a);
        contribution(f.occ_j, f.side_j, model.weights_j(), off, k, col, b);
        for (int d = 0; d < dpn; ++d) {
          const double sum = a[d] + b[d];
          out(off + k + d, col) = combine == Combine::Average ? 0.5 * sum : sum;
        }
      }
    }
  }
  return out;
}

DenseBlock dual_operator_apply(const StructureModel& model, const DenseBlock& b, BatchMode mode,
                               SolveCounters* counters) {
  InterfaceBlock x = scatter(model, b);
  for (int p = 0; p < model.n_patterns(); ++p) {
    const auto& occs = model.occurrences_of(p);
    if (occs.empty()) continue;
    const PatternStiffness& pat = model.pattern(p);
    DenseBlock& xb = x.per_pattern[static_cast<std::size_t>(p)];
    if (mode == BatchMode::PerPattern) {
      xb = neumann_boundary_solve(pat, xb);
      if (counters) ++counters->neumann_batches;
    } else {
      const auto rows = all_indices(xb.rows());
      for (std::size_t l = 0; l < occs.size(); ++l) {
        const auto cols = occurrence_columns(x.n_vectors, static_cast<Index>(occs.size()), static_cast<Index>(l));
        put_rows(xb, rows, cols, neumann_boundary_solve(pat, extract_rows(xb, rows, cols)));
        if (counters) ++counters->neumann_batches;
      }
    }
  }
  return gather(model, x, Combine::Sum);
}

DenseBlock preconditioner_apply(const StructureModel& model, PrecondKind kind, const DenseBlock& b, BatchMode mode,
                                SolveCounters* counters) {
  InterfaceBlock x = scatter(model, b, true);
  switch (kind) {
    case PrecondKind::Identity:
      break;
    case PrecondKind::Lumped:
      for (int p = 0; p < model.n_patterns(); ++p) {
        DenseBlock& xb = x.per_pattern[static_cast<std::size_t>(p)];
        xb = multiply_fixed(model.pattern(p).dirichlet.k_bb(), xb);
      }
      break;
    case PrecondKind::Superlumped:
      for (int p = 0; p < model.n_patterns(); ++p) {
        DenseBlock& xb = x.per_pattern[static_cast<std::size_t>(p)];
        const Vector diag = model.pattern(p).dirichlet.k_bb().diagonal();
        for (Index c = 0; c < xb.cols(); ++c)
          for (Index r = 0; r < xb.rows(); ++r) xb(r, c) = diag(r) * xb(r, c);
      }
      break;
    case PrecondKind::Dirichlet: {
      InterfaceBlock y = x;
      for (auto& blk : y.per_pattern) blk.setZero();
      for (const auto& g : model.dirichlet_groups()) {
        const auto n_occ = static_cast<Index>(model.occurrences_of(g.pattern).size());
        const DenseBlock& xb = x.per_pattern[static_cast<std::size_t>(g.pattern)];
        DenseBlock& yb = y.per_pattern[static_cast<std::size_t>(g.pattern)];
        if (mode == BatchMode::PerPattern) {
          std::vector<Index> cols;
          for (Index v = 0; v < x.n_vectors; ++v)
            for (int occ : g.occurrences) cols.push_back(block_col(v, n_occ, model.local_index(occ)));
          put_rows(yb, g.rows, cols, g.op->apply(extract_rows(xb, g.rows, cols)));
          if (counters) ++counters->dirichlet_batches;
        } else {
          for (int occ : g.occurrences) {
            const auto cols = occurrence_columns(x.n_vectors, n_occ, model.local_index(occ));
            put_rows(yb, g.rows, cols, g.op->apply(extract_rows(xb, g.rows, cols)));
            if (counters) ++counters->dirichlet_batches;
          }
        }
      }
      x = std::move(y);
      break;
    }
  }
  return gather(model, x, Combine::Sum, true);
}

Vector build_natural_rhs(const StructureModel& model, const LoadCase& loads, BatchMode mode, SolveCounters* counters) {
  if (static_cast<int>(loads.forces.size()) != model.n_occurrences()) {
    throw Error(Errc::DimensionMismatch, "load case does not match the occurrence count");
  }
  InterfaceBlock y;
  y.n_vectors = 1;
  for (int p = 0; p < model.n_patterns(); ++p) {
    const auto& occs = model.occurrences_of(p);
    const PatternStiffness& pat = model.pattern(p);
    Matrix f(pat.free_dofs(), static_cast<Index>(occs.size()));
    for (std::size_t l = 0; l < occs.size(); ++l) {
      const Vector& fo = loads.forces[static_cast<std::size_t>(occs[l])];
      if (fo.size() != pat.free_dofs()) throw Error(Errc::DimensionMismatch, "load vector has wrong size");
      f.col(static_cast<Index>(l)) = fo;
    }
    Matrix sol;
    if (mode == BatchMode::PerPattern) {
      sol = pat.k_fact.pseudo_solve_block(f);
      if (counters && !occs.empty()) ++counters->neumann_batches;
    } else {
      sol.resize(f.rows(), f.cols());
      for (Index l = 0; l < f.cols(); ++l) {
        sol.col(l) = pat.k_fact.pseudo_solve(f.col(l));
        if (counters) ++counters->neumann_batches;
      }
    }
    const auto& bnd = pat.dirichlet.boundary();
    DenseBlock yb(static_cast<Index>(bnd.size()), static_cast<Index>(occs.size()));
    for (Index c = 0; c < yb.cols(); ++c)
      for (std::size_t r = 0; r < bnd.size(); ++r) yb(static_cast<Index>(r), c) = sol(bnd[r], c);
    y.per_pattern.push_back(std::move(yb));
  }
  return gather(model, y, Combine::Sum);
}

namespace {

// Signed, rotated interface trace of pattern-frame field columns `r` (free
// dofs) of occurrence `occ`, written into the structure-frame matrix `g`.
void place_traces(const StructureModel& model, int occ, const Matrix& r, Matrix& g, Index col0) {
  const int p = model.occurrences()[static_cast<std::size_t>(occ)].pattern;
  const PatternStiffness& pat = model.pattern(p);
  const double c = model.cos_of(occ);
  const double s = model.sin_of(occ);
  for (std::size_t k = 0; k < pat.sides.size(); ++k) {
    const auto& link = model.side_link(occ, static_cast<int>(k));
    if (link.interface < 0) continue;
    const Index off = model.interface_offset(link.interface);
    const auto& dofs = pat.side_dofs[k];
    for (Index q = 0; q < r.cols(); ++q) {
      if (model.dofs_per_node() == 1) {
        for (std::size_t t = 0; t < dofs.size(); ++t) g(off + static_cast<Index>(t), col0 + q) = link.sign * r(dofs[t], q);
      } else {
        for (std::size_t t = 0; t < dofs.size(); t += 2) {
          const double x = r(dofs[t], q);
          const double y = r(dofs[t + 1], q);
          g(off + static_cast<Index>(t), col0 + q) = link.sign * (c * x - s * y);
          g(off + static_cast<Index>(t) + 1, col0 + q) = link.sign * (s * x + c * y);
        }
      }
    }
  }
}

}  // namespace

CoarseSpace build_G_and_e(const StructureModel& model, const LoadCase& loads) {
  if (!loads.forces.empty() && static_cast<int>(loads.forces.size()) != model.n_occurrences()) {
    throw Error(Errc::DimensionMismatch, "load case does not match the occurrence count");
  }
  CoarseSpace cs;
  Index width = 0;
  for (int o = 0; o < model.n_occurrences(); ++o) {
    cs.column_offset.push_back(width);
    width += model.pattern(model.occurrences()[static_cast<std::size_t>(o)].pattern).kernel_dim();
  }
  cs.g = Matrix::Zero(model.interface_size(), width);
  cs.e = Vector::Zero(width);
  for (int o = 0; o < model.n_occurrences(); ++o) {
    const PatternStiffness& pat = model.pattern(model.occurrences()[static_cast<std::size_t>(o)].pattern);
    if (pat.kernel_dim() == 0) continue;
    const Matrix& r = pat.k_fact.kernel_basis();
    place_traces(model, o, r, cs.g, cs.column_offset[static_cast<std::size_t>(o)]);
    if (!loads.forces.empty()) {
      cs.e.segment(cs.column_offset[static_cast<std::size_t>(o)], r.cols()) =
          r.transpose() * loads.forces[static_cast<std::size_t>(o)];
    }
  }
  return cs;
}

GBlock build_G_block(const StructureModel& model) {
  GBlock gb;
  std::vector<int> floating;
  for (int o = 0; o < model.n_occurrences(); ++o) {
    const int p = model.occurrences()[static_cast<std::size_t>(o)].pattern;
    if (model.pattern(p).kernel_dim() == 0) continue;
    if (gb.pattern >= 0 && gb.pattern != p) {
      throw Error(Errc::MixedPatterns, "floating occurrences belong to several patterns");
    }
    gb.pattern = p;
    floating.push_back(o);
  }
  if (floating.empty()) return gb;
  const PatternStiffness& pat = model.pattern(gb.pattern);
  const Matrix& r = pat.k_fact.kernel_basis();
  const Index k = r.cols();
  gb.kernel_dim = k;
  const int dpn = model.dofs_per_node();

  // Linked sides must agree over the floating occurrences.
  for (std::size_t s = 0; s < pat.sides.size(); ++s) {
    const bool used = model.side_link(floating.front(), static_cast<int>(s)).interface >= 0;
    for (int o : floating)
      if ((model.side_link(o, static_cast<int>(s)).interface >= 0) != used) {
        throw Error(Errc::TopologyMismatch, "floating occurrences use different sides");
      }
    if (used) gb.sides.push_back(static_cast<int>(s));
  }

  const Index nb = model.boundary_size(gb.pattern);
  gb.block = DenseBlock::Zero(nb, k * static_cast<Index>(1 + gb.sides.size()));
  for (int s : gb.sides) {
    const Index row0 = model.boundary_offset(gb.pattern, s);
    const auto& dofs = pat.side_dofs[static_cast<std::size_t>(s)];
    for (Index q = 0; q < k; ++q)
      for (std::size_t t = 0; t < dofs.size(); ++t) gb.block(row0 + static_cast<Index>(t), q) = r(dofs[t], q);
  }

  for (std::size_t gi = 0; gi < gb.sides.size(); ++gi) {
    const int s = gb.sides[gi];
    const Index row0 = model.boundary_offset(gb.pattern, s);
    const Index len = static_cast<Index>(pat.side_dofs[static_cast<std::size_t>(s)].size());
    Matrix reference;
    for (int o : floating) {
      const auto& link = model.side_link(o, s);
      const Interface& f = model.interfaces()[static_cast<std::size_t>(link.interface)];
      const int q = f.occ_i == o ? f.occ_j : f.occ_i;
      const int qs = f.occ_i == o ? f.side_j : f.side_i;
      Matrix nb_trace = Matrix::Zero(len, k);
      if (model.occurrences()[static_cast<std::size_t>(q)].pattern == gb.pattern) {
        const double sign = link.sign * model.side_link(q, qs).sign;
        const auto& qdofs = pat.side_dofs[static_cast<std::size_t>(qs)];
        // Rot(φ_o)ᵀ Rot(φ_q) = Rot(φ_q − φ_o)
        const double c = model.cos_of(o) * model.cos_of(q) + model.sin_of(o) * model.sin_of(q);
        const double sn = model.cos_of(o) * model.sin_of(q) - model.sin_of(o) * model.cos_of(q);
        for (Index col = 0; col < k; ++col) {
          if (dpn == 1) {
            for (Index t = 0; t < len; ++t) nb_trace(t, col) = sign * r(qdofs[static_cast<std::size_t>(t)], col);
          } else {
            for (Index t = 0; t < len; t += 2) {
              const double x = r(qdofs[static_cast<std::size_t>(t)], col);
              const double y = r(qdofs[static_cast<std::size_t>(t) + 1], col);
              nb_trace(t, col) = sign * (c * x - sn * y);
              nb_trace(t + 1, col) = sign * (sn * x + c * y);
            }
          }
        }
      }
      if (reference.size() == 0) {
        reference = nb_trace;
      } else if ((reference - nb_trace).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, max_abs(reference))) {
        throw Error(Errc::TopologyMismatch, "neighbour kernel traces differ between occurrences");
      }
    }
    gb.block.block(row0, k * static_cast<Index>(1 + gi), len, k) = reference;
  }
  return gb;
}

Matrix coarse_gram_from_block(const StructureModel& model, const GBlock& gb, PrecondKind kind) {
  std::vector<Index> offset;
  Index width = 0;
  for (int o = 0; o < model.n_occurrences(); ++o) {
    offset.push_back(width);
    width += model.pattern(model.occurrences()[static_cast<std::size_t>(o)].pattern).kernel_dim();
  }
  Matrix c = Matrix::Zero(width, width);
  if (gb.pattern < 0) return c;
  for (Index i = 0; i < model.interface_size(); ++i)
    if (model.weights_i()(i) != 0.5 || model.weights_j()(i) != 0.5) {
      throw Error(Errc::TopologyMismatch, "block coarse assembly assumes multiplicity ½ scaling");
    }

  const PatternStiffness& pat = model.pattern(gb.pattern);
  const auto& occs = model.occurrences_of(gb.pattern);
  const StructureModel::DirichletGroup* group = nullptr;
  if (kind == PrecondKind::Dirichlet) {
    for (const auto& g : model.dirichlet_groups()) {
      if (g.pattern != gb.pattern) continue;
      if (group) throw Error(Errc::TopologyMismatch, "occurrences of the floating pattern use different Dirichlet operators");
      group = &g;
    }
  }

  Matrix mg;
  switch (kind) {
    case PrecondKind::Identity: mg = gb.block; break;
    case PrecondKind::Lumped: mg = multiply_fixed(pat.dirichlet.k_bb(), gb.block); break;
    case PrecondKind::Superlumped: mg = pat.dirichlet.k_bb().diagonal().asDiagonal() * gb.block; break;
    case PrecondKind::Dirichlet: {
      mg = Matrix::Zero(gb.block.rows(), gb.block.cols());
      const auto cols = all_indices(gb.block.cols());
      put_rows(mg, group->rows, cols, group->op->apply(extract_rows(gb.block, group->rows, cols)));
      break;
    }
  }
  const Matrix h = 0.25 * (gb.block.transpose() * mg);
  const Index k = gb.kernel_dim;

  for (int o : occs) {
    std::vector<int> owner{o};
    for (int s : gb.sides) {
      const auto& link = model.side_link(o, s);
      const Interface& f = model.interfaces()[static_cast<std::size_t>(link.interface)];
      const int q = f.occ_i == o ? f.occ_j : f.occ_i;
      owner.push_back(model.occurrences()[static_cast<std::size_t>(q)].pattern == gb.pattern ? q : -1);
    }
    for (std::size_t a = 0; a < owner.size(); ++a) {
      if (owner[a] < 0) continue;
      for (std::size_t b = 0; b < owner.size(); ++b) {
        if (owner[b] < 0) continue;
        c.block(offset[static_cast<std::size_t>(owner[a])], offset[static_cast<std::size_t>(owner[b])], k, k) +=
            h.block(k * static_cast<Index>(a), k * static_cast<Index>(b), k, k);
      }
    }
  }
  return c;
}

Vector interface_jump(const StructureModel& model, const std::vector<Vector>& u) {
  if (static_cast<int>(u.size()) != model.n_occurrences()) {
    throw Error(Errc::DimensionMismatch, "interface_jump: one field per occurrence expected");
  }
  InterfaceBlock y;
  y.n_vectors = 1;
  for (int p = 0; p < model.n_patterns(); ++p) {
    const auto& occs = model.occurrences_of(p);
    const auto& bnd = model.pattern(p).dirichlet.boundary();
    DenseBlock yb(static_cast<Index>(bnd.size()), static_cast<Index>(occs.size()));
    for (std::size_t l = 0; l < occs.size(); ++l)
      for (std::size_t r = 0; r < bnd.size(); ++r)
        yb(static_cast<Index>(r), static_cast<Index>(l)) = u[static_cast<std::size_t>(occs[l])](bnd[r]);
    y.per_pattern.push_back(std::move(yb));
  }
  return gather(model, y, Combine::Sum);
}

Vector to_structure_frame(const StructureModel& model, int occ, const Vector& local) {
  if (model.dofs_per_node() == 1) return local;
  const double c = model.cos_of(occ);
  const double s = model.sin_of(occ);
  Vector out(local.size());
  for (Index k = 0; k + 1 < local.size(); k += 2) {
    out(k) = c * local(k) - s * local(k + 1);
    out(k + 1) = s * local(k) + c * local(k + 1);
  }
  return out;
}

Vector to_pattern_frame(const StructureModel& model, int occ, const Vector& global) {
  if (model.dofs_per_node() == 1) return global;
  const double c = model.cos_of(occ);
  const double s = model.sin_of(occ);
  Vector out(global.size());
  for (Index k = 0; k + 1 < global.size(); k += 2) {
    out(k) = c * global(k) + s * global(k + 1);
    out(k + 1) = c * global(k + 1) - s * global(k);
  }
  return out;
}

namespace {

Point2 rotate(const Point2& p, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

void check_ring_geometry(const PatternStiffness& sector, int a, int b, int n) {
  if (sector.mesh.triangles.empty()) return;
  const double step = 2.0 * std::numbers::pi / n;
  const auto& na = sector.sides[static_cast<std::size_t>(a)].nodes;
  const auto& nb = sector.sides[static_cast<std::size_t>(b)].nodes;
  double scale = 0.0;
  for (const auto& p : sector.mesh.nodes) scale = std::max(scale, std::hypot(p.x, p.y));
  for (std::size_t t = 0; t < na.size(); ++t) {
    // side b of the next occurrence lands on side a of this one
    const Point2 pa = sector.mesh.nodes[static_cast<std::size_t>(na[t])];
    const Point2 pb = rotate(sector.mesh.nodes[static_cast<std::size_t>(nb[t])], -step);
    if (std::hypot(pa.x - pb.x, pa.y - pb.y) > 1e-9 * std::max(scale, 1.0)) {
      throw Error(Errc::InterfaceMismatch, "sector sides do not match under rotation by 2π/" + std::to_string(n));
    }
  }
}

}  // namespace

StructureModel make_ring(PatternPtr sector, int n) {
  if (n < 1) throw Error(Errc::InvalidTopology, "ring needs at least one occurrence");
  const int a = side_by_name(*sector, "a");
  const int b = side_by_name(*sector, "b");
  if (n >= 2) check_ring_geometry(*sector, a, b, n);
  std::vector<Occurrence> occ;
  std::vector<Interface> ifaces;
  RingLayout layout;
  for (int s = 0; s < n; ++s) {
    occ.push_back({0, -s * 2.0 * std::numbers::pi / n, {}});
    layout.ring_occurrences.push_back(s);
  }
  if (n >= 2) {
    for (int s = 0; s < n; ++s) {
      ifaces.push_back({s, a, (s + 1) % n, b, 1});
      layout.ring_interfaces.push_back(s);
    }
  }
  return StructureModel({std::move(sector)}, std::move(occ), std::move(ifaces), std::move(layout));
}

StructureModel make_ring_with_stands(PatternPtr sector, PatternPtr stand, int n, const std::vector<int>& hosts) {
  if (n < 2) throw Error(Errc::InvalidTopology, "stands need a ring of at least two occurrences");
  const int a = side_by_name(*sector, "a");
  const int b = side_by_name(*sector, "b");
  const int st = side_by_name(*sector, "stand");
  const int top = side_by_name(*stand, "top");
  check_ring_geometry(*sector, a, b, n);

  // Attachment point and tangent direction of the stand segment.
  const auto& seg = sector->sides[static_cast<std::size_t>(st)].nodes;
  const Point2 p0 = sector->mesh.nodes[static_cast<std::size_t>(seg[(seg.size() - 1) / 2])];
  const Point2 p1 = sector->mesh.nodes[static_cast<std::size_t>(seg[seg.size() / 2])];
  const Point2 mid{0.5 * (p0.x + p1.x), 0.5 * (p0.y + p1.y)};
  const double theta_c = std::atan2(mid.y, mid.x);

  std::vector<Occurrence> occ;
  std::vector<Interface> ifaces;
  RingLayout layout;
  for (int s = 0; s < n; ++s) {
    occ.push_back({0, -s * 2.0 * std::numbers::pi / n, {}});
    layout.ring_occurrences.push_back(s);
  }
  for (int s = 0; s < n; ++s) {
    ifaces.push_back({s, a, (s + 1) % n, b, 1});
    layout.ring_interfaces.push_back(s);
  }
  std::vector<int> seen;
  for (int h : hosts) {
    if (h < 0 || h >= n || std::find(seen.begin(), seen.end(), h) != seen.end()) {
      throw Error(Errc::InvalidTopology, "invalid stand host occurrence " + std::to_string(h));
    }
    seen.push_back(h);
    const double phi = occ[static_cast<std::size_t>(h)].angle;
    const int idx = static_cast<int>(occ.size());
    occ.push_back({1, phi + theta_c + 0.5 * std::numbers::pi, rotate(mid, phi)});
    layout.stand_interfaces.push_back(static_cast<int>(ifaces.size()));
    ifaces.push_back({h, st, idx, top, 1});
  }
  return StructureModel({std::move(sector), std::move(stand)}, std::move(occ), std::move(ifaces), std::move(layout));
}

}  // namespace patfeti
