#pragma once

#include "eapto/core.hpp"
#include "eapto/hex8.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace eapto {

enum class Region { Design, FreeSpace };

struct Node {
  Index id = 0;
  Vec3 X = Vec3::Zero();
};

struct Element {
  Index id = 0;
  std::array<Index, 8> node_ids{};
  Region region = Region::Design;
};

/// Local dof numbering per node: 0,1,2 displacement components, 3 potential.
inline constexpr int dofs_per_node = 4;
inline constexpr int potential_dof = 3;

struct DofRef {
  Index node = 0;
  int dof = 0;
  friend bool operator==(const DofRef&, const DofRef&) = default;
};

struct MeshSpec {
  int design_nx = 60;
  int design_ny = 60;
  Real design_size = 1.0;  ///< side length of the square design block (mm)
  Real thickness = 1.0;    ///< out-of-plane depth (mm)
  /// Ratio of the free-space half-width to the design half-width; 1 means no free space.
  Real freespace_extent_factor = 5.0;
  Real grading_ratio = 1.3;
};

/// Tensor-product layout kept alongside the unstructured view; the grid is
/// (nx_total x ny_total x 1) cells with the design block at [ix0, ix0+design_nx).
struct GridLayout {
  std::vector<Real> x_lines, y_lines;
  int ix0 = 0, iy0 = 0;
  int design_nx = 0, design_ny = 0;
  Real thickness = 0;

  int cells_x() const { return static_cast<int>(x_lines.size()) - 1; }
  int cells_y() const { return static_cast<int>(y_lines.size()) - 1; }
  Index node_id(int ix, int iy, int iz) const {
    const Index nxl = static_cast<Index>(x_lines.size());
    const Index nyl = static_cast<Index>(y_lines.size());
    return static_cast<Index>(iz) * nxl * nyl + static_cast<Index>(iy) * nxl + ix;
  }
  Index element_id(int ex, int ey) const { return static_cast<Index>(ey) * cells_x() + ex; }
};

struct Mesh {
  std::vector<Node> nodes;
  std::vector<Element> elements;
  std::map<std::string, std::vector<DofRef>> dof_sets;
  std::vector<Index> design_element_ids;
  /// element id -> position in design_element_ids, or -1 for free space.
  std::vector<Index> design_position;
  GridLayout grid;

  Index n_nodes() const { return static_cast<Index>(nodes.size()); }
  Index n_elements() const { return static_cast<Index>(elements.size()); }
  Index n_design() const { return static_cast<Index>(design_element_ids.size()); }

  hex8::NodeCoords element_coords(Index e) const {
    hex8::NodeCoords X;
    const auto& el = elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < 8; ++a) X.row(a) = nodes[static_cast<std::size_t>(el.node_ids[a])].X.transpose();
    return X;
  }

  const std::vector<DofRef>& dof_set(const std::string& name) const {
    auto it = dof_sets.find(name);
    if (it == dof_sets.end()) throw MeshError("unknown dof set '" + name + "'");
    return it->second;
  }
};

namespace detail {

/// Layer widths stepping outward from a block edge: one layer of the block's
/// cell size, then geometric growth until `distance` is covered. An overshoot
/// of more than half the final layer drops that layer; the widths are then
/// rescaled to end exactly at `distance`.
inline std::vector<Real> graded_layers(Real cell, Real distance, Real ratio) {
  std::vector<Real> sizes;
  if (distance <= 0) return sizes;
  Real total = cell, s = cell;
  sizes.push_back(cell);
  while (total < distance) {
    s *= ratio;
    sizes.push_back(s);
    total += s;
  }
  if (sizes.size() > 1 && total - distance > 0.5 * sizes.back()) {
    total -= sizes.back();
    sizes.pop_back();
  }
  const Real scale = distance / total;
  for (Real& w : sizes) w *= scale;
  return sizes;
}

inline std::vector<Real> axis_lines(int n, Real size, Real extent_factor, Real ratio, int& offset) {
  const Real h = size / n;
  const Real distance = (extent_factor - 1.0) * 0.5 * size;
  const auto layers = graded_layers(h, distance, ratio);
  std::vector<Real> lines;
  lines.reserve(static_cast<std::size_t>(n) + 2 * layers.size() + 1);
  Real x = 0;
  std::vector<Real> below;
  for (Real w : layers) {
    x -= w;
    below.push_back(x);
  }
  if (!below.empty()) below.back() = -distance;
  lines.assign(below.rbegin(), below.rend());
  for (int i = 0; i <= n; ++i) lines.push_back(i * h);
  x = size;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    x += layers[k];
    lines.push_back(k + 1 == layers.size() ? size + distance : x);
  }
  offset = static_cast<int>(layers.size());
  return lines;
}

}  // namespace detail

inline void validate(const MeshSpec& s) {
  if (s.design_nx < 1 || s.design_ny < 1) throw MeshError("design element counts must be >= 1");
  if (!(s.design_size > 0) || !(s.thickness > 0)) throw MeshError("design size and thickness must be positive");
  if (!(s.freespace_extent_factor >= 1.0)) throw MeshError("free-space extent factor must be >= 1");
  if (!(s.grading_ratio >= 1.0)) throw MeshError("grading ratio must be >= 1 (shrinking layers invert the grid)");
  if (!std::isfinite(s.freespace_extent_factor) || !std::isfinite(s.grading_ratio))
    throw MeshError("mesh parameters must be finite");
}

/// Structured design block of uniform bricks embedded in a graded free-space
/// grid; one element through the thickness. The outermost node ring forms the
/// "far_field" displacement set.
inline Mesh build_mesh(const MeshSpec& spec) {
  validate(spec);
  Mesh m;
  GridLayout& g = m.grid;
  g.x_lines = detail::axis_lines(spec.design_nx, spec.design_size, spec.freespace_extent_factor,
                                 spec.grading_ratio, g.ix0);
  g.y_lines = detail::axis_lines(spec.design_ny, spec.design_size, spec.freespace_extent_factor,
                                 spec.grading_ratio, g.iy0);
  g.design_nx = spec.design_nx;
  g.design_ny = spec.design_ny;
  g.thickness = spec.thickness;

  const Real hmin = std::min(spec.design_size / spec.design_nx, spec.design_size / spec.design_ny);
  for (const auto* lines : {&g.x_lines, &g.y_lines}) {
    for (std::size_t i = 1; i < lines->size(); ++i) {
      if (!((*lines)[i] - (*lines)[i - 1] > 1e-9 * hmin)) throw MeshError("grading produced a degenerate layer");
    }
  }

  const int nxl = static_cast<int>(g.x_lines.size());
  const int nyl = static_cast<int>(g.y_lines.size());
  m.nodes.reserve(static_cast<std::size_t>(2 * nxl * nyl));
  for (int iz = 0; iz < 2; ++iz) {
    for (int iy = 0; iy < nyl; ++iy) {
      for (int ix = 0; ix < nxl; ++ix) {
        Node n;
        n.id = g.node_id(ix, iy, iz);
        n.X = Vec3(g.x_lines[ix], g.y_lines[iy], iz * spec.thickness);
        m.nodes.push_back(n);
      }
    }
  }

  const int ncx = g.cells_x(), ncy = g.cells_y();
  m.elements.reserve(static_cast<std::size_t>(ncx * ncy));
  m.design_position.assign(static_cast<std::size_t>(ncx * ncy), -1);
  for (int ey = 0; ey < ncy; ++ey) {
    for (int ex = 0; ex < ncx; ++ex) {
      Element el;
      el.id = g.element_id(ex, ey);
      for (int a = 0; a < 8; ++a) {
        const int dx = hex8::corners[a][0] > 0, dy = hex8::corners[a][1] > 0, dz = hex8::corners[a][2] > 0;
        el.node_ids[a] = g.node_id(ex + dx, ey + dy, dz);
      }
      const bool design = ex >= g.ix0 && ex < g.ix0 + spec.design_nx && ey >= g.iy0 && ey < g.iy0 + spec.design_ny;
      el.region = design ? Region::Design : Region::FreeSpace;
      m.elements.push_back(el);
    }
  }
  // Design ids ordered row by row inside the block.
  for (int j = 0; j < spec.design_ny; ++j) {
    for (int i = 0; i < spec.design_nx; ++i) {
      const Index id = g.element_id(g.ix0 + i, g.iy0 + j);
      m.design_position[static_cast<std::size_t>(id)] = m.n_design();
      m.design_element_ids.push_back(id);
    }
  }

  auto& far = m.dof_sets["far_field"];
  for (int iz = 0; iz < 2; ++iz) {
    for (int iy = 0; iy < nyl; ++iy) {
      for (int ix = 0; ix < nxl; ++ix) {
        if (ix == 0 || iy == 0 || ix == nxl - 1 || iy == nyl - 1) {
          for (int d = 0; d < 3; ++d) far.push_back({g.node_id(ix, iy, iz), d});
        }
      }
    }
  }
  return m;
}

using DofPredicate = std::function<bool(const Vec3& X, int dof)>;

/// Adds the named (node, dof) selection. Re-tagging a name with the same
/// selection is a no-op; a different selection under an existing name throws.
inline Mesh tag_boundary(Mesh mesh, const std::string& name, const DofPredicate& pred) {
  std::vector<DofRef> sel;
  for (const Node& n : mesh.nodes) {
    for (int d = 0; d < dofs_per_node; ++d) {
      if (pred(n.X, d)) sel.push_back({n.id, d});
    }
  }
  if (sel.empty()) throw MeshError("boundary '" + name + "' selects no dofs");
  auto it = mesh.dof_sets.find(name);
  if (it != mesh.dof_sets.end()) {
    if (it->second != sel) throw MeshError("boundary name '" + name + "' already used for a different selection");
    return mesh;
  }
  mesh.dof_sets.emplace(name, std::move(sel));
  return mesh;
}

/// Smallest Jacobian determinant over all Gauss points and elements.
inline Real min_jacobian(const Mesh& m) {
  Real jmin = std::numeric_limits<Real>::infinity();
  for (Index e = 0; e < m.n_elements(); ++e) {
    const auto X = m.element_coords(e);
    for (const Vec3& xi : hex8::gauss_points()) jmin = std::min(jmin, hex8::point_geometry(X, xi).detJ);
  }
  return jmin;
}

}  // namespace eapto
