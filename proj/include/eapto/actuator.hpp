#pragma once

#include "eapto/config.hpp"
#include "eapto/fem.hpp"
#include "eapto/mesh.hpp"
#include "eapto/regularization.hpp"

#include <memory>

namespace eapto {

/// Suspended actuator: +phi_p / -phi_p on clamped patches at the upper and
/// lower ends of the left design edge, a spring-loaded output port at the
/// middle of the right design edge, zero displacement on the far-field ring
/// and plane strain throughout.
struct ActuatorProblem {
  std::unique_ptr<Mesh> mesh;  // heap-held so the state problem's reference stays valid on move
  std::unique_ptr<StateProblem> state;
  FilterOperator filter;
  VectorX l;                     ///< objective selector, averages the port dof
  std::vector<Index> port_nodes;
  std::vector<Index> far_field_nodes;
};

inline ActuatorProblem build_actuator(const ProblemConfig& cfg) {
  cfg.validate();
  ActuatorProblem p;
  Mesh m = build_mesh(cfg.mesh);
  const Real size = cfg.mesh.design_size;
  const Real tol = 1e-9 * size;
  auto in_design = [&](const Vec3& X) {
    return X.x() >= -tol && X.x() <= size + tol && X.y() >= -tol && X.y() <= size + tol;
  };
  const Real patch = cfg.patch_fraction * size;
  auto upper = [&](const Vec3& X) { return in_design(X) && std::abs(X.x()) <= tol && X.y() >= size - patch - tol; };
  auto lower = [&](const Vec3& X) { return in_design(X) && std::abs(X.x()) <= tol && X.y() <= patch + tol; };
  m = tag_boundary(std::move(m), "upper_patch", [&](const Vec3& X, int) { return upper(X); });
  m = tag_boundary(std::move(m), "lower_patch", [&](const Vec3& X, int) { return lower(X); });

  // Port: right design edge, the node row nearest mid-height.
  const auto& g = m.grid;
  const int iy_mid = g.iy0 + static_cast<int>(std::lround(0.5 * cfg.mesh.design_ny));
  const int ix_right = g.ix0 + cfg.mesh.design_nx;
  for (int iz = 0; iz < 2; ++iz) p.port_nodes.push_back(g.node_id(ix_right, iy_mid, iz));

  BoundaryConditions bc;
  for (const auto& n : m.nodes) bc.prescribed.push_back({{n.id, 2}, 0.0});
  bc.fix(m.dof_set("far_field"));
  for (const auto& [name, value] : {std::pair{"upper_patch", cfg.phi_p}, std::pair{"lower_patch", -cfg.phi_p}}) {
    for (const auto& d : m.dof_set(name)) {
      bc.prescribed.push_back({d, d.dof == potential_dof ? value : 0.0});
    }
  }
  if (cfg.tie_layers)
    for (int iy = 0; iy <= g.cells_y(); ++iy)
      for (int ix = 0; ix <= g.cells_x(); ++ix) bc.node_ties.emplace_back(g.node_id(ix, iy, 1), g.node_id(ix, iy, 0));
  const int port_dof = cfg.objective == Direction::Vertical ? 1 : 0;
  const Real share = 1.0 / static_cast<Real>(p.port_nodes.size());
  p.l = VectorX::Zero(dofs_per_node * m.n_nodes());
  for (Index n : p.port_nodes) {
    bc.springs.push_back({n, port_dof, share * cfg.spring_stiffness()});
    p.l(global_dof(n, port_dof)) = share;
  }
  for (const auto& d : m.dof_set("far_field"))
    if (d.dof == 0) p.far_field_nodes.push_back(d.node);

  p.mesh = std::make_unique<Mesh>(std::move(m));
  p.state = std::make_unique<StateProblem>(*p.mesh, std::move(bc));
  p.filter = build_filter(*p.mesh, cfg.filter_length);
  return p;
}

/// rho1 = 1 everywhere; rho2 = 0 (electrode) on full-width strips along the
/// top and bottom design edges, 1 (EAP) elsewhere.
inline std::pair<VectorX, VectorX> initial_design(const Mesh& mesh, const ProblemConfig& cfg) {
  const Index n = mesh.n_design();
  VectorX rho1 = VectorX::Ones(n), rho2 = VectorX::Ones(n);
  const Real size = cfg.mesh.design_size, h = cfg.strip_fraction * size;
  for (Index p = 0; p < n; ++p) {
    const auto X = mesh.element_coords(mesh.design_element_ids[static_cast<std::size_t>(p)]);
    const Real yc = X.col(1).mean();
    if (yc < h || yc > size - h) rho2(p) = 0.0;
  }
  return {rho1, rho2};
}

}  // namespace eapto
