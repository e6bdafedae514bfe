#pragma once

#include "eapto/core.hpp"
#include "eapto/hex8.hpp"
#include "eapto/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <memory>
#include <span>

namespace eapto {

using SparseMatrix = Eigen::SparseMatrix<Real, Eigen::ColMajor, int>;

/// Helmholtz filter restricted to the design block, with zero-flux boundary.
/// Solves A rho_tilde = G rho where A = int(l^2 grad N . grad N + N N) and
/// G maps element-uniform densities to nodal loads. Immutable after build.
struct FilterOperator {
  Real length = 0;
  Index n_nodes = 0;                         ///< filter (design) nodes
  std::vector<Index> filter_node;            ///< mesh node id -> filter node, or -1
  std::vector<std::array<Index, 8>> conn;    ///< per design element, filter node ids
  std::vector<Real> gauss_weight;            ///< detJ * w per design Gauss point (8 per element)
  Real design_volume = 0;
  SparseMatrix A;
  SparseMatrix G;
  std::shared_ptr<const Eigen::SimplicialLLT<SparseMatrix>> factor;

  Index n_elements() const { return static_cast<Index>(conn.size()); }
  Index n_gauss() const { return 8 * n_elements(); }
};

inline FilterOperator build_filter(const Mesh& mesh, Real length) {
  if (!(length > 0)) throw MeshError("filter length must be positive");
  if (mesh.n_design() == 0) throw MeshError("filter needs design elements");
  FilterOperator op;
  op.length = length;
  op.filter_node.assign(static_cast<std::size_t>(mesh.n_nodes()), -1);
  for (Index eid : mesh.design_element_ids) {
    std::array<Index, 8> c{};
    const auto& el = mesh.elements[static_cast<std::size_t>(eid)];
    for (int a = 0; a < 8; ++a) {
      Index& fn = op.filter_node[static_cast<std::size_t>(el.node_ids[a])];
      if (fn < 0) fn = op.n_nodes++;
      c[a] = fn;
    }
    op.conn.push_back(c);
  }

  const Real l2 = length * length;
  const auto& table = hex8::gauss_shape_table();
  std::vector<Eigen::Triplet<Real, int>> ta, tg;
  ta.reserve(op.conn.size() * 64);
  tg.reserve(op.conn.size() * 8);
  op.gauss_weight.reserve(op.conn.size() * 8);
  for (std::size_t p = 0; p < op.conn.size(); ++p) {
    const auto X = mesh.element_coords(mesh.design_element_ids[p]);
    Eigen::Matrix<Real, 8, 8> ke = Eigen::Matrix<Real, 8, 8>::Zero();
    Eigen::Matrix<Real, 8, 1> ge = Eigen::Matrix<Real, 8, 1>::Zero();
    for (int q = 0; q < 8; ++q) {
      const auto geo = hex8::point_geometry(X, hex8::gauss_points()[q]);
      if (!(geo.detJ > 0)) throw MeshError("non-positive Jacobian in design element");
      const auto N = table.row(q).transpose();
      ke += geo.detJ * (l2 * geo.dNdX * geo.dNdX.transpose() + N * N.transpose());
      ge += geo.detJ * N;
      op.gauss_weight.push_back(geo.detJ);
      op.design_volume += geo.detJ;
    }
    for (int a = 0; a < 8; ++a) {
      for (int b = 0; b < 8; ++b)
        ta.emplace_back(static_cast<int>(op.conn[p][a]), static_cast<int>(op.conn[p][b]), ke(a, b));
      tg.emplace_back(static_cast<int>(op.conn[p][a]), static_cast<int>(p), ge(a));
    }
  }
  op.A.resize(op.n_nodes, op.n_nodes);
  op.A.setFromTriplets(ta.begin(), ta.end());
  op.G.resize(op.n_nodes, static_cast<Index>(op.conn.size()));
  op.G.setFromTriplets(tg.begin(), tg.end());
  auto llt = std::make_shared<Eigen::SimplicialLLT<SparseMatrix>>(op.A);
  if (llt->info() != Eigen::Success) throw MeshError("filter matrix factorization failed");
  op.factor = std::move(llt);
  return op;
}

/// Element densities to nodal filtered field.
inline VectorX apply_filter(const FilterOperator& op, const VectorX& rho) {
  if (rho.size() != op.n_elements()) throw Error("density vector length does not match design elements");
  return op.factor->solve(op.G * rho);
}

/// Nodal field interpolated to the 8 Gauss points of every design element.
inline VectorX to_gauss_points(const FilterOperator& op, const VectorX& nodal) {
  const auto& table = hex8::gauss_shape_table();
  VectorX out(op.n_gauss());
  for (Index p = 0; p < op.n_elements(); ++p) {
    Eigen::Matrix<Real, 8, 1> v;
    for (int a = 0; a < 8; ++a) v(a) = nodal(op.conn[static_cast<std::size_t>(p)][a]);
    out.segment<8>(8 * p) = table * v;
  }
  return out;
}

/// Transpose of to_gauss_points.
inline VectorX scatter_from_gauss_points(const FilterOperator& op, const VectorX& gp) {
  const auto& table = hex8::gauss_shape_table();
  VectorX out = VectorX::Zero(op.n_nodes);
  for (Index p = 0; p < op.n_elements(); ++p) {
    const Eigen::Matrix<Real, 8, 1> v = table.transpose() * gp.segment<8>(8 * p);
    for (int a = 0; a < 8; ++a) out(op.conn[static_cast<std::size_t>(p)][a]) += v(a);
  }
  return out;
}

struct ProjectionParams {
  Real beta = 1.0;
  Real eta = 0.5;
};

/// Smooth Heaviside; exactly 0 at 0 and 1 at 1.
inline Real project(Real x, const ProjectionParams& p) {
  const Real a = std::tanh(p.beta * p.eta);
  return (a + std::tanh(p.beta * (x - p.eta))) / (a + std::tanh(p.beta * (1 - p.eta)));
}

inline Real project_derivative(Real x, const ProjectionParams& p) {
  const Real a = std::tanh(p.beta * p.eta);
  const Real t = std::tanh(p.beta * (x - p.eta));
  return p.beta * (1 - t * t) / (a + std::tanh(p.beta * (1 - p.eta)));
}

struct PenaltyParams {
  Real a_d = 0.0;
  Real alpha = 0.9;
  Real delta = 1e-9;
};

/// Intermediate-density measure (1/V) int 4^a (r+d)^a (1-r+d)^a dV by the design quadrature.
inline Real penalty(const FilterOperator& op, const VectorX& rho_bar, const PenaltyParams& p) {
  const Real c = std::pow(4.0, p.alpha);
  Real s = 0;
  for (Index g = 0; g < rho_bar.size(); ++g) {
    const Real r = rho_bar(g);
    s += op.gauss_weight[static_cast<std::size_t>(g)] * c * std::pow(r + p.delta, p.alpha) *
         std::pow(1 - r + p.delta, p.alpha);
  }
  return s / op.design_volume;
}

/// Derivative of penalty() with respect to each Gauss-point density.
inline VectorX penalty_gradient(const FilterOperator& op, const VectorX& rho_bar, const PenaltyParams& p) {
  const Real c = std::pow(4.0, p.alpha);
  VectorX g(rho_bar.size());
  for (Index i = 0; i < rho_bar.size(); ++i) {
    const Real a = rho_bar(i) + p.delta, b = 1 - rho_bar(i) + p.delta;
    const Real d = p.alpha * (std::pow(a, p.alpha - 1) * std::pow(b, p.alpha) - std::pow(a, p.alpha) * std::pow(b, p.alpha - 1));
    g(i) = op.gauss_weight[static_cast<std::size_t>(i)] * c * d / op.design_volume;
  }
  return g;
}

/// One regularized density field through filter and projection.
struct FieldChain {
  VectorX rho;          ///< element design variables
  VectorX rho_tilde;    ///< nodal filtered field
  VectorX tilde_gauss;  ///< filtered field at Gauss points
  VectorX bar_gauss;    ///< projected field at Gauss points
};

inline FieldChain forward(const FilterOperator& op, const VectorX& rho, const ProjectionParams& p) {
  FieldChain c;
  c.rho = rho;
  c.rho_tilde = apply_filter(op, rho);
  c.tilde_gauss = to_gauss_points(op, c.rho_tilde);
  c.bar_gauss = c.tilde_gauss.unaryExpr([&](Real x) { return project(x, p); });
  return c;
}

/// Pulls a Gauss-point gradient dJ/d(rho_bar) back to element design variables:
/// projection slope, transpose of the Gauss interpolation, A^{-T}, then G^T.
inline VectorX backprop(const FilterOperator& op, const ProjectionParams& p, const VectorX& tilde_gauss,
                        const VectorX& d_bar) {
  VectorX d_tilde_gp(d_bar.size());
  for (Index i = 0; i < d_bar.size(); ++i) d_tilde_gp(i) = d_bar(i) * project_derivative(tilde_gauss(i), p);
  const VectorX nodal = scatter_from_gauss_points(op, d_tilde_gp);
  const VectorX y = op.factor->solve(nodal);  // A is symmetric
  return op.G.transpose() * y;
}

}  // namespace eapto
