#pragma once

#include "eapto/core.hpp"

#include <array>
#include <cmath>

namespace eapto::hex8 {

inline constexpr int n_nodes = 8;
inline constexpr int n_gauss = 8;

/// Reference corner signs in VTK_HEXAHEDRON order: bottom face counter-clockwise,
/// then top face.
inline constexpr std::array<std::array<int, 3>, 8> corners{{
    {-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
    {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1},
}};

using NodeCoords = Eigen::Matrix<Real, 8, 3>;
using ShapeValues = Eigen::Matrix<Real, 8, 1>;
using ShapeGrads = Eigen::Matrix<Real, 8, 3>;

inline ShapeValues shape(const Vec3& xi) {
  ShapeValues N;
  for (int a = 0; a < 8; ++a) {
    N(a) = 0.125 * (1 + corners[a][0] * xi(0)) * (1 + corners[a][1] * xi(1)) *
           (1 + corners[a][2] * xi(2));
  }
  return N;
}

inline ShapeGrads shape_grad_ref(const Vec3& xi) {
  ShapeGrads dN;
  for (int a = 0; a < 8; ++a) {
    const Real sx = corners[a][0], sy = corners[a][1], sz = corners[a][2];
    dN(a, 0) = 0.125 * sx * (1 + sy * xi(1)) * (1 + sz * xi(2));
    dN(a, 1) = 0.125 * sy * (1 + sx * xi(0)) * (1 + sz * xi(2));
    dN(a, 2) = 0.125 * sz * (1 + sx * xi(0)) * (1 + sy * xi(1));
  }
  return dN;
}

/// 2x2x2 Gauss-Legendre rule; all weights are 1.
inline const std::array<Vec3, 8>& gauss_points() {
  static const std::array<Vec3, 8> pts = [] {
    std::array<Vec3, 8> p;
    const Real g = 1.0 / std::sqrt(3.0);
    for (int q = 0; q < 8; ++q) {
      p[q] = Vec3(corners[q][0] * g, corners[q][1] * g, corners[q][2] * g);
    }
    return p;
  }();
  return pts;
}

/// Shape values at every Gauss point, row q holds N_a(xi_q).
inline const Eigen::Matrix<Real, 8, 8>& gauss_shape_table() {
  static const Eigen::Matrix<Real, 8, 8> table = [] {
    Eigen::Matrix<Real, 8, 8> t;
    for (int q = 0; q < 8; ++q) t.row(q) = shape(gauss_points()[q]).transpose();
    return t;
  }();
  return table;
}

struct PointGeometry {
  ShapeGrads dNdX;  ///< material gradients of the shape functions
  Real detJ = 0;    ///< Jacobian determinant times the quadrature weight
};

/// Material-frame shape gradients at reference point xi. Returns detJ <= 0 for
/// inverted or degenerate cells without throwing; callers decide.
inline PointGeometry point_geometry(const NodeCoords& X, const Vec3& xi) {
  const ShapeGrads dN = shape_grad_ref(xi);
  const Eigen::Matrix<Real, 3, 3> jac = X.transpose() * dN;  // dX/dxi
  PointGeometry g;
  g.detJ = jac.determinant();
  if (g.detJ > 0) g.dNdX = dN * jac.inverse();
  return g;
}

}  // namespace eapto::hex8
