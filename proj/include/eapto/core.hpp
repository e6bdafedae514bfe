#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace eapto {

using Real = double;
using Index = std::ptrdiff_t;

using Vec3 = Eigen::Matrix<Real, 3, 1>;
using Mat3 = Eigen::Matrix<Real, 3, 3, Eigen::RowMajor>;
using Vec9 = Eigen::Matrix<Real, 9, 1>;
using Mat9 = Eigen::Matrix<Real, 9, 9, Eigen::RowMajor>;
using Mat39 = Eigen::Matrix<Real, 3, 9, Eigen::RowMajor>;
using VectorX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

/// Unit system: length mm, force N, potential V, stress MPa (N/mm^2).
/// Permittivities carry N/V^2, which is independent of the length unit:
/// 1 F/m = 1 C/(V m) = 1 N/V^2, so eps0 keeps its SI magnitude.
namespace units {
inline constexpr Real vacuum_permittivity = 8.854e-12;  // N/V^2
}

/// Voigt index of F_iJ (row-major 3x3 flattening).
constexpr int voigt(int i, int J) { return 3 * i + J; }

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeshError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// Non-positive volume ratio met at a quadrature point.
struct InvertedElement : Error {
  Index element = -1;
  Real J = 0;
  InvertedElement(Index elem, Real det)
      : Error("inverted element " + std::to_string(elem) + " (J = " + std::to_string(det) + ")"),
        element(elem),
        J(det) {}
};

struct NonConvergence : Error {
  std::vector<Real> residual_history;
  NonConvergence(const std::string& what, std::vector<Real> history)
      : Error(what), residual_history(std::move(history)) {}
};

struct LinearSolverError : Error {
  using Error::Error;
};

}  // namespace eapto
