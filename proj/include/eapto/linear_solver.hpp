#pragma once

#include "eapto/core.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#ifdef EAPTO_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

#include <cmath>
#include <memory>

namespace eapto {

/// Sparse LU for the coupled, sign-indefinite state tangent. The matrix is
/// symmetrically scaled by |diag|^{-1/2} before factorization because
/// mechanical and dielectric entries differ by ~10 orders of magnitude.
class CoupledLuSolver {
 public:
  using Matrix = Eigen::SparseMatrix<Real, Eigen::ColMajor, int>;

  /// Symbolic analysis; reused while the sparsity pattern is unchanged.
  void analyze(const Matrix& K) {
    scaled_ = K;
    backend_ = std::make_unique<Backend>();
    backend_->analyzePattern(scaled_);
    analyzed_ = true;
    factorized_ = false;
  }

  void factorize(const Matrix& K) {
    if (!analyzed_ || K.rows() != scaled_.rows() || K.nonZeros() != scaled_.nonZeros()) analyze(K);
    scale_.resize(K.rows());
    const VectorX d = K.diagonal();
    for (Index i = 0; i < K.rows(); ++i) {
      const Real a = std::abs(d(i));
      scale_(i) = a > 0 && std::isfinite(a) ? 1.0 / std::sqrt(a) : 1.0;
    }
    scaled_ = scale_.asDiagonal() * K * scale_.asDiagonal();
    backend_->factorize(scaled_);
    if (backend_->info() != Eigen::Success) throw LinearSolverError("sparse LU factorization failed (singular tangent?)");
    factorized_ = true;
  }

  VectorX solve(const VectorX& b) const {
    if (!factorized_) throw LinearSolverError("solve before factorize");
    const VectorX sb = scale_.cwiseProduct(b);
    const VectorX y = backend_->solve(sb);
    if (backend_->info() != Eigen::Success || !y.allFinite()) throw LinearSolverError("sparse LU solve failed");
    return scale_.cwiseProduct(y);
  }

  bool factorized() const { return factorized_; }

 private:
#ifdef EAPTO_HAVE_UMFPACK
  using Backend = Eigen::UmfPackLU<Matrix>;
#else
  using Backend = Eigen::SparseLU<Matrix, Eigen::COLAMDOrdering<int>>;
#endif
  Matrix scaled_;
  VectorX scale_;
  std::unique_ptr<Backend> backend_;
  bool analyzed_ = false;
  bool factorized_ = false;
};

}  // namespace eapto
