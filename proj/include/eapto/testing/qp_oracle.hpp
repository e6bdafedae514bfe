#pragma once
// Box-constrained QP with one linear constraint, solved independently of MMA:
// projected gradient for fixed lambda, bisection on lambda for complementarity.

#include "eapto/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <random>
#include <utility>

namespace eapto::testing {

struct QpOracle {
  Eigen::MatrixXd Q;
  VectorX c, a;
  Real b = 0;

  VectorX grad(const VectorX& x) const { return Q * x + c; }
  Real value(const VectorX& x) const { return 0.5 * x.dot(Q * x) + c.dot(x); }

  VectorX box_minimizer(Real lambda) const {
    const Index n = c.size();
    VectorX x = VectorX::Constant(n, 0.5);
    const Real step = 1.0 / Q.operatorNorm();
    for (int it = 0; it < 200000; ++it) {
      const VectorX next = (x - step * (grad(x) + lambda * a)).cwiseMax(0.0).cwiseMin(1.0);
      const Real change = (next - x).cwiseAbs().maxCoeff();
      x = next;
      if (change < 1e-15) break;
    }
    return x;
  }

  std::pair<VectorX, Real> solve() const {
    VectorX x = box_minimizer(0);
    if (a.dot(x) <= b) return {x, 0.0};
    Real lo = 0, hi = 1;
    while (a.dot(box_minimizer(hi)) > b) hi *= 2;
    for (int i = 0; i < 80; ++i) {
      const Real mid = 0.5 * (lo + hi);
      (a.dot(box_minimizer(mid)) > b ? lo : hi) = mid;
    }
    const Real lambda = 0.5 * (lo + hi);
    return {box_minimizer(lambda), lambda};
  }

  Real kkt_residual(const VectorX& x, Real lambda) const {
    const VectorX proj = (x - (grad(x) + lambda * a)).cwiseMax(0.0).cwiseMin(1.0);
    const Real g = a.dot(x) - b;
    return std::max({(x - proj).cwiseAbs().maxCoeff(), std::max(g, 0.0), std::abs(lambda * g)});
  }
};

/// Strictly convex random instance with an active constraint.
inline QpOracle random_qp(std::mt19937_64& rng, Index n) {
  std::normal_distribution<Real> nd;
  std::uniform_real_distribution<Real> ud(0.2, 1.0);
  QpOracle qp;
  Eigen::MatrixXd M(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) M(i, j) = nd(rng);
  qp.Q = M.transpose() * M / static_cast<Real>(n) + 0.5 * Eigen::MatrixXd::Identity(n, n);
  qp.c.resize(n);
  qp.a.resize(n);
  for (Index i = 0; i < n; ++i) {
    qp.c(i) = 2 * nd(rng);
    qp.a(i) = ud(rng);
  }
  qp.b = 0.3 * qp.a.sum();
  return qp;
}

}  // namespace eapto::testing
