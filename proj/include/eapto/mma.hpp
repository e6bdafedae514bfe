#pragma once

#include "eapto/config.hpp"
#include "eapto/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace eapto {

/// Method of Moving Asymptotes for
///   min f0(x)  s.t.  f_i(x) <= 0 (i = 1..m),  xmin <= x <= xmax.
/// Each update solves the convex separable subproblem
///   min f0~(x) + sum_i (c y_i + y_i^2 / 2)  s.t.  f_i~(x) - y_i <= 0, alpha <= x <= beta, y >= 0
/// through its dual in the multipliers. Constants not set through MmaParams:
///   raa0 = 1e-5 (regularization of p, q), a0 = 1, a_i = 0, d_i = 1,
///   1.001 / 0.001 split of positive and negative gradient parts.
struct MmaState {
  VectorX x, x_old1, x_old2;
  VectorX lower_asym, upper_asym;
  int iteration = 0;
};

/// Separable approximation built at the current iterate; row 0 is the
/// objective, rows 1..m the constraints.
struct MmaApproximation {
  VectorX low, upp, alpha, beta;
  Eigen::MatrixXd p, q;
  VectorX r;

  Real value(Index i, const VectorX& x) const {
    Real s = r(i);
    for (Index j = 0; j < x.size(); ++j) s += p(i, j) / (upp(j) - x(j)) + q(i, j) / (x(j) - low(j));
    return s;
  }
  VectorX gradient(Index i, const VectorX& x) const {
    VectorX g(x.size());
    for (Index j = 0; j < x.size(); ++j) {
      const Real u = upp(j) - x(j), l = x(j) - low(j);
      g(j) = p(i, j) / (u * u) - q(i, j) / (l * l);
    }
    return g;
  }
};

class Mma {
 public:
  Mma(VectorX x0, Index n_constraints, MmaParams params = {}, VectorX xmin = {}, VectorX xmax = {})
      : m_(n_constraints), par_(params) {
    const Index n = x0.size();
    xmin_ = xmin.size() ? std::move(xmin) : VectorX::Zero(n);
    xmax_ = xmax.size() ? std::move(xmax) : VectorX::Ones(n);
    if (xmin_.size() != n || xmax_.size() != n || (xmax_ - xmin_).minCoeff() <= 0) throw Error("invalid MMA box");
    st_.x = x0.cwiseMax(xmin_).cwiseMin(xmax_);
    st_.x_old1 = st_.x_old2 = st_.x;
    st_.lower_asym = xmin_;
    st_.upper_asym = xmax_;
  }

  const MmaState& state() const { return st_; }
  const MmaApproximation& approximation() const { return approx_; }
  Index n_constraints() const { return m_; }

  /// One design update from values and gradients at state().x. `dg` is m x n.
  const VectorX& update(Real f0, const VectorX& df0, const VectorX& g, const Eigen::MatrixXd& dg) {
    const Index n = st_.x.size();
    if (df0.size() != n || g.size() != m_ || dg.rows() != m_ || dg.cols() != n)
      throw Error("MMA gradient dimensions do not match");
    update_asymptotes();
    build_approximation(f0, df0, g, dg);
    const VectorX lambda = solve_dual();
    VectorX x = primal(lambda);
    st_.x_old2 = st_.x_old1;
    st_.x_old1 = st_.x;
    st_.x = x;
    ++st_.iteration;
    return st_.x;
  }

  /// Subproblem primal point and artificial variables for multipliers lambda.
  VectorX primal(const VectorX& lambda) const {
    const Index n = st_.x.size();
    VectorX x(n);
    for (Index j = 0; j < n; ++j) {
      const Real P = approx_.p(0, j) + lambda.dot(approx_.p.col(j).tail(m_));
      const Real Q = approx_.q(0, j) + lambda.dot(approx_.q.col(j).tail(m_));
      const Real sp = std::sqrt(P), sq = std::sqrt(Q);
      const Real xj = (sp * approx_.low(j) + sq * approx_.upp(j)) / (sp + sq);
      x(j) = std::clamp(xj, approx_.alpha(j), approx_.beta(j));
    }
    return x;
  }

 private:
  static constexpr Real raa0 = 1e-5;
  static constexpr Real d_i = 1.0;

  void update_asymptotes() {
    const VectorX range = xmax_ - xmin_;
    const VectorX& x = st_.x;
    if (st_.iteration < 2) {
      st_.lower_asym = x - par_.ghinit * range;
      st_.upper_asym = x + par_.ghinit * range;
    } else {
      for (Index j = 0; j < x.size(); ++j) {
        const Real trend = (x(j) - st_.x_old1(j)) * (st_.x_old1(j) - st_.x_old2(j));
        const Real gamma = trend < 0 ? par_.ghdecr : (trend > 0 ? par_.ghincr : 1.0);
        st_.lower_asym(j) = x(j) - gamma * (st_.x_old1(j) - st_.lower_asym(j));
        st_.upper_asym(j) = x(j) + gamma * (st_.upper_asym(j) - st_.x_old1(j));
      }
    }
    // Asymptote distance kept within [move_frac, max_gap] times the range.
    for (Index j = 0; j < x.size(); ++j) {
      st_.lower_asym(j) = std::clamp(st_.lower_asym(j), x(j) - par_.max_gap * range(j), x(j) - par_.move_frac * range(j));
      st_.upper_asym(j) = std::clamp(st_.upper_asym(j), x(j) + par_.move_frac * range(j), x(j) + par_.max_gap * range(j));
    }
  }

  void build_approximation(Real f0, const VectorX& df0, const VectorX& g, const Eigen::MatrixXd& dg) {
    const Index n = st_.x.size();
    const VectorX& x = st_.x;
    auto& a = approx_;
    a.low = st_.lower_asym;
    a.upp = st_.upper_asym;
    a.alpha.resize(n);
    a.beta.resize(n);
    for (Index j = 0; j < n; ++j) {
      a.alpha(j) = std::max(xmin_(j), a.low(j) + par_.albefa * (x(j) - a.low(j)));
      a.beta(j) = std::min(xmax_(j), a.upp(j) - par_.albefa * (a.upp(j) - x(j)));
    }
    a.p.resize(m_ + 1, n);
    a.q.resize(m_ + 1, n);
    a.r.resize(m_ + 1);
    for (Index i = 0; i <= m_; ++i) {
      Real r = i == 0 ? f0 : g(i - 1);
      for (Index j = 0; j < n; ++j) {
        const Real d = i == 0 ? df0(j) : dg(i - 1, j);
        const Real reg = raa0 / (xmax_(j) - xmin_(j));
        const Real u = a.upp(j) - x(j), l = x(j) - a.low(j);
        const Real pp = std::max(d, 0.0), mm = std::max(-d, 0.0);
        a.p(i, j) = u * u * (1.001 * pp + 0.001 * mm + reg);
        a.q(i, j) = l * l * (0.001 * pp + 1.001 * mm + reg);
        r -= a.p(i, j) / u + a.q(i, j) / l;
      }
      a.r(i) = r;
    }
  }

  VectorX y_of(const VectorX& lambda) const {
    return ((lambda.array() - par_.c) / d_i).max(0.0).matrix();
  }

  /// Dual objective (to be maximized), its gradient and Hessian.
  Real dual(const VectorX& lambda, VectorX* grad, Eigen::MatrixXd* hess) const {
    const VectorX x = primal(lambda);
    const VectorX y = y_of(lambda);
    const auto& a = approx_;
    Real w = a.r(0) + lambda.dot(a.r.tail(m_));
    VectorX gi = a.r.tail(m_);
    if (hess) hess->setZero(m_, m_);
    for (Index j = 0; j < x.size(); ++j) {
      const Real u = a.upp(j) - x(j), l = x(j) - a.low(j);
      const Real P = a.p(0, j) + lambda.dot(a.p.col(j).tail(m_));
      const Real Q = a.q(0, j) + lambda.dot(a.q.col(j).tail(m_));
      w += P / u + Q / l;
      for (Index i = 0; i < m_; ++i) gi(i) += a.p(i + 1, j) / u + a.q(i + 1, j) / l;
      if (hess && x(j) > a.alpha(j) && x(j) < a.beta(j)) {
        VectorX dgx(m_);
        for (Index i = 0; i < m_; ++i) dgx(i) = a.p(i + 1, j) / (u * u) - a.q(i + 1, j) / (l * l);
        const Real curv = 2 * P / (u * u * u) + 2 * Q / (l * l * l);
        *hess -= dgx * dgx.transpose() / curv;
      }
    }
    for (Index i = 0; i < m_; ++i) {
      w += par_.c * y(i) + 0.5 * d_i * y(i) * y(i) - lambda(i) * y(i);
      gi(i) -= y(i);
      if (hess && lambda(i) > par_.c) (*hess)(i, i) -= 1.0 / d_i;
    }
    if (grad) *grad = gi;
    return w;
  }

  static Real projected_gradient_norm(const VectorX& lambda, const VectorX& g) {
    Real s = 0;
    for (Index i = 0; i < lambda.size(); ++i) s = std::max(s, std::abs(lambda(i) > 0 ? g(i) : std::max(g(i), 0.0)));
    return s;
  }

  VectorX solve_dual() const {
    VectorX lambda = VectorX::Zero(m_);
    if (m_ == 0) return lambda;
    const Real tol = 1e-13 * (1 + approx_.r.cwiseAbs().maxCoeff());
    VectorX g;
    Eigen::MatrixXd H;
    Real w = dual(lambda, &g, &H);
    for (int it = 0; it < 100; ++it) {
      if (projected_gradient_norm(lambda, g) <= tol) return lambda;
      // Free set: positive multipliers, or zero ones whose gradient pushes up.
      std::vector<Index> F;
      for (Index i = 0; i < m_; ++i)
        if (lambda(i) > 0 || g(i) > 0) F.push_back(i);
      VectorX dir = VectorX::Zero(m_);
      const Eigen::MatrixXd HF = H(F, F);
      const VectorX gF = g(F);
      Eigen::LDLT<Eigen::MatrixXd> ldlt(-HF);
      bool newton = ldlt.info() == Eigen::Success && ldlt.isPositive() && (-HF).diagonal().minCoeff() > 1e-14;
      VectorX dF = newton ? VectorX(ldlt.solve(gF)) : gF;
      if (!dF.allFinite()) dF = gF;
      for (std::size_t k = 0; k < F.size(); ++k) dir(F[k]) = dF(static_cast<Index>(k));
      Real t = 1.0;
      bool moved = false;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        const VectorX trial = (lambda + t * dir).cwiseMax(0.0);
        VectorX gt;
        Eigen::MatrixXd Ht;
        const Real wt = dual(trial, &gt, &Ht);
        if (wt >= w + 1e-4 * g.dot(trial - lambda) && wt >= w) {
          moved = (trial - lambda).norm() > 0;
          lambda = trial;
          w = wt;
          g = gt;
          H = Ht;
          break;
        }
      }
      if (!moved) break;
    }
    if (projected_gradient_norm(lambda, g) <= tol) return lambda;
    return bisection_dual(lambda);
  }

  /// Cyclic coordinate maximization; each coordinate by bisection on its
  /// monotone partial derivative within a certified bracket.
  VectorX bisection_dual(VectorX lambda) const {
    VectorX g;
    for (int sweep = 0; sweep < 200; ++sweep) {
      const VectorX before = lambda;
      for (Index i = 0; i < m_; ++i) {
        auto partial = [&](Real v) {
          VectorX l = lambda;
          l(i) = v;
          VectorX gg;
          dual(l, &gg, nullptr);
          return gg(i);
        };
        if (partial(0.0) <= 0) {
          lambda(i) = 0;
          continue;
        }
        Real hi = std::max<Real>(1.0, lambda(i));
        while (partial(hi) > 0) hi *= 2;  // y grows linearly past c, so this terminates
        Real lo = 0;
        for (int b = 0; b < 200 && hi - lo > 1e-15 * (1 + hi); ++b) {
          const Real mid = 0.5 * (lo + hi);
          (partial(mid) > 0 ? lo : hi) = mid;
        }
        lambda(i) = 0.5 * (lo + hi);
      }
      if ((lambda - before).cwiseAbs().maxCoeff() <= 1e-14 * (1 + lambda.cwiseAbs().maxCoeff())) break;
    }
    return lambda;
  }

  Index m_;
  MmaParams par_;
  VectorX xmin_, xmax_;
  MmaState st_;
  MmaApproximation approx_;
};

}  // namespace eapto
