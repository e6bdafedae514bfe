#pragma once

#include "eapto/config.hpp"
#include "eapto/material.hpp"
#include "eapto/regularization.hpp"

#include <algorithm>
#include <cmath>

namespace eapto {

/// Continuation values as pure functions of the iteration index. With
/// time_scale s, iteration k behaves like iteration k * s of the reference
/// schedule, so a compressed run visits the same parameter sequence.
class Schedule {
public:
  explicit Schedule(ScheduleParams p = {}) : p_(p) {}

  const ScheduleParams& params() const { return p_; }

  Real effective(int k) const { return static_cast<Real>(k) * p_.time_scale; }

  int steps(int k) const { return static_cast<int>(std::floor(effective(k) / p_.period + 1e-12)); }

  Real beta(int k) const { return std::min(p_.beta_max, p_.beta_init * std::pow(p_.beta_factor, steps(k))); }

  ProjectionParams projection(int k) const { return {beta(k), p_.eta}; }

  EmiParams emi(int k) const {
    const Real f = std::pow(p_.emi_factor, steps(k));
    auto grow = [f](Real q0, Real q1) {
      const Real mag = std::min(std::abs(q1), std::abs(q0) * f);
      return std::copysign(mag, q0);
    };
    const auto &a = p_.emi_initial, &b = p_.emi_final;
    return {grow(a.q1_m, b.q1_m), grow(a.q1_mel, b.q1_mel), grow(a.q1_el, b.q1_el),
            grow(a.q2_m, b.q2_m), grow(a.q2_mel, b.q2_mel), grow(a.q2_el, b.q2_el)};
  }

  Real alpha(int k) const {
    const Real t = effective(k);
    if (t < p_.penalty_start) return p_.alpha_init;
    const int n = static_cast<int>(std::floor((t - p_.penalty_start) / p_.period + 1e-12));
    return std::max(p_.alpha_min, p_.alpha_init - n * p_.alpha_step);
  }

  bool penalty_active(int k) const { return effective(k) >= p_.penalty_start; }

  /// True when a_d is due for a refresh at iteration k: the first iteration at
  /// or past each multiple of ad_period inside [penalty_start, penalty_end].
  bool ad_update_due(int k) const {
    const Real t = effective(k);
    if (t < p_.penalty_start) return false;
    const Real prev = k > 0 ? effective(k - 1) : -1.0;
    for (int m = p_.penalty_start; m <= p_.penalty_end; m += p_.ad_period)
      if (prev < m && t >= m) return true;
    return false;
  }

  /// beta and all q have reached their terminal values.
  bool continuation_complete(int k) const {
    const EmiParams e = emi(k), f = p_.emi_final;
    return beta(k) >= p_.beta_max && e.q1_m == f.q1_m && e.q1_mel == f.q1_mel && e.q1_el == f.q1_el &&
           e.q2_m == f.q2_m && e.q2_mel == f.q2_mel && e.q2_el == f.q2_el;
  }

  /// Convergence is not declared before effective iteration converge_after.
  bool may_converge(int k) const { return effective(k) >= p_.converge_after; }

private:
  ScheduleParams p_;
};

}  // namespace eapto
