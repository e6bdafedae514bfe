#pragma once

#include "eapto/fem.hpp"
#include "eapto/regularization.hpp"

#include <cmath>

namespace eapto {

/// Both regularized density fields of one design iterate.
struct DesignState {
  FieldChain field1;  ///< solid (rho1 = 1) versus void
  FieldChain field2;  ///< EAP (rho2 = 1) versus electrode
  ProjectionParams projection;
};

inline DesignState regularize(const FilterOperator& op, const VectorX& rho1, const VectorX& rho2,
                              const ProjectionParams& p) {
  return {forward(op, rho1, p), forward(op, rho2, p), p};
}

inline MaterialField material_field(const DesignState& d, const PhaseTriplet& phases, const EmiParams& emi) {
  MaterialField m;
  m.phases = phases;
  m.emi = emi;
  m.rho1_bar = d.field1.bar_gauss;
  m.rho2_bar = d.field2.bar_gauss;
  return m;
}

/// g0_hat = a1 asinh(a2 g0); brings displacements spanning many decades to an
/// O(1..100) range for MMA.
struct ObjectiveScaling {
  Real a1 = 10.0;
  Real a2 = 1e7;

  Real value(Real g0) const { return a1 * std::asinh(a2 * g0); }
  Real derivative(Real g0) const { return a1 * a2 / std::sqrt(1 + (a2 * g0) * (a2 * g0)); }
};

/// Solves K mu = l with the tangent factorized at the converged state. K is
/// symmetric, so this is also the transposed system. Prescribed entries of mu
/// are zero.
inline VectorX solve_adjoint(const StateProblem& prob, const SolutionState& state, const VectorX& l) {
  if (!state.tangent || !state.tangent->factorized()) throw LinearSolverError("state carries no factorized tangent");
  if (l.size() != prob.dofs().n_dofs) throw Error("objective vector has the wrong size");
  VectorX mu = VectorX::Zero(prob.dofs().n_dofs);
  const VectorX lf = prob.dofs().restrict(l);
  if (lf.norm() == 0) return mu;
  prob.set_free(mu, state.tangent->solve(lf));
  return mu;
}

struct ObjectiveGradient {
  Real g0 = 0;
  Real g0_hat = 0;
  Real g0_bar = 0;
  Real penalty1 = 0, penalty2 = 0;
  VectorX d_rho1, d_rho2;  ///< d g0_bar / d rho per design element
};

/// g0_bar = a1 asinh(a2 g0) + a_d (d(rho1_bar) + d(rho2_bar)) and its gradient
/// with respect to both raw fields.
inline ObjectiveGradient objective_gradient(const StateProblem& prob, const FilterOperator& op,
                                            const SolutionState& state, const VectorX& mu, const DesignState& design,
                                            const MaterialField& mat, const VectorX& l, const PenaltyParams& pen,
                                            const ObjectiveScaling& scale = {}) {
  ObjectiveGradient out;
  out.g0 = extract_objective(state, l);
  out.g0_hat = scale.value(out.g0);
  out.penalty1 = penalty(op, design.field1.bar_gauss, pen);
  out.penalty2 = penalty(op, design.field2.bar_gauss, pen);
  out.g0_bar = out.g0_hat + pen.a_d * (out.penalty1 + out.penalty2);

  // dg0/drho_bar = -mu^T d(f_int)/d(rho_bar) at equilibrium.
  auto [c1, c2] = prob.design_contraction(state, mat, mu);
  const Real chain = scale.derivative(out.g0);
  VectorX up1 = -chain * c1, up2 = -chain * c2;
  if (pen.a_d != 0) {
    up1 += pen.a_d * penalty_gradient(op, design.field1.bar_gauss, pen);
    up2 += pen.a_d * penalty_gradient(op, design.field2.bar_gauss, pen);
  }
  out.d_rho1 = backprop(op, design.projection, design.field1.tilde_gauss, up1);
  out.d_rho2 = backprop(op, design.projection, design.field2.tilde_gauss, up2);
  return out;
}

struct VolumeConstraints {
  Real V1 = 0, V2 = 0;  ///< electrode and EAP volumes
  Real g1 = 0, g2 = 0;  ///< 10 (V_j / (alpha_j V_DD) - 1)
  VectorX dg1_rho1, dg1_rho2, dg2_rho1, dg2_rho2;
};

inline VolumeConstraints volume_and_gradients(const FilterOperator& op, const DesignState& d, Real alpha1,
                                              Real alpha2, Real scale = 10.0) {
  const VectorX& r1 = d.field1.bar_gauss;
  const VectorX& r2 = d.field2.bar_gauss;
  const Index n = r1.size();
  VolumeConstraints v;
  VectorX a11(n), a12(n), a21(n), a22(n);
  for (Index i = 0; i < n; ++i) {
    const Real w = op.gauss_weight[static_cast<std::size_t>(i)];
    v.V1 += w * r1(i) * (1 - r2(i));
    v.V2 += w * r1(i) * r2(i);
    a11(i) = w * (1 - r2(i));
    a12(i) = -w * r1(i);
    a21(i) = w * r2(i);
    a22(i) = w * r1(i);
  }
  const Real c1 = scale / (alpha1 * op.design_volume), c2 = scale / (alpha2 * op.design_volume);
  v.g1 = c1 * v.V1 - scale;
  v.g2 = c2 * v.V2 - scale;
  const auto& p = d.projection;
  v.dg1_rho1 = backprop(op, p, d.field1.tilde_gauss, c1 * a11);
  v.dg1_rho2 = backprop(op, p, d.field2.tilde_gauss, c1 * a12);
  v.dg2_rho1 = backprop(op, p, d.field1.tilde_gauss, c2 * a21);
  v.dg2_rho2 = backprop(op, p, d.field2.tilde_gauss, c2 * a22);
  return v;
}

}  // namespace eapto
