#pragma once
// Self-check battery: constitutive derivatives, dielectric response, adjoint
// sensitivities, regularization properties and MMA against independent
// oracles. Used by `eapto verify` and the acceptance binary.

#include "eapto/actuator.hpp"
#include "eapto/material.hpp"
#include "eapto/mma.hpp"
#include "eapto/regularization.hpp"
#include "eapto/sensitivity.hpp"
#include "eapto/testing/fd_oracle.hpp"
#include "eapto/testing/qp_oracle.hpp"

#include <chrono>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace eapto::verify {

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  Real seconds = 0;
};

namespace detail {

inline CheckResult timed(int id, std::string name, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{id, std::move(name)};
  try {
    auto [ok, detail] = body();
    r.passed = ok;
    r.detail = std::move(detail);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline std::string fmt(Real v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

}  // namespace detail

/// 100 random states with J in [0.7, 1.4] and |E| <= 5 V/mm: T, D and the
/// three tangents against central differences of Omega, T and D.
inline CheckResult constitutive_consistency() {
  return detail::timed(1, "constitutive consistency", [] {
    const PhaseTriplet tri = PhaseTriplet::actuator_defaults();
    std::mt19937_64 rng(101);
    Real worst = 0;
    for (int n = 0; n < 100; ++n) {
      const MaterialPhase& ph = n % 2 ? tri.eap : tri.electrode;
      const auto k = testing::random_kinematics(rng, 0.7, 1.4, 5.0);
      const auto f = [&](const PointKinematics& p) { return evaluate_solid(p, ph); };
      const auto r = f(k);
      const auto fd = testing::finite_differences(f, k);
      worst = std::max({worst, testing::rel_err(fd.T, r.T), testing::rel_err(fd.D, r.D),
                        testing::rel_err(fd.D_mec, r.D_mec), testing::rel_err(fd.D_elt, r.D_elt)});
      if (ph.eps_r != 0) worst = std::max(worst, testing::rel_err(fd.D_mix, r.D_mix));
    }
    return std::pair{worst < 1e-6, "max relative error " + detail::fmt(worst) + " (< 1e-6)"};
  });
}

/// A unit EAP cube at F = I in a uniform field: D = eps0 (eps_r + 1) E at every
/// Gauss point, and the assembled nodal charges equal its face integrals.
inline CheckResult dielectric_sanity() {
  return detail::timed(2, "dielectric sanity", [] {
    MeshSpec s;
    s.design_nx = s.design_ny = 1;
    s.freespace_extent_factor = 1.0;
    const Mesh m = build_mesh(s);
    const PhaseTriplet tri = PhaseTriplet::actuator_defaults();
    const Real eps0 = units::vacuum_permittivity, E0 = 1500.0;
    PointKinematics k;
    k.E = Vec3(E0, 0, 0);
    const Vec3 expected = eps0 * (tri.eap.eps_r + 1) * k.E;
    Real worst = (evaluate_solid(k, tri.eap).D - expected).norm() / expected.norm();

    BoundaryConditions bc;
    for (const auto& n : m.nodes) {
      for (int d = 0; d < 3; ++d) bc.prescribed.push_back({{n.id, d}, 0.0});
      if (n.X.x() == 0) bc.prescribed.push_back({{n.id, potential_dof}, 0.0});
    }
    const StateProblem prob(m, bc);
    SolutionState st = SolutionState::zero(m.n_nodes());
    for (const auto& n : m.nodes) st.a(global_dof(n.id, potential_dof)) = -E0 * n.X.x();
    const auto sys = prob.assemble(st, MaterialField::uniform(m, 1.0, 1.0));
    const Real q = expected.x() / 4;  // each of the four x = 1 nodes carries a quarter of D_x * area
    for (Index i = 0; i < sys.r.size(); ++i) worst = std::max(worst, std::abs(sys.r(i) + q) / q);
    return std::pair{worst < 1e-12, "relative deviation " + detail::fmt(worst) + " (< 1e-12)"};
  });
}

/// Adjoint gradient of the scaled, penalized objective against central
/// differences on an 8x8 actuator with free space.
inline CheckResult adjoint_correctness() {
  return detail::timed(3, "adjoint correctness", [] {
    ProblemConfig c;
    c.mesh.design_nx = c.mesh.design_ny = 8;
    c.mesh.freespace_extent_factor = 3.0;
    c.newton.rel_tol = 1e-13;
    const ActuatorProblem act = build_actuator(c);
    const ProjectionParams proj{2.5, 0.5};
    const EmiParams emi{2.0, 3.0, 3.5, -2.0, 3.0, -3.0};
    const PenaltyParams pen{0.7, 0.6, 1e-9};
    const Index n = act.mesh->n_design();
    std::mt19937_64 rng(303);
    std::uniform_real_distribution<Real> u(0.2, 0.9);
    VectorX r1(n), r2(n);
    for (Index i = 0; i < n; ++i) r1(i) = u(rng), r2(i) = u(rng);

    const auto d = regularize(act.filter, r1, r2, proj);
    const auto mat = material_field(d, c.phases, emi);
    const SolutionState base = solve_state(*act.state, mat, nullptr, c.newton);
    const VectorX mu = solve_adjoint(*act.state, base, act.l);
    const auto grad = objective_gradient(*act.state, act.filter, base, mu, d, mat, act.l, pen, c.scaling);
    auto value = [&](const VectorX& a1, const VectorX& a2) {
      const auto dd = regularize(act.filter, a1, a2, proj);
      const auto mm = material_field(dd, c.phases, emi);
      const auto s = solve_state(*act.state, mm, &base, c.newton);
      return c.scaling.value(extract_objective(s, act.l)) +
             pen.a_d * (penalty(act.filter, dd.field1.bar_gauss, pen) + penalty(act.filter, dd.field2.bar_gauss, pen));
    };
    std::uniform_int_distribution<Index> pick(0, n - 1);
    const Real h = 1e-5;
    Real worst = 0;
    for (int field = 0; field < 2; ++field)
      for (int t = 0; t < 10; ++t) {
        const Index k = pick(rng);
        VectorX a1 = r1, a2 = r2, b1 = r1, b2 = r2;
        (field == 0 ? a1 : a2)(k) += h;
        (field == 0 ? b1 : b2)(k) -= h;
        const Real fd = (value(a1, a2) - value(b1, b2)) / (2 * h);
        const Real an = field == 0 ? grad.d_rho1(k) : grad.d_rho2(k);
        worst = std::max(worst, std::abs(fd - an) / std::abs(fd));
      }
    return std::pair{worst < 1e-4, "max relative error " + detail::fmt(worst) + " over 20 variables (< 1e-4)"};
  });
}

/// Filter volume conservation and fixed point, projection endpoints, EMI
/// symmetry and the penalty peak.
inline CheckResult regularization_properties() {
  return detail::timed(4, "filter/projection/penalty properties", [] {
    MeshSpec s;
    s.design_nx = s.design_ny = 12;
    s.thickness = 1.0 / 12;
    s.freespace_extent_factor = 2.0;
    const Mesh m = build_mesh(s);
    const FilterOperator op = build_filter(m, 0.1);
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<Real> u(0, 1);
    VectorX rho(m.n_design());
    for (Index i = 0; i < rho.size(); ++i) rho(i) = u(rng);
    const VectorX gp = to_gauss_points(op, apply_filter(op, rho));
    Real v_in = 0, v_out = 0;
    for (Index g = 0; g < gp.size(); ++g) {
      v_out += op.gauss_weight[g] * gp(g);
      v_in += op.gauss_weight[g] * rho(g / 8);
    }
    const Real vol_err = std::abs(v_out - v_in);
    const Real fix_err = (apply_filter(op, VectorX::Constant(m.n_design(), 0.3)).array() - 0.3).abs().maxCoeff();
    bool ends = true;
    for (Real b : {1.0, 8.0, 20.0})
      for (Real eta : {0.3, 0.5, 0.7}) ends = ends && project(0.0, {b, eta}) == 0.0 && project(1.0, {b, eta}) == 1.0;
    Real chi_err = 0;
    for (Real q : {-8.0, -2.0, 0.5, 4.0, 8.0})
      for (int i = 0; i <= 20; ++i) chi_err = std::max(chi_err, std::abs(chi(q, i / 20.0) - (1 - chi(-q, 1 - i / 20.0))));
    const Real peak = std::abs(penalty(op, VectorX::Constant(op.n_gauss(), 0.5), {1.0, 0.7, 1e-12}) - 1.0);
    const bool ok = vol_err < 1e-10 && fix_err < 1e-12 && ends && chi_err < 1e-14 && peak < 1e-6;
    return std::pair{ok, "volume " + detail::fmt(vol_err) + ", fixed point " + detail::fmt(fix_err) +
                             ", H endpoints " + (ends ? "exact" : "inexact") + ", chi symmetry " +
                             detail::fmt(chi_err) + ", penalty peak " + detail::fmt(peak)};
  });
}

/// The analytic MMA subproblems and the random-QP battery.
inline CheckResult mma_library() {
  return detail::timed(5, "MMA library", [] {
    std::ostringstream msg;
    bool ok = true;
    {
      Mma mma(VectorX::Constant(1, 0.9), 0);
      for (int it = 0; it < 30; ++it) {
        const Real x = mma.state().x(0);
        mma.update((x - 0.3) * (x - 0.3), VectorX::Constant(1, 2 * (x - 0.3)), VectorX(0), Eigen::MatrixXd(0, 1));
      }
      const Real e = std::abs(mma.state().x(0) - 0.3);
      ok = ok && e < 1e-4;
      msg << "quadratic " << detail::fmt(e);
    }
    {
      Mma mma(VectorX::Constant(2, 0.1), 1);
      for (int it = 0; it < 100; ++it) {
        const VectorX x = mma.state().x;
        mma.update(-x.sum(), VectorX::Constant(2, -1.0), VectorX::Constant(1, x.sum() - 1), Eigen::MatrixXd::Ones(1, 2));
      }
      const Real e = std::abs(mma.state().x.sum() - 1);
      ok = ok && e < 1e-4;
      msg << ", active constraint " << detail::fmt(e);
    }
    std::mt19937_64 rng(505);
    Real kkt = 0, kkt_fixed = 0;
    int cycling = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
      const auto qp = testing::random_qp(rng, 20);
      const auto [xs, lambda] = qp.solve();
      Mma mma(VectorX::Constant(20, 0.5), 1);
      for (int it = 0; it < 400; ++it) {
        const VectorX x = mma.state().x;
        mma.update(qp.value(x), qp.grad(x), VectorX::Constant(1, qp.a.dot(x) - qp.b), qp.a.transpose());
      }
      const Real r = qp.kkt_residual(mma.state().x, lambda);
      kkt = std::max(kkt, r);
      if ((mma.state().x - mma.state().x_old1).cwiseAbs().maxCoeff() < 1e-12)
        kkt_fixed = std::max(kkt_fixed, r);
      else
        ++cycling;
    }
    ok = ok && kkt < 1e-6;
    msg << ", random QP KKT " << detail::fmt(kkt) << " (" << cycling << "/" << trials
        << " in a 2-cycle at the asymptote floor; KKT at fixed points " << detail::fmt(kkt_fixed) << ")";
    return std::pair{ok, msg.str()};
  });
}

inline std::vector<CheckResult> run_battery() {
  return {constitutive_consistency(), dielectric_sanity(), adjoint_correctness(), regularization_properties(),
          mma_library()};
}

}  // namespace eapto::verify
