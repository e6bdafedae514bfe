#pragma once

#include "eapto/core.hpp"

#include <atomic>
#include <cmath>

namespace eapto {

/// Constants of one material phase. K, G in MPa; c_e in N/V^2.
struct MaterialPhase {
  Real K = 0;
  Real G = 0;
  Real c_e = 0;
  Real eps_r = 0;
};

/// Void (index 0), electrode (index 1) and EAP (index 2) phases.
struct PhaseTriplet {
  MaterialPhase void_phase;
  MaterialPhase electrode;
  MaterialPhase eap;
  Real eps0 = units::vacuum_permittivity;

  /// EAP K=0.6, G=0.1, c_e=-eps0/2, eps_r=4.7; electrode ten times stiffer with
  /// c_e scaled by 1e5 and no coupling; void 1e-9 times the EAP moduli with
  /// vacuum permittivity only.
  static PhaseTriplet actuator_defaults() {
    const Real e0 = units::vacuum_permittivity;
    PhaseTriplet t;
    t.eap = {0.6, 0.1, -0.5 * e0, 4.7};
    t.electrode = {0.6 * 10, 0.1 * 10, -0.5 * e0 * 1e5, 0.0};
    t.void_phase = {0.6e-9, 0.1e-9, -0.5 * e0, 0.0};
    t.eps0 = e0;
    return t;
  }
};

/// EMI exponents. Index 1 acts on rho1 (void/solid), index 2 on rho2
/// (electrode/EAP). "m" drives K and G, "mel" eps_r, "el" c_e.
struct EmiParams {
  Real q1_m = 1, q1_mel = 2, q1_el = 2;
  Real q2_m = -1, q2_mel = 2, q2_el = -2;

  static EmiParams initial() { return {}; }
  static EmiParams terminal() { return {4, 8, 8, -4, 8, -8}; }
};

namespace diagnostics {
/// Count of densities clamped back into [0,1] before interpolation.
inline std::atomic<long> clamped_densities{0};
}  // namespace diagnostics

namespace detail {
inline Real clamp_unit(Real rho) {
  if (rho < 0 || rho > 1) {
    diagnostics::clamped_densities.fetch_add(1, std::memory_order_relaxed);
    return rho < 0 ? 0.0 : 1.0;
  }
  return rho;
}
}  // namespace detail

/// Exponential material interpolation chi_q(rho) = (e^{q rho} - 1)/(e^q - 1).
inline Real chi(Real q, Real rho) {
  rho = detail::clamp_unit(rho);
  return std::expm1(q * rho) / std::expm1(q);
}

inline Real chi_derivative(Real q, Real rho) {
  rho = detail::clamp_unit(rho);
  return q * std::exp(q * rho) / std::expm1(q);
}

/// Interpolated constants together with their partial derivatives with
/// respect to the two projected densities.
struct InterpolatedPhase {
  MaterialPhase value;
  MaterialPhase d_rho1;
  MaterialPhase d_rho2;
};

namespace detail {
struct Blend {
  Real value, d1, d2;
};

// xi = xi0 + chi1 (-xi0 + xi1 + chi2 (-xi1 + xi2))
inline Blend blend3(Real xi0, Real xi1, Real xi2, Real q1, Real q2, Real r1, Real r2) {
  const Real c1 = chi(q1, r1), c2 = chi(q2, r2);
  const Real inner = -xi0 + xi1 + c2 * (-xi1 + xi2);
  return {xi0 + c1 * inner, chi_derivative(q1, r1) * inner, c1 * chi_derivative(q2, r2) * (-xi1 + xi2)};
}
}  // namespace detail

inline InterpolatedPhase interpolate_phase_with_derivatives(const PhaseTriplet& t, const EmiParams& q, Real rho1,
                                                            Real rho2) {
  const auto& v = t.void_phase;
  const auto& el = t.electrode;
  const auto& ap = t.eap;
  const auto K = detail::blend3(v.K, el.K, ap.K, q.q1_m, q.q2_m, rho1, rho2);
  const auto G = detail::blend3(v.G, el.G, ap.G, q.q1_m, q.q2_m, rho1, rho2);
  const auto ce = detail::blend3(v.c_e, el.c_e, ap.c_e, q.q1_el, q.q2_el, rho1, rho2);
  const auto er = detail::blend3(v.eps_r, el.eps_r, ap.eps_r, q.q1_mel, q.q2_mel, rho1, rho2);
  return {{K.value, G.value, ce.value, er.value}, {K.d1, G.d1, ce.d1, er.d1}, {K.d2, G.d2, ce.d2, er.d2}};
}

inline MaterialPhase interpolate_phase(const PhaseTriplet& t, const EmiParams& q, Real rho1, Real rho2) {
  return interpolate_phase_with_derivatives(t, q, rho1, rho2).value;
}

struct PointKinematics {
  Mat3 F = Mat3::Identity();
  Vec3 E = Vec3::Zero();  ///< material electric field, V/mm
};

/// Energy density, total stress, electric displacement and the three
/// tangents in Voigt form (F flattened row-major, see voigt()).
struct PointResponse {
  Real Omega = 0;
  Mat3 T = Mat3::Zero();
  Vec3 D = Vec3::Zero();
  Mat9 D_mec = Mat9::Zero();
  Mat39 D_mix = Mat39::Zero();
  Mat3 D_elt = Mat3::Zero();
};

namespace detail {

struct Deformation {
  Mat3 F, H, Cinv;  // H = F^{-T}
  Real J, I1;
};

inline Deformation deformation(const Mat3& F, Index element = -1) {
  Deformation d;
  d.F = F;
  d.J = F.determinant();
  if (!(d.J > 0)) throw InvertedElement(element, d.J);
  const Mat3 Finv = F.inverse();
  d.H = Finv.transpose();
  d.Cinv = Finv * Finv.transpose();
  d.I1 = F.squaredNorm();
  return d;
}

// 1/2 K (J-1)^2 + 1/2 G (J^{-2/3} tr C - 3)
inline void add_mechanical(const Deformation& d, Real K, Real G, PointResponse& r) {
  const Mat3& F = d.F;
  const Mat3& H = d.H;
  const Real J = d.J, I1 = d.I1;
  const Real Jm23 = std::pow(J, -2.0 / 3.0);
  r.Omega += 0.5 * K * (J - 1) * (J - 1) + 0.5 * G * (Jm23 * I1 - 3.0);
  r.T += K * (J - 1) * J * H + G * Jm23 * (F - (I1 / 3.0) * H);
  const Real kv1 = K * (2 * J - 1) * J;
  const Real kv2 = K * (J * J - J);
  const Real gi = G * Jm23;
  for (int k = 0; k < 3; ++k)
    for (int L = 0; L < 3; ++L) {
      const Real dev_kL = F(k, L) - I1 / 3.0 * H(k, L);
      for (int m = 0; m < 3; ++m)
        for (int N = 0; N < 3; ++N) {
          Real v = kv1 * H(k, L) * H(m, N) - kv2 * H(k, N) * H(m, L);
          Real iso = -2.0 / 3.0 * H(m, N) * dev_kL - 2.0 / 3.0 * F(m, N) * H(k, L) + I1 / 3.0 * H(k, N) * H(m, L);
          if (k == m && L == N) iso += 1.0;
          r.D_mec(voigt(k, L), voigt(m, N)) += v + gi * iso;
        }
    }
}

// -1/2 eps J E.C^{-1}.E with eps = eps0 eps_r
inline void add_coupled(const Deformation& d, const Vec3& E, Real eps, PointResponse& r) {
  const Mat3& H = d.H;
  const Mat3& Ci = d.Cinv;
  const Real J = d.J;
  const Vec3 e = H * E;     // F^{-T} E
  const Vec3 c = Ci * E;    // C^{-1} E
  const Real s = E.dot(c);  // E.C^{-1}.E
  const Real a = eps * J;
  r.Omega += -0.5 * a * s;
  r.D += a * c;
  r.D_elt += -a * Ci;
  for (int k = 0; k < 3; ++k)
    for (int L = 0; L < 3; ++L) r.T(k, L) += a * (e(k) * c(L) - 0.5 * s * H(k, L));
  for (int k = 0; k < 3; ++k)
    for (int L = 0; L < 3; ++L) {
      const Real TkL = e(k) * c(L) - 0.5 * s * H(k, L);
      for (int m = 0; m < 3; ++m)
        for (int N = 0; N < 3; ++N) {
          const Real v = H(m, N) * TkL - H(k, N) * e(m) * c(L) - e(k) * c(N) * H(m, L) - e(k) * Ci(L, N) * e(m) +
                         e(m) * c(N) * H(k, L) + 0.5 * s * H(k, N) * H(m, L);
          r.D_mec(voigt(k, L), voigt(m, N)) += a * v;
        }
    }
  for (int P = 0; P < 3; ++P)
    for (int m = 0; m < 3; ++m)
      for (int N = 0; N < 3; ++N) r.D_mix(P, voigt(m, N)) += a * (H(m, P) * c(N) + e(m) * Ci(N, P) - c(P) * H(m, N));
}

// c E.E, deformation independent
inline void add_quadratic_field(const Vec3& E, Real ce, PointResponse& r) {
  r.Omega += ce * E.squaredNorm();
  r.D += (-2.0 * ce) * E;
  r.D_elt += (2.0 * ce) * Mat3::Identity();
}

}  // namespace detail

/// Augmented free energy of a solid phase (neo-Hookean split plus the coupled
/// dielectric term and the c_e field term) with its exact derivatives.
inline PointResponse evaluate_solid(const PointKinematics& kin, const MaterialPhase& phase,
                                    Real eps0 = units::vacuum_permittivity, Index element = -1) {
  const auto d = detail::deformation(kin.F, element);
  PointResponse r;
  detail::add_mechanical(d, phase.K, phase.G, r);
  detail::add_coupled(d, kin.E, eps0 * phase.eps_r, r);
  detail::add_quadratic_field(kin.E, phase.c_e, r);
  return r;
}

/// Free-space energy: soft neo-Hookean plus the deformation-independent
/// vacuum term -1/2 eps0 E.E.
inline PointResponse evaluate_void(const PointKinematics& kin, Real K_void, Real G_void,
                                   Real eps0 = units::vacuum_permittivity, Index element = -1) {
  const auto d = detail::deformation(kin.F, element);
  PointResponse r;
  detail::add_mechanical(d, K_void, G_void, r);
  detail::add_quadratic_field(kin.E, -0.5 * eps0, r);
  return r;
}

/// Design-domain point: the solid energy evaluated with EMI-interpolated
/// constants. With the void row (eps_r = 0, c_e = -eps0/2) this reduces to the
/// free-space energy at rho1 = 0, so coupling vanishes there.
inline PointResponse evaluate_design_point(const PointKinematics& kin, const PhaseTriplet& t, const EmiParams& q,
                                           Real rho1, Real rho2, Index element = -1) {
  const MaterialPhase p = interpolate_phase(t, q, rho1, rho2);
  const auto d = detail::deformation(kin.F, element);
  PointResponse r;
  detail::add_mechanical(d, p.K, p.G, r);
  if (p.eps_r != 0) detail::add_coupled(d, kin.E, t.eps0 * p.eps_r, r);
  detail::add_quadratic_field(kin.E, p.c_e, r);
  return r;
}

/// Stress and displacement per unit value of each constant. T and D are
/// linear in (K, G, eps_r, c_e), so design derivatives are combinations of these.
struct ConstantPartials {
  Mat3 T_K, T_G, T_eps_r;
  Vec3 D_eps_r, D_c_e;
};

inline ConstantPartials constant_partials(const PointKinematics& kin, Real eps0 = units::vacuum_permittivity) {
  const auto d = detail::deformation(kin.F);
  ConstantPartials p;
  const Real Jm23 = std::pow(d.J, -2.0 / 3.0);
  p.T_K = (d.J - 1) * d.J * d.H;
  p.T_G = Jm23 * (d.F - (d.I1 / 3.0) * d.H);
  const Vec3 e = d.H * kin.E;
  const Vec3 c = d.Cinv * kin.E;
  const Real s = kin.E.dot(c);
  p.T_eps_r = eps0 * d.J * (e * c.transpose() - 0.5 * s * d.H);
  p.D_eps_r = eps0 * d.J * c;
  p.D_c_e = -2.0 * kin.E;
  return p;
}

}  // namespace eapto
