#pragma once
// Central finite-difference oracles shared by the unit tests and the verify battery.
// These only call the energy/stress/displacement values of a material point,
// never its analytic tangents.

#include "eapto/material.hpp"

#include <functional>
#include <random>

namespace eapto::testing {

using PointFn = std::function<PointResponse(const PointKinematics&)>;

inline Real rel_err(const auto& approx, const auto& exact) {
  const Real scale = exact.norm();
  const Real diff = (approx - exact).norm();
  return scale > 0 ? diff / scale : diff;
}

struct FdDerivatives {
  Mat3 T;       // dOmega/dF
  Vec3 D;       // -dOmega/dE
  Mat9 D_mec;   // dT/dF
  Mat39 D_mix;  // dT/dE  (as d/dE_P of T_mN)
  Mat3 D_elt;   // -dD/dE
};

/// Omega is exactly quadratic in E at fixed F, so E-steps can be large
/// without truncation error; F-steps are small and relative.
inline FdDerivatives finite_differences(const PointFn& f, const PointKinematics& kin, Real hF = 1e-6,
                                        Real hE = -1) {
  // A large step keeps the field terms above round-off of the mechanical ones.
  if (hE <= 0) hE = std::max<Real>(1e4, 0.5 * kin.E.norm());
  FdDerivatives fd;
  for (int i = 0; i < 3; ++i)
    for (int J = 0; J < 3; ++J) {
      PointKinematics p = kin, m = kin;
      p.F(i, J) += hF;
      m.F(i, J) -= hF;
      const auto rp = f(p), rm = f(m);
      fd.T(i, J) = (rp.Omega - rm.Omega) / (2 * hF);
      const Mat3 dT = (rp.T - rm.T) / (2 * hF);
      for (int k = 0; k < 3; ++k)
        for (int L = 0; L < 3; ++L) fd.D_mec(voigt(k, L), voigt(i, J)) = dT(k, L);
    }
  for (int P = 0; P < 3; ++P) {
    PointKinematics p = kin, m = kin;
    p.E(P) += hE;
    m.E(P) -= hE;
    const auto rp = f(p), rm = f(m);
    fd.D(P) = -(rp.Omega - rm.Omega) / (2 * hE);
    const Mat3 dT = (rp.T - rm.T) / (2 * hE);
    for (int k = 0; k < 3; ++k)
      for (int L = 0; L < 3; ++L) fd.D_mix(P, voigt(k, L)) = dT(k, L);
    const Vec3 dD = (rp.D - rm.D) / (2 * hE);
    fd.D_elt.col(P) = -dD;
  }
  return fd;
}

/// Random deformation with det F in [jmin, jmax] and field magnitude up to emax.
inline PointKinematics random_kinematics(std::mt19937_64& rng, Real jmin, Real jmax, Real emax) {
  std::uniform_real_distribution<Real> u(-1.0, 1.0), uj(jmin, jmax), ue(0.0, 1.0);
  PointKinematics k;
  for (;;) {
    Mat3 F = Mat3::Identity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) F(i, j) += 0.3 * u(rng);
    const Real J = F.determinant();
    if (J <= 0.2) continue;
    k.F = F * std::cbrt(uj(rng) / J);
    break;
  }
  Vec3 dir(u(rng), u(rng), u(rng));
  if (dir.norm() < 1e-3) dir = Vec3::UnitX();
  k.E = dir.normalized() * (emax * ue(rng));
  return k;
}

}  // namespace eapto::testing
