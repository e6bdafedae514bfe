#include "eapto/material.hpp"

#include "eapto/testing/fd_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace eapto;
using eapto::testing::finite_differences;
using eapto::testing::random_kinematics;
using eapto::testing::rel_err;

namespace {
const PhaseTriplet kTriplet = PhaseTriplet::actuator_defaults();
const Real kEps0 = units::vacuum_permittivity;

Mat3 rotation(Real a, Real b, Real c) {
  return (Eigen::AngleAxis<Real>(a, Vec3::UnitZ()) * Eigen::AngleAxis<Real>(b, Vec3::UnitY()) *
          Eigen::AngleAxis<Real>(c, Vec3::UnitX()))
      .toRotationMatrix();
}
}  // namespace

TEST(Emi, Endpoints) {
  for (Real q : {-8.0, -1.0, 1e-3, 2.0, 8.0}) {
    EXPECT_EQ(chi(q, 0.0), 0.0);
    EXPECT_DOUBLE_EQ(chi(q, 1.0), 1.0);
  }
}

// Reference from tests/oracles/scalar_values.py (40-digit arithmetic).
TEST(Emi, ClosedFormValue) { EXPECT_NEAR(chi(2.0, 0.5), 0.2689414213699951207, 1e-15); }

TEST(Emi, SymmetryUnderPhaseSwap) {
  for (Real q : {-8.0, -2.0, -0.5, 0.5, 1.0, 4.0, 8.0})
    for (int i = 0; i <= 20; ++i) {
      const Real r = i / 20.0;
      EXPECT_NEAR(chi(q, r), 1.0 - chi(-q, 1.0 - r), 1e-14);
    }
}

TEST(Emi, MonotoneAndLinearLimit) {
  for (Real q : {-4.0, 2.0, 8.0}) {
    Real prev = -1;
    for (int i = 0; i <= 100; ++i) {
      const Real v = chi(q, i / 100.0);
      EXPECT_GT(v, prev);
      prev = v;
    }
  }
  for (int i = 0; i <= 10; ++i) EXPECT_NEAR(chi(1e-6, i / 10.0), i / 10.0, 1e-5);
}

TEST(Emi, DerivativeMatchesDifference) {
  for (Real q : {-8.0, 2.0, 4.0})
    for (Real r : {0.1, 0.5, 0.9}) {
      const Real h = 1e-6;
      EXPECT_NEAR(chi_derivative(q, r), (chi(q, r + h) - chi(q, r - h)) / (2 * h), 1e-7);
    }
}

TEST(Interpolation, PhaseEndpoints) {
  const EmiParams q = EmiParams::initial();
  const auto vd = interpolate_phase(kTriplet, q, 0.0, 0.37);
  EXPECT_EQ(vd.K, kTriplet.void_phase.K);
  EXPECT_EQ(vd.G, kTriplet.void_phase.G);
  EXPECT_EQ(vd.c_e, kTriplet.void_phase.c_e);
  EXPECT_EQ(vd.eps_r, kTriplet.void_phase.eps_r);
  const auto eap = interpolate_phase(kTriplet, q, 1.0, 1.0);
  EXPECT_NEAR(eap.K, 0.6, 1e-15);
  EXPECT_NEAR(eap.G, 0.1, 1e-15);
  EXPECT_NEAR(eap.eps_r, 4.7, 1e-14);
  EXPECT_NEAR(eap.c_e, -0.5 * kEps0, 1e-15 * kEps0);
  const auto el = interpolate_phase(kTriplet, q, 1.0, 0.0);
  EXPECT_NEAR(el.K, 6.0, 1e-14);
  EXPECT_NEAR(el.G, 1.0, 1e-15);
  EXPECT_NEAR(el.c_e, -0.5 * kEps0 * 1e5, 1e-10 * kEps0);
  EXPECT_EQ(el.eps_r, 0.0);
}

TEST(Interpolation, DensityDerivatives) {
  const EmiParams q = EmiParams::terminal();
  const Real h = 1e-7;
  for (Real r1 : {0.2, 0.7})
    for (Real r2 : {0.3, 0.8}) {
      const auto d = interpolate_phase_with_derivatives(kTriplet, q, r1, r2);
      const auto p1 = interpolate_phase(kTriplet, q, r1 + h, r2), m1 = interpolate_phase(kTriplet, q, r1 - h, r2);
      const auto p2 = interpolate_phase(kTriplet, q, r1, r2 + h), m2 = interpolate_phase(kTriplet, q, r1, r2 - h);
      EXPECT_NEAR(d.d_rho1.K, (p1.K - m1.K) / (2 * h), 1e-6);
      EXPECT_NEAR(d.d_rho2.G, (p2.G - m2.G) / (2 * h), 1e-6);
      EXPECT_NEAR(d.d_rho1.eps_r, (p1.eps_r - m1.eps_r) / (2 * h), 1e-5);
      EXPECT_NEAR(d.d_rho2.c_e / kEps0, (p2.c_e - m2.c_e) / (2 * h) / kEps0, 1e-2);
    }
}

TEST(Material, StressFreeReference) {
  const PointKinematics k;
  const auto r = evaluate_solid(k, kTriplet.eap);
  EXPECT_NEAR(r.Omega, 0.0, 1e-15);
  EXPECT_LT(r.T.norm(), 1e-15);
  EXPECT_EQ(r.D.norm(), 0.0);
}

TEST(Material, DielectricResponseOfEap) {
  PointKinematics k;
  k.E = Vec3(0, 0, 1500.0);
  const auto r = evaluate_solid(k, kTriplet.eap);
  const Vec3 expected = kEps0 * (4.7 + 1.0) * k.E;
  EXPECT_LT((r.D - expected).norm(), 1e-12 * expected.norm());
  // Also equals minus the numerical E-gradient of Omega.
  const auto fd = finite_differences([](const PointKinematics& p) { return evaluate_solid(p, kTriplet.eap); }, k);
  EXPECT_LT(rel_err(fd.D, r.D), 1e-8);
}

TEST(Material, SolidDerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  for (int n = 0; n < 100; ++n) {
    const MaterialPhase& ph = n % 2 ? kTriplet.eap : kTriplet.electrode;
    const Real emax = n % 3 == 0 ? 5.0 : 3.0e4;
    const auto k = random_kinematics(rng, 0.7, 1.4, emax);
    const auto f = [&](const PointKinematics& p) { return evaluate_solid(p, ph); };
    const auto r = f(k);
    const auto fd = finite_differences(f, k);
    EXPECT_LT(rel_err(fd.T, r.T), 1e-6);
    EXPECT_LT(rel_err(fd.D, r.D), 1e-6);
    EXPECT_LT(rel_err(fd.D_mec, r.D_mec), 1e-6);
    EXPECT_LT(rel_err(fd.D_elt, r.D_elt), 1e-6);
    if (ph.eps_r != 0) EXPECT_LT(rel_err(fd.D_mix, r.D_mix), 1e-6);
  }
}

// The electric coupling alone, without mechanical terms masking its scale.
TEST(Material, CoupledTermDerivatives) {
  std::mt19937_64 rng(11);
  const MaterialPhase pure{0.0, 0.0, 0.0, 4.7};
  for (int n = 0; n < 50; ++n) {
    const auto k = random_kinematics(rng, 0.7, 1.4, 2.0e4);
    const auto f = [&](const PointKinematics& p) { return evaluate_solid(p, pure); };
    const auto r = f(k);
    const auto fd = finite_differences(f, k);
    EXPECT_LT(rel_err(fd.T, r.T), 1e-6);
    EXPECT_LT(rel_err(fd.D_mec, r.D_mec), 1e-6);
    EXPECT_LT(rel_err(fd.D_mix, r.D_mix), 1e-6);
  }
}

TEST(Material, TangentSymmetries) {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 20; ++n) {
    const auto k = random_kinematics(rng, 0.7, 1.4, 1e4);
    const auto r = evaluate_solid(k, kTriplet.eap);
    EXPECT_LT((r.D_elt - r.D_elt.transpose()).norm(), 1e-14 * r.D_elt.norm());
    EXPECT_LT((r.D_mec - r.D_mec.transpose()).norm(), 1e-13 * r.D_mec.norm());
  }
}

TEST(Material, MechanicalFrameIndifference) {
  std::mt19937_64 rng(5);
  for (int n = 0; n < 20; ++n) {
    auto k = random_kinematics(rng, 0.7, 1.4, 0.0);
    const Real w = evaluate_solid(k, kTriplet.eap).Omega;
    k.F = rotation(0.3 * n, -0.2 * n, 0.1 * n + 0.4) * k.F;
    EXPECT_NEAR(evaluate_solid(k, kTriplet.eap).Omega, w, 1e-13);
  }
}

TEST(Material, InvertedElementSignalled) {
  PointKinematics k;
  k.F(2, 2) = -0.5;
  EXPECT_THROW(evaluate_solid(k, kTriplet.eap), InvertedElement);
  EXPECT_THROW(evaluate_void(k, 1e-10, 1e-10), InvertedElement);
}

TEST(Void, VacuumResponse) {
  PointKinematics k;
  k.E = Vec3(250.0, 0, 0);
  const auto r = evaluate_void(k, kTriplet.void_phase.K, kTriplet.void_phase.G);
  EXPECT_EQ(r.D(0), kEps0 * 250.0);
  EXPECT_EQ(r.D(1), 0.0);
  EXPECT_EQ(r.D(2), 0.0);
}

TEST(Void, DisplacementIndependentOfDeformation) {
  std::mt19937_64 rng(9);
  PointKinematics base;
  base.E = Vec3(10, -20, 5);
  const Vec3 D0 = evaluate_void(base, 1e-10, 1e-10).D;
  for (int n = 0; n < 20; ++n) {
    auto k = random_kinematics(rng, 0.5, 2.0, 0.0);
    k.E = base.E;
    const auto r = evaluate_void(k, 1e-10, 1e-10);
    EXPECT_EQ(r.D, D0);
    EXPECT_EQ(r.D_mix, Mat39::Zero());
  }
}

TEST(DesignPoint, VoidEndpointIsBitIdentical) {
  std::mt19937_64 rng(13);
  for (int n = 0; n < 20; ++n) {
    const auto k = random_kinematics(rng, 0.7, 1.4, 1e4);
    const auto a = evaluate_design_point(k, kTriplet, EmiParams::initial(), 0.0, 0.6);
    const auto b = evaluate_void(k, kTriplet.void_phase.K, kTriplet.void_phase.G);
    EXPECT_EQ(a.Omega, b.Omega);
    EXPECT_EQ(a.T, b.T);
    EXPECT_EQ(a.D, b.D);
    EXPECT_EQ(a.D_mec, b.D_mec);
    EXPECT_EQ(a.D_mix, b.D_mix);
    EXPECT_EQ(a.D_elt, b.D_elt);
  }
}

TEST(DesignPoint, EapEndpoint) {
  std::mt19937_64 rng(17);
  for (int n = 0; n < 20; ++n) {
    const auto k = random_kinematics(rng, 0.7, 1.4, 1e4);
    const auto a = evaluate_design_point(k, kTriplet, EmiParams::terminal(), 1.0, 1.0);
    const auto b = evaluate_solid(k, kTriplet.eap);
    EXPECT_LT(rel_err(a.T, b.T), 1e-14);
    EXPECT_LT(rel_err(a.D, b.D), 1e-14);
    EXPECT_LT(rel_err(a.D_mec, b.D_mec), 1e-14);
    EXPECT_LT(rel_err(a.D_mix, b.D_mix), 1e-14);
  }
}

TEST(DesignPoint, IntermediateTangentsMatchFiniteDifferences) {
  std::mt19937_64 rng(19);
  for (int n = 0; n < 30; ++n) {
    const auto k = random_kinematics(rng, 0.7, 1.4, 2e4);
    const auto f = [](const PointKinematics& p) {
      return evaluate_design_point(p, kTriplet, EmiParams::initial(), 0.5, 0.5);
    };
    const auto r = f(k);
    const auto fd = finite_differences(f, k);
    EXPECT_LT(rel_err(fd.T, r.T), 1e-6);
    EXPECT_LT(rel_err(fd.D, r.D), 1e-6);
    EXPECT_LT(rel_err(fd.D_mec, r.D_mec), 1e-6);
    EXPECT_LT(rel_err(fd.D_mix, r.D_mix), 1e-6);
    EXPECT_LT(rel_err(fd.D_elt, r.D_elt), 1e-6);
  }
}

TEST(DesignPoint, ConstantPartialsRecombine) {
  std::mt19937_64 rng(23);
  const auto k = random_kinematics(rng, 0.8, 1.2, 1e4);
  const auto p = constant_partials(k);
  const MaterialPhase ph = interpolate_phase(kTriplet, EmiParams::initial(), 0.4, 0.3);
  const auto r = evaluate_solid(k, ph);
  const Mat3 T = ph.K * p.T_K + ph.G * p.T_G + ph.eps_r * p.T_eps_r;
  const Vec3 D = ph.eps_r * p.D_eps_r + ph.c_e * p.D_c_e;
  EXPECT_LT(rel_err(T, r.T), 1e-13);
  EXPECT_LT(rel_err(D, r.D), 1e-13);
}
