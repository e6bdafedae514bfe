#pragma once

#include "eapto/core.hpp"
#include "eapto/hex8.hpp"
#include "eapto/linear_solver.hpp"
#include "eapto/material.hpp"
#include "eapto/mesh.hpp"
#include "eapto/parallel.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <vector>

namespace eapto {

inline Index global_dof(Index node, int dof) { return dofs_per_node * node + dof; }
inline Index global_dof(const DofRef& r) { return global_dof(r.node, r.dof); }

struct PrescribedDof {
  DofRef dof;
  Real value = 0;
};

struct Spring {
  Index node = 0;
  int dof = 0;
  Real stiffness = 0;
};

/// Dirichlet data and grounded port springs. Neumann data is identically zero.
struct BoundaryConditions {
  std::vector<PrescribedDof> prescribed;
  std::vector<Spring> springs;
  /// (follower, leader) node pairs whose free dofs share one equation. Used
  /// to merge the two layers of a plane-strain slab, whose solution is
  /// mirror-symmetric through the thickness.
  std::vector<std::pair<Index, Index>> node_ties;

  void fix(const std::vector<DofRef>& dofs, Real value = 0) {
    for (const auto& d : dofs) prescribed.push_back({d, value});
  }
};

/// Equation numbers of the free dofs; -1 marks prescribed ones. Tied dofs
/// share the equation of their leader.
struct DofMap {
  Index n_dofs = 0;
  Index n_free = 0;
  std::vector<Index> eq;            ///< global dof -> free equation or -1
  std::vector<Index> free_dofs;     ///< free equation -> leading global dof
  std::vector<Index> fixed_dofs;    ///< sorted global ids of prescribed dofs
  std::vector<Real> fixed_values;   ///< target values, aligned with fixed_dofs

  bool is_free(Index g) const { return eq[static_cast<std::size_t>(g)] >= 0; }

  /// Free-equation values of a nodal field (leader entries).
  VectorX pick(const VectorX& a) const {
    VectorX x(n_free);
    for (Index i = 0; i < n_free; ++i) x(i) = a(free_dofs[static_cast<std::size_t>(i)]);
    return x;
  }
  /// Sum of a nodal force-like vector onto the free equations (transpose of expand).
  VectorX restrict(const VectorX& f) const {
    VectorX x = VectorX::Zero(n_free);
    for (Index g = 0; g < n_dofs; ++g)
      if (const Index q = eq[static_cast<std::size_t>(g)]; q >= 0) x(q) += f(g);
    return x;
  }
  /// Writes free-equation values into every free dof of `a`.
  void expand(const VectorX& x, VectorX& a) const {
    for (Index g = 0; g < n_dofs; ++g)
      if (const Index q = eq[static_cast<std::size_t>(g)]; q >= 0) a(g) = x(q);
  }
};

inline DofMap build_dof_map(Index n_nodes, const BoundaryConditions& bcs) {
  DofMap m;
  m.n_dofs = dofs_per_node * n_nodes;
  std::map<Index, Real> fixed;
  for (const auto& p : bcs.prescribed) {
    if (p.dof.node < 0 || p.dof.node >= n_nodes || p.dof.dof < 0 || p.dof.dof >= dofs_per_node)
      throw ConfigError("prescribed dof outside the mesh");
    const Index g = global_dof(p.dof);
    auto [it, inserted] = fixed.emplace(g, p.value);
    if (!inserted && it->second != p.value)
      throw ConfigError("dof " + std::to_string(g) + " prescribed with two different values");
  }
  std::vector<Index> leader(static_cast<std::size_t>(m.n_dofs), -1);
  for (const auto& [f, l] : bcs.node_ties) {
    if (f < 0 || f >= n_nodes || l < 0 || l >= n_nodes || f == l) throw ConfigError("invalid node tie");
    for (int c = 0; c < dofs_per_node; ++c) {
      const Index gf = global_dof(f, c), gl = global_dof(l, c);
      const auto pf = fixed.find(gf), pl = fixed.find(gl);
      if ((pf == fixed.end()) != (pl == fixed.end()) || (pf != fixed.end() && pf->second != pl->second))
        throw ConfigError("tied nodes " + std::to_string(f) + " and " + std::to_string(l) + " have different boundary data");
      if (pf == fixed.end()) leader[static_cast<std::size_t>(gf)] = gl;
    }
  }
  m.eq.assign(static_cast<std::size_t>(m.n_dofs), -1);
  for (Index g = 0; g < m.n_dofs; ++g) {
    if (fixed.count(g) || leader[static_cast<std::size_t>(g)] >= 0) continue;
    m.eq[static_cast<std::size_t>(g)] = m.n_free++;
    m.free_dofs.push_back(g);
  }
  for (Index g = 0; g < m.n_dofs; ++g) {
    const Index l = leader[static_cast<std::size_t>(g)];
    if (l < 0) continue;
    if (leader[static_cast<std::size_t>(l)] >= 0) throw ConfigError("node ties must not chain");
    m.eq[static_cast<std::size_t>(g)] = m.eq[static_cast<std::size_t>(l)];
  }
  for (const auto& [g, v] : fixed) {
    m.fixed_dofs.push_back(g);
    m.fixed_values.push_back(v);
  }
  for (const auto& s : bcs.springs) {
    if (s.node < 0 || s.node >= n_nodes || s.dof < 0 || s.dof >= potential_dof)
      throw ConfigError("spring must attach to a displacement dof of an existing node");
    if (!(s.stiffness >= 0)) throw ConfigError("spring stiffness must be non-negative");
  }
  return m;
}

/// Smoothed densities at the design Gauss points (8 per design element, in
/// design order) together with the phase data used to interpolate them.
struct MaterialField {
  PhaseTriplet phases = PhaseTriplet::actuator_defaults();
  EmiParams emi = EmiParams::initial();
  VectorX rho1_bar;
  VectorX rho2_bar;

  static MaterialField uniform(const Mesh& mesh, Real rho1, Real rho2, EmiParams emi = EmiParams::initial()) {
    MaterialField f;
    f.emi = emi;
    f.rho1_bar = VectorX::Constant(8 * mesh.n_design(), rho1);
    f.rho2_bar = VectorX::Constant(8 * mesh.n_design(), rho2);
    return f;
  }
};

/// Nodal unknowns, 4 per node: u_x, u_y, u_z, phi.
struct SolutionState {
  VectorX a;
  bool converged = false;
  int newton_iters = 0;
  std::vector<Real> residual_history;
  /// Tangent factorized at this state; set by solve_state for adjoint solves.
  std::shared_ptr<const CoupledLuSolver> tangent;

  static SolutionState zero(Index n_nodes) {
    SolutionState s;
    s.a = VectorX::Zero(dofs_per_node * n_nodes);
    return s;
  }
  Vec3 displacement(Index node) const { return a.segment<3>(dofs_per_node * node); }
  Real potential(Index node) const { return a(dofs_per_node * node + potential_dof); }
  VectorX displacements() const {
    VectorX u(3 * (a.size() / dofs_per_node));
    for (Index n = 0; n < u.size() / 3; ++n) u.segment<3>(3 * n) = displacement(n);
    return u;
  }
  VectorX potentials() const {
    VectorX p(a.size() / dofs_per_node);
    for (Index n = 0; n < p.size(); ++n) p(n) = potential(n);
    return p;
  }
};

struct LinearSystem {
  CoupledLuSolver::Matrix K;  ///< tangent over free dofs
  VectorX r;                  ///< f_ext - f_int over free dofs
  VectorX f_int;              ///< internal forces over all dofs (springs excluded)
  VectorX diagonal;           ///< element tangent diagonal over all dofs (springs included)
  VectorX free_diagonal;      ///< diagonal of K
};

struct NewtonSettings {
  int load_steps = 5;
  int max_iterations = 25;
  int max_bisections = 4;
  int max_line_search = 10;
  Real rel_tol = 1e-9;
  Real abs_tol = 1e-12;
};

namespace detail {

using ElementMatrix = Eigen::Matrix<Real, 32, 32>;
using ElementVector = Eigen::Matrix<Real, 32, 1>;

inline int local_u(int a, int i) { return dofs_per_node * a + i; }
inline int local_phi(int a) { return dofs_per_node * a + potential_dof; }

inline PointKinematics point_kinematics(const hex8::PointGeometry& g, const ElementVector& ae) {
  PointKinematics k;
  for (int a = 0; a < 8; ++a) {
    const Eigen::Matrix<Real, 1, 3> dN = g.dNdX.row(a);
    for (int i = 0; i < 3; ++i) k.F.row(i) += ae(local_u(a, i)) * dN;
    k.E -= ae(local_phi(a)) * dN.transpose();
  }
  return k;
}

}  // namespace detail

/// Mesh, dof numbering, cached quadrature geometry and the tangent sparsity
/// pattern for one boundary-value problem. Immutable after construction.
class StateProblem {
 public:
  StateProblem(const Mesh& mesh, BoundaryConditions bcs) : mesh_(&mesh), bcs_(std::move(bcs)) {
    dofs_ = build_dof_map(mesh.n_nodes(), bcs_);
    geometry_.resize(static_cast<std::size_t>(mesh.n_elements()));
    for (Index e = 0; e < mesh.n_elements(); ++e) {
      const auto X = mesh.element_coords(e);
      for (int q = 0; q < 8; ++q) {
        auto g = hex8::point_geometry(X, hex8::gauss_points()[q]);
        if (!(g.detJ > 0)) throw MeshError("non-positive reference Jacobian in element " + std::to_string(e));
        geometry_[static_cast<std::size_t>(e)][q] = g;
      }
    }
    build_pattern();
  }

  const Mesh& mesh() const { return *mesh_; }
  const DofMap& dofs() const { return dofs_; }
  const BoundaryConditions& bcs() const { return bcs_; }

  std::array<Index, 32> element_dofs(Index e) const {
    std::array<Index, 32> d{};
    const auto& el = mesh_->elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < 8; ++a)
      for (int c = 0; c < dofs_per_node; ++c) d[dofs_per_node * a + c] = global_dof(el.node_ids[a], c);
    return d;
  }

  detail::ElementVector gather(Index e, const VectorX& a) const {
    detail::ElementVector v;
    const auto d = element_dofs(e);
    for (int i = 0; i < 32; ++i) v(i) = a(d[i]);
    return v;
  }

  /// Pointwise response at Gauss point q of element e.
  PointResponse response(Index e, int q, const PointKinematics& kin, const MaterialField& mat) const {
    const auto& el = mesh_->elements[static_cast<std::size_t>(e)];
    if (el.region == Region::FreeSpace)
      return evaluate_void(kin, mat.phases.void_phase.K, mat.phases.void_phase.G, mat.phases.eps0, e);
    const Index gp = 8 * mesh_->design_position[static_cast<std::size_t>(e)] + q;
    return evaluate_design_point(kin, mat.phases, mat.emi, mat.rho1_bar(gp), mat.rho2_bar(gp), e);
  }

  /// Element internal force and tangent in local ordering 4a + c.
  void element(Index e, const detail::ElementVector& ae, const MaterialField& mat, detail::ElementVector& f,
               detail::ElementMatrix* K) const {
    f.setZero();
    if (K) K->setZero();
    for (int q = 0; q < 8; ++q) {
      const auto& g = geometry_[static_cast<std::size_t>(e)][q];
      const auto kin = detail::point_kinematics(g, ae);
      const auto r = response(e, q, kin, mat);
      const Real w = g.detJ;
      const auto& dN = g.dNdX;
      // B-operators are block sparse: grad(u)_iJ = sum_a u_ai dN_aJ, E_J = -sum_a phi_a dN_aJ.
      const Eigen::Matrix<Real, 8, 3> fu = w * dN * r.T.transpose();
      const Eigen::Matrix<Real, 8, 1> fp = w * dN * r.D;
      for (int a = 0; a < 8; ++a) {
        for (int i = 0; i < 3; ++i) f(detail::local_u(a, i)) += fu(a, i);
        f(detail::local_phi(a)) += fp(a);
      }
      if (!K) continue;
      // DB(r, 3b+k) = sum_L D_mec(r, 3k+L) dN(b, L); MB likewise for D_mix.
      Eigen::Matrix<Real, 9, 24> DB;
      Eigen::Matrix<Real, 3, 24> MB;
      for (int b = 0; b < 8; ++b)
        for (int k = 0; k < 3; ++k) {
          DB.col(3 * b + k) = r.D_mec.middleCols<3>(3 * k) * dN.row(b).transpose();
          MB.col(3 * b + k) = r.D_mix.middleCols<3>(3 * k) * dN.row(b).transpose();
        }
      const Eigen::Matrix<Real, 8, 24> kpu = -w * dN * MB;  // d f_phi / d u
      const Eigen::Matrix<Real, 8, 8> kpp = w * dN * r.D_elt * dN.transpose();
      for (int a = 0; a < 8; ++a)
        for (int i = 0; i < 3; ++i) {
          // row (a, i): sum_J dN(a, J) DB(3i+J, :)
          const Eigen::Matrix<Real, 1, 24> row = w * (dN(a, 0) * DB.row(3 * i) + dN(a, 1) * DB.row(3 * i + 1) +
                                                      dN(a, 2) * DB.row(3 * i + 2));
          const int ra = detail::local_u(a, i);
          for (int b = 0; b < 8; ++b) {
            for (int k = 0; k < 3; ++k) (*K)(ra, detail::local_u(b, k)) += row(3 * b + k);
            (*K)(ra, detail::local_phi(b)) += kpu(b, 3 * a + i);
            (*K)(detail::local_phi(b), ra) += kpu(b, 3 * a + i);
          }
        }
      for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b) (*K)(detail::local_phi(a), detail::local_phi(b)) += kpp(a, b);
    }
  }

  /// Residual and (optionally) tangent over the free dofs. Element work runs
  /// in parallel into per-block buffers; the scatter is serial in element order.
  void assemble_into(const SolutionState& state, const MaterialField& mat, LinearSystem& sys,
                     bool with_tangent = true) const {
    check_material(mat);
    const Index ne = mesh_->n_elements();
    if (with_tangent) {
      if (sys.K.rows() != dofs_.n_free || sys.K.nonZeros() != pattern_.nonZeros()) sys.K = pattern_;
      std::fill(sys.K.valuePtr(), sys.K.valuePtr() + sys.K.nonZeros(), 0.0);
    }
    sys.f_int = VectorX::Zero(dofs_.n_dofs);
    sys.diagonal = VectorX::Zero(dofs_.n_dofs);
    constexpr Index block = 256;
    std::vector<detail::ElementVector> fb(static_cast<std::size_t>(block));
    std::vector<detail::ElementMatrix> kb(with_tangent ? static_cast<std::size_t>(block) : 0);
    Real* values = with_tangent ? sys.K.valuePtr() : nullptr;
    for (Index b0 = 0; b0 < ne; b0 += block) {
      const Index b1 = std::min(ne, b0 + block);
      parallel_for(b0, b1, [&](Index e) {
        const auto k = static_cast<std::size_t>(e - b0);
        element(e, gather(e, state.a), mat, fb[k], with_tangent ? &kb[k] : nullptr);
      });
      for (Index e = b0; e < b1; ++e) {
        const auto k = static_cast<std::size_t>(e - b0);
        const auto d = element_dofs(e);
        for (int i = 0; i < 32; ++i) sys.f_int(d[i]) += fb[k](i);
        if (!with_tangent) continue;
        for (int i = 0; i < 32; ++i) sys.diagonal(d[i]) += kb[k](i, i);
        const int* pos = &scatter_[static_cast<std::size_t>(e) * 1024];
        for (int j = 0; j < 32; ++j)
          for (int i = 0; i < 32; ++i) {
            const int p = pos[32 * j + i];
            if (p >= 0) values[p] += kb[k](i, j);
          }
      }
    }
    sys.r = -dofs_.restrict(sys.f_int);
    for (std::size_t s = 0; s < bcs_.springs.size(); ++s) {
      const auto& sp = bcs_.springs[s];
      const Index g = global_dof(sp.node, sp.dof);
      const Index q = dofs_.eq[static_cast<std::size_t>(g)];
      sys.diagonal(g) += sp.stiffness;
      if (q < 0) continue;
      sys.r(q) -= sp.stiffness * state.a(g);
      if (with_tangent) values[spring_pos_[s]] += sp.stiffness;
    }
    if (with_tangent) sys.free_diagonal = sys.K.diagonal();
  }

  LinearSystem assemble(const SolutionState& state, const MaterialField& mat, bool with_tangent = true) const {
    LinearSystem sys;
    assemble_into(state, mat, sys, with_tangent);
    return sys;
  }

  /// Per design Gauss point, mu^T d(f_int)/d(rho1_bar) and mu^T d(f_int)/d(rho2_bar).
  std::pair<VectorX, VectorX> design_contraction(const SolutionState& state, const MaterialField& mat,
                                                 const VectorX& mu) const {
    check_material(mat);
    const Index nd = mesh_->n_design();
    VectorX d1 = VectorX::Zero(8 * nd), d2 = VectorX::Zero(8 * nd);
    parallel_for(0, nd, [&](Index p) {
      const Index e = mesh_->design_element_ids[static_cast<std::size_t>(p)];
      const auto ae = gather(e, state.a);
      const auto me = gather(e, mu);
      for (int q = 0; q < 8; ++q) {
        const auto& g = geometry_[static_cast<std::size_t>(e)][q];
        const auto kin = detail::point_kinematics(g, ae);
        Mat3 grad_mu = Mat3::Zero();
        Vec3 grad_mphi = Vec3::Zero();
        for (int a = 0; a < 8; ++a) {
          for (int i = 0; i < 3; ++i) grad_mu.row(i) += me(detail::local_u(a, i)) * g.dNdX.row(a);
          grad_mphi += me(detail::local_phi(a)) * g.dNdX.row(a).transpose();
        }
        const auto cp = constant_partials(kin, mat.phases.eps0);
        const Real s_K = (grad_mu.cwiseProduct(cp.T_K)).sum();
        const Real s_G = (grad_mu.cwiseProduct(cp.T_G)).sum();
        const Real s_eps = (grad_mu.cwiseProduct(cp.T_eps_r)).sum() + grad_mphi.dot(cp.D_eps_r);
        const Real s_ce = grad_mphi.dot(cp.D_c_e);
        const Index gp = 8 * p + q;
        const auto ip = interpolate_phase_with_derivatives(mat.phases, mat.emi, mat.rho1_bar(gp), mat.rho2_bar(gp));
        auto contract = [&](const MaterialPhase& dx) {
          return g.detJ * (dx.K * s_K + dx.G * s_G + dx.eps_r * s_eps + dx.c_e * s_ce);
        };
        d1(gp) = contract(ip.d_rho1);
        d2(gp) = contract(ip.d_rho2);
      }
    });
    return {d1, d2};
  }

  /// Element-average |E| (V/mm) for output.
  VectorX field_magnitude(const SolutionState& state) const {
    VectorX m(mesh_->n_elements());
    for (Index e = 0; e < mesh_->n_elements(); ++e) {
      const auto ae = gather(e, state.a);
      Real s = 0;
      for (int q = 0; q < 8; ++q) s += detail::point_kinematics(geometry_[static_cast<std::size_t>(e)][q], ae).E.norm();
      m(e) = s / 8;
    }
    return m;
  }

  /// Copies the free part of `x` (free-equation ordering) into the state vector.
  void set_free(VectorX& a, const VectorX& x) const { dofs_.expand(x, a); }
  VectorX free_part(const VectorX& a) const { return dofs_.pick(a); }

 private:
  void check_material(const MaterialField& mat) const {
    const Index n = 8 * mesh_->n_design();
    if (mat.rho1_bar.size() != n || mat.rho2_bar.size() != n)
      throw Error("material field does not match the design Gauss points");
  }

  void build_pattern() {
    std::vector<std::vector<int>> cols(static_cast<std::size_t>(dofs_.n_free));
    for (Index e = 0; e < mesh_->n_elements(); ++e) {
      std::array<int, 32> q{};
      int nq = 0;
      for (Index g : element_dofs(e))
        if (const Index k = dofs_.eq[static_cast<std::size_t>(g)]; k >= 0) q[nq++] = static_cast<int>(k);
      for (int j = 0; j < nq; ++j)
        for (int i = 0; i < nq; ++i) cols[static_cast<std::size_t>(q[j])].push_back(q[i]);
    }
    std::vector<int> col_ptr(static_cast<std::size_t>(dofs_.n_free) + 1, 0);
    std::vector<int> rows;
    for (Index j = 0; j < dofs_.n_free; ++j) {
      auto& c = cols[static_cast<std::size_t>(j)];
      c.push_back(static_cast<int>(j));  // springs and empty columns still get a diagonal
      std::sort(c.begin(), c.end());
      c.erase(std::unique(c.begin(), c.end()), c.end());
      rows.insert(rows.end(), c.begin(), c.end());
      col_ptr[static_cast<std::size_t>(j) + 1] = static_cast<int>(rows.size());
      std::vector<int>().swap(c);
    }
    pattern_.resize(dofs_.n_free, dofs_.n_free);
    pattern_.resizeNonZeros(static_cast<Index>(rows.size()));
    std::copy(col_ptr.begin(), col_ptr.end(), pattern_.outerIndexPtr());
    std::copy(rows.begin(), rows.end(), pattern_.innerIndexPtr());
    std::fill(pattern_.valuePtr(), pattern_.valuePtr() + rows.size(), 0.0);

    auto position = [&](Index row, Index col) {
      const int* b = pattern_.innerIndexPtr() + col_ptr[static_cast<std::size_t>(col)];
      const int* e = pattern_.innerIndexPtr() + col_ptr[static_cast<std::size_t>(col) + 1];
      const int* it = std::lower_bound(b, e, static_cast<int>(row));
      return static_cast<int>(it - pattern_.innerIndexPtr());
    };
    scatter_.assign(static_cast<std::size_t>(mesh_->n_elements()) * 1024, -1);
    for (Index e = 0; e < mesh_->n_elements(); ++e) {
      const auto d = element_dofs(e);
      int* pos = &scatter_[static_cast<std::size_t>(e) * 1024];
      for (int j = 0; j < 32; ++j) {
        const Index cj = dofs_.eq[static_cast<std::size_t>(d[j])];
        if (cj < 0) continue;
        for (int i = 0; i < 32; ++i) {
          const Index ri = dofs_.eq[static_cast<std::size_t>(d[i])];
          if (ri >= 0) pos[32 * j + i] = position(ri, cj);
        }
      }
    }
    for (const auto& sp : bcs_.springs) {
      const Index q = dofs_.eq[static_cast<std::size_t>(global_dof(sp.node, sp.dof))];
      spring_pos_.push_back(q >= 0 ? position(q, q) : -1);
    }
  }

  const Mesh* mesh_;
  BoundaryConditions bcs_;
  DofMap dofs_;
  std::vector<std::array<hex8::PointGeometry, 8>> geometry_;
  CoupledLuSolver::Matrix pattern_;
  std::vector<int> scatter_;  // per element, 32x32 column-major -> value index or -1
  std::vector<int> spring_pos_;
};

namespace detail {

/// |diag|^{-1/2} weighted norm; balances mechanical and electric residuals.
inline Real scaled_norm(const VectorX& v, const VectorX& diag) {
  Real s = 0;
  for (Index i = 0; i < v.size(); ++i) {
    const Real d = std::abs(diag(i));
    const Real x = d > 0 ? v(i) / std::sqrt(d) : v(i);
    s += x * x;
  }
  return std::sqrt(s);
}

/// Scaled norm of all internal forces, prescribed dofs included: the force
/// level of the current state, nonzero at equilibrium whenever it is loaded.
inline Real force_scale(const LinearSystem& sys) {
  Real s = 0;
  for (Index g = 0; g < sys.f_int.size(); ++g) {
    const Real d = std::abs(sys.diagonal(g));
    if (d > 0) s += sys.f_int(g) * sys.f_int(g) / d;
  }
  return std::sqrt(s);
}

}  // namespace detail

/// Quasi-static solve: prescribed values are ramped linearly from those held
/// by `initial` to their targets (one step if already there). Each step runs
/// Newton on the monolithic tangent; a failing step is halved up to
/// max_bisections times. The returned state carries the tangent factorized at
/// the converged point.
inline SolutionState solve_state(const StateProblem& prob, const MaterialField& mat,
                                 const SolutionState* initial = nullptr, const NewtonSettings& opt = {}) {
  const DofMap& dm = prob.dofs();
  SolutionState state = initial ? *initial : SolutionState::zero(prob.mesh().n_nodes());
  state.converged = false;
  state.newton_iters = 0;
  state.residual_history.clear();
  state.tangent.reset();
  if (state.a.size() != dm.n_dofs) throw Error("initial state has the wrong size");

  std::vector<Real> start(dm.fixed_dofs.size());
  bool ramp = false;
  for (std::size_t i = 0; i < dm.fixed_dofs.size(); ++i) {
    start[i] = state.a(dm.fixed_dofs[i]);
    ramp = ramp || start[i] != dm.fixed_values[i];
  }
  auto set_prescribed = [&](VectorX& a, Real t) {
    for (std::size_t i = 0; i < dm.fixed_dofs.size(); ++i)
      a(dm.fixed_dofs[i]) = t >= 1 ? dm.fixed_values[i] : start[i] + t * (dm.fixed_values[i] - start[i]);
  };

  auto solver = std::make_shared<CoupledLuSolver>();
  LinearSystem sys;
  std::vector<Real> history;

  // Newton at fixed prescribed values; returns false on failure.
  auto newton = [&](VectorX& a) -> bool {
    SolutionState trial;
    trial.a = a;
    try {
      prob.assemble_into(trial, mat, sys);
    } catch (const InvertedElement&) {
      return false;
    }
    Real ref = 0;
    for (int it = 0;; ++it) {
      const Real rn = detail::scaled_norm(sys.r, sys.free_diagonal);
      if (!std::isfinite(rn)) return false;
      history.push_back(rn);
      if (it == 0) ref = rn;
      ref = std::max(ref, detail::force_scale(sys));
      ++state.newton_iters;
      if (rn <= opt.abs_tol || rn <= opt.rel_tol * ref) {
        a = trial.a;
        return true;
      }
      if (it >= opt.max_iterations) return false;
      VectorX step;
      try {
        solver->factorize(sys.K);
        step = solver->solve(sys.r);
      } catch (const LinearSolverError&) {
        return false;
      }
      const VectorX base = prob.free_part(trial.a);
      Real s = 1.0;
      for (int ls = 0;; ++ls) {
        prob.set_free(trial.a, base + s * step);
        try {
          prob.assemble_into(trial, mat, sys);
          break;
        } catch (const InvertedElement&) {
          if (ls >= opt.max_line_search) return false;
          s *= 0.5;
        }
      }
    }
  };

  const Real base_step = ramp ? 1.0 / std::max(1, opt.load_steps) : 1.0;
  Real t = 0, step = base_step;
  int halvings = 0;
  if (!ramp) t = 1 - base_step;
  while (t < 1) {
    const Real target = std::min<Real>(1, t + step);
    VectorX a = state.a;
    set_prescribed(a, target);
    if (newton(a)) {
      state.a = a;
      t = target;
      continue;
    }
    if (++halvings > opt.max_bisections)
      throw NonConvergence("state solve failed at load fraction " + std::to_string(target), history);
    step *= 0.5;
  }
  // Prescribed entries hold their targets exactly.
  set_prescribed(state.a, 1.0);
  state.residual_history = history;
  state.converged = true;
  // The final assembly is at the converged point; factorize it for adjoints.
  solver->factorize(sys.K);
  state.tangent = solver;
  return state;
}

/// g0 = l^T a.
inline Real extract_objective(const SolutionState& state, const VectorX& l) {
  if (l.size() != state.a.size()) throw Error("objective vector has the wrong size");
  return l.dot(state.a);
}

}  // namespace eapto
