#pragma once

#include "eapto/actuator.hpp"
#include "eapto/config.hpp"
#include "eapto/mma.hpp"
#include "eapto/schedule.hpp"
#include "eapto/sensitivity.hpp"
#include "eapto/vtk.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>

namespace eapto {

struct IterationRecord {
  int iteration = 0;
  Real g0 = 0, g0_hat = 0, g0_bar = 0;
  Real g1 = 0, g2 = 0;
  Real beta = 0, alpha = 0, a_d = 0;
  int newton_iters = 0;
  Real wall_time = 0;  ///< seconds spent on this iteration
};

/// Append-only per-iteration log.
struct RunRecord {
  std::vector<IterationRecord> rows;

  static constexpr const char* header = "iteration,g0,g0_hat,g0_bar,g1,g2,beta,alpha,a_d,newton_iters,wall_time_s";

  static std::string format(const IterationRecord& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.6f", r.iteration, r.g0,
                  r.g0_hat, r.g0_bar, r.g1, r.g2, r.beta, r.alpha, r.a_d, r.newton_iters, r.wall_time);
    return buf;
  }

  void write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << header << '\n';
    for (const auto& r : rows) out << format(r) << '\n';
    if (!out) throw Error("write failed: " + path.string());
  }
};

enum class RunStatus { Converged, IterationCap };

/// One design iterate after the state and adjoint solves.
struct Evaluation {
  DesignState design;
  MaterialField material;
  SolutionState state;
  ObjectiveGradient objective;
  VolumeConstraints volumes;
};

struct RunResult {
  RunStatus status = RunStatus::IterationCap;
  int iterations = 0;  ///< design iterations evaluated
  RunRecord record;
  VectorX rho1, rho2;
  Evaluation final;
  Real far_field_potential = 0;  ///< max |phi| on the far-field ring
  Real intermediate_fraction = 0;
  Real wall_time = 0;
};

inline std::string checkpoint_name(int iteration) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_%04d.vtk", iteration);
  return buf;
}

/// Fraction of design Gauss points with 0.05 < rho1_bar < 0.95.
inline Real intermediate_fraction(const VectorX& rho1_bar) {
  if (rho1_bar.size() == 0) return 0;
  Index n = 0;
  for (Real r : rho1_bar) n += (r > 0.05 && r < 0.95) ? 1 : 0;
  return static_cast<Real>(n) / static_cast<Real>(rho1_bar.size());
}

inline Real far_field_potential(const ActuatorProblem& act, const SolutionState& s) {
  Real m = 0;
  for (Index n : act.far_field_nodes) m = std::max(m, std::abs(s.potential(n)));
  return m;
}

/// VTK of one iterate: element-averaged rho1_bar / rho2_bar (zero outside the
/// design block), |E| and the nodal displacement and potential. With
/// `deformed` the points are moved by the displacement.
inline void write_state_vtk(const std::filesystem::path& path, const ActuatorProblem& act, const Evaluation& ev,
                            bool deformed) {
  const Mesh& m = *act.mesh;
  const auto ne = static_cast<std::size_t>(m.n_elements());
  vtk::Field r1{"rho1_bar", 1, std::vector<Real>(ne, 0.0)}, r2{"rho2_bar", 1, std::vector<Real>(ne, 0.0)};
  for (Index p = 0; p < m.n_design(); ++p) {
    const auto e = static_cast<std::size_t>(m.design_element_ids[static_cast<std::size_t>(p)]);
    r1.values[e] = ev.design.field1.bar_gauss.segment<8>(8 * p).mean();
    r2.values[e] = ev.design.field2.bar_gauss.segment<8>(8 * p).mean();
  }
  const VectorX emag = act.state->field_magnitude(ev.state);
  vtk::Field E{"E_magnitude", 1, std::vector<Real>(emag.begin(), emag.end())};
  const VectorX u = ev.state.displacements(), phi = ev.state.potentials();
  vtk::Field disp{"displacement", 3, std::vector<Real>(u.begin(), u.end())};
  vtk::Field pot{"potential", 1, std::vector<Real>(phi.begin(), phi.end())};
  vtk::write(path, m, {disp, pot}, {r1, r2, E}, deformed ? std::span<const Real>(disp.values) : std::span<const Real>{});
}

inline void write_summary(const std::filesystem::path& path, const ProblemConfig& cfg, const RunResult& r) {
  nlohmann::json j;
  j["status"] = r.status == RunStatus::Converged ? "converged" : "iteration_cap";
  j["iterations"] = r.iterations;
  const auto& o = r.final.objective;
  const auto& v = r.final.volumes;
  j["g0"] = o.g0;
  j["g0_hat"] = o.g0_hat;
  j["g0_bar"] = o.g0_bar;
  j["g1"] = v.g1;
  j["g2"] = v.g2;
  j["electrode_volume"] = v.V1;
  j["eap_volume"] = v.V2;
  j["far_field_max_abs_phi"] = r.far_field_potential;
  j["far_field_fraction_of_phi_p"] = cfg.phi_p != 0 ? r.far_field_potential / std::abs(cfg.phi_p) : 0.0;
  j["intermediate_fraction"] = r.intermediate_fraction;
  j["wall_time_s"] = r.wall_time;
  j["objective"] = cfg.objective == Direction::Vertical ? "vertical" : "horizontal";
  j["design_nx"] = cfg.mesh.design_nx;
  j["design_ny"] = cfg.mesh.design_ny;
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << std::setw(2) << j << '\n';
}

/// Optimization loop: regularize, solve the state (warm-started from the
/// previous iterate), evaluate objective and volume constraints, adjoint
/// sensitivities, MMA update. Stops when the relative change of g0 stays below
/// tol for stall_window consecutive iterations with all constraints satisfied,
/// or at the iteration cap.
class Driver {
public:
  using Observer = std::function<void(const IterationRecord&)>;

  explicit Driver(ProblemConfig cfg) : cfg_(std::move(cfg)), schedule_(cfg_.schedule), act_(build_actuator(cfg_)) {}

  const ActuatorProblem& problem() const { return act_; }
  const ProblemConfig& config() const { return cfg_; }

  void on_iteration(Observer f) { observer_ = std::move(f); }

  /// Runs the loop. Outputs go to cfg.out_dir unless it is empty.
  RunResult run() {
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;
    const auto t_start = clock::now();
    const bool emit = !cfg_.out_dir.empty();
    const fs::path dir = cfg_.out_dir;
    std::ofstream csv;
    if (emit) {
      fs::create_directories(dir);
      if (cfg_.checkpoint_every > 0) fs::create_directories(dir / "checkpoints");
      csv.open(dir / "run_record.csv");
      if (!csv) throw Error("cannot open '" + (dir / "run_record.csv").string() + "' for writing");
      csv << RunRecord::header << '\n' << std::flush;
    }

    auto [rho1, rho2] = initial_design(*act_.mesh, cfg_);
    const Index n = rho1.size();
    VectorX x(2 * n);
    x << rho1, rho2;
    Mma mma(x, 2, cfg_.mma);

    RunResult res;
    std::optional<SolutionState> warm;
    Real a_d = 0, g0_prev = 0;
    int stall = 0;
    for (int k = 0; k < cfg_.max_iterations; ++k) {
      const auto t_iter = clock::now();
      rho1 = x.head(n);
      rho2 = x.tail(n);
      Evaluation ev = solve_iterate(k, rho1, rho2, warm ? &*warm : nullptr);

      const Real g0_hat = cfg_.scaling.value(extract_objective(ev.state, act_.l));
      if (schedule_.ad_update_due(k)) a_d = std::abs(g0_hat);
      const PenaltyParams pen{a_d, schedule_.alpha(k), cfg_.schedule.delta};
      const VectorX mu = solve_adjoint(*act_.state, ev.state, act_.l);
      ev.objective = objective_gradient(*act_.state, act_.filter, ev.state, mu, ev.design, ev.material, act_.l, pen,
                                        cfg_.scaling);
      ev.volumes = volume_and_gradients(act_.filter, ev.design, cfg_.alpha1, cfg_.alpha2);

      IterationRecord row;
      row.iteration = k;
      row.g0 = ev.objective.g0;
      row.g0_hat = ev.objective.g0_hat;
      row.g0_bar = ev.objective.g0_bar;
      row.g1 = ev.volumes.g1;
      row.g2 = ev.volumes.g2;
      row.beta = ev.design.projection.beta;
      row.alpha = pen.alpha;
      row.a_d = a_d;
      row.newton_iters = ev.state.newton_iters;

      const Real g0 = ev.objective.g0;
      stall = (k > 0 && std::abs(g0 - g0_prev) <= cfg_.schedule.tol * std::abs(g0)) ? stall + 1 : 0;
      g0_prev = g0;
      const Real ftol = cfg_.schedule.feasibility_tol;
      const bool converged = stall >= cfg_.schedule.stall_window && ev.volumes.g1 <= ftol &&
                             ev.volumes.g2 <= ftol && schedule_.may_converge(k);

      if (emit && cfg_.checkpoint_every > 0 && k > 0 && k % cfg_.checkpoint_every == 0)
        write_state_vtk(dir / "checkpoints" / checkpoint_name(k), act_, ev, false);

      VectorX df(2 * n);
      df << ev.objective.d_rho1, ev.objective.d_rho2;
      Eigen::MatrixXd dg(2, 2 * n);
      dg.row(0) << ev.volumes.dg1_rho1.transpose(), ev.volumes.dg1_rho2.transpose();
      dg.row(1) << ev.volumes.dg2_rho1.transpose(), ev.volumes.dg2_rho2.transpose();
      if (!converged) {
        x = mma.update(ev.objective.g0_bar, df, Eigen::Vector2d(ev.volumes.g1, ev.volumes.g2), dg);
      }

      row.wall_time = std::chrono::duration<Real>(clock::now() - t_iter).count();
      res.record.rows.push_back(row);
      if (emit) csv << RunRecord::format(row) << '\n' << std::flush;
      if (observer_) observer_(row);

      warm = ev.state;
      warm->tangent.reset();
      res.iterations = k + 1;
      res.final = std::move(ev);
      if (converged) {
        res.status = RunStatus::Converged;
        break;
      }
    }
    res.rho1 = rho1;
    res.rho2 = rho2;
    res.far_field_potential = far_field_potential(act_, res.final.state);
    res.intermediate_fraction = intermediate_fraction(res.final.design.field1.bar_gauss);
    res.wall_time = std::chrono::duration<Real>(clock::now() - t_start).count();
    if (emit) {
      write_state_vtk(dir / "final.vtk", act_, res.final, false);
      write_state_vtk(dir / "final_deformed.vtk", act_, res.final, true);
      write_summary(dir / "summary.json", cfg_, res);
    }
    return res;
  }

  /// Regularizes the design and solves the state for iteration k's
  /// continuation parameters. A failed warm start falls back to a ramp from the
  /// undeformed state; if that fails too, the continuation step from k-1 is
  /// halved once to obtain an intermediate state to start from.
  Evaluation solve_iterate(int k, const VectorX& rho1, const VectorX& rho2, const SolutionState* warm) const {
    auto attempt = [&](const ProjectionParams& p, const EmiParams& q, const SolutionState* start) {
      Evaluation ev;
      ev.design = regularize(act_.filter, rho1, rho2, p);
      ev.material = material_field(ev.design, cfg_.phases, q);
      ev.state = solve_state(*act_.state, ev.material, start, cfg_.newton);
      return ev;
    };
    const ProjectionParams p = schedule_.projection(k);
    const EmiParams q = schedule_.emi(k);
    std::optional<NonConvergence> failure;
    try {
      return attempt(p, q, warm);
    } catch (const NonConvergence& e) {
      failure = e;
    }
    if (warm) {
      try {
        return attempt(p, q, nullptr);
      } catch (const NonConvergence& e) {
        failure = e;
      }
    }
    if (k > 0) {
      const ProjectionParams p0 = schedule_.projection(k - 1);
      const EmiParams q0 = schedule_.emi(k - 1);
      if (p0.beta != p.beta || !same(q0, q)) {
        const ProjectionParams pm{std::sqrt(p0.beta * p.beta), p.eta};
        const EmiParams qm = midpoint(q0, q);
        try {
          const Evaluation mid = attempt(pm, qm, warm);
          return attempt(p, q, &mid.state);
        } catch (const NonConvergence& e) {
          failure = e;
        }
      }
    }
    std::string msg = "state solve failed at design iteration " + std::to_string(k) + " (beta " +
                      std::to_string(p.beta) + "): " + failure->what();
    throw NonConvergence(msg, failure->residual_history);
  }

private:
  static bool same(const EmiParams& a, const EmiParams& b) {
    return a.q1_m == b.q1_m && a.q1_mel == b.q1_mel && a.q1_el == b.q1_el && a.q2_m == b.q2_m &&
           a.q2_mel == b.q2_mel && a.q2_el == b.q2_el;
  }

  static EmiParams midpoint(const EmiParams& a, const EmiParams& b) {
    auto m = [](Real x, Real y) { return 0.5 * (x + y); };
    return {m(a.q1_m, b.q1_m), m(a.q1_mel, b.q1_mel), m(a.q1_el, b.q1_el),
            m(a.q2_m, b.q2_m), m(a.q2_mel, b.q2_mel), m(a.q2_el, b.q2_el)};
  }

  ProblemConfig cfg_;
  Schedule schedule_;
  ActuatorProblem act_;
  Observer observer_;
};

inline RunResult run(const ProblemConfig& cfg) { return Driver(cfg).run(); }

/// Writes the analysis mesh with its region and design-element markers.
inline void export_mesh(const ProblemConfig& cfg, const std::filesystem::path& path) {
  const ActuatorProblem act = build_actuator(cfg);
  const Mesh& m = *act.mesh;
  vtk::Field design{"design", 1, std::vector<Real>(static_cast<std::size_t>(m.n_elements()), 0.0)};
  for (Index e : m.design_element_ids) design.values[static_cast<std::size_t>(e)] = 1.0;
  vtk::Field port{"port", 1, std::vector<Real>(static_cast<std::size_t>(m.n_nodes()), 0.0)};
  for (Index nd : act.port_nodes) port.values[static_cast<std::size_t>(nd)] = 1.0;
  vtk::Field far{"far_field", 1, std::vector<Real>(static_cast<std::size_t>(m.n_nodes()), 0.0)};
  for (Index nd : act.far_field_nodes) far.values[static_cast<std::size_t>(nd)] = 1.0;
  vtk::write(path, m, {port, far}, {design});
}

}  // namespace eapto
