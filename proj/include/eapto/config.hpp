#pragma once

#include "eapto/core.hpp"
#include "eapto/fem.hpp"
#include "eapto/material.hpp"
#include "eapto/mesh.hpp"
#include "eapto/sensitivity.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <string>

namespace eapto {

/// MMA tuning. Unlisted constants follow Svanberg's recommendations.
struct MmaParams {
  Real ghinit = 0.2;      ///< initial asymptote distance, fraction of the variable range
  Real ghincr = 1.1;      ///< expansion when a variable moves monotonically
  Real ghdecr = 0.7;      ///< contraction when it oscillates
  Real move_frac = 1e-4;  ///< minimal asymptote distance and bound offset, fraction of range
  Real max_gap = 10.0;    ///< maximal asymptote distance, multiple of range
  Real albefa = 0.1;      ///< subproblem bounds stay this fraction away from the asymptotes
  Real raa0 = 1e-5;
  Real c = 1000.0;        ///< penalty on the artificial constraint variables
};

/// Continuation parameters. Every schedule is a pure function of the
/// effective iteration k * time_scale.
struct ScheduleParams {
  Real time_scale = 1.0;
  int period = 10;           ///< beta, q and alpha change every `period` effective iterations
  Real beta_init = 1.0;
  Real beta_factor = 1.2;
  Real beta_max = 20.0;
  Real eta = 0.5;
  EmiParams emi_initial = EmiParams::initial();
  EmiParams emi_final = EmiParams::terminal();
  Real emi_factor = 1.2;
  int penalty_start = 200;
  int penalty_end = 300;
  int ad_period = 20;
  Real alpha_init = 0.9;
  Real alpha_step = 0.1;
  Real alpha_min = 0.05;
  Real delta = 1e-9;
  Real tol = 1e-4;
  int stall_window = 3;           ///< consecutive iterations below tol
  Real feasibility_tol = 1e-3;    ///< on the scaled constraints
  Real converge_after = 0;        ///< effective iteration before which convergence is not declared
};

enum class Direction { Vertical, Horizontal };

struct ProblemConfig {
  MeshSpec mesh;
  PhaseTriplet phases = PhaseTriplet::actuator_defaults();
  Real phi_p = 3000.0;            ///< V
  Real spring_factor = 1e-3;      ///< k_s = spring_factor * thickness * G_eap
  Direction objective = Direction::Vertical;
  Real alpha1 = 0.2;              ///< electrode volume fraction
  Real alpha2 = 0.1;              ///< EAP volume fraction
  Real filter_length = 0.25;      ///< mm
  Real strip_fraction = 0.1;      ///< initial electrode strip height / design height
  Real patch_fraction = 0.05;     ///< potential patch length / design edge length
  bool tie_layers = true;         ///< share equations between the two slab layers (exact in plane strain)
  ObjectiveScaling scaling;
  ScheduleParams schedule;
  MmaParams mma;
  NewtonSettings newton;
  int max_iterations = 1000;
  int checkpoint_every = 10;
  std::string out_dir = "out";

  Real spring_stiffness() const { return spring_factor * mesh.thickness * phases.eap.G; }

  void validate() const {
    eapto::validate(mesh);
    auto unit = [](Real a) { return a > 0 && a <= 1; };
    if (!unit(alpha1) || !unit(alpha2)) throw ConfigError("volume fractions must lie in (0, 1]");
    if (!std::isfinite(phi_p)) throw ConfigError("phi_p must be finite");
    if (!(filter_length > 0)) throw ConfigError("filter_length must be positive");
    if (!(strip_fraction >= 0 && strip_fraction < 0.5)) throw ConfigError("strip_fraction must lie in [0, 0.5)");
    if (!(patch_fraction > 0 && patch_fraction <= 0.5)) throw ConfigError("patch_fraction must lie in (0, 0.5]");
    if (!(spring_factor >= 0)) throw ConfigError("spring_factor must be non-negative");
    if (max_iterations < 1) throw ConfigError("max_iterations must be at least 1");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
    if (!(schedule.time_scale > 0) || schedule.period < 1) throw ConfigError("invalid schedule timing");
    if (!(mma.ghdecr > 0 && mma.ghdecr < 1 && mma.ghincr > 1)) throw ConfigError("need 0 < ghdecr < 1 < ghincr");
    if (newton.load_steps < 1) throw ConfigError("load_steps must be at least 1");
  }
};

namespace detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& v) {
  if (auto it = j.find(key); it != j.end()) v = it->template get<T>();
}

inline void read_emi(const nlohmann::json& j, const char* key, EmiParams& e) {
  auto it = j.find(key);
  if (it == j.end()) return;
  read(*it, "q1_m", e.q1_m);
  read(*it, "q1_mel", e.q1_mel);
  read(*it, "q1_el", e.q1_el);
  read(*it, "q2_m", e.q2_m);
  read(*it, "q2_mel", e.q2_mel);
  read(*it, "q2_el", e.q2_el);
}

inline void read_phase(const nlohmann::json& j, const char* key, MaterialPhase& p) {
  auto it = j.find(key);
  if (it == j.end()) return;
  read(*it, "K", p.K);
  read(*it, "G", p.G);
  read(*it, "c_e", p.c_e);
  read(*it, "eps_r", p.eps_r);
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : keys) known = known || it.key() == k;
    if (!known) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace detail

/// Reads a JSON config. Absent keys keep their defaults; unknown keys are errors.
inline ProblemConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  ProblemConfig c;
  try {
    detail::reject_unknown(j,
                           {"mesh", "materials", "phi_p", "spring_factor", "objective", "alpha1", "alpha2",
                            "filter_length", "strip_fraction", "patch_fraction", "tie_layers", "scaling", "schedule", "mma",
                            "newton", "max_iterations", "checkpoint_every", "out_dir"},
                           "config");
    if (auto m = j.find("mesh"); m != j.end()) {
      detail::reject_unknown(*m, {"design_nx", "design_ny", "design_size", "thickness", "freespace_extent_factor",
                                  "grading_ratio"}, "mesh");
      read(*m, "design_nx", c.mesh.design_nx);
      read(*m, "design_ny", c.mesh.design_ny);
      read(*m, "design_size", c.mesh.design_size);
      read(*m, "thickness", c.mesh.thickness);
      read(*m, "freespace_extent_factor", c.mesh.freespace_extent_factor);
      read(*m, "grading_ratio", c.mesh.grading_ratio);
    }
    if (auto m = j.find("materials"); m != j.end()) {
      detail::reject_unknown(*m, {"void", "electrode", "eap", "eps0"}, "materials");
      detail::read_phase(*m, "void", c.phases.void_phase);
      detail::read_phase(*m, "electrode", c.phases.electrode);
      detail::read_phase(*m, "eap", c.phases.eap);
      read(*m, "eps0", c.phases.eps0);
    }
    read(j, "phi_p", c.phi_p);
    read(j, "spring_factor", c.spring_factor);
    if (auto o = j.find("objective"); o != j.end()) {
      const auto s = o->get<std::string>();
      if (s == "vertical") c.objective = Direction::Vertical;
      else if (s == "horizontal") c.objective = Direction::Horizontal;
      else throw ConfigError("objective must be 'vertical' or 'horizontal'");
    }
    read(j, "alpha1", c.alpha1);
    read(j, "alpha2", c.alpha2);
    read(j, "filter_length", c.filter_length);
    read(j, "strip_fraction", c.strip_fraction);
    read(j, "patch_fraction", c.patch_fraction);
    read(j, "tie_layers", c.tie_layers);
    if (auto s = j.find("scaling"); s != j.end()) {
      detail::reject_unknown(*s, {"a1", "a2"}, "scaling");
      read(*s, "a1", c.scaling.a1);
      read(*s, "a2", c.scaling.a2);
    }
    if (auto s = j.find("schedule"); s != j.end()) {
      detail::reject_unknown(*s, {"time_scale", "period", "beta_init", "beta_factor", "beta_max", "eta", "emi_initial",
                                  "emi_final", "emi_factor", "penalty_start", "penalty_end", "ad_period", "alpha_init",
                                  "alpha_step", "alpha_min", "delta", "tol", "stall_window", "feasibility_tol",
                                  "converge_after"}, "schedule");
      auto& p = c.schedule;
      read(*s, "time_scale", p.time_scale);
      read(*s, "period", p.period);
      read(*s, "beta_init", p.beta_init);
      read(*s, "beta_factor", p.beta_factor);
      read(*s, "beta_max", p.beta_max);
      read(*s, "eta", p.eta);
      detail::read_emi(*s, "emi_initial", p.emi_initial);
      detail::read_emi(*s, "emi_final", p.emi_final);
      read(*s, "emi_factor", p.emi_factor);
      read(*s, "penalty_start", p.penalty_start);
      read(*s, "penalty_end", p.penalty_end);
      read(*s, "ad_period", p.ad_period);
      read(*s, "alpha_init", p.alpha_init);
      read(*s, "alpha_step", p.alpha_step);
      read(*s, "alpha_min", p.alpha_min);
      read(*s, "delta", p.delta);
      read(*s, "tol", p.tol);
      read(*s, "stall_window", p.stall_window);
      read(*s, "feasibility_tol", p.feasibility_tol);
      read(*s, "converge_after", p.converge_after);
    }
    if (auto s = j.find("mma"); s != j.end()) {
      detail::reject_unknown(*s, {"ghinit", "ghincr", "ghdecr", "move_frac", "max_gap", "c"}, "mma");
      read(*s, "ghinit", c.mma.ghinit);
      read(*s, "ghincr", c.mma.ghincr);
      read(*s, "ghdecr", c.mma.ghdecr);
      read(*s, "move_frac", c.mma.move_frac);
      read(*s, "max_gap", c.mma.max_gap);
      read(*s, "c", c.mma.c);
    }
    if (auto s = j.find("newton"); s != j.end()) {
      detail::reject_unknown(*s, {"load_steps", "max_iterations", "max_bisections", "rel_tol", "abs_tol"}, "newton");
      read(*s, "load_steps", c.newton.load_steps);
      read(*s, "max_iterations", c.newton.max_iterations);
      read(*s, "max_bisections", c.newton.max_bisections);
      read(*s, "rel_tol", c.newton.rel_tol);
      read(*s, "abs_tol", c.newton.abs_tol);
    }
    read(j, "max_iterations", c.max_iterations);
    read(j, "checkpoint_every", c.checkpoint_every);
    read(j, "out_dir", c.out_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline ProblemConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

}  // namespace eapto
