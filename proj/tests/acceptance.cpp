// Acceptance run: one PASS/FAIL line per criterion.
//   1-5  oracle battery (constitutive, dielectric, adjoint, regularization, MMA)
//   6    desk-scale vertical actuator terminates by the stall rule with the
//        required sign, constraint activity and magnitude, within 60 min
//   7    far-field potential and intermediate-density fraction of that result
//   8    a rerun reproduces the run record bit for bit

#include "eapto/driver.hpp"
#include "eapto/parallel.hpp"
#include "eapto/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <thread>

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += ok ? 0 : 1;
}

std::string num(double v, const char* f = "%.4g") {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

bool same_record(const eapto::RunRecord& a, const eapto::RunRecord& b, std::string& where) {
  if (a.rows.size() != b.rows.size()) {
    where = "row counts " + std::to_string(a.rows.size()) + " vs " + std::to_string(b.rows.size());
    return false;
  }
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    auto x = a.rows[k], y = b.rows[k];
    x.wall_time = y.wall_time = 0;  // timing is not part of the reproducible state
    if (eapto::RunRecord::format(x) != eapto::RunRecord::format(y)) {
      where = "first difference at iteration " + std::to_string(k);
      return false;
    }
  }
  where = std::to_string(a.rows.size()) + " rows identical";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const std::string config = argc > 1 ? argv[1] : EAPTO_SOURCE_DIR "/configs/acceptance_vertical.json";
  eapto::set_threads(std::max(1u, std::min(8u, std::thread::hardware_concurrency())));

  for (const auto& r : eapto::verify::run_battery())
    report(r.criterion, r.name, r.passed, r.detail + " [" + num(r.seconds, "%.2f") + " s]");

  eapto::ProblemConfig cfg;
  try {
    cfg = eapto::load_config(config);
  } catch (const std::exception& e) {
    for (int id : {6, 7, 8}) report(id, "desk-scale actuator", false, e.what());
    return 1;
  }
  cfg.out_dir = EAPTO_TEST_TMP "/acceptance";

  eapto::RunResult first;
  try {
    first = eapto::run(cfg);
  } catch (const std::exception& e) {
    for (int id : {6, 7, 8}) report(id, "desk-scale actuator", false, std::string("run aborted: ") + e.what());
    return 1;
  }
  const auto& o = first.final.objective;
  const auto& v = first.final.volumes;
  const bool converged = first.status == eapto::RunStatus::Converged;
  const bool ok6 = converged && o.g0 < 0 && std::abs(v.g1) < 0.02 && v.g2 < 0 && std::abs(o.g0) >= 0.02 &&
                   first.wall_time < 3600;
  report(6, "desk-scale vertical actuator", ok6,
         std::string(converged ? "converged" : "iteration cap") + " after " + std::to_string(first.iterations) +
             " iterations, g0 = " + num(o.g0) + " mm (< 0, |g0| >= 0.02), g1 = " + num(v.g1) +
             " (|g1| < 0.02), g2 = " + num(v.g2) + " (< 0), " + num(first.wall_time, "%.0f") + " s (< 3600)");

  const eapto::Real far = first.far_field_potential / std::abs(cfg.phi_p);
  const bool ok7 = far < 0.01 && first.intermediate_fraction < 0.15;
  report(7, "field sanity", ok7,
         "far-field max |phi| = " + num(first.far_field_potential) + " V = " + num(100 * far) +
             "% of phi_p (< 1%), intermediate rho1_bar fraction = " + num(100 * first.intermediate_fraction) +
             "% (< 15%)");

  cfg.out_dir = EAPTO_TEST_TMP "/acceptance_rerun";
  try {
    const eapto::RunResult second = eapto::run(cfg);
    std::string where;
    const bool ok8 = same_record(first.record, second.record, where);
    report(8, "determinism", ok8, where);
  } catch (const std::exception& e) {
    report(8, "determinism", false, std::string("rerun aborted: ") + e.what());
  }
  return failures == 0 ? 0 : 1;
}
