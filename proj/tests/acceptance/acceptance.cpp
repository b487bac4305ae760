// Acceptance run: executes the scenarios behind criteria 1-11 and prints one
// PASS/FAIL line per criterion. Exit status 0 iff every criterion passes.
//
//   acceptance [output-dir]

#include "flatcmc/config.hpp"
#include "flatcmc/csv.hpp"
#include "flatcmc/scenarios.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace flatcmc;

namespace {

struct Run {
  std::string label;
  std::string config;
  fs::path dir;
  RunSummary summary;
  double seconds = 0.0;
  std::string error;
};

fs::path g_root;
std::deque<Run> g_runs;

const Run& run(const std::string& label, const std::string& config) {
  Run r;
  r.label = label;
  r.config = config;
  r.dir = g_root / "a" / label;
  fs::remove_all(r.dir);
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r.summary = run_scenario(ScenarioConfig::from_file(parse_config(config), ""), r.dir);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  g_runs.push_back(std::move(r));
  return g_runs.back();
}

std::string sci(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// Collects the outcome of one criterion across several runs.
class Criterion {
 public:
  Criterion(int id, std::string title) : id_(id), title_(std::move(title)) {}

  // Requires `check` to exist and pass in `r`; records "label:value".
  void check(const Run& r, const std::string& name) {
    if (!r.error.empty()) {
      fail(r.label + " error: " + r.error);
      return;
    }
    for (const auto& c : r.summary.checks) {
      if (c.name != name) continue;
      if (!c.pass) pass_ = false;
      notes_.push_back(r.label + " " + name + "=" + sci(c.measured) + (c.pass ? "" : " (tol " + sci(c.tolerance) + ")"));
      return;
    }
    fail(r.label + " has no check " + name);
  }
  void require(bool ok, const std::string& note) {
    if (!ok) pass_ = false;
    notes_.push_back(note);
  }
  void fail(const std::string& note) { require(false, note); }

  bool report() const {
    std::cout << (pass_ ? "PASS" : "FAIL") << " criterion " << id_ << " (" << title_ << "):";
    for (std::size_t i = 0; i < notes_.size(); ++i) std::cout << (i ? "; " : " ") << notes_[i];
    std::cout << "\n";
    return pass_;
  }

 private:
  int id_;
  std::string title_;
  bool pass_ = true;
  std::vector<std::string> notes_;
};

std::size_t data_rows(const fs::path& csv) {
  std::istringstream is(read_text_file(csv));
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    if (!line.empty()) ++n;
  }
  return n == 0 ? 0 : n - 1;
}

}  // namespace

int main(int argc, char** argv) {
  g_root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "flatcmc-acceptance";
  fs::create_directories(g_root);

  std::vector<const Run*> cones, kasners;
  for (int n = 2; n <= 4; ++n) {
    cones.push_back(&run("cone-n" + std::to_string(n),
                         "scenario = cone-flow\ndim = " + std::to_string(n) + "\ntau_start = -10\ntau_end = -0.1\nsteps = 10000\n"));
  }
  for (int n = 3; n <= 4; ++n) {
    kasners.push_back(&run("kasner-n" + std::to_string(n),
                           "scenario = kasner-flow\ndim = " + std::to_string(n) + "\ntau_start = -10\ntau_end = -0.1\nsteps = 10000\n"));
  }
  const Run& riccati = run("riccati", "scenario = riccati\n");
  const Run& lich3 = run("lichnerowicz-n3", "scenario = lichnerowicz-sweep\ndim = 3\n");
  const Run& lich4 = run("lichnerowicz-n4", "scenario = lichnerowicz-sweep\ndim = 4\n");
  const Run& graph2 = run("graph-n2", "scenario = graph-check\ndim = 2\nenergy_spacing = 0.005\n");
  const Run& graph3 = run("graph-n3", "scenario = graph-check\ndim = 3\nenergy_spacing = 0\n");
  const Run& bolza = run("bolza", "scenario = bolza-check\n");
  const Run& limit = run("limit", "scenario = limit-experiment\nlambdas = 1 2 4 8\n");

  std::vector<Criterion> crit;

  Criterion c1(1, "cone invariance");
  for (const Run* r : cones) {
    c1.check(*r, "ham_relative_drift");
    c1.require(r->seconds < 10.0, r->label + " runtime " + sci(r->seconds) + " s");
  }
  crit.push_back(c1);

  Criterion c2(2, "Kasner closed form");
  for (const Run* r : kasners) {
    c2.check(*r, "ham_closed_form_error");
    c2.check(*r, "ham_non_decreasing_steps");
    c2.check(*r, "monotonicity_identity_error");
  }
  crit.push_back(c2);

  Criterion c3(3, "lapse equation and bounds");
  Criterion c4(4, "constraint propagation");
  std::vector<const Run*> flows = cones;
  flows.insert(flows.end(), kasners.begin(), kasners.end());
  for (const Run* r : flows) {
    c3.check(*r, "lapse_backward_error");
    c3.check(*r, "bound_violations");
    c4.check(*r, "gauss_residual_max");
    c4.check(*r, "gauss_richardson_ratio_1");
    c4.check(*r, "gauss_richardson_ratio_2");
  }
  crit.push_back(c3);
  crit.push_back(c4);

  Criterion c5(5, "Riccati");
  c5.check(riccati, "rk4_vs_closed_form");
  c5.check(riccati, "semigroup_error");
  crit.push_back(c5);

  Criterion c6(6, "Lichnerowicz");
  for (const Run* r : {&lich3, &lich4}) {
    c6.check(*r, "sigma_zero_floor_error");
    c6.check(*r, "u_below_floor");
    c6.check(*r, "ham_below_nn_vol");
    if (r->error.empty()) {
      const std::size_t points = data_rows(r->dir / "sweep.csv");
      c6.require(points == 20, r->label + " sweep points=" + std::to_string(points));
    }
  }
  crit.push_back(c6);

  Criterion c7(7, "graph geometry");
  for (const Run* r : {&graph2, &graph3}) {
    c7.check(*r, "h_order_1");
    c7.check(*r, "h_order_2");
    c7.check(*r, "volume_element_defect");
  }
  crit.push_back(c7);

  Criterion c8(8, "Bolza suite");
  for (const char* name : {"relator_residual", "octagon_area", "cocycle_rule", "coboundary_relator_residual",
                           "gauss_map_equivariance"}) {
    c8.check(bolza, name);
  }
  crit.push_back(c8);

  Criterion c9(9, "energy identity");
  c9.check(graph2, "energy_identity");
  crit.push_back(c9);

  Criterion c10(10, "limit experiment");
  for (const char* name : {"unconverged_rows", "trend_violations", "clipped_cells", "coboundary_ham_ratio"}) {
    c10.check(limit, name);
  }
  if (limit.error.empty()) {
    const CsvTable t = parse_csv(read_text_file(limit.dir / "limit.csv"));
    std::string devs;
    for (double v : t.column_values("ham_ratio")) devs += (devs.empty() ? "" : ",") + sci(std::abs(v - 1.0));
    c10.require(true, "|ratio-1| = " + devs);
  }
  crit.push_back(c10);

  // Criterion 11: rerun every scenario above and compare artifacts byte for byte.
  Criterion c11(11, "determinism");
  std::size_t compared = 0;
  const std::deque<Run> first = g_runs;
  for (const Run& r : first) {
    if (!r.error.empty()) {
      c11.fail(r.label + " did not run");
      continue;
    }
    const fs::path again = g_root / "b" / r.label;
    fs::remove_all(again);
    try {
      const RunSummary s = run_scenario(ScenarioConfig::from_file(parse_config(r.config), ""), again);
      std::vector<std::string> files = s.artifacts;
      files.push_back("summary.csv");
      for (const auto& f : files) {
        ++compared;
        if (read_text_file(r.dir / f) != read_text_file(again / f)) c11.fail(r.label + "/" + f + " differs");
      }
    } catch (const std::exception& e) {
      c11.fail(r.label + " rerun error: " + e.what());
    }
  }
  c11.require(compared > 0, std::to_string(compared) + " files compared across " + std::to_string(first.size()) + " runs");
  crit.push_back(c11);

  bool all = true;
  for (const auto& c : crit) all = c.report() && all;
  std::cout << (all ? "ALL CRITERIA PASS" : "SOME CRITERIA FAIL") << "\n";
  return all ? 0 : 1;
}
