#include "flatcmc/scenarios.hpp"

#include "flatcmc/cmc_flow.hpp"
#include "flatcmc/conformal.hpp"
#include "flatcmc/csv.hpp"
#include "flatcmc/errors.hpp"
#include "flatcmc/graph_surfaces.hpp"
#include "flatcmc/holonomy.hpp"
#include "flatcmc/limit_experiment.hpp"
#include "flatcmc/model_spacetimes.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace flatcmc {

CheckRecord make_check(std::string name, double measured, double expected, double tolerance) {
  CheckRecord c{std::move(name), measured, expected, tolerance, false};
  c.pass = std::abs(measured - expected) <= tolerance;
  return c;
}

bool RunSummary::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckRecord& c) { return c.pass; });
}

int RunSummary::exit_status() const { return all_pass() ? kExitPass : kExitNumericalFailure; }

std::string summary_to_csv(const RunSummary& s) {
  std::string out = "name,measured,expected,tolerance,pass\n";
  for (const auto& c : s.checks) {
    out += c.name + "," + format_double(c.measured) + "," + format_double(c.expected) + "," +
           format_double(c.tolerance) + "," + (c.pass ? "1" : "0") + "\n";
  }
  return out;
}

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"cone-flow", "kasner-flow", "lichnerowicz-sweep", "riccati",
                                              "bolza-check", "limit-experiment", "graph-check"};
  return names;
}

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

// Library validators report bad parameters as DomainError/DimensionError.
template <class F>
void as_config(F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void require_positive(double v, const std::string& key) { require(v > 0.0, key + " must be positive"); }

class Artifacts {
 public:
  Artifacts(std::filesystem::path dir, RunSummary& summary) : dir_(std::move(dir)), summary_(summary) {}

  void write(const std::string& name, const std::string& text) {
    write_text_file(dir_ / name, text);
    summary_.artifacts.push_back(name);
  }

 private:
  std::filesystem::path dir_;
  RunSummary& summary_;
};

// Portable uniform doubles: libstdc++ distributions are not specified bit-for-bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform(double a, double b) { return a + (b - a) * static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  int integer(int lo, int hi) { return lo + static_cast<int>(engine_() % static_cast<std::uint64_t>(hi - lo + 1)); }

 private:
  std::mt19937_64 engine_;
};

// --- cmc flows --------------------------------------------------------------

struct FlowParams {
  double tau_start = -10.0;
  double tau_end = -0.1;
  int steps = 10000;
  double gauss_tol = 1e-8;
  double lapse_tol = 1e-10;
  /// Coarsest of three fixed-step runs (r, 2r, 4r steps); 0 skips the check.
  int richardson_steps = 400;
  double richardson_band = 0.25;
};

FlowParams read_flow_params(const ScenarioConfig& cfg) {
  FlowParams p;
  p.tau_start = cfg.get_double("tau_start", p.tau_start);
  p.tau_end = cfg.get_double("tau_end", p.tau_end);
  p.steps = cfg.get_int("steps", p.steps);
  p.gauss_tol = cfg.get_double("gauss_tol", p.gauss_tol);
  p.lapse_tol = cfg.get_double("lapse_tol", p.lapse_tol);
  p.richardson_steps = cfg.get_int("richardson_steps", p.richardson_steps);
  p.richardson_band = cfg.get_double("richardson_band", p.richardson_band);
  require(p.tau_start < 0.0 && p.tau_end < 0.0, "tau range must lie in (-inf, 0)");
  require(p.tau_start < p.tau_end, "tau_start must be below tau_end");
  require(p.steps >= 1, "steps must be at least 1");
  require(p.richardson_steps >= 0, "richardson_steps must be non-negative");
  require_positive(p.gauss_tol, "gauss_tol");
  require_positive(p.lapse_tol, "lapse_tol");
  require_positive(p.richardson_band, "richardson_band");
  return p;
}

double max_gauss(const HamTrace& t) {
  double g = 0.0;
  for (const auto& r : t.records) g = std::max(g, r.gauss_residual);
  return g;
}

void flow_common_checks(const FlowProblem& prob, const FlowRun& run, const FlowParams& p, RunSummary& s,
                        Artifacts& out) {
  const int n = prob.geometry.n();
  double lapse_res = 0.0;
  double ricci_excess = 0.0;
  for (const auto& r : run.trace.records) {
    lapse_res = std::max(lapse_res, r.lapse_backward_error);
    ricci_excess = std::max(ricci_excess, r.ricci_over_tau4_max / ricci_bound_constant(n) - 1.0);
  }
  s.checks.push_back(make_check("gauss_residual_max", max_gauss(run.trace), 0.0, p.gauss_tol));
  s.checks.push_back(make_check("lapse_backward_error", lapse_res, 0.0, p.lapse_tol));
  s.checks.push_back(
      make_check("bound_violations", static_cast<double>(run.trace.violations.size()), 0.0, 0.0));
  // Cones attain the bound, so the excess is relative with the usual bound slack.
  s.checks.push_back(make_check("ricci_bound_excess", std::max(ricci_excess, 0.0), 0.0, kBoundSlack));

  if (p.richardson_steps == 0) return;
  FlowOptions fixed;
  fixed.retry_on_drift = false;
  CsvTable rt;
  rt.header = {"steps", "gauss_residual_max"};
  std::vector<double> g;
  for (int k = 0; k < 3; ++k) {
    const int steps = p.richardson_steps << k;
    g.push_back(max_gauss(run_flow(prob.geometry, prob.state, p.tau_end, steps, fixed).trace));
    rt.add_row({static_cast<double>(steps), g.back()});
  }
  out.write("richardson.csv", to_csv(rt));
  for (int k = 0; k < 2; ++k) {
    s.checks.push_back(make_check("gauss_richardson_ratio_" + std::to_string(k + 1), g[k] / g[k + 1], 16.0,
                                  16.0 * p.richardson_band));
  }
}

PreparedScenario prepare_cone(const ScenarioConfig& cfg) {
  ConeModel m;
  m.dim = cfg.get_int("dim", 3);
  as_config([&] { m.base_volume = default_base_volume(m.dim); });
  m.base_volume = cfg.get_double("base_volume", m.base_volume);
  as_config([&] { validate(m); });
  const FlowParams p = read_flow_params(cfg);
  const double drift_tol = cfg.get_double("drift_tol", 1e-8);
  require_positive(drift_tol, "drift_tol");

  PreparedScenario ps;
  ps.body = [=](RunSummary& s) {
    Artifacts out(s.output_dir, s);
    const FlowProblem prob = cone_problem(m, p.tau_start);
    const FlowRun run = run_flow(prob.geometry, prob.state, p.tau_end, p.steps);
    out.write("trace.csv", trace_to_csv(run.trace));
    const double expected = ham_closed_form(m, p.tau_start);
    double drift = 0.0;
    for (const auto& r : run.trace.records) drift = std::max(drift, std::abs(r.ham - expected) / expected);
    s.checks.push_back(make_check("ham_relative_drift", drift, 0.0, drift_tol));
    flow_common_checks(prob, run, p, s, out);
  };
  return ps;
}

PreparedScenario prepare_kasner(const ScenarioConfig& cfg) {
  KasnerModel m;
  m.dim = cfg.get_int("dim", 3);
  m.sigma_volume = cfg.get_double("sigma_volume", m.sigma_volume);
  m.circle_length = cfg.get_double("circle_length", m.circle_length);
  as_config([&] { validate(m); });
  const int grid_points = cfg.get_int("grid_points", 256);
  require(grid_points == 0 || grid_points >= 4, "grid_points must be 0 or at least 4");
  const FlowParams p = read_flow_params(cfg);
  const double closed_form_tol = cfg.get_double("closed_form_tol", 1e-6);
  const double identity_tol = cfg.get_double("identity_tol", 1e-4);
  require_positive(closed_form_tol, "closed_form_tol");
  require_positive(identity_tol, "identity_tol");

  PreparedScenario ps;
  ps.body = [=](RunSummary& s) {
    Artifacts out(s.output_dir, s);
    const FlowProblem prob = kasner_problem(m, p.tau_start, grid_points);
    const FlowRun run = run_flow(prob.geometry, prob.state, p.tau_end, p.steps);
    out.write("trace.csv", trace_to_csv(run.trace));
    double err = 0.0;
    int non_decreasing = 0;
    const auto& rec = run.trace.records;
    for (std::size_t i = 0; i < rec.size(); ++i) {
      const double exact = ham_closed_form(m, rec[i].tau);
      err = std::max(err, std::abs(rec[i].ham - exact) / exact);
      if (i + 1 < rec.size() && !(rec[i + 1].ham < rec[i].ham)) ++non_decreasing;
    }
    s.checks.push_back(make_check("ham_closed_form_error", err, 0.0, closed_form_tol));
    s.checks.push_back(make_check("ham_non_decreasing_steps", non_decreasing, 0.0, 0.0));
    const MonotonicityReport mono = ham_monotonicity_check(run.trace);
    s.checks.push_back(make_check("monotonicity_identity_error", mono.max_relative_error, 0.0, identity_tol));
    flow_common_checks(prob, run, p, s, out);
  };
  return ps;
}

// --- conformal ----------------------------------------------------------------

PreparedScenario prepare_lichnerowicz(const ScenarioConfig& cfg) {
  ConformalBackground bg;
  bg.dim = cfg.get_int("dim", 3);
  bg.volume = cfg.get_double("volume", bg.volume);
  bg.grid_points = cfg.get_int("grid_points", 0);
  bg.circle_length = cfg.get_double("circle_length", bg.circle_length);
  as_config([&] { validate(bg); });
  const std::vector<double> taus = cfg.get_doubles("taus", {-4.0, -3.0, -2.0, -1.0});
  const std::vector<double> sigma_sqs = cfg.get_doubles("sigma_sqs", {0.0, 1.0, 4.0, 12.0, 40.0});
  const double floor_tol = cfg.get_double("floor_tol", 1e-12);
  require_positive(floor_tol, "floor_tol");
  for (double t : taus) require(t < 0.0, "taus must lie in (-inf, 0)");
  for (double v : sigma_sqs) require(v >= 0.0, "sigma_sqs must be non-negative");

  PreparedScenario ps;
  ps.body = [=](RunSummary& s) {
    Artifacts out(s.output_dir, s);
    const CsvTable sweep = lichnerowicz_sweep(bg, taus, sigma_sqs);
    out.write("sweep.csv", to_csv(sweep));
    double floor_err = 0.0;
    for (double tau : taus) {
      const LichSolution sol = solve_lichnerowicz(bg, constant_tt(bg, 0.0), tau);
      floor_err = std::max(floor_err, (sol.u.array() - lichnerowicz_floor(bg.dim, tau)).abs().maxCoeff());
    }
    // Equality holds at sigma = 0, so both comparisons carry a rounding allowance.
    constexpr double kSlack = 1e-12;
    int below_floor = 0;
    int below_bound = 0;
    const std::size_t t = sweep.column("tau"), umin = sweep.column("u_min"), ham = sweep.column("ham"),
                      bound = sweep.column("bound_nn_vol");
    for (const auto& row : sweep.rows) {
      if (row[umin] < lichnerowicz_floor(bg.dim, row[t]) * (1.0 - kSlack)) ++below_floor;
      if (row[ham] < row[bound] * (1.0 - kSlack)) ++below_bound;
    }
    s.checks.push_back(make_check("sigma_zero_floor_error", floor_err, 0.0, floor_tol));
    s.checks.push_back(make_check("u_below_floor", below_floor, 0.0, 0.0));
    s.checks.push_back(make_check("ham_below_nn_vol", below_bound, 0.0, 0.0));
  };
  return ps;
}

// --- riccati ------------------------------------------------------------------

PreparedScenario prepare_riccati(const ScenarioConfig& cfg) {
  const int dim = cfg.get_int("dim", 3);
  const int samples = cfg.get_int("samples", 20);
  const int steps = cfg.get_int("steps", 2000);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 20240611));
  const double kappa_min = cfg.get_double("kappa_min", 0.5);
  const double kappa_max = cfg.get_double("kappa_max", 2.0);
  const double t_max = cfg.get_double("t_max", 2.0);
  const double tol = cfg.get_double("tol", 1e-8);
  const double semigroup_tol = cfg.get_double("semigroup_tol", 1e-10);
  require(dim >= 1 && dim <= 8, "dim must be in [1, 8]");
  require(samples >= 1, "samples must be at least 1");
  require(steps >= 1, "steps must be at least 1");
  require(kappa_min > 0.0 && kappa_max >= kappa_min, "need 0 < kappa_min <= kappa_max");
  require_positive(t_max, "t_max");
  require_positive(tol, "tol");
  require_positive(semigroup_tol, "semigroup_tol");

  PreparedScenario ps;
  ps.body = [=](RunSummary& s) {
    Artifacts out(s.output_dir, s);
    Rng rng(seed);
    CsvTable table;
    table.header = {"sample", "t", "latest_focal_time", "rk4_error", "semigroup_error"};
    double worst = 0.0;
    double worst_semigroup = 0.0;
    for (int k = 0; k < samples; ++k) {
      Eigen::MatrixXd a(dim, dim);
      for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) a(i, j) = rng.uniform(-1.0, 1.0);
      }
      const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(a).householderQ();
      Eigen::VectorXd kappa(dim);
      for (int i = 0; i < dim; ++i) kappa(i) = -rng.uniform(kappa_min, kappa_max);
      Eigen::MatrixXd k0 = q * kappa.asDiagonal() * q.transpose();
      k0 = 0.5 * (k0 + k0.transpose());
      const RiccatiState st{k0, 0.0};
      // Past focal points only: any t above half the latest one stays clear of them.
      const double focal = focal_times(st).back();
      const double t = rng.uniform(0.5 * focal, t_max);
      const Eigen::MatrixXd exact = riccati_propagate(st, t);
      const double scale = std::max(1.0, exact.cwiseAbs().maxCoeff());
      const double err = (riccati_integrate_rk4(k0, t, steps) - exact).cwiseAbs().maxCoeff() / scale;
      const Eigen::MatrixXd half = riccati_propagate(st, 0.5 * t);
      const double semi =
          (riccati_propagate(RiccatiState{half, 0.0}, 0.5 * t) - exact).cwiseAbs().maxCoeff() / scale;
      worst = std::max(worst, err);
      worst_semigroup = std::max(worst_semigroup, semi);
      table.add_row({static_cast<double>(k), t, focal, err, semi});
    }
    out.write("riccati.csv", to_csv(table));
    s.checks.push_back(make_check("rk4_vs_closed_form", worst, 0.0, tol));
    s.checks.push_back(make_check("semigroup_error", worst_semigroup, 0.0, semigroup_tol));
  };
  return ps;
}

// --- bolza --------------------------------------------------------------------

// Bolza letters k and k + 4 are mutually inverse. Random words avoid adjacent
// letters that cancel in the group: cancellation makes the partial products
// far larger than the result and the cocycle identities ill-conditioned.
Word random_word(Rng& rng, int gens, int length) {
  auto canonical = [gens](int letter) {
    const int k = std::abs(letter) - 1;
    const int half = gens / 2;
    return std::pair{k % half, (letter > 0) == (k < half) ? 1 : -1};
  };
  Word w;
  while (static_cast<int>(w.size()) < length) {
    const int g = rng.integer(1, gens);
    const int letter = rng.integer(0, 1) ? g : -g;
    if (!w.empty()) {
      const auto [a, sa] = canonical(w.back());
      const auto [b, sb] = canonical(letter);
      if (a == b && sa == -sb) continue;
    }
    w.push_back(letter);
  }
  return w;
}

double max_abs_diff(const MinkVector& a, const MinkVector& b) {
  return (a.components() - b.components()).cwiseAbs().maxCoeff();
}

PreparedScenario prepare_bolza(const ScenarioConfig& cfg) {
  const int samples = cfg.get_int("samples", 200);
  const int word_length = cfg.get_int("word_length", 6);
  const int equivariance_word_length = cfg.get_int("equivariance_word_length", 2);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed", 8));
  const double relator_tol = cfg.get_double("relator_tol", 1e-9);
  const double area_tol = cfg.get_double("area_tol", 1e-3);
  const double cocycle_tol = cfg.get_double("cocycle_tol", 1e-9);
  const double equivariance_tol = cfg.get_double("equivariance_tol", 1e-9);
  require(samples >= 1, "samples must be at least 1");
  require(word_length >= 1 && equivariance_word_length >= 1, "word lengths must be at least 1");
  for (double v : {relator_tol, area_tol, cocycle_tol, equivariance_tol}) require_positive(v, "tolerances");

  PreparedScenario ps;
  ps.body = [=](RunSummary& s) {
    Artifacts out(s.output_dir, s);
    Rng rng(seed);
    const BolzaOctagon oct = bolza_octagon();
    const GroupPresentation pres = bolza_generators();

    CsvTable table;
    table.header = {"side", "normal_t", "normal_x", "normal_y", "vertex_t", "vertex_x", "vertex_y"};
    for (int k = 0; k < 8; ++k) {
      const auto& nk = oct.side_normals[static_cast<std::size_t>(k)];
      const auto& vk = oct.vertices[static_cast<std::size_t>(k)];
      table.add_row({static_cast<double>(k), nk[0], nk[1], nk[2], vk[0], vk[1], vk[2]});
    }
    out.write("octagon.csv", to_csv(table));

    s.checks.push_back(make_check("relator_residual", relator_residual(pres), 0.0, relator_tol));
    s.checks.push_back(make_check("octagon_area", octagon_area(oct), 4.0 * M_PI, area_tol));
    s.checks.push_back(make_check("h1_dimension", static_cast<double>(cohomology_complement_basis(pres).cols()), 6.0,
                                  0.0));

    // A random genuine cocycle from Z^1.
    const Eigen::MatrixXd z1 = cocycle_space_basis(pres);
    Eigen::VectorXd coef(z1.cols());
    for (Eigen::Index i = 0; i < coef.size(); ++i) coef(i) = rng.uniform(-1.0, 1.0);
    const HolonomyRep rep{pres, cocycle_from_stacked(pres, z1 * coef)};
    double rule = cocycle_relator_residual(rep);
    for (int k = 0; k < samples; ++k) {
      const Word a = random_word(rng, pres.generator_count(), word_length);
      const Word b = random_word(rng, pres.generator_count(), word_length);
      const LorentzMap fa = evaluate_word(pres, a);
      const MinkVector ta = extend_cocycle(rep, a);
      const MinkVector tb = extend_cocycle(rep, b);
      const MinkVector lhs = extend_cocycle(rep, concat(a, b));
      // Relative to the terms being summed: f(a) t_b and t_a can nearly cancel.
      const double scale = std::max({1.0, ta.components().cwiseAbs().maxCoeff(),
                                     (fa * tb).components().cwiseAbs().maxCoeff()});
      rule = std::max(rule, max_abs_diff(lhs, ta + fa * tb) / scale);
    }
    s.checks.push_back(make_check("cocycle_rule", rule, 0.0, cocycle_tol));

    const MinkVector b(Eigen::Vector3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2)));
    const HolonomyRep cob{pres, coboundary_cocycle(pres, b)};
    s.checks.push_back(make_check("coboundary_relator_residual", cocycle_relator_residual(cob), 0.0, cocycle_tol));

    // The hyperboloid about b is invariant under the coboundary structure.
    const AnalyticGraph graph = hyperboloid_graph(1.0, b);
    double equiv = 0.0;
    for (int k = 0; k < samples; ++k) {
      const Eigen::Vector2d x(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5));
      const MinkVector p(Eigen::Vector3d(graph.value(x), x(0), x(1)));
      const Word w = random_word(rng, pres.generator_count(), rng.integer(1, equivariance_word_length));
      const MinkVector q = apply_deformed_holonomy(cob, w, p);
      const MinkVector expected = evaluate_word(pres, w) * graph.geometry(x).normal;
      const MinkVector got = graph.geometry(q.spatial()).normal;
      equiv = std::max(equiv, max_abs_diff(got, expected) / std::max(1.0, expected.components().cwiseAbs().maxCoeff()));
    }
    s.checks.push_back(make_check("gauss_map_equivariance", equiv, 0.0, equivariance_tol));
  };
  return ps;
}

// --- graphs -------------------------------------------------------------------

PreparedScenario prepare_graph(const ScenarioConfig& cfg) {
  const int dim = cfg.get_int("dim", 2);
  const double s_radius = cfg.get_double("radius", 1.0);
  const std::vector<double> counts = cfg.get_doubles("counts", dim == 2 ? std::vector<double>{17, 33, 65}
                                                                        : std::vector<double>{9, 17, 33});
  const double half_width = cfg.get_double("half_width", 1.5);
  const double order_target = cfg.get_double("order_target", 2.0);
  const double order_tol = cfg.get_double("order_tol", 0.2);
  const double det_tol = cfg.get_double("det_tol", 1e-12);
  const double energy_spacing = cfg.get_double("energy_spacing", dim == 2 ? 0.005 : 0.0);
  const double energy_tol = cfg.get_double("energy_tol", 1e-3);
  require(dim >= 2 && dim <= 4, "dim must be 2, 3 or 4");
  require_positive(s_radius, "radius");
  require_positive(half_width, "half_width");
  require(counts.size() >= 3, "counts needs at least three grids");
  for (double c : counts) require(c == std::floor(c) && c >= 2 * kBoundaryMargin + 3, "counts must be integers >= 7");
  for (std::size_t i = 1; i < counts.size(); ++i) require(counts[i] > counts[i - 1], "counts must increase");
  require_positive(order_tol, "order_tol");
  require_positive(det_tol, "det_tol");
  require(energy_spacing >= 0.0, "energy_spacing must be non-negative");
  require(energy_spacing == 0.0 || dim == 2, "the energy identity check needs dim = 2");
  require_positive(energy_tol, "energy_tol");

  PreparedScenario ps;
  ps.body = [=](RunSummary& s) {
    Artifacts out(s.output_dir, s);
    const AnalyticGraph hyp = hyperboloid_graph(s_radius, dim);
    const double h_exact = -dim / s_radius;
    CsvTable conv;
    conv.header = {"count", "spacing", "h_error", "det_defect"};
    std::vector<double> hs, errs;
    double det = 0.0;
    for (double c : counts) {
      const HeightField phi = HeightField::centered(dim, static_cast<int>(c), half_width, hyp.value);
      const GraphGeometry geo = graph_geometry(phi);
      const Spread sp = mean_curvature_spread(geo);
      const double err = std::max(std::abs(sp.min - h_exact), std::abs(sp.max - h_exact));
      const double d = volume_element_defect(geo);
      det = std::max(det, d);
      hs.push_back(phi.spacing());
      errs.push_back(err);
      conv.add_row({c, phi.spacing(), err, d});
    }
    out.write("convergence.csv", to_csv(conv));
    for (std::size_t i = 0; i + 1 < hs.size(); ++i) {
      const double order = std::log(errs[i] / errs[i + 1]) / std::log(hs[i] / hs[i + 1]);
      s.checks.push_back(make_check("h_order_" + std::to_string(i + 1), order, order_target, order_tol));
    }
    s.checks.push_back(make_check("volume_element_defect", det, 0.0, det_tol));

    if (energy_spacing == 0.0) return;
    // Patch covering the Gauss-map preimage of the octagon plus a few cells.
    const BolzaOctagon oct = bolza_octagon();
    const double reach = s_radius * oct.vertices[0].spatial().norm();
    const int count = 2 * static_cast<int>(std::ceil((reach + 0.05) / energy_spacing)) + 2 * kBoundaryMargin + 7;
    const double hw = 0.5 * (count - 1) * energy_spacing;
    const HeightField phi = HeightField::centered(2, count, hw, hyp.value);
    const QuotientEnergy q = quotient_energy(phi, DomainFilter::bolza());
    const double chi = -2.0;
    const double identity = q.energy - (4.0 * M_PI * chi + h_exact * h_exact * q.volume);
    CsvTable et;
    et.header = {"spacing", "energy", "volume", "tau_mean", "identity_error", "clipped_cells"};
    et.add_row({phi.spacing(), q.energy, q.volume, q.tau_mean, identity, static_cast<double>(q.clipped_cells)});
    out.write("energy.csv", to_csv(et));
    s.checks.push_back(make_check("energy_identity", identity, 0.0, energy_tol));
  };
  return ps;
}

// --- limit experiment ---------------------------------------------------------

PreparedScenario prepare_limit(const ScenarioConfig& cfg) {
  LimitOptions o;
  const double amplitude = cfg.get_double("amplitude", 0.5);
  const std::vector<double> lambdas = cfg.get_doubles("lambdas", {1.0, 2.0, 4.0, 8.0});
  o.tau_target = cfg.get_double("tau", o.tau_target);
  o.spacing = cfg.get_double("spacing", o.spacing);
  o.richardson = cfg.get_bool("richardson", o.richardson);
  o.margin = cfg.get_double("margin", o.margin);
  o.tol = cfg.get_double("tol", o.tol);
  o.max_iters = cfg.get_int("max_iters", o.max_iters);
  o.max_bisections = cfg.get_int("max_bisections", o.max_bisections);
  const double coboundary_shift = cfg.get_double("coboundary_shift", 0.05);
  const double coboundary_tol = cfg.get_double("coboundary_tol", 1e-4);
  as_config([&] { validate(o); });
  require(amplitude != 0.0, "amplitude must be nonzero (use coboundary_shift for trivial deformations)");
  for (double l : lambdas) require(l > 0.0, "lambdas must be positive");
  for (std::size_t i = 1; i < lambdas.size(); ++i) require(lambdas[i] > lambdas[i - 1], "lambdas must increase");
  require(coboundary_shift >= 0.0, "coboundary_shift must be non-negative");
  require_positive(coboundary_tol, "coboundary_tol");

  PreparedScenario ps;
  ps.body = [=](RunSummary& s) {
    Artifacts out(s.output_dir, s);
    const std::vector<LimitRow> rows = limit_experiment(bolza_deformation(amplitude), lambdas, o);
    out.write("limit.csv", to_csv(limit_table(rows)));
    int failed = 0;
    int trend = 0;
    std::size_t clipped = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!rows[i].converged) ++failed;
      clipped = std::max(clipped, rows[i].clipped_cells);
      if (i + 1 < rows.size() && !(std::abs(rows[i + 1].ham_ratio - 1.0) < std::abs(rows[i].ham_ratio - 1.0))) ++trend;
    }
    s.checks.push_back(make_check("unconverged_rows", failed, 0.0, 0.0));
    s.checks.push_back(make_check("trend_violations", trend, 0.0, 0.0));
    s.checks.push_back(make_check("clipped_cells", static_cast<double>(clipped), 0.0, 0.0));

    if (coboundary_shift == 0.0) return;
    const GroupPresentation pres = bolza_generators();
    const HolonomyRep cob{pres, coboundary_cocycle(pres, MinkVector::basis(2, 1) * coboundary_shift)};
    const std::vector<LimitRow> crow = limit_experiment(cob, {1.0}, o);
    out.write("coboundary.csv", to_csv(limit_table(crow)));
    s.checks.push_back(make_check("coboundary_ham_ratio", crow[0].ham_ratio, 1.0, coboundary_tol));
  };
  return ps;
}

}  // namespace

RunSummary PreparedScenario::run() const {
  RunSummary s;
  s.scenario = name;
  s.output_dir = output_dir;
  std::filesystem::create_directories(output_dir);
  try {
    body(s);
  } catch (const NumericalError& e) {
    s.checks.push_back(make_check("numerical_failure", std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0));
    write_text_file(output_dir / "summary.csv", summary_to_csv(s));
    throw;
  }
  write_text_file(output_dir / "summary.csv", summary_to_csv(s));
  return s;
}

PreparedScenario prepare_scenario(const ScenarioConfig& cfg, const std::optional<std::filesystem::path>& output_override) {
  const std::string& name = cfg.name();
  PreparedScenario ps;
  if (name == "cone-flow") {
    ps = prepare_cone(cfg);
  } else if (name == "kasner-flow") {
    ps = prepare_kasner(cfg);
  } else if (name == "lichnerowicz-sweep") {
    ps = prepare_lichnerowicz(cfg);
  } else if (name == "riccati") {
    ps = prepare_riccati(cfg);
  } else if (name == "bolza-check") {
    ps = prepare_bolza(cfg);
  } else if (name == "limit-experiment") {
    ps = prepare_limit(cfg);
  } else if (name == "graph-check") {
    ps = prepare_graph(cfg);
  } else {
    throw ConfigError("unknown scenario '" + name + "'");
  }
  ps.name = name;
  const std::string dir = cfg.get_string("output_dir", "flatcmc-out/" + name);
  ps.output_dir = output_override ? *output_override : std::filesystem::path(dir);
  ps.golden_rel_tol = cfg.get_double("golden_rel_tol", ps.golden_rel_tol);
  require_positive(ps.golden_rel_tol, "golden_rel_tol");
  if (const auto unused = cfg.unused_keys(); !unused.empty()) {
    std::string list;
    for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown keys for scenario " + name + ": " + list);
  }
  return ps;
}

RunSummary run_scenario(const ScenarioConfig& cfg, const std::optional<std::filesystem::path>& output_override) {
  return prepare_scenario(cfg, output_override).run();
}

std::vector<GoldenCheck> check_golden(const RunSummary& s, const std::filesystem::path& golden_dir, double rel_tol) {
  std::vector<GoldenCheck> out;
  for (const auto& name : s.artifacts) {
    const auto golden = golden_dir / name;
    if (!std::filesystem::exists(golden)) continue;
    GoldenCheck g{name, false, {}};
    try {
      const GoldenReport r =
          compare_tables(parse_csv(read_text_file(s.output_dir / name)), parse_csv(read_text_file(golden)), rel_tol);
      g.match = r.match;
      if (!r.match) {
        g.detail = std::to_string(r.mismatches) + " mismatches, worst relative " + format_double(r.worst_relative) +
                   ", first " + r.first_mismatch;
      }
    } catch (const std::invalid_argument& e) {
      g.detail = e.what();
    }
    out.push_back(std::move(g));
  }
  if (out.empty()) throw ConfigError("no artifact of " + s.scenario + " has a golden file in " + golden_dir.string());
  return out;
}

}  // namespace flatcmc
