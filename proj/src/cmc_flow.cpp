#include "flatcmc/cmc_flow.hpp"

#include "flatcmc/csv.hpp"
#include "flatcmc/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace flatcmc {

int BlockGeometry::n() const {
  int total = 0;
  for (const auto& b : blocks) total += b.dim;
  return total;
}

void validate(const BlockGeometry& geo) {
  if (geo.blocks.empty()) throw DimensionError("geometry has no blocks");
  for (const auto& b : geo.blocks) {
    if (b.dim < 1) throw DimensionError("block dimension must be positive");
  }
  const int n = geo.n();
  if (n < 2 || n > 4) throw DimensionError("total dimension must be 2, 3 or 4");
  if (!(geo.volume_factor > 0.0)) throw DomainError("volume factor must be positive");
  if (geo.has_grid()) {
    if (geo.grid_block >= static_cast<int>(geo.blocks.size())) throw DimensionError("grid block index out of range");
    const SliceBlock& gb = geo.blocks[static_cast<std::size_t>(geo.grid_block)];
    if (gb.dim != 1 || gb.curvature != BlockCurvature::Flat) {
      throw DomainError("the grid must live on a 1-dimensional flat block");
    }
    if (geo.grid_points < 4) throw DomainError("grid needs at least 4 points");
    if (!(geo.circle_length > 0.0)) throw DomainError("circle length must be positive");
  }
}

namespace {

void check_state(const BlockGeometry& geo, const FlowState& s) {
  const auto nb = geo.blocks.size();
  if (s.g_blocks.size() != nb || s.k_blocks.size() != nb) throw DimensionError("state block count mismatch");
  for (std::size_t i = 0; i < nb; ++i) {
    if (s.g_blocks[i].size() != geo.points() || s.k_blocks[i].size() != geo.points()) {
      throw DimensionError("state field length does not match the grid");
    }
  }
}

Eigen::VectorXd shift(const Eigen::VectorXd& f, int by) {
  const Eigen::Index m = f.size();
  Eigen::VectorXd out(m);
  for (Eigen::Index k = 0; k < m; ++k) out(k) = f(((k + by) % m + m) % m);
  return out;
}

// Periodic central difference d/dr.
Eigen::VectorXd d_dr(const BlockGeometry& geo, const Eigen::VectorXd& f) {
  return (shift(f, 1) - shift(f, -1)) / (2.0 * geo.spacing());
}

struct GridFrame {
  Eigen::VectorXd c;          // radial metric coefficient
  Eigen::VectorXd sqrt_c;
  Eigen::VectorXd sqrt_g;     // sqrt(det g) per unit fiber volume
  Eigen::VectorXd w_half;     // sqrt_g / C averaged onto node k + 1/2
};

GridFrame grid_frame(const BlockGeometry& geo, const FlowState& s) {
  GridFrame fr;
  const auto gs = static_cast<std::size_t>(geo.grid_block);
  fr.c = s.g_blocks[gs];
  fr.sqrt_c = fr.c.array().sqrt();
  fr.sqrt_g = fr.sqrt_c;
  for (std::size_t i = 0; i < geo.blocks.size(); ++i) {
    if (i == gs) continue;
    fr.sqrt_g.array() *= s.g_blocks[i].array().pow(0.5 * geo.blocks[i].dim);
  }
  const Eigen::VectorXd w = fr.sqrt_g.cwiseQuotient(fr.c);
  fr.w_half = 0.5 * (w + shift(w, 1));
  return fr;
}

// Point values of sqrt(det g) so that integrals are volume_factor * sum(f * weight).
Eigen::VectorXd quadrature_weights(const BlockGeometry& geo, const FlowState& s) {
  if (geo.has_grid()) return grid_frame(geo, s).sqrt_g * geo.spacing();
  double w = 1.0;
  for (std::size_t i = 0; i < geo.blocks.size(); ++i) w *= std::pow(s.g_blocks[i](0), 0.5 * geo.blocks[i].dim);
  return Eigen::VectorXd::Constant(1, w);
}

double integrate(const BlockGeometry& geo, const FlowState& s, const Eigen::VectorXd& f) {
  return geo.volume_factor * quadrature_weights(geo, s).dot(f);
}

// Arclength derivatives of f_i = sqrt(A_i) along the grid direction.
struct WarpDerivatives {
  std::vector<Eigen::VectorXd> f, fp, fpp;
};

WarpDerivatives warp_derivatives(const BlockGeometry& geo, const FlowState& s, const GridFrame& fr) {
  WarpDerivatives wd;
  const double h = geo.spacing();
  const Eigen::VectorXd sqrt_c_half = 0.5 * (fr.sqrt_c + shift(fr.sqrt_c, 1));
  for (std::size_t i = 0; i < geo.blocks.size(); ++i) {
    Eigen::VectorXd f = s.g_blocks[i].array().sqrt();
    Eigen::VectorXd fp = d_dr(geo, f).cwiseQuotient(fr.sqrt_c);
    const Eigen::VectorXd flux = (shift(f, 1) - f).cwiseQuotient(sqrt_c_half);
    Eigen::VectorXd fpp = (flux - shift(flux, -1)).cwiseQuotient(fr.sqrt_c) / (h * h);
    wd.f.push_back(std::move(f));
    wd.fp.push_back(std::move(fp));
    wd.fpp.push_back(std::move(fpp));
  }
  return wd;
}

std::vector<Eigen::VectorXd> codazzi_terms(const BlockGeometry& geo, const FlowState& s) {
  std::vector<Eigen::VectorXd> out;
  if (!geo.has_grid()) return out;
  const GridFrame fr = grid_frame(geo, s);
  const WarpDerivatives wd = warp_derivatives(geo, s, fr);
  const auto kappa = mixed_curvatures(s);
  const auto gs = static_cast<std::size_t>(geo.grid_block);
  for (std::size_t i = 0; i < geo.blocks.size(); ++i) {
    if (i == gs) continue;
    const Eigen::VectorXd dk = d_dr(geo, kappa[i]).cwiseQuotient(fr.sqrt_c);
    out.push_back(dk - wd.fp[i].cwiseQuotient(wd.f[i]).cwiseProduct(kappa[gs] - kappa[i]));
  }
  return out;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace

FlowProblem problem_from_slice(const SliceData& slice) {
  FlowProblem p;
  p.geometry.blocks = slice.blocks;
  double unit = 1.0;
  for (std::size_t i = 0; i < slice.blocks.size(); ++i) {
    unit *= std::pow(slice.block_metric_scales[i], 0.5 * slice.blocks[i].dim);
    p.state.g_blocks.push_back(Eigen::VectorXd::Constant(1, slice.block_metric_scales[i]));
    p.state.k_blocks.push_back(Eigen::VectorXd::Constant(1, slice.k_eigenvalues[i] * slice.block_metric_scales[i]));
  }
  p.geometry.volume_factor = slice.volume / unit;
  p.state.tau = slice.tau;
  validate(p.geometry);
  p.state.lapse = solve_lapse(p.geometry, p.state);
  return p;
}

FlowProblem cone_problem(const ConeModel& m, double tau) {
  validate(m);
  if (!(tau < 0.0)) throw DomainError("tau must be negative");
  const double s = -m.dim / tau;
  FlowProblem p;
  p.geometry.blocks = {{m.dim, BlockCurvature::Hyperbolic}};
  p.geometry.volume_factor = m.base_volume;
  p.state.tau = tau;
  p.state.g_blocks = {Eigen::VectorXd::Constant(1, s * s)};
  p.state.k_blocks = {Eigen::VectorXd::Constant(1, -s)};
  p.state.lapse = solve_lapse(p.geometry, p.state);
  return p;
}

FlowProblem kasner_problem(const KasnerModel& m, double tau, int grid_points) {
  validate(m);
  if (!(tau < 0.0)) throw DomainError("tau must be negative");
  if (grid_points < 0) throw DomainError("grid_points must be non-negative");
  const double rho = -(m.dim - 1) / tau;
  FlowProblem p;
  p.geometry.blocks = {{m.dim - 1, BlockCurvature::Hyperbolic}, {1, BlockCurvature::Flat}};
  const int pts = grid_points > 0 ? grid_points : 1;
  if (grid_points > 0) {
    p.geometry.grid_block = 1;
    p.geometry.grid_points = grid_points;
    p.geometry.circle_length = m.circle_length;
    p.geometry.volume_factor = m.sigma_volume;
  } else {
    p.geometry.volume_factor = m.sigma_volume * m.circle_length;
  }
  validate(p.geometry);
  p.state.tau = tau;
  p.state.g_blocks = {Eigen::VectorXd::Constant(pts, rho * rho), Eigen::VectorXd::Ones(pts)};
  p.state.k_blocks = {Eigen::VectorXd::Constant(pts, -rho), Eigen::VectorXd::Zero(pts)};
  p.state.lapse = solve_lapse(p.geometry, p.state);
  return p;
}

std::vector<Eigen::VectorXd> mixed_curvatures(const FlowState& s) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < s.g_blocks.size(); ++i) out.push_back(s.k_blocks[i].cwiseQuotient(s.g_blocks[i]));
  return out;
}

Eigen::VectorXd trace_k(const BlockGeometry& geo, const FlowState& s) {
  check_state(geo, s);
  const auto kappa = mixed_curvatures(s);
  Eigen::VectorXd tr = Eigen::VectorXd::Zero(geo.points());
  for (std::size_t i = 0; i < kappa.size(); ++i) tr += geo.blocks[i].dim * kappa[i];
  return tr;
}

Eigen::VectorXd k_norm_sq(const BlockGeometry& geo, const FlowState& s) {
  check_state(geo, s);
  const auto kappa = mixed_curvatures(s);
  Eigen::VectorXd k2 = Eigen::VectorXd::Zero(geo.points());
  for (std::size_t i = 0; i < kappa.size(); ++i) k2 += geo.blocks[i].dim * kappa[i].cwiseAbs2();
  return k2;
}

std::vector<Eigen::VectorXd> block_ricci(const BlockGeometry& geo, const FlowState& s) {
  check_state(geo, s);
  std::vector<Eigen::VectorXd> ric;
  if (!geo.has_grid()) {
    for (std::size_t i = 0; i < geo.blocks.size(); ++i) {
      const double k = geo.blocks[i].curvature == BlockCurvature::Hyperbolic ? -1.0 : 0.0;
      ric.push_back((geo.blocks[i].dim - 1) * k * s.g_blocks[i].cwiseInverse());
    }
    return ric;
  }
  const GridFrame fr = grid_frame(geo, s);
  const WarpDerivatives wd = warp_derivatives(geo, s, fr);
  const auto gs = static_cast<std::size_t>(geo.grid_block);
  const int m = geo.points();
  for (std::size_t i = 0; i < geo.blocks.size(); ++i) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(m);
    if (i == gs) {
      for (std::size_t j = 0; j < geo.blocks.size(); ++j) {
        if (j != gs) r -= geo.blocks[j].dim * wd.fpp[j].cwiseQuotient(wd.f[j]);
      }
    } else {
      const double k = geo.blocks[i].curvature == BlockCurvature::Hyperbolic ? -1.0 : 0.0;
      const Eigen::VectorXd log_i = wd.fp[i].cwiseQuotient(wd.f[i]);
      Eigen::VectorXd others = Eigen::VectorXd::Zero(m);
      for (std::size_t j = 0; j < geo.blocks.size(); ++j) {
        if (j != gs && j != i) others += geo.blocks[j].dim * wd.fp[j].cwiseQuotient(wd.f[j]);
      }
      r = (geo.blocks[i].dim - 1) * (k - wd.fp[i].array().square()).matrix().cwiseQuotient(s.g_blocks[i]) -
          wd.fpp[i].cwiseQuotient(wd.f[i]) - log_i.cwiseProduct(others);
    }
    ric.push_back(std::move(r));
  }
  return ric;
}

FlatResidual flat_constraint_residual(const BlockGeometry& geo, const FlowState& s) {
  const auto ric = block_ricci(geo, s);
  const auto kappa = mixed_curvatures(s);
  const Eigen::VectorXd tr = trace_k(geo, s);
  FlatResidual r;
  for (std::size_t i = 0; i < ric.size(); ++i) {
    const Eigen::VectorXd g = ric[i] - kappa[i].cwiseAbs2() + tr.cwiseProduct(kappa[i]);
    r.gauss = std::max(r.gauss, max_abs(g));
  }
  for (const auto& c : codazzi_terms(geo, s)) r.codazzi = std::max(r.codazzi, max_abs(c));
  return r;
}

VacuumResidual vacuum_constraint_residual(const BlockGeometry& geo, const FlowState& s) {
  const auto ric = block_ricci(geo, s);
  Eigen::VectorXd scalar = -k_norm_sq(geo, s) + trace_k(geo, s).cwiseAbs2();
  for (std::size_t i = 0; i < ric.size(); ++i) scalar += geo.blocks[i].dim * ric[i];
  VacuumResidual r;
  r.scalar = max_abs(scalar);
  if (geo.has_grid()) {
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(geo.points());
    const auto terms = codazzi_terms(geo, s);
    std::size_t t = 0;
    for (std::size_t i = 0; i < geo.blocks.size(); ++i) {
      if (static_cast<int>(i) == geo.grid_block) continue;
      mom += geo.blocks[i].dim * terms[t++];
    }
    r.momentum = max_abs(mom);
  }
  return r;
}

Eigen::VectorXd laplacian(const BlockGeometry& geo, const FlowState& s, const Eigen::VectorXd& f) {
  if (!geo.has_grid()) return Eigen::VectorXd::Zero(f.size());
  if (f.size() != geo.points()) throw DimensionError("field length does not match the grid");
  const GridFrame fr = grid_frame(geo, s);
  const double h = geo.spacing();
  const Eigen::VectorXd flux = fr.w_half.cwiseProduct(shift(f, 1) - f);
  return (flux - shift(flux, -1)).cwiseQuotient(fr.sqrt_g) / (h * h);
}

Eigen::VectorXd solve_lapse(const BlockGeometry& geo, const FlowState& s) {
  const Eigen::VectorXd k2 = k_norm_sq(geo, s);
  for (Eigen::Index k = 0; k < k2.size(); ++k) {
    if (!(k2(k) > 0.0) || !std::isfinite(k2(k))) {
      throw DegenerateLapseError("|K|^2 vanishes at grid point " + std::to_string(k));
    }
  }
  if (!geo.has_grid()) return k2.cwiseInverse();
  // Symmetric form: sqrt(g) (-Lap N + |K|^2 N) = sqrt(g).
  const GridFrame fr = grid_frame(geo, s);
  const int m = geo.points();
  const double inv_h2 = 1.0 / (geo.spacing() * geo.spacing());
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(3 * m));
  for (int k = 0; k < m; ++k) {
    const int kp = (k + 1) % m;
    const int km = (k + m - 1) % m;
    const double wp = fr.w_half(k) * inv_h2;
    const double wm = fr.w_half(km) * inv_h2;
    trips.emplace_back(k, k, wp + wm + fr.sqrt_g(k) * k2(k));
    trips.emplace_back(k, kp, -wp);
    trips.emplace_back(k, km, -wm);
  }
  Eigen::SparseMatrix<double> a(m, m);
  a.setFromTriplets(trips.begin(), trips.end());
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
  if (solver.info() != Eigen::Success) throw NumericalError("lapse factorization failed");
  Eigen::VectorXd n = solver.solve(fr.sqrt_g);
  if (solver.info() != Eigen::Success) throw NumericalError("lapse solve failed");
  return n;
}

double lapse_equation_residual(const BlockGeometry& geo, const FlowState& s) {
  const Eigen::VectorXd r = -laplacian(geo, s, s.lapse) + k_norm_sq(geo, s).cwiseProduct(s.lapse) -
                            Eigen::VectorXd::Ones(geo.points());
  return max_abs(r);
}

double lapse_backward_error(const BlockGeometry& geo, const FlowState& s) {
  const Eigen::VectorXd k2 = k_norm_sq(geo, s);
  Eigen::VectorXd row_sum = k2.cwiseAbs();
  if (geo.has_grid()) {
    const GridFrame fr = grid_frame(geo, s);
    const double h = geo.spacing();
    row_sum += 2.0 * (fr.w_half + shift(fr.w_half, -1)).cwiseQuotient(fr.sqrt_g) / (h * h);
  }
  return lapse_equation_residual(geo, s) / (row_sum.maxCoeff() * max_abs(s.lapse) + 1.0);
}

double volume(const BlockGeometry& geo, const FlowState& s) {
  check_state(geo, s);
  return integrate(geo, s, Eigen::VectorXd::Ones(geo.points()));
}

double n_khat2_integral(const BlockGeometry& geo, const FlowState& s) {
  const Eigen::VectorXd tr = trace_k(geo, s);
  const Eigen::VectorXd khat2 = k_norm_sq(geo, s) - tr.cwiseAbs2() / geo.n();
  return integrate(geo, s, s.lapse.cwiseProduct(khat2));
}

double ham(const BlockGeometry& geo, const FlowState& s) { return std::pow(std::abs(s.tau), geo.n()) * volume(geo, s); }

namespace {

struct Rates {
  std::vector<Eigen::VectorXd> da, db;
};

Rates flow_rhs(const BlockGeometry& geo, const FlowState& s) {
  for (const auto& a : s.g_blocks) {
    if (!(a.minCoeff() > 0.0) || !a.allFinite()) throw DegenerationError("metric scale became non-positive", s.tau);
  }
  const Eigen::VectorXd n = solve_lapse(geo, s);
  const std::size_t nb = geo.blocks.size();
  Rates r;
  r.da.resize(nb);
  r.db.resize(nb);
  std::vector<Eigen::VectorXd> hess(nb, Eigen::VectorXd::Zero(geo.points()));
  if (geo.has_grid()) {
    // Tangential Hessians from the Christoffel symbols; the radial one closes
    // the trace onto the same discrete Laplacian used by the lapse solve.
    const auto gs = static_cast<std::size_t>(geo.grid_block);
    const Eigen::VectorXd& c = s.g_blocks[gs];
    const Eigen::VectorXd n_r = d_dr(geo, n);
    Eigen::VectorXd tangential_trace = Eigen::VectorXd::Zero(geo.points());
    for (std::size_t i = 0; i < nb; ++i) {
      if (i == gs) continue;
      hess[i] = d_dr(geo, s.g_blocks[i]).cwiseProduct(n_r).cwiseQuotient(2.0 * c);
      tangential_trace += geo.blocks[i].dim * hess[i].cwiseQuotient(s.g_blocks[i]);
    }
    hess[gs] = c.cwiseProduct(laplacian(geo, s, n) - tangential_trace);
  }
  for (std::size_t i = 0; i < nb; ++i) {
    r.da[i] = -2.0 * n.cwiseProduct(s.k_blocks[i]);
    r.db[i] = -hess[i] - n.cwiseProduct(s.k_blocks[i].cwiseAbs2()).cwiseQuotient(s.g_blocks[i]);
  }
  return r;
}

FlowState advance(const FlowState& s, const Rates& r, double h) {
  FlowState out;
  out.tau = s.tau + h;
  for (std::size_t i = 0; i < s.g_blocks.size(); ++i) {
    out.g_blocks.push_back(s.g_blocks[i] + h * r.da[i]);
    out.k_blocks.push_back(s.k_blocks[i] + h * r.db[i]);
  }
  return out;
}

}  // namespace

FlowState flow_step(const BlockGeometry& geo, const FlowState& s, double dtau) {
  check_state(geo, s);
  if (!(dtau > 0.0)) throw DomainError("flow step must be positive");
  const Rates k1 = flow_rhs(geo, s);
  const Rates k2 = flow_rhs(geo, advance(s, k1, 0.5 * dtau));
  const Rates k3 = flow_rhs(geo, advance(s, k2, 0.5 * dtau));
  const Rates k4 = flow_rhs(geo, advance(s, k3, dtau));
  FlowState out;
  out.tau = s.tau + dtau;
  for (std::size_t i = 0; i < s.g_blocks.size(); ++i) {
    out.g_blocks.push_back(s.g_blocks[i] + (dtau / 6.0) * (k1.da[i] + 2.0 * k2.da[i] + 2.0 * k3.da[i] + k4.da[i]));
    out.k_blocks.push_back(s.k_blocks[i] + (dtau / 6.0) * (k1.db[i] + 2.0 * k2.db[i] + 2.0 * k3.db[i] + k4.db[i]));
  }
  for (const auto& a : out.g_blocks) {
    if (!(a.minCoeff() > 0.0) || !a.allFinite()) throw DegenerationError("metric scale became non-positive", out.tau);
  }
  out.lapse = solve_lapse(geo, out);
  return out;
}

HamRecord make_record(const BlockGeometry& geo, const FlowState& s) {
  HamRecord r;
  r.tau = s.tau;
  r.volume = volume(geo, s);
  r.ham = std::pow(std::abs(s.tau), geo.n()) * r.volume;
  r.n_khat2_integral = n_khat2_integral(geo, s);
  const FlatResidual fr = flat_constraint_residual(geo, s);
  r.gauss_residual = fr.gauss;
  r.codazzi_residual = fr.codazzi;
  r.lapse_min = s.lapse.minCoeff();
  r.lapse_max = s.lapse.maxCoeff();
  const double tau2 = s.tau * s.tau;
  r.k2_over_tau2_max = k_norm_sq(geo, s).maxCoeff() / tau2;
  const auto ric = block_ricci(geo, s);
  Eigen::VectorXd ric2 = Eigen::VectorXd::Zero(geo.points());
  for (std::size_t i = 0; i < ric.size(); ++i) ric2 += geo.blocks[i].dim * ric[i].cwiseAbs2();
  r.ricci_over_tau4_max = ric2.maxCoeff() / (tau2 * tau2);
  r.gauge_drift = max_abs(trace_k(geo, s).array() - s.tau);
  r.lapse_residual = lapse_equation_residual(geo, s);
  r.lapse_backward_error = lapse_backward_error(geo, s);
  return r;
}

namespace {

void note_violations(const HamRecord& r, int n, std::vector<std::string>& out) {
  const double tau2 = r.tau * r.tau;
  const double slack = kBoundSlack;
  std::ostringstream os;
  if (r.k2_over_tau2_max > 1.0 + slack) {
    os << "tau=" << format_double(r.tau) << ": |K|^2/tau^2 = " << format_double(r.k2_over_tau2_max);
  } else if (r.lapse_min * tau2 < 1.0 - slack || r.lapse_max * tau2 > n * (1.0 + slack)) {
    os << "tau=" << format_double(r.tau) << ": lapse outside [1/tau^2, n/tau^2]: [" << format_double(r.lapse_min)
       << ", " << format_double(r.lapse_max) << "]";
  }
  if (!os.str().empty()) out.push_back(os.str());
}

FlowState advance_checked(const BlockGeometry& geo, const FlowState& s, double tau_target, const FlowOptions& opts,
                          int depth, HamTrace& trace) {
  FlowState next = flow_step(geo, s, tau_target - s.tau);
  next.tau = tau_target;
  const double drift = max_abs(trace_k(geo, next).array() - tau_target);
  if (drift <= opts.gauge_tolerance || !opts.retry_on_drift) return next;
  if (depth >= opts.max_halvings) {
    trace.violations.push_back("tau=" + format_double(tau_target) + ": gauge drift " + format_double(drift) +
                               " persists after " + std::to_string(depth) + " halvings");
    return next;
  }
  if (depth == 0) ++trace.retried_steps;
  const double mid = 0.5 * (s.tau + tau_target);
  const FlowState half = advance_checked(geo, s, mid, opts, depth + 1, trace);
  return advance_checked(geo, half, tau_target, opts, depth + 1, trace);
}

}  // namespace

FlowRun run_flow(const BlockGeometry& geo, const FlowState& initial, double tau_end, int steps,
                 const FlowOptions& opts) {
  validate(geo);
  check_state(geo, initial);
  if (!(initial.tau < 0.0) || !(tau_end < 0.0)) throw DomainError("flow runs on tau < 0");
  if (tau_end < initial.tau) throw DomainError("tau_end must not precede the initial tau");
  FlowRun run;
  run.trace.dim = geo.n();
  FlowState s = initial;
  if (s.lapse.size() != geo.points()) s.lapse = solve_lapse(geo, s);
  run.trace.records.push_back(make_record(geo, s));
  note_violations(run.trace.records.back(), geo.n(), run.trace.violations);
  if (tau_end > initial.tau) {
    if (steps < 1) throw DomainError("steps must be positive");
    const double dtau = (tau_end - initial.tau) / steps;
    for (int k = 1; k <= steps; ++k) {
      const double target = k == steps ? tau_end : initial.tau + k * dtau;
      s = advance_checked(geo, s, target, opts, 0, run.trace);
      run.trace.records.push_back(make_record(geo, s));
      note_violations(run.trace.records.back(), geo.n(), run.trace.violations);
    }
  }
  run.final_state = std::move(s);
  return run;
}

std::string trace_to_csv(const HamTrace& t) {
  CsvTable table;
  table.header = {"tau", "volume", "ham", "n_khat2_integral", "gauss_residual", "codazzi_residual", "lapse_min",
                  "lapse_max"};
  for (const auto& r : t.records) {
    table.add_row({r.tau, r.volume, r.ham, r.n_khat2_integral, r.gauss_residual, r.codazzi_residual, r.lapse_min,
                   r.lapse_max});
  }
  return to_csv(table);
}

MonotonicityReport ham_monotonicity_check(const HamTrace& t) {
  MonotonicityReport rep;
  const auto& rec = t.records;
  if (rec.size() < 3) {
    rep.identity_holds = false;
    return rep;
  }
  const int n = t.dim;
  for (std::size_t i = 1; i + 1 < rec.size(); ++i) {
    const double h1 = rec[i].tau - rec[i - 1].tau;
    const double h2 = rec[i + 1].tau - rec[i].tau;
    const double lhs = -h2 / (h1 * (h1 + h2)) * rec[i - 1].ham + (h2 - h1) / (h1 * h2) * rec[i].ham +
                       h1 / (h2 * (h1 + h2)) * rec[i + 1].ham;
    const double rhs = -n * std::pow(std::abs(rec[i].tau), n - 1) * rec[i].n_khat2_integral;
    const double err = std::abs(lhs - rhs);
    const double rel = rhs != 0.0 ? err / std::abs(rhs) : (err == 0.0 ? 0.0 : HUGE_VAL);
    rep.max_absolute_error = std::max(rep.max_absolute_error, err);
    rep.max_relative_error = std::max(rep.max_relative_error, rel);
    if (!(rel <= 1e-4 || err <= 1e-10)) rep.identity_holds = false;
  }
  for (std::size_t i = 0; i + 1 < rec.size(); ++i) {
    if (rec[i + 1].ham > rec[i].ham * (1.0 + 1e-12)) rep.increases.push_back(i);
  }
  return rep;
}

LapseIdentity lapse_identity_check(const BlockGeometry& geo, const FlowState& s) {
  check_state(geo, s);
  if (s.lapse.size() != geo.points()) throw DimensionError("state has no lapse");
  LapseIdentity out;
  const double tau2 = s.tau * s.tau;
  out.lhs = integrate(geo, s, (1.0 - s.lapse.array() * tau2 / geo.n()).matrix());
  out.rhs = n_khat2_integral(geo, s);
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

double ricci_bound_constant(int n) {
  // Largest of the cone ratio (n-1)^2/n^3 and the Kasner ratio (n-2)^2/(n-1)^3.
  switch (n) {
    case 2: return 1.0 / 8.0;
    case 3: return 4.0 / 27.0;
    case 4: return 4.0 / 27.0;
    default: throw DimensionError("no Ricci bound constant for this dimension");
  }
}

}  // namespace flatcmc
