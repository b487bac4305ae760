#include "flatcmc/limit_experiment.hpp"

#include "flatcmc/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace flatcmc {

void validate(const LimitOptions& o) {
  if (!(o.tau_target < 0.0)) throw DomainError("tau_target must be negative");
  if (!(o.spacing > 0.0)) throw DomainError("spacing must be positive");
  if (!(o.margin > 0.0)) throw DomainError("margin must be positive");
  if (!(o.tol > 0.0)) throw DomainError("tolerance must be positive");
  if (o.max_iters < 1) throw DomainError("max_iters must be positive");
  if (o.max_word_length < 1) throw DomainError("max_word_length must be positive");
  if (o.max_bisections < 0) throw DomainError("max_bisections must be non-negative");
}

namespace {

// Consecutive rejected pseudo-time steps before a solve gives up.
constexpr int kMaxRejections = 8;

// Cubic Lagrange weights on nodes -1, 0, 1, 2 and their derivatives.
void cubic_weights(double s, double w[4], double dw[4]) {
  w[0] = -s * (s - 1.0) * (s - 2.0) / 6.0;
  w[1] = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
  w[2] = -(s + 1.0) * s * (s - 2.0) / 2.0;
  w[3] = (s + 1.0) * s * (s - 1.0) / 6.0;
  dw[0] = -(3.0 * s * s - 6.0 * s + 2.0) / 6.0;
  dw[1] = (3.0 * s * s - 4.0 * s - 1.0) / 2.0;
  dw[2] = -(3.0 * s * s - 2.0 * s - 2.0) / 2.0;
  dw[3] = (3.0 * s * s - 1.0) / 6.0;
}

struct Stencil {
  int i0 = 0;
  int j0 = 0;
  double s = 0.0;
  double r = 0.0;
};

Stencil locate(const HeightField& phi, const Eigen::Vector2d& x) {
  const double u = (x(0) - phi.origin()(0)) / phi.spacing();
  const double v = (x(1) - phi.origin()(1)) / phi.spacing();
  Stencil st;
  st.i0 = static_cast<int>(std::floor(u)) - 1;
  st.j0 = static_cast<int>(std::floor(v)) - 1;
  st.s = u - std::floor(u);
  st.r = v - std::floor(v);
  return st;
}

bool stencil_inside(const HeightField& phi, const Stencil& st, const std::vector<char>& in_region) {
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) {
      const int i = st.i0 + a;
      const int j = st.j0 + b;
      if (i < 0 || j < 0 || i >= phi.counts()[0] || j >= phi.counts()[1]) return false;
      if (!in_region[phi.node({i, j})]) return false;
    }
  }
  return true;
}

// Bicubic value and gradient of phi at x; optionally the 16 node weights.
double interpolate(const HeightField& phi, const Eigen::Vector2d& x, Eigen::Vector2d& grad,
                   std::array<std::pair<std::size_t, double>, 16>* weights) {
  const Stencil st = locate(phi, x);
  if (st.i0 < 0 || st.j0 < 0 || st.i0 + 3 >= phi.counts()[0] || st.j0 + 3 >= phi.counts()[1]) {
    throw NumericalError("ghost preimage left the grid");
  }
  double wx[4], dwx[4], wy[4], dwy[4];
  cubic_weights(st.s, wx, dwx);
  cubic_weights(st.r, wy, dwy);
  const std::size_t base = static_cast<std::size_t>(st.i0) * static_cast<std::size_t>(phi.stride(0)) +
                           static_cast<std::size_t>(st.j0) * static_cast<std::size_t>(phi.stride(1));
  double v = 0.0;
  grad.setZero();
  for (int b = 0; b < 4; ++b) {
    for (int a = 0; a < 4; ++a) {
      const std::size_t node = base + static_cast<std::size_t>(a * phi.stride(0) + b * phi.stride(1));
      const double f = phi[node];
      v += wx[a] * wy[b] * f;
      grad(0) += dwx[a] * wy[b] * f;
      grad(1) += wx[a] * dwy[b] * f;
      if (weights) (*weights)[static_cast<std::size_t>(4 * b + a)] = {node, wx[a] * wy[b]};
    }
  }
  grad /= phi.spacing();
  return v;
}

}  // namespace

EquivariantProblem::EquivariantProblem(const HolonomyRep& rep, const LimitOptions& opts) : opts_(opts) {
  validate(opts);
  const GroupPresentation& pres = rep.presentation;
  if (pres.dim() != 2) throw DimensionError("the limit experiment needs n = 2");
  if (pres.generator_count() != 8) throw DimensionError("expected the eight Bolza generators");
  const BolzaOctagon oct = bolza_octagon();
  const double vertex_distance = std::acosh(-mink_inner(oct.vertices[0], MinkVector::basis(2, 0)));
  const double h = opts.spacing;
  const double reach = std::sinh(vertex_distance + opts.margin) + 6.0 * h;
  const int half_count = static_cast<int>(std::ceil(reach / h));
  const int count = 2 * half_count + 1;
  initial_ = HeightField::centered(2, count, half_count * h,
                                   [](const Eigen::VectorXd& x) { return std::sqrt(1.0 + x.squaredNorm()); });
  const HeightField& phi = initial_;

  std::vector<char> in_region(phi.size(), 0);
  for (std::size_t k : phi.interior_nodes(3)) {
    if (distance_to_octagon(oct, MinkVector::hyperboloid_point(phi.position(k))) <= opts.margin) {
      in_region[k] = 1;
      region_.push_back(k);
    }
  }
  if (region_.empty()) throw DomainError("empty relaxation region");

  // Ghost ring: the 3x3 neighbourhood of the region.
  std::vector<char> is_ghost(phi.size(), 0);
  std::vector<std::size_t> ghost_nodes;
  const std::ptrdiff_t s0 = phi.stride(0);
  const std::ptrdiff_t s1 = phi.stride(1);
  for (std::size_t k : region_) {
    for (std::ptrdiff_t a = -1; a <= 1; ++a) {
      for (std::ptrdiff_t b = -1; b <= 1; ++b) {
        const auto nb = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(k) + a * s0 + b * s1);
        if (!in_region[nb] && !is_ghost[nb]) {
          is_ghost[nb] = 1;
          ghost_nodes.push_back(nb);
        }
      }
    }
  }
  std::sort(ghost_nodes.begin(), ghost_nodes.end());

  const std::vector<GroupElement> elements = enumerate_elements(pres, opts.max_word_length);
  std::vector<Eigen::Matrix3d> inverses;
  inverses.reserve(elements.size());
  for (const auto& e : elements) inverses.push_back(e.linear.inverse().matrix());

  ghosts_.reserve(ghost_nodes.size());
  for (std::size_t k : ghost_nodes) {
    const Eigen::Vector2d y = phi.position(k);
    const Eigen::Vector3d nu = MinkVector::hyperboloid_point(y).components();
    std::size_t best = elements.size();
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < elements.size(); ++e) {
      const auto sides = octagon_side_values(oct, MinkVector(inverses[e] * nu));
      const double worst = *std::max_element(sides.begin(), sides.end());
      if (worst < best_value) {
        best_value = worst;
        best = e;
      }
      if (worst <= 0.0) break;
    }
    Ghost g;
    g.node = k;
    g.y = y;
    g.inv = inverses[best];
    g.word = elements[best].word;
    const Eigen::Vector3d q = g.inv * nu;
    if (!stencil_inside(phi, locate(phi, q.tail<2>()), in_region)) {
      throw DomainError("ghost preimage leaves the relaxation region; increase the margin or word length");
    }
    ghosts_.push_back(g);
  }
  set_structure(rep);

  column_.assign(phi.size(), -1);
  for (std::size_t i = 0; i < region_.size(); ++i) column_[region_[i]] = static_cast<Eigen::Index>(i);
  for (std::size_t i = 0; i < ghosts_.size(); ++i) {
    column_[ghosts_[i].node] = static_cast<Eigen::Index>(region_.size() + i);
  }
}

void EquivariantProblem::set_structure(const HolonomyRep& rep) {
  for (Ghost& g : ghosts_) g.shift = g.inv * extend_cocycle(rep, g.word).components();
}

void EquivariantProblem::fill_ghosts(HeightField& phi) const {
  for (const Ghost& g : ghosts_) {
    double t = phi[g.node];
    const Eigen::Vector3d dir = g.inv.col(0);
    for (int it = 0; it < 50; ++it) {
      const Eigen::Vector3d q = g.inv * Eigen::Vector3d(t, g.y(0), g.y(1)) - g.shift;
      Eigen::Vector2d grad;
      const double val = interpolate(phi, q.tail<2>(), grad, nullptr);
      const double slope = dir(0) - grad.dot(dir.tail<2>());
      if (!(slope > 0.0)) throw SpacelikeViolation("ghost equation lost monotonicity");
      const double dt = (q(0) - val) / slope;
      t -= dt;
      if (std::abs(dt) <= 1e-15 * std::max(1.0, std::abs(t))) break;
    }
    phi[g.node] = t;
  }
}

std::optional<Eigen::VectorXd> EquivariantProblem::residual(const HeightField& phi) const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(region_.size() + ghosts_.size()));
  try {
    for (std::size_t i = 0; i < region_.size(); ++i) {
      r(static_cast<Eigen::Index>(i)) = node_mean_curvature(phi, region_[i]) - opts_.tau_target;
    }
    for (std::size_t i = 0; i < ghosts_.size(); ++i) {
      const Ghost& g = ghosts_[i];
      const Eigen::Vector3d q = g.inv * Eigen::Vector3d(phi[g.node], g.y(0), g.y(1)) - g.shift;
      Eigen::Vector2d grad;
      std::array<std::pair<std::size_t, double>, 16> weights;
      r(static_cast<Eigen::Index>(region_.size() + i)) = q(0) - interpolate(phi, q.tail<2>(), grad, &weights);
      for (const auto& nw : weights) {
        if (column_[nw.first] < 0) throw NumericalError("ghost preimage left the relaxation region");
      }
    }
  } catch (const NumericalError&) {
    return std::nullopt;
  }
  return r;
}

RelaxResult EquivariantProblem::solve(const HeightField& start, double initial_sigma) const {
  if (!(initial_sigma > 0.0)) throw DomainError("initial pseudo-time step must be positive");
  const std::size_t nr = region_.size();
  const std::size_t ng = ghosts_.size();
  const auto total = static_cast<Eigen::Index>(nr + ng);

  RelaxResult res;
  res.field = start;
  auto r0 = residual(res.field);
  if (!r0) {
    try {
      fill_ghosts(res.field);
      r0 = residual(res.field);
    } catch (const NumericalError&) {
      r0.reset();
    }
  }
  if (!r0) throw SpacelikeViolation("initial surface is not spacelike");
  Eigen::VectorXd r = *r0;

  // A ghost mismatch e changes H at its neighbours by about c e, c the ghost's
  // Jacobian column sum over the H rows; the merit weighs ghost rows by c.
  Eigen::VectorXd weight = Eigen::VectorXd::Ones(total);
  auto merit = [&](const Eigen::VectorXd& v) { return v.cwiseProduct(weight).cwiseAbs().maxCoeff(); };

  double sigma = initial_sigma;
  Eigen::UmfPackLU<Eigen::SparseMatrix<double>> lu;
  std::vector<std::pair<std::size_t, double>> row;
  std::vector<Eigen::Triplet<double>> trips;
  int consecutive = 0;
  double rnorm = HUGE_VAL;
  while (res.iterations < opts_.max_iters) {
    trips.clear();
    weight.tail(static_cast<Eigen::Index>(ng)).setZero();
    for (std::size_t i = 0; i < nr; ++i) {
      node_mean_curvature_jacobian(res.field, region_[i], row);
      const auto ii = static_cast<Eigen::Index>(i);
      const Eigen::VectorXd p = discrete_gradient(res.field, region_[i]);
      trips.emplace_back(ii, ii, 1.0 / (sigma * std::sqrt(1.0 - p.squaredNorm())));
      for (const auto& [node, v] : row) {
        const Eigen::Index c = column_[node];
        trips.emplace_back(ii, c, v);
        if (c >= static_cast<Eigen::Index>(nr)) weight(c) += std::abs(v);
      }
    }
    for (std::size_t i = 0; i < ng; ++i) {
      const Ghost& g = ghosts_[i];
      const auto ii = static_cast<Eigen::Index>(nr + i);
      const Eigen::Vector3d dir = g.inv.col(0);
      const Eigen::Vector3d q = g.inv * Eigen::Vector3d(res.field[g.node], g.y(0), g.y(1)) - g.shift;
      Eigen::Vector2d grad;
      std::array<std::pair<std::size_t, double>, 16> weights;
      interpolate(res.field, q.tail<2>(), grad, &weights);
      trips.emplace_back(ii, ii, dir(0) - grad.dot(dir.tail<2>()));
      for (const auto& [node, w] : weights) trips.emplace_back(ii, column_[node], -w);
    }
    rnorm = merit(r);
    if (res.residual_history.empty()) res.residual_history.push_back(rnorm);
    if (rnorm <= opts_.tol) break;
    ++res.iterations;
    Eigen::SparseMatrix<double> jac(total, total);
    jac.setFromTriplets(trips.begin(), trips.end());
    // Ghost stencils move between cells, so the pattern is re-analysed each time.
    lu.compute(jac);
    std::optional<Eigen::VectorXd> rt;
    HeightField trial = res.field;
    if (lu.info() == Eigen::Success) {
      const Eigen::VectorXd rhs = -r;
      const Eigen::VectorXd delta = lu.solve(rhs);
      for (std::size_t i = 0; i < nr; ++i) trial[region_[i]] += delta(static_cast<Eigen::Index>(i));
      for (std::size_t i = 0; i < ng; ++i) trial[ghosts_[i].node] += delta(static_cast<Eigen::Index>(nr + i));
      rt = residual(trial);
    }
    const double tnorm = rt ? merit(*rt) : HUGE_VAL;
    if (!rt || !(tnorm < rnorm)) {
      sigma *= 0.25;
      ++res.rejections;
      if (++consecutive > kMaxRejections) break;
      continue;
    }
    consecutive = 0;
    sigma = std::min(sigma * std::min(rnorm / tnorm, 10.0), 1e12);
    res.field = std::move(trial);
    r = std::move(*rt);
    res.residual_history.push_back(tnorm);
  }
  res.residual = merit(r);
  res.converged = res.residual <= opts_.tol;
  for (std::size_t k : region_) res.max_gradient = std::max(res.max_gradient, discrete_gradient(res.field, k).norm());
  return res;
}

namespace {

struct PathPoint {
  double mu = 0.0;
  HeightField field;
};

// Secant prediction from the last two converged points.
HeightField predict(const std::vector<PathPoint>& path, double mu) {
  const PathPoint& last = path.back();
  if (path.size() < 2) return last.field;
  const PathPoint& prev = path[path.size() - 2];
  HeightField out = last.field;
  const double s = (mu - last.mu) / (last.mu - prev.mu);
  out.values() += s * (last.field.values() - prev.field.values());
  return out;
}

// Advances the converged path to cocycle scale mu_target, halving the scale
// step when a solve fails. Returns the final solve, or nullopt.
std::optional<RelaxResult> continue_to(EquivariantProblem& problem, const HolonomyRep& rep,
                                       std::vector<PathPoint>& path, double mu_target, int max_bisections) {
  std::vector<double> targets{mu_target};
  std::optional<RelaxResult> last;
  while (!targets.empty()) {
    const double mu = targets.back();
    problem.set_structure(scale_structure(rep, mu));
    std::optional<RelaxResult> attempt;
    for (const HeightField& guess : {predict(path, mu), path.back().field}) {
      try {
        RelaxResult r = problem.solve(guess);
        if (r.converged) {
          attempt = std::move(r);
          break;
        }
      } catch (const NumericalError&) {
        // Try the next guess, then bisect.
      }
      if (path.size() < 2) break;
    }
    if (!attempt) {
      if (static_cast<int>(targets.size()) > max_bisections) return std::nullopt;
      targets.push_back(0.5 * (path.back().mu + mu));
      continue;
    }
    path.push_back({mu, attempt->field});
    if (path.size() > 2) path.erase(path.begin());
    last = std::move(attempt);
    targets.pop_back();
  }
  return last;
}

// Solves the undeformed structure from the unit hyperboloid as the first path point.
bool start_path(EquivariantProblem& problem, const HolonomyRep& rep, std::vector<PathPoint>& path) {
  HolonomyRep undeformed = rep;
  undeformed.cocycle = zero_cocycle(rep.presentation);
  problem.set_structure(undeformed);
  try {
    const RelaxResult base = problem.solve(problem.initial());
    if (!base.converged) return false;
    path.assign(1, {0.0, base.field});
  } catch (const NumericalError&) {
    return false;
  }
  return true;
}

std::vector<LimitRow> single_grid_rows(const HolonomyRep& rep, const std::vector<double>& lambdas,
                                       const LimitOptions& opts) {
  EquivariantProblem problem(rep, opts);
  DomainFilter filter = DomainFilter::bolza();
  filter.allowed_nodes = problem.region();

  // Continuation from the undeformed structure toward larger cocycles.
  std::vector<std::size_t> order(lambdas.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });

  std::vector<LimitRow> rows(lambdas.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].lambda = lambdas[i];
    rows[i].tau_mean = rows[i].volume = rows[i].ham_ratio = rows[i].residual = nan;
  }
  std::vector<PathPoint> path;
  if (!start_path(problem, rep, path)) return rows;
  for (std::size_t idx : order) {
    LimitRow& row = rows[idx];
    const double mu = 1.0 / (row.lambda * row.lambda);
    const auto solved = continue_to(problem, rep, path, mu, opts.max_bisections);
    if (!solved) break;
    const QuotientEnergy q = quotient_energy(solved->field, filter);
    row.tau_mean = q.tau_mean;
    row.volume = q.volume;
    row.ham_ratio = q.tau_mean * q.tau_mean * q.volume / (16.0 * M_PI);
    row.residual = solved->residual;
    row.converged = true;
    row.clipped_cells = q.clipped_cells;
  }
  return rows;
}

}  // namespace

EquivariantSurface relax_equivariant(const HolonomyRep& rep, const LimitOptions& opts) {
  validate(opts);
  EquivariantProblem problem(rep, opts);
  std::vector<PathPoint> path;
  if (!start_path(problem, rep, path)) throw ConvergenceError("undeformed equivariant problem did not converge", HUGE_VAL);
  const auto solved = continue_to(problem, rep, path, 1.0, opts.max_bisections);
  if (!solved) throw ConvergenceError("continuation to the full cocycle failed", HUGE_VAL);
  return {solved->field, problem.region(), *solved};
}

std::vector<LimitRow> limit_experiment(const HolonomyRep& rep, const std::vector<double>& lambdas,
                                       const LimitOptions& opts) {
  validate(opts);
  if (lambdas.empty()) throw DomainError("empty lambda list");
  for (double lambda : lambdas) {
    if (!(lambda > 0.0)) throw DomainError("lambda must be positive");
  }
  std::vector<LimitRow> coarse = single_grid_rows(rep, lambdas, opts);
  if (!opts.richardson) return coarse;
  LimitOptions fine_opts = opts;
  fine_opts.spacing = opts.spacing / std::sqrt(2.0);
  const std::vector<LimitRow> fine = single_grid_rows(rep, lambdas, fine_opts);
  // Volume error is O(h^2); with h_fine^2 = h^2 / 2 the extrapolant is 2 V_fine - V_coarse.
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    LimitRow& row = coarse[i];
    const LimitRow& f = fine[i];
    row.converged = row.converged && f.converged;
    row.volume = 2.0 * f.volume - row.volume;
    row.tau_mean = f.tau_mean;
    row.ham_ratio = row.tau_mean * row.tau_mean * row.volume / (16.0 * M_PI);
    row.residual = std::max(row.residual, f.residual);
    row.clipped_cells = std::max(row.clipped_cells, f.clipped_cells);
  }
  return coarse;
}

CsvTable limit_table(const std::vector<LimitRow>& rows) {
  CsvTable t;
  t.header = {"lambda", "tau_mean", "volume", "ham_ratio", "residual"};
  for (const auto& r : rows) t.add_row({r.lambda, r.tau_mean, r.volume, r.ham_ratio, r.residual});
  return t;
}

HolonomyRep bolza_deformation(double amplitude) {
  HolonomyRep rep;
  rep.presentation = bolza_generators();
  // The complement basis is only defined up to rotation; its projector is not.
  const Eigen::MatrixXd basis = cohomology_complement_basis(rep.presentation);
  Eigen::VectorXd seed = Eigen::VectorXd::Zero(basis.rows());
  seed(1) = 1.0;
  const Eigen::VectorXd dir = (basis * (basis.transpose() * seed)).normalized();
  rep.cocycle = cocycle_from_stacked(rep.presentation, amplitude * dir);
  return rep;
}

}  // namespace flatcmc
