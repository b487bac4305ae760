#include "flatcmc/graph_surfaces.hpp"

#include "flatcmc/csv.hpp"
#include "flatcmc/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace flatcmc {

namespace {

// Stack-allocated small vectors/matrices for per-node work (n <= 4).
using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;
using SmallMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 4, 4>;

}  // namespace

HeightField::HeightField(std::vector<int> counts, Eigen::VectorXd origin, double spacing)
    : counts_(std::move(counts)), origin_(std::move(origin)), spacing_(spacing) {
  if (counts_.empty() || counts_.size() > 4) throw DimensionError("height field dimension must be 1..4");
  if (origin_.size() != static_cast<Eigen::Index>(counts_.size())) throw DimensionError("origin has the wrong length");
  if (!(spacing_ > 0.0)) throw DomainError("grid spacing must be positive");
  std::ptrdiff_t stride = 1;
  for (int c : counts_) {
    if (c < 2 * kBoundaryMargin + 1) throw DomainError("grid too small for the boundary margin");
    strides_.push_back(stride);
    stride *= c;
  }
  values_ = Eigen::VectorXd::Zero(stride);
}

HeightField HeightField::sample(std::vector<int> counts, Eigen::VectorXd origin, double spacing,
                                const std::function<double(const Eigen::VectorXd&)>& f) {
  HeightField hf(std::move(counts), std::move(origin), spacing);
  for (std::size_t k = 0; k < hf.size(); ++k) hf[k] = f(hf.position(k));
  return hf;
}

HeightField HeightField::centered(int dim, int count, double half_width,
                                  const std::function<double(const Eigen::VectorXd&)>& f) {
  if (count < 2) throw DomainError("need at least two nodes per axis");
  const double h = 2.0 * half_width / (count - 1);
  return sample(std::vector<int>(static_cast<std::size_t>(dim), count), Eigen::VectorXd::Constant(dim, -half_width), h,
                f);
}

std::size_t HeightField::node(const std::vector<int>& index) const {
  if (index.size() != counts_.size()) throw DimensionError("grid index has the wrong length");
  std::size_t out = 0;
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    if (index[a] < 0 || index[a] >= counts_[a]) throw DimensionError("grid index out of range");
    out += static_cast<std::size_t>(index[a]) * static_cast<std::size_t>(strides_[a]);
  }
  return out;
}

std::vector<int> HeightField::index(std::size_t node) const {
  std::vector<int> out(counts_.size());
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    out[a] = static_cast<int>(node % static_cast<std::size_t>(counts_[a]));
    node /= static_cast<std::size_t>(counts_[a]);
  }
  return out;
}

Eigen::VectorXd HeightField::position(std::size_t node) const {
  Eigen::VectorXd x(dim());
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    const auto i = static_cast<int>(node % static_cast<std::size_t>(counts_[a]));
    node /= static_cast<std::size_t>(counts_[a]);
    x(static_cast<Eigen::Index>(a)) = origin_(static_cast<Eigen::Index>(a)) + spacing_ * i;
  }
  return x;
}

bool HeightField::is_interior(std::size_t node, int margin) const {
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    const auto i = static_cast<int>(node % static_cast<std::size_t>(counts_[a]));
    node /= static_cast<std::size_t>(counts_[a]);
    if (i < margin || i > counts_[a] - 1 - margin) return false;
  }
  return true;
}

std::vector<std::size_t> HeightField::interior_nodes(int margin) const {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < size(); ++k) {
    if (is_interior(k, margin)) out.push_back(k);
  }
  return out;
}

PointGeometry point_geometry(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess) {
  const auto n = grad.size();
  if (hess.rows() != n || hess.cols() != n) throw DimensionError("Hessian does not match gradient");
  const double p2 = grad.squaredNorm();
  if (!(std::sqrt(p2) < 1.0 - kSpacelikeMargin)) throw SpacelikeViolation("graph is not spacelike (|grad phi| >= 1)");
  PointGeometry g;
  g.grad = grad;
  g.hess = hess;
  g.w = std::sqrt(1.0 - p2);
  g.metric = Eigen::MatrixXd::Identity(n, n) - grad * grad.transpose();
  g.metric_inv = Eigen::MatrixXd::Identity(n, n) + grad * grad.transpose() / (g.w * g.w);
  g.second_form = -hess / g.w;
  g.mean_curvature = (g.metric_inv.cwiseProduct(g.second_form)).sum();
  Eigen::VectorXd nu(n + 1);
  nu(0) = 1.0 / g.w;
  nu.tail(n) = grad / g.w;
  g.normal = MinkVector(std::move(nu));
  const Eigen::MatrixXd s = g.metric_inv * g.second_form;
  g.k_norm_sq = (s * s).trace();
  return g;
}

Eigen::VectorXd discrete_gradient(const HeightField& phi, std::size_t node) {
  const int n = phi.dim();
  const double h = phi.spacing();
  Eigen::VectorXd p(n);
  for (int a = 0; a < n; ++a) {
    const std::ptrdiff_t s = phi.stride(a);
    p(a) = (phi[node + s] - phi[node - s]) / (2.0 * h);
  }
  return p;
}

Eigen::MatrixXd discrete_hessian(const HeightField& phi, std::size_t node) {
  const int n = phi.dim();
  const double h2 = phi.spacing() * phi.spacing();
  Eigen::MatrixXd hess(n, n);
  for (int a = 0; a < n; ++a) {
    const std::ptrdiff_t sa = phi.stride(a);
    hess(a, a) = (phi[node + sa] - 2.0 * phi[node] + phi[node - sa]) / h2;
    for (int b = a + 1; b < n; ++b) {
      const std::ptrdiff_t sb = phi.stride(b);
      const double v = (phi[node + sa + sb] - phi[node + sa - sb] - phi[node - sa + sb] + phi[node - sa - sb]) / (4.0 * h2);
      hess(a, b) = v;
      hess(b, a) = v;
    }
  }
  return hess;
}

GraphGeometry graph_geometry(const HeightField& phi) { return graph_geometry(phi, phi.interior_nodes()); }

GraphGeometry graph_geometry(const HeightField& phi, const std::vector<std::size_t>& nodes) {
  GraphGeometry geo;
  geo.nodes = nodes;
  geo.points.reserve(nodes.size());
  for (std::size_t k : nodes) {
    if (!phi.is_interior(k, 1)) throw DomainError("geometry requested on a boundary node");
    geo.points.push_back(point_geometry(discrete_gradient(phi, k), discrete_hessian(phi, k)));
  }
  return geo;
}

AnalyticGraph hyperboloid_graph(double s, const MinkVector& apex) {
  if (!(s > 0.0)) throw DomainError("hyperboloid radius must be positive");
  const double t0 = apex.time();
  const Eigen::VectorXd c = apex.spatial();
  AnalyticGraph g;
  g.value = [=](const Eigen::VectorXd& x) { return t0 + std::sqrt(s * s + (x - c).squaredNorm()); };
  g.grad = [=](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    const Eigen::VectorXd y = x - c;
    return y / std::sqrt(s * s + y.squaredNorm());
  };
  g.hess = [=](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    const Eigen::VectorXd y = x - c;
    const double r = std::sqrt(s * s + y.squaredNorm());
    return Eigen::MatrixXd::Identity(y.size(), y.size()) / r - y * y.transpose() / (r * r * r);
  };
  return g;
}

AnalyticGraph hyperboloid_graph(double s, int n) { return hyperboloid_graph(s, MinkVector::zero(n)); }

Spread mean_curvature_spread(const GraphGeometry& geo) {
  if (geo.points.empty()) throw DomainError("no interior nodes");
  Spread sp{geo.points.front().mean_curvature, geo.points.front().mean_curvature};
  for (const auto& p : geo.points) {
    sp.min = std::min(sp.min, p.mean_curvature);
    sp.max = std::max(sp.max, p.mean_curvature);
  }
  return sp;
}

Spread mean_curvature_spread(const HeightField& phi) { return mean_curvature_spread(graph_geometry(phi)); }

std::vector<MinkVector> gauss_map(const HeightField& phi) {
  const GraphGeometry geo = graph_geometry(phi);
  std::vector<MinkVector> out;
  out.reserve(geo.points.size());
  for (const auto& p : geo.points) out.push_back(p.normal);
  return out;
}

double volume_element_defect(const GraphGeometry& geo) {
  double worst = 0.0;
  for (const auto& p : geo.points) {
    worst = std::max(worst, std::abs(p.metric.determinant() - p.w * p.w));
  }
  return worst;
}

namespace {

using Polygon = std::vector<Eigen::Vector2d>;

// Keeps the part of the polygon where a + b . x <= 0.
Polygon clip_half_plane(const Polygon& poly, double a, const Eigen::Vector2d& b) {
  Polygon out;
  const std::size_t m = poly.size();
  for (std::size_t i = 0; i < m; ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % m];
    const double fp = a + b.dot(p);
    const double fq = a + b.dot(q);
    if (fp <= 0.0) out.push_back(p);
    if ((fp < 0.0 && fq > 0.0) || (fp > 0.0 && fq < 0.0)) out.push_back(p + (fp / (fp - fq)) * (q - p));
  }
  return out;
}

double polygon_area(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

// Side functions l_k(x) = <n_k, nu(x)> of the octagon and W, with their
// gradients at a node.
struct SideJet {
  std::array<double, 8> value{};
  std::array<Eigen::Vector2d, 8> grad{};
  double w = 1.0;
  Eigen::Vector2d grad_w = Eigen::Vector2d::Zero();
};

SideJet side_jet(const BolzaOctagon& oct, const PointGeometry& g) {
  const Eigen::Vector2d p = g.grad;
  const Eigen::Matrix2d hess = g.hess;
  const double inv_w = 1.0 / g.w;
  std::array<Eigen::Vector3d, 2> dnu;
  for (int j = 0; j < 2; ++j) {
    const Eigen::Vector2d col = hess.col(j);
    const double d_inv_w = p.dot(col) * inv_w * inv_w * inv_w;
    dnu[static_cast<std::size_t>(j)] << d_inv_w, d_inv_w * p + inv_w * col;
  }
  SideJet jet;
  for (std::size_t k = 0; k < 8; ++k) {
    const MinkVector& n = oct.side_normals[k];
    jet.value[k] = mink_inner(n, g.normal);
    for (int j = 0; j < 2; ++j) {
      const Eigen::Vector3d& d = dnu[static_cast<std::size_t>(j)];
      jet.grad[k](j) = -n[0] * d(0) + n[1] * d(1) + n[2] * d(2);
    }
  }
  jet.w = g.w;
  jet.grad_w = -hess * p * inv_w;
  return jet;
}

struct CellIntegral {
  /// Covered fraction of the cell.
  double fraction = 0.0;
  /// Integral of W over the covered part, divided by the cell area.
  double w_mean = 0.0;
};

constexpr int kSubcells = 8;

// Octagon coverage of the cell around a node. Side functions are expanded to
// second order (curvature from neighbouring gradients, zero if unavailable);
// cells cut by a side are split into kSubcells^2 pieces, each clipped by the
// local linearisation.
CellIntegral octagon_cell(const SideJet& jet, const std::array<Eigen::Matrix2d, 8>& curvature, double h) {
  const double half = 0.5 * h;
  bool straddles = false;
  for (std::size_t k = 0; k < 8; ++k) {
    const Eigen::Vector2d& b = jet.grad[k];
    const double reach = half * (b.cwiseAbs().sum()) + half * half * curvature[k].cwiseAbs().sum();
    if (jet.value[k] - reach > 0.0) return {};
    if (jet.value[k] + reach > 0.0) straddles = true;
  }
  if (!straddles) return {1.0, jet.w};
  const double sub = h / kSubcells;
  const double sub_half = 0.5 * sub;
  CellIntegral out;
  for (int i = 0; i < kSubcells; ++i) {
    for (int j = 0; j < kSubcells; ++j) {
      const Eigen::Vector2d c(-half + (i + 0.5) * sub, -half + (j + 0.5) * sub);
      Polygon poly{{-sub_half, -sub_half}, {sub_half, -sub_half}, {sub_half, sub_half}, {-sub_half, sub_half}};
      for (std::size_t k = 0; k < 8 && poly.size() >= 3; ++k) {
        const Eigen::Vector2d b = jet.grad[k] + curvature[k] * c;
        const double a = jet.value[k] + jet.grad[k].dot(c) + 0.5 * c.dot(curvature[k] * c);
        if (a + sub_half * b.cwiseAbs().sum() > 0.0) poly = clip_half_plane(poly, a, b);
      }
      if (poly.size() < 3) continue;
      const double area = polygon_area(poly);
      out.fraction += area;
      out.w_mean += area * (jet.w + jet.grad_w.dot(c));
    }
  }
  out.fraction /= h * h;
  out.w_mean /= h * h;
  return out;
}

}  // namespace

QuotientEnergy quotient_energy(const HeightField& phi, const DomainFilter& filter) {
  const bool bolza = filter.kind == DomainFilter::Kind::BolzaDomain;
  if (bolza && phi.dim() != 2) throw DimensionError("the Bolza domain filter needs n = 2");
  const std::vector<std::size_t> nodes = filter.allowed_nodes.empty() ? phi.interior_nodes() : filter.allowed_nodes;
  std::vector<char> allowed;
  if (!filter.allowed_nodes.empty()) {
    allowed.assign(phi.size(), 0);
    for (std::size_t k : nodes) allowed[k] = 1;
  }
  const double h = phi.spacing();
  const double cell = std::pow(h, phi.dim());
  const BolzaOctagon oct = bolza ? bolza_octagon() : BolzaOctagon{};
  auto jet_at = [&](std::size_t k) {
    return side_jet(oct, point_geometry(discrete_gradient(phi, k), discrete_hessian(phi, k)));
  };
  QuotientEnergy q;
  double h_weighted = 0.0;
  for (std::size_t k : nodes) {
    if (!phi.is_interior(k, 1)) throw DomainError("quotient energy requested on a boundary node");
    const PointGeometry g = point_geometry(discrete_gradient(phi, k), discrete_hessian(phi, k));
    CellIntegral ci{1.0, g.w};
    if (bolza) {
      const SideJet jet = side_jet(oct, g);
      std::array<Eigen::Matrix2d, 8> curvature;
      curvature.fill(Eigen::Matrix2d::Zero());
      // Curvature is only needed near the octagon sides.
      bool near = false;
      for (std::size_t s = 0; s < 8; ++s) near = near || std::abs(jet.value[s]) < 2.0 * h * jet.grad[s].cwiseAbs().sum() + h;
      bool have_neighbours = near;
      for (int a = 0; a < 2 && have_neighbours; ++a) {
        for (std::ptrdiff_t sgn : {-1, 1}) {
          const auto nb = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(k) + sgn * phi.stride(a));
          if (!phi.is_interior(nb, 1) || (!allowed.empty() && !allowed[nb])) have_neighbours = false;
        }
      }
      if (have_neighbours) {
        for (int a = 0; a < 2; ++a) {
          const SideJet up = jet_at(k + static_cast<std::size_t>(phi.stride(a)));
          const SideJet down = jet_at(k - static_cast<std::size_t>(phi.stride(a)));
          for (std::size_t s = 0; s < 8; ++s) curvature[s].row(a) = (up.grad[s] - down.grad[s]).transpose() / (2.0 * h);
        }
        for (auto& c : curvature) c = (0.5 * (c + c.transpose())).eval();
      }
      ci = octagon_cell(jet, curvature, h);
    }
    if (ci.fraction <= 0.0) continue;
    q.energy += ci.w_mean * g.k_norm_sq * cell;
    q.volume += ci.w_mean * cell;
    h_weighted += ci.w_mean * g.mean_curvature;
    q.covered_weight += ci.fraction;
    if (!allowed.empty()) {
      for (int a = 0; a < phi.dim(); ++a) {
        const std::ptrdiff_t s = phi.stride(a);
        if (!allowed[k + s] || !allowed[k - s]) {
          ++q.clipped_cells;
          break;
        }
      }
    }
  }
  if (q.covered_weight <= 0.0) throw DomainError("domain filter selects no nodes");
  q.tau_mean = h_weighted * cell / q.volume;
  return q;
}

std::string to_string(Definiteness d) {
  switch (d) {
    case Definiteness::NegativeDefinite: return "negative definite";
    case Definiteness::NegativeSemidefinite: return "negative semidefinite";
    case Definiteness::PositiveDefinite: return "positive definite";
    case Definiteness::PositiveSemidefinite: return "positive semidefinite";
    case Definiteness::Indefinite: return "indefinite";
  }
  return "unknown";
}

ConvexityReport convexity_check(const HeightField& phi) {
  const GraphGeometry geo = graph_geometry(phi);
  if (geo.points.empty()) throw DomainError("no interior nodes");
  constexpr double tol = 1e-10;
  ConvexityReport rep;
  rep.nodes = geo.points.size();
  rep.min_eigenvalue = HUGE_VAL;
  rep.max_eigenvalue = -HUGE_VAL;
  for (const auto& p : geo.points) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p.second_form, Eigen::EigenvaluesOnly);
    rep.min_eigenvalue = std::min(rep.min_eigenvalue, es.eigenvalues().minCoeff());
    rep.max_eigenvalue = std::max(rep.max_eigenvalue, es.eigenvalues().maxCoeff());
  }
  if (rep.max_eigenvalue < -tol) {
    rep.classification = Definiteness::NegativeDefinite;
  } else if (rep.min_eigenvalue > tol) {
    rep.classification = Definiteness::PositiveDefinite;
  } else if (rep.max_eigenvalue <= tol) {
    rep.classification = Definiteness::NegativeSemidefinite;
  } else if (rep.min_eigenvalue >= -tol) {
    rep.classification = Definiteness::PositiveSemidefinite;
  } else {
    rep.classification = Definiteness::Indefinite;
  }
  return rep;
}

namespace {

struct NodeDerivatives {
  SmallVec p;
  SmallMat hess;
};

NodeDerivatives node_derivatives(const HeightField& phi, std::size_t node) {
  const int n = phi.dim();
  const double h = phi.spacing();
  const double h2 = h * h;
  NodeDerivatives d;
  d.p.resize(n);
  d.hess.resize(n, n);
  for (int a = 0; a < n; ++a) {
    const std::ptrdiff_t sa = phi.stride(a);
    d.p(a) = (phi[node + sa] - phi[node - sa]) / (2.0 * h);
    d.hess(a, a) = (phi[node + sa] - 2.0 * phi[node] + phi[node - sa]) / h2;
    for (int b = a + 1; b < n; ++b) {
      const std::ptrdiff_t sb = phi.stride(b);
      const double v = (phi[node + sa + sb] - phi[node + sa - sb] - phi[node - sa + sb] + phi[node - sa - sb]) / (4.0 * h2);
      d.hess(a, b) = v;
      d.hess(b, a) = v;
    }
  }
  return d;
}

double node_w(const SmallVec& p) {
  const double p2 = p.squaredNorm();
  if (!(std::sqrt(p2) < 1.0 - kSpacelikeMargin)) throw SpacelikeViolation("graph is not spacelike (|grad phi| >= 1)");
  return std::sqrt(1.0 - p2);
}

}  // namespace

double node_mean_curvature(const HeightField& phi, std::size_t node) {
  const NodeDerivatives d = node_derivatives(phi, node);
  const double w = node_w(d.p);
  const double s = d.hess.trace() + d.p.dot(d.hess * d.p) / (w * w);
  return -s / w;
}

double node_mean_curvature_jacobian(const HeightField& phi, std::size_t node,
                                    std::vector<std::pair<std::size_t, double>>& row) {
  const int n = phi.dim();
  const double h = phi.spacing();
  const double h2 = h * h;
  const NodeDerivatives d = node_derivatives(phi, node);
  const double w = node_w(d.p);
  const double w2 = w * w;
  const SmallVec hp = d.hess * d.p;
  const double php = d.p.dot(hp);
  const double s = d.hess.trace() + php / w2;
  // dH/dPhi_ab = -g^ab / W; dH/dp_k = -[(dS/dp_k)/W + S p_k / W^3].
  row.clear();
  auto add = [&](std::ptrdiff_t offset, double v) {
    row.emplace_back(static_cast<std::size_t>(static_cast<std::ptrdiff_t>(node) + offset), v);
  };
  for (int a = 0; a < n; ++a) {
    const std::ptrdiff_t sa = phi.stride(a);
    const double ds_dp = 2.0 * hp(a) / w2 + 2.0 * d.p(a) * php / (w2 * w2);
    const double b = -(ds_dp / w + s * d.p(a) / (w2 * w));
    add(sa, b / (2.0 * h));
    add(-sa, -b / (2.0 * h));
    const double aa = -(1.0 + d.p(a) * d.p(a) / w2) / w;
    add(sa, aa / h2);
    add(-sa, aa / h2);
    add(0, -2.0 * aa / h2);
    for (int c = a + 1; c < n; ++c) {
      const std::ptrdiff_t sc = phi.stride(c);
      const double ac = 2.0 * (-(d.p(a) * d.p(c) / w2) / w) / (4.0 * h2);
      add(sa + sc, ac);
      add(sa - sc, -ac);
      add(-sa + sc, -ac);
      add(-sa - sc, ac);
    }
  }
  return -s / w;
}

double cmc_residual(const HeightField& phi, double tau, const std::vector<std::size_t>& nodes) {
  double worst = 0.0;
  for (std::size_t k : nodes) worst = std::max(worst, std::abs(node_mean_curvature(phi, k) - tau));
  return worst;
}

namespace {

// Residual H - tau on the unknowns; nullopt if the field is not spacelike there.
std::optional<Eigen::VectorXd> residual_vector(const HeightField& phi, double tau,
                                               const std::vector<std::size_t>& nodes) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(nodes.size()));
  try {
    for (std::size_t i = 0; i < nodes.size(); ++i) r(static_cast<Eigen::Index>(i)) = node_mean_curvature(phi, nodes[i]) - tau;
  } catch (const SpacelikeViolation&) {
    return std::nullopt;
  }
  return r;
}

double node_gradient_norm(const HeightField& phi, std::size_t node) {
  return node_derivatives(phi, node).p.norm();
}

}  // namespace

RelaxResult cmc_relax(const HeightField& phi0, double tau_target, double tol, int max_iters,
                      const RelaxOptions& opts) {
  if (!(tau_target < 0.0)) throw DomainError("target mean curvature must be negative");
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  if (max_iters < 0) throw DomainError("max_iters must be non-negative");
  const std::vector<std::size_t> unknowns = opts.unknowns.empty() ? phi0.interior_nodes() : opts.unknowns;
  if (unknowns.empty()) throw DomainError("no unknown nodes");
  for (std::size_t k : unknowns) {
    if (!phi0.is_interior(k, 1)) throw DomainError("unknown node on the patch edge");
  }
  const double h = phi0.spacing();

  RelaxResult res;
  res.field = phi0;
  if (opts.boundary_update) opts.boundary_update(res.field);
  auto r0 = residual_vector(res.field, tau_target, unknowns);
  if (!r0) throw SpacelikeViolation("initial height field is not spacelike");
  Eigen::VectorXd r = *r0;
  double rnorm = r.cwiseAbs().maxCoeff();
  res.residual_history.push_back(rnorm);

  // Stable forward-Euler step for the principal part sigma g^ij phi_ij.
  double g_inv_sum = 0.0;
  for (std::size_t k : unknowns) {
    const NodeDerivatives d = node_derivatives(res.field, k);
    const double w2 = 1.0 - d.p.squaredNorm();
    double sum = 0.0;
    for (int a = 0; a < phi0.dim(); ++a) {
      for (int b = 0; b < phi0.dim(); ++b) sum += std::abs((a == b ? 1.0 : 0.0) + d.p(a) * d.p(b) / w2);
    }
    g_inv_sum = std::max(g_inv_sum, sum);
  }
  const double stable_sigma = 0.9 * h * h / (2.0 * g_inv_sum);
  const double sigma_cap = opts.method == RelaxMethod::Explicit ? stable_sigma : 1e12;
  double sigma = std::min(opts.initial_sigma > 0.0 ? opts.initial_sigma : stable_sigma, sigma_cap);

  std::unordered_map<std::size_t, Eigen::Index> column;
  for (std::size_t i = 0; i < unknowns.size(); ++i) column[unknowns[i]] = static_cast<Eigen::Index>(i);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  bool pattern_ready = false;
  std::vector<std::pair<std::size_t, double>> row;

  int consecutive = 0;
  while (rnorm > tol && res.iterations < max_iters) {
    ++res.iterations;
    Eigen::VectorXd delta;
    if (opts.method == RelaxMethod::Explicit) {
      delta.resize(r.size());
      for (std::size_t i = 0; i < unknowns.size(); ++i) {
        const double w = std::sqrt(1.0 - std::pow(node_gradient_norm(res.field, unknowns[i]), 2));
        delta(static_cast<Eigen::Index>(i)) = -sigma * w * r(static_cast<Eigen::Index>(i));
      }
    } else {
      std::vector<Eigen::Triplet<double>> trips;
      trips.reserve(unknowns.size() * (1 + 4 * static_cast<std::size_t>(phi0.dim() * phi0.dim())));
      for (std::size_t i = 0; i < unknowns.size(); ++i) {
        node_mean_curvature_jacobian(res.field, unknowns[i], row);
        const double w = std::sqrt(1.0 - std::pow(node_gradient_norm(res.field, unknowns[i]), 2));
        const auto ii = static_cast<Eigen::Index>(i);
        trips.emplace_back(ii, ii, 1.0 / (sigma * w));
        for (const auto& [node, v] : row) {
          auto it = column.find(node);
          if (it != column.end()) trips.emplace_back(ii, it->second, v);
        }
      }
      Eigen::SparseMatrix<double> jac(r.size(), r.size());
      jac.setFromTriplets(trips.begin(), trips.end());
      if (!pattern_ready) {
        lu.analyzePattern(jac);
        pattern_ready = true;
      }
      lu.factorize(jac);
      if (lu.info() != Eigen::Success) {
        sigma *= 0.5;
        ++res.rejections;
        if (++consecutive > opts.max_rejections) break;
        continue;
      }
      delta = lu.solve(-r);
    }
    HeightField trial = res.field;
    for (std::size_t i = 0; i < unknowns.size(); ++i) trial[unknowns[i]] += delta(static_cast<Eigen::Index>(i));
    std::optional<Eigen::VectorXd> rt;
    try {
      if (opts.boundary_update) opts.boundary_update(trial);
      rt = residual_vector(trial, tau_target, unknowns);
    } catch (const NumericalError&) {
      rt.reset();
    }
    const double tnorm = rt ? rt->cwiseAbs().maxCoeff() : HUGE_VAL;
    if (!rt || !(tnorm < rnorm)) {
      sigma *= 0.5;
      ++res.rejections;
      if (++consecutive > opts.max_rejections) break;
      continue;
    }
    consecutive = 0;
    const double ratio = rnorm / tnorm;
    res.field = std::move(trial);
    r = std::move(*rt);
    rnorm = tnorm;
    res.residual_history.push_back(rnorm);
    if (opts.method == RelaxMethod::Explicit) {
      sigma = std::min(1.2 * sigma, sigma_cap);
    } else {
      sigma = std::min(sigma * std::clamp(ratio, 2.0, 10.0), sigma_cap);
    }
  }
  res.residual = rnorm;
  res.converged = rnorm <= tol;
  for (std::size_t k : unknowns) res.max_gradient = std::max(res.max_gradient, node_gradient_norm(res.field, k));
  return res;
}

std::string height_field_to_csv(const HeightField& phi) {
  std::string out = "origin";
  for (Eigen::Index a = 0; a < phi.origin().size(); ++a) out += "," + format_double(phi.origin()(a));
  out += "\nextent";
  for (int c : phi.counts()) out += "," + format_double((c - 1) * phi.spacing());
  out += "\nspacing," + format_double(phi.spacing()) + "\n";
  const auto row_len = static_cast<std::size_t>(phi.counts().front());
  for (std::size_t k = 0; k < phi.size(); k += row_len) {
    for (std::size_t i = 0; i < row_len; ++i) {
      if (i) out += ',';
      out += format_double(phi[k + i]);
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<double> parse_labeled_line(const std::string& line, const std::string& label) {
  std::istringstream is(line);
  std::string cell;
  if (!std::getline(is, cell, ',') || cell != label) throw DomainError("expected header line '" + label + "'");
  std::vector<double> out;
  while (std::getline(is, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw DomainError("malformed number in header '" + label + "'");
    }
  }
  return out;
}

}  // namespace

HeightField height_field_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string l0, l1, l2;
  if (!std::getline(is, l0) || !std::getline(is, l1) || !std::getline(is, l2)) throw DomainError("missing header lines");
  const auto origin = parse_labeled_line(l0, "origin");
  const auto extent = parse_labeled_line(l1, "extent");
  const auto spacing = parse_labeled_line(l2, "spacing");
  if (origin.empty() || origin.size() != extent.size() || spacing.size() != 1) {
    throw DomainError("inconsistent height field header");
  }
  std::vector<int> counts;
  for (double e : extent) counts.push_back(static_cast<int>(std::lround(e / spacing[0])) + 1);
  HeightField hf(counts, Eigen::Map<const Eigen::VectorXd>(origin.data(), static_cast<Eigen::Index>(origin.size())),
                 spacing[0]);
  std::string line;
  std::size_t k = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t in_row = 0;
    while (std::getline(ls, cell, ',')) {
      if (k >= hf.size()) throw DomainError("too many height values");
      try {
        hf[k++] = std::stod(cell);
      } catch (const std::exception&) {
        throw DomainError("malformed height value");
      }
      ++in_row;
    }
    if (in_row != static_cast<std::size_t>(counts.front())) throw DomainError("height row has the wrong length");
  }
  if (k != hf.size()) throw DomainError("too few height values");
  return hf;
}

}  // namespace flatcmc
