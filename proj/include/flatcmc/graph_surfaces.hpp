#pragma once

// Spacelike graphs t = phi(x) over a rectangular patch of E^n in Minkowski
// space. With p = grad phi, Phi = Hess phi, W = sqrt(1 - |p|^2):
//   g = I - p p^T,  g^-1 = I + p p^T / W^2,  K = -Phi / W,
//   H = g^ij K_ij,  nu = (1, p) / W.
// The upper hyperboloid t = sqrt(s^2 + |x|^2) has H = -n/s.

#include "flatcmc/holonomy.hpp"
#include "flatcmc/lorentz.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flatcmc {

/// |grad phi| must stay below 1 - kSpacelikeMargin.
inline constexpr double kSpacelikeMargin = 1e-6;
/// Nodes within this many steps of the patch edge carry Dirichlet data only.
inline constexpr int kBoundaryMargin = 2;

class HeightField {
 public:
  HeightField() = default;
  HeightField(std::vector<int> counts, Eigen::VectorXd origin, double spacing);

  /// Samples f on the grid origin + h * index.
  static HeightField sample(std::vector<int> counts, Eigen::VectorXd origin, double spacing,
                            const std::function<double(const Eigen::VectorXd&)>& f);
  /// Square grid of `count` nodes per axis centred at 0 with half-width `half_width`.
  static HeightField centered(int dim, int count, double half_width,
                              const std::function<double(const Eigen::VectorXd&)>& f);

  int dim() const { return static_cast<int>(counts_.size()); }
  const std::vector<int>& counts() const { return counts_; }
  const Eigen::VectorXd& origin() const { return origin_; }
  double spacing() const { return spacing_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  Eigen::VectorXd& values() { return values_; }
  const Eigen::VectorXd& values() const { return values_; }
  double operator[](std::size_t node) const { return values_(static_cast<Eigen::Index>(node)); }
  double& operator[](std::size_t node) { return values_(static_cast<Eigen::Index>(node)); }

  /// Axis-0-fastest linear index.
  std::size_t node(const std::vector<int>& index) const;
  std::vector<int> index(std::size_t node) const;
  Eigen::VectorXd position(std::size_t node) const;
  /// Offset between neighbours along `axis`.
  std::ptrdiff_t stride(int axis) const { return strides_[static_cast<std::size_t>(axis)]; }
  /// True when every coordinate index lies in [margin, count - 1 - margin].
  bool is_interior(std::size_t node, int margin = kBoundaryMargin) const;
  std::vector<std::size_t> interior_nodes(int margin = kBoundaryMargin) const;

 private:
  std::vector<int> counts_;
  std::vector<std::ptrdiff_t> strides_;
  Eigen::VectorXd origin_;
  double spacing_ = 0.0;
  Eigen::VectorXd values_;
};

/// Geometry from the first and second derivatives at one point.
struct PointGeometry {
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  double w = 1.0;
  Eigen::MatrixXd metric;
  Eigen::MatrixXd metric_inv;
  Eigen::MatrixXd second_form;
  double mean_curvature = 0.0;
  MinkVector normal;
  /// |K|^2_g = tr(g^-1 K g^-1 K).
  double k_norm_sq = 0.0;
};

/// Throws SpacelikeViolation if |grad| >= 1 - kSpacelikeMargin.
PointGeometry point_geometry(const Eigen::VectorXd& grad, const Eigen::MatrixXd& hess);

/// Second-order central differences at a node (mixed derivatives from the
/// four diagonal neighbours). The node must be at least one step from the edge.
Eigen::VectorXd discrete_gradient(const HeightField& phi, std::size_t node);
Eigen::MatrixXd discrete_hessian(const HeightField& phi, std::size_t node);

struct GraphGeometry {
  std::vector<std::size_t> nodes;
  std::vector<PointGeometry> points;
};

/// Geometry at every node with a kBoundaryMargin-wide border (or at the given
/// nodes). Throws SpacelikeViolation.
GraphGeometry graph_geometry(const HeightField& phi);
GraphGeometry graph_geometry(const HeightField& phi, const std::vector<std::size_t>& nodes);

/// Height function with closed-form derivatives.
struct AnalyticGraph {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> hess;

  PointGeometry geometry(const Eigen::VectorXd& x) const { return point_geometry(grad(x), hess(x)); }
};

/// t = sqrt(s^2 + |x|^2) shifted by the Minkowski vector `apex`
/// (the hyperboloid of radius s about apex).
AnalyticGraph hyperboloid_graph(double s, const MinkVector& apex);
AnalyticGraph hyperboloid_graph(double s, int n);

struct Spread {
  double min = 0.0;
  double max = 0.0;
  double width() const { return max - min; }
};
Spread mean_curvature_spread(const GraphGeometry& geo);
Spread mean_curvature_spread(const HeightField& phi);

/// Gauss map nu = (1, grad phi)/W at the nodes of graph_geometry(phi).
std::vector<MinkVector> gauss_map(const HeightField& phi);

/// Determinant identity det(I - p p^T) = 1 - |p|^2; returns the worst
/// absolute mismatch over the nodes.
double volume_element_defect(const GraphGeometry& geo);

/// Selects the region of integration for quotient_energy.
struct DomainFilter {
  enum class Kind { WholePatch, BolzaDomain };
  Kind kind = Kind::WholePatch;
  /// Nodes where geometry may be evaluated; empty means all nodes with a
  /// kBoundaryMargin border.
  std::vector<std::size_t> allowed_nodes;

  static DomainFilter whole_patch() { return {}; }
  static DomainFilter bolza() { return {Kind::BolzaDomain, {}}; }
};

struct QuotientEnergy {
  double energy = 0.0;
  double volume = 0.0;
  double tau_mean = 0.0;
  /// Total cell weight of nodes that contributed.
  double covered_weight = 0.0;
  /// Contributing cells adjacent to a node outside the allowed set; nonzero
  /// means the region was clipped by the grid.
  std::size_t clipped_cells = 0;
};

/// E = sum w |K|^2_g W h^n, Vol = sum w W h^n, tau_mean = W-weighted mean H.
/// Whole patch: w = 1 on every allowed node. Bolza (n = 2): w is the fraction
/// of the node's cell whose Gauss image lies in the fundamental octagon. Each
/// side function is expanded to second order across the cell and the fraction
/// is counted on an 8x8 subcell grid.
/// Throws DomainError if no node contributes.
QuotientEnergy quotient_energy(const HeightField& phi, const DomainFilter& filter);

enum class Definiteness { NegativeDefinite, NegativeSemidefinite, PositiveDefinite, PositiveSemidefinite, Indefinite };
std::string to_string(Definiteness d);

struct ConvexityReport {
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
  Definiteness classification = Definiteness::NegativeSemidefinite;
  std::size_t nodes = 0;
};
/// Eigenvalue extrema of K_ij over the nodes, classified with tolerance 1e-10.
ConvexityReport convexity_check(const HeightField& phi);

/// Exact mean curvature of the discrete operator at one node and its sparse
/// derivative with respect to the node values (stencil node -> dH/dphi).
double node_mean_curvature(const HeightField& phi, std::size_t node);
double node_mean_curvature_jacobian(const HeightField& phi, std::size_t node,
                                    std::vector<std::pair<std::size_t, double>>& row);

enum class RelaxMethod { Explicit, Implicit };

struct RelaxOptions {
  RelaxMethod method = RelaxMethod::Implicit;
  /// Nodes that are updated; empty means every node with a kBoundaryMargin border.
  std::vector<std::size_t> unknowns;
  /// Called after each accepted update (e.g. to refresh ghost values).
  std::function<void(HeightField&)> boundary_update;
  /// Initial pseudo-time step; 0 picks a stable explicit step h^2 / (2 max tr g^-1).
  double initial_sigma = 0.0;
  int max_rejections = 40;
};

struct RelaxResult {
  HeightField field;
  double residual = 0.0;
  std::vector<double> residual_history;
  int iterations = 0;
  int rejections = 0;
  bool converged = false;
  /// Max |grad phi| over the updated nodes of the returned field.
  double max_gradient = 0.0;
};

/// Pseudo-time relaxation phi <- phi - sigma W (H[phi] - tau_target) on the
/// unknown nodes with everything else held fixed. Explicit: forward Euler
/// with adaptive sigma. Implicit: (diag(1/(sigma W)) + dH/dphi) dphi = -(H - tau)
/// with sigma grown by the residual ratio, at least doubled per accepted step
/// (Newton as sigma -> inf). A step is
/// rejected (sigma halved) when the max-norm residual would grow or the graph
/// stops being spacelike; more than max_rejections consecutive rejections end
/// the run. Returns the best iterate and its residual.
RelaxResult cmc_relax(const HeightField& phi0, double tau_target, double tol, int max_iters,
                      const RelaxOptions& opts = {});

/// Max |H - tau| over the given nodes.
double cmc_residual(const HeightField& phi, double tau, const std::vector<std::size_t>& nodes);

/// Dense CSV with three header lines (origin, extent, spacing) followed by one
/// line per grid row along axis 0.
std::string height_field_to_csv(const HeightField& phi);
HeightField height_field_from_csv(const std::string& text);

}  // namespace flatcmc
