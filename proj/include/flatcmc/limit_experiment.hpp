#pragma once

// Rescaled-volume limit for genus-2 flat structures (n = 2). For each lambda
// the cocycle is scaled by lambda^-2, an equivariant CMC graph with mean
// curvature tau_target is relaxed near the unit hyperboloid, and the quotient
// volume is integrated over the Gauss-map preimage of the Bolza octagon.

#include "flatcmc/csv.hpp"
#include "flatcmc/graph_surfaces.hpp"
#include "flatcmc/holonomy.hpp"

#include <optional>
#include <vector>

namespace flatcmc {

struct LimitOptions {
  double tau_target = -2.0;
  /// Grid spacing (the coarse grid when richardson is set).
  double spacing = 0.1;
  /// Repeat on a grid with spacing / sqrt(2) and extrapolate the O(h^2)
  /// volume error away: Vol = 2 Vol_fine - Vol_coarse.
  bool richardson = true;
  /// Relaxation region: nodes whose unit-hyperboloid Gauss image lies within
  /// this hyperbolic distance of the octagon.
  double margin = 0.35;
  /// Merit tolerance (see EquivariantProblem::solve). Rounding in the ghost
  /// equations, amplified by their H weights (~1e4), leaves a floor of 1e-8 to
  /// 2e-8 at h = 0.1 and 0.07.
  double tol = 1e-7;
  int max_iters = 200;
  /// Word length used to find the deck transformation for each ghost node.
  int max_word_length = 4;
  /// Continuation between cocycle scales halves a failed scale step at most
  /// this many times.
  int max_bisections = 6;
};

void validate(const LimitOptions& o);

struct LimitRow {
  double lambda = 1.0;
  double tau_mean = 0.0;
  double volume = 0.0;
  /// |tau|^2 Vol / (4 * 4 pi).
  double ham_ratio = 0.0;
  double residual = 0.0;
  bool converged = false;
  std::size_t clipped_cells = 0;
};

/// Discrete equivariant CMC problem on a fixed grid. Unknowns are the region
/// nodes (equation H = tau_target) and a ghost ring (equivariance equation).
/// Each ghost y is paired with a group element g whose linear part maps the
/// unit-hyperboloid Gauss image at y into the octagon; its equation is
///   Q(t) = rho(g)^-1 (t, y),  Q_0 = phi~(Q_1, Q_2),
/// with phi~ the bicubic interpolant of the region values.
class EquivariantProblem {
 public:
  EquivariantProblem(const HolonomyRep& rep, const LimitOptions& opts);

  /// Replaces the cocycle (same presentation and ghost pairing).
  void set_structure(const HolonomyRep& rep);

  const std::vector<std::size_t>& region() const { return region_; }
  /// Unit hyperboloid on the grid.
  const HeightField& initial() const { return initial_; }

  /// Solves every ghost equation with the region values fixed.
  void fill_ghosts(HeightField& phi) const;
  /// H - tau on the region followed by the ghost residuals; nullopt if not spacelike.
  std::optional<Eigen::VectorXd> residual(const HeightField& phi) const;
  /// Pseudo-transient Newton on the coupled system from `start`. H rows get a
  /// 1/(sigma W) diagonal shift, ghost rows are undamped. sigma grows with the
  /// residual ratio; a step is rejected (sigma / 4) unless the merit decreases
  /// and the graph stays spacelike. Merit and RelaxResult::residual are the max
  /// over |H - tau| and the ghost residuals, each ghost row scaled by its
  /// Jacobian column sum over the H rows (its effect on H). If `start` itself is
  /// not spacelike the ghosts are filled first; throws SpacelikeViolation if
  /// that does not help.
  RelaxResult solve(const HeightField& start, double initial_sigma = 1.0) const;

 private:
  struct Ghost {
    std::size_t node = 0;
    Eigen::Vector2d y;
    Eigen::Matrix3d inv;
    /// f(g)^-1 t_g, so that Q(t) = inv (t, y) - shift.
    Eigen::Vector3d shift;
    Word word;
  };

  LimitOptions opts_;
  HeightField initial_;
  std::vector<std::size_t> region_;
  std::vector<Ghost> ghosts_;
  std::vector<Eigen::Index> column_;
};

/// Relaxed equivariant surface for one structure.
struct EquivariantSurface {
  HeightField field;
  std::vector<std::size_t> region;
  RelaxResult relax;
};

/// Solves the undeformed structure from the unit hyperboloid, then continues
/// in the cocycle scale to rep. Throws ConvergenceError if either stage fails.
EquivariantSurface relax_equivariant(const HolonomyRep& rep, const LimitOptions& opts);

/// One row per lambda. Solutions are continued from the undeformed structure in
/// order of decreasing lambda; once a solve fails, that row and the remaining
/// smaller lambdas keep NaN values and converged = false. tau_mean is taken
/// from the finest grid.
std::vector<LimitRow> limit_experiment(const HolonomyRep& rep, const std::vector<double>& lambdas,
                                       const LimitOptions& opts = {});

/// lambda,tau_mean,volume,ham_ratio,residual.
CsvTable limit_table(const std::vector<LimitRow>& rows);

/// Bolza structure with cocycle amplitude * d, where d is the orthogonal
/// projection onto the complement of B^1 in Z^1 of a unit e_1 translation on
/// the first generator, normalized on stacked translations.
HolonomyRep bolza_deformation(double amplitude);

}  // namespace flatcmc
