#pragma once

// CMC-time evolution of flat initial data in zero-shift gauge:
//   d/dtau g_ab = -2 N K_ab,  d/dtau K_ab = -Hess_ab N - N K_ac K^c_b,
//   -Lap N + |K|^2 N = 1,
// on warped products of hyperbolic/flat blocks. Fields are either constant
// (homogeneous) or sampled along a periodic circle that forms a 1-dimensional
// flat block.

#include "flatcmc/model_spacetimes.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace flatcmc {

/// Relative slack for the Treibergs and lapse bounds. Cone slices attain the
/// upper lapse bound and n = 2 Kasner slices attain both, so integration error
/// alone crosses a sharp cut.
inline constexpr double kBoundSlack = 1e-8;

struct BlockGeometry {
  std::vector<SliceBlock> blocks;
  /// Homogeneous: Vol = volume_factor * prod_i A_i^(d_i/2).
  /// 1-D grid: Vol = volume_factor * sum_k sqrt(g_k) dr, i.e. volume_factor is
  /// the volume of the non-grid unit factors.
  double volume_factor = 1.0;
  /// Index of the flat 1-dimensional block carrying the grid, or -1.
  int grid_block = -1;
  int grid_points = 0;
  double circle_length = 0.0;

  int n() const;
  bool has_grid() const { return grid_block >= 0; }
  int points() const { return has_grid() ? grid_points : 1; }
  double spacing() const { return has_grid() ? circle_length / grid_points : 0.0; }
};

/// Throws DimensionError/DomainError if blocks, grid or volumes are inconsistent.
void validate(const BlockGeometry& geo);

struct FlowState {
  double tau = 0.0;
  /// A_i: metric on block i is A_i * (unit model metric); one value per point.
  std::vector<Eigen::VectorXd> g_blocks;
  /// B_i: covariant K on block i is B_i * (unit model metric).
  std::vector<Eigen::VectorXd> k_blocks;
  Eigen::VectorXd lapse;
};

struct FlowProblem {
  BlockGeometry geometry;
  FlowState state;
};

/// Block data of an exact slice (homogeneous) with the lapse solved.
FlowProblem problem_from_slice(const SliceData& slice);
FlowProblem cone_problem(const ConeModel& m, double tau);
/// Kasner slice at mean curvature tau. grid_points > 0 samples the circle.
FlowProblem kasner_problem(const KasnerModel& m, double tau, int grid_points = 0);

/// Mixed eigenvalues kappa_i = B_i / A_i per block and point.
std::vector<Eigen::VectorXd> mixed_curvatures(const FlowState& s);
Eigen::VectorXd trace_k(const BlockGeometry& geo, const FlowState& s);
/// |K|^2 per point.
Eigen::VectorXd k_norm_sq(const BlockGeometry& geo, const FlowState& s);

/// Mixed Ricci eigenvalue of each block per point.
std::vector<Eigen::VectorXd> block_ricci(const BlockGeometry& geo, const FlowState& s);

struct FlatResidual {
  double gauss = 0.0;
  double codazzi = 0.0;
};
/// Max-norm of R_ab - K_ac K^c_b + trK K_ab (mixed, per block) and of
/// d^nabla K along the grid direction.
FlatResidual flat_constraint_residual(const BlockGeometry& geo, const FlowState& s);

struct VacuumResidual {
  double scalar = 0.0;
  double momentum = 0.0;
};
/// Max-norm of R - |K|^2 + (trK)^2 and of grad trK - div K.
VacuumResidual vacuum_constraint_residual(const BlockGeometry& geo, const FlowState& s);

/// Solves the lapse equation. Homogeneous: N = 1/|K|^2. 1-D: conservative
/// second-order stencil on the periodic grid, sparse LDL^T solve.
/// Throws DegenerateLapseError if |K|^2 vanishes at a point.
Eigen::VectorXd solve_lapse(const BlockGeometry& geo, const FlowState& s);

/// Discrete Laplacian of a grid field (zero for homogeneous geometries).
Eigen::VectorXd laplacian(const BlockGeometry& geo, const FlowState& s, const Eigen::VectorXd& f);

/// Max |-Lap N + |K|^2 N - 1| with the state's lapse.
double lapse_equation_residual(const BlockGeometry& geo, const FlowState& s);
/// Normwise backward error |r|_inf / (|A|_inf |N|_inf + 1) of the same
/// residual, A the discrete operator. Late slices on a fine grid have
/// |A| |N| ~ 4 n / (h tau)^2, so the absolute residual floor is far above
/// double rounding of 1.
double lapse_backward_error(const BlockGeometry& geo, const FlowState& s);

double volume(const BlockGeometry& geo, const FlowState& s);
/// Integral of N |K_hat|^2, K_hat the trace-free part of K.
double n_khat2_integral(const BlockGeometry& geo, const FlowState& s);
double ham(const BlockGeometry& geo, const FlowState& s);

/// One classical RK4 step in tau; the lapse is re-solved at every stage and
/// at the end. Throws DegenerationError if a metric scale becomes non-positive.
FlowState flow_step(const BlockGeometry& geo, const FlowState& s, double dtau);

struct HamRecord {
  double tau = 0.0;
  double volume = 0.0;
  double ham = 0.0;
  double n_khat2_integral = 0.0;
  double gauss_residual = 0.0;
  double codazzi_residual = 0.0;
  double lapse_min = 0.0;
  double lapse_max = 0.0;
  // Diagnostics not written to the CSV trace.
  double k2_over_tau2_max = 0.0;
  double ricci_over_tau4_max = 0.0;
  double gauge_drift = 0.0;
  double lapse_residual = 0.0;
  double lapse_backward_error = 0.0;
};

struct HamTrace {
  int dim = 0;
  std::vector<HamRecord> records;
  /// Treibergs-bound or lapse-bound violations, one line each.
  std::vector<std::string> violations;
  int retried_steps = 0;
};

struct FlowOptions {
  /// |trK - tau| above this after a step triggers a retry with two half steps.
  double gauge_tolerance = 1e-9;
  bool retry_on_drift = true;
  int max_halvings = 12;
};

struct FlowRun {
  HamTrace trace;
  FlowState final_state;
};

/// Integrates from initial.tau to tau_end with `steps` uniform steps and
/// records the initial state and every completed step.
FlowRun run_flow(const BlockGeometry& geo, const FlowState& initial, double tau_end, int steps,
                 const FlowOptions& opts = {});

HamRecord make_record(const BlockGeometry& geo, const FlowState& s);

/// CSV with header tau,volume,ham,n_khat2_integral,gauss_residual,codazzi_residual,lapse_min,lapse_max.
std::string trace_to_csv(const HamTrace& t);

struct MonotonicityReport {
  /// Worst |lhs - rhs| / |rhs| and |lhs - rhs| over interior records.
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  bool identity_holds = true;
  /// Record indices i where ham[i+1] exceeds ham[i] by more than 1e-12 relative.
  std::vector<std::size_t> increases;
  bool pass() const { return identity_holds && increases.empty(); }
};

/// Compares the central difference dHam/dtau with -n |tau|^(n-1) int N |K_hat|^2;
/// each interior record must agree to 1e-4 relative or 1e-10 absolute.
MonotonicityReport ham_monotonicity_check(const HamTrace& t);

struct LapseIdentity {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual = 0.0;
};
/// lhs = int (1 - N tau^2 / n), rhs = int N |K_hat|^2, using the state's lapse.
LapseIdentity lapse_identity_check(const BlockGeometry& geo, const FlowState& s);

/// Frozen bound C_n with |Ric|_g^2 <= C_n tau^4 on cone and Kasner runs.
double ricci_bound_constant(int n);

}  // namespace flatcmc
