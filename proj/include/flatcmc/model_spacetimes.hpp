#pragma once

// Exact flat model spacetimes: the Lorentz cone -d rho^2 + rho^2 g0 over a
// hyperbolic manifold, and the Kasner-type product -d rho^2 + rho^2 h + dr^2.
// Convention: d/dt g = -2 N K, expanding slices have tau = tr K < 0.

#include <Eigen/Dense>

#include <vector>

namespace flatcmc {

enum class BlockCurvature { Hyperbolic, Flat };

/// A factor of a warped-product slice: dim-dimensional space of sectional
/// curvature -1 (hyperbolic) or 0 (flat).
struct SliceBlock {
  int dim = 1;
  BlockCurvature curvature = BlockCurvature::Hyperbolic;
};

struct ConeModel {
  int dim = 2;
  double base_volume = 0.0;
};

/// Default base volume: 4 pi (genus-2 surface) for n = 2, 1 otherwise.
double default_base_volume(int n);

struct KasnerModel {
  int dim = 3;
  /// Volume of the (n-1)-dimensional hyperbolic factor.
  double sigma_volume = 1.0;
  double circle_length = 1.0;
};

/// Throws DimensionError / DomainError on n outside [2,4] or non-positive volumes.
void validate(const ConeModel& m);
void validate(const KasnerModel& m);

struct SliceData {
  double tau = 0.0;
  std::vector<SliceBlock> blocks;
  /// Metric on block i is scale_i * (unit model metric).
  std::vector<double> block_metric_scales;
  /// Principal curvature (eigenvalue of the mixed K) on block i.
  std::vector<double> k_eigenvalues;
  double volume = 0.0;
};

/// Slice rho = s of the cone.
SliceData cone_slice(const ConeModel& m, double s);
/// Slice rho of the Kasner product; hyperbolic block first, circle second.
SliceData kasner_slice(const KasnerModel& m, double rho);

/// |tau|^n * volume of a slice.
double slice_ham(const SliceData& s);

/// Cone: n^n * base_volume. Kasner: (n-1)^(n-1) |tau| * sigma_volume * circle_length.
double ham_closed_form(const ConeModel& m, double tau);
double ham_closed_form(const KasnerModel& m, double tau);

/// Mixed shape operator of a Gauss foliation at Gauss time t.
struct RiccatiState {
  Eigen::MatrixXd shape_operator;
  double t = 0.0;
};

/// K after elapsed Gauss time t: (K^{-1} - t)^{-1}, evaluated per eigenvalue.
/// Throws DomainError for a non-symmetric or singular K or t at a focal time.
Eigen::MatrixXd riccati_propagate(const RiccatiState& state, double t);

/// Classical RK4 for dK/dt = K^2 over elapsed time t with `steps` uniform steps.
Eigen::MatrixXd riccati_integrate_rk4(const Eigen::MatrixXd& k0, double t, int steps);

/// 1/kappa for each nonzero eigenvalue kappa of K, ascending.
std::vector<double> focal_times(const RiccatiState& state);

}  // namespace flatcmc
