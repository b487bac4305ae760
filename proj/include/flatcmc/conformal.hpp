#pragma once

// Conformal method for the Hamiltonian constraint: g = u^(4/(n-2)) h with
// R_h = -n(n-1), K = (tau/n) g + u^-2 sigma, sigma transverse-traceless.
// u solves
//   -4(n-1)/(n-2) Lap u + R_h u + (n-1)/n tau^2 u^((n+2)/(n-2))
//     - u^((2-3n)/(n-2)) |sigma|^2 = 0.

#include "flatcmc/csv.hpp"

#include <Eigen/Dense>

#include <vector>

namespace flatcmc {

struct ConformalBackground {
  int dim = 3;
  double volume = 1.0;
  /// 0 for constant fields; otherwise samples on a periodic circle of
  /// `circle_length` where Lap u = u_rr.
  int grid_points = 0;
  double circle_length = 1.0;

  double scalar_curvature() const { return -dim * (dim - 1.0); }
  int points() const { return grid_points > 0 ? grid_points : 1; }
};

void validate(const ConformalBackground& bg);

/// |sigma|^2_h sampled like the background (length 1 for constant data).
struct TTData {
  Eigen::VectorXd sigma_sq;
};

TTData constant_tt(const ConformalBackground& bg, double sigma_sq);

struct LichSolution {
  Eigen::VectorXd u;
  double tau = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  /// Max-norm residual before each Newton update and after the last one.
  std::vector<double> residual_history;
};

/// (n^2/tau^2)^((n-2)/4), the solution for sigma = 0.
double lichnerowicz_floor(int n, double tau);

/// Pointwise residual. Throws DomainError if u <= 0 somewhere or tau >= 0.
Eigen::VectorXd lichnerowicz_residual(const Eigen::VectorXd& u, const ConformalBackground& bg, const TTData& tt,
                                      double tau);

/// 1e-12 for constant data, 1e-10 on a grid.
double default_lichnerowicz_tolerance(const ConformalBackground& bg);

/// Damped Newton from the sigma = 0 solution; step halving (at most 30 times)
/// keeps u positive and the residual decreasing. Throws ConvergenceError after
/// 100 iterations or a failed line search.
LichSolution solve_lichnerowicz(const ConformalBackground& bg, const TTData& tt, double tau, double tol);
LichSolution solve_lichnerowicz(const ConformalBackground& bg, const TTData& tt, double tau);

/// |tau|^n * integral of u^(2n/(n-2)) dmu_h.
double conformal_ham(const LichSolution& sol, const ConformalBackground& bg);

/// -((n-1)/n) * (min Ham)^(2/n). Sampled values only bound sigma(M) from above.
double sigma_report(const std::vector<double>& ham_values, int n);

/// One row per (tau, sigma_sq) pair with constant |sigma|^2:
/// tau,sigma_sq,u_min,u_max,ham,bound_nn_vol.
CsvTable lichnerowicz_sweep(const ConformalBackground& bg, const std::vector<double>& taus,
                            const std::vector<double>& sigma_sqs);

}  // namespace flatcmc
