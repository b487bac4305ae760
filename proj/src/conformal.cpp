#include "flatcmc/conformal.hpp"

#include "flatcmc/errors.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>

namespace flatcmc {

void validate(const ConformalBackground& bg) {
  if (bg.dim < 3 || bg.dim > 4) throw DimensionError("conformal method needs n = 3 or 4");
  if (!(bg.volume > 0.0)) throw DomainError("background volume must be positive");
  if (bg.grid_points < 0 || (bg.grid_points > 0 && bg.grid_points < 4)) {
    throw DomainError("grid needs at least 4 points");
  }
  if (bg.grid_points > 0 && !(bg.circle_length > 0.0)) throw DomainError("circle length must be positive");
}

TTData constant_tt(const ConformalBackground& bg, double sigma_sq) {
  if (!(sigma_sq >= 0.0)) throw DomainError("|sigma|^2 must be non-negative");
  return TTData{Eigen::VectorXd::Constant(bg.points(), sigma_sq)};
}

double lichnerowicz_floor(int n, double tau) {
  if (!(tau < 0.0)) throw DomainError("tau must be negative");
  return std::pow(n * n / (tau * tau), (n - 2) / 4.0);
}

namespace {

void check_inputs(const ConformalBackground& bg, const TTData& tt, double tau) {
  validate(bg);
  if (!(tau < 0.0)) throw DomainError("tau must be negative");
  if (tt.sigma_sq.size() != bg.points()) throw DimensionError("|sigma|^2 field does not match the grid");
  if (tt.sigma_sq.size() && tt.sigma_sq.minCoeff() < 0.0) throw DomainError("|sigma|^2 must be non-negative");
}

double laplace_coefficient(int n) { return 4.0 * (n - 1) / (n - 2); }

Eigen::VectorXd periodic_second_difference(const ConformalBackground& bg, const Eigen::VectorXd& u) {
  const int m = bg.points();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(m);
  if (bg.grid_points == 0) return out;
  const double h = bg.circle_length / m;
  for (int k = 0; k < m; ++k) out(k) = (u((k + 1) % m) - 2.0 * u(k) + u((k + m - 1) % m)) / (h * h);
  return out;
}

}  // namespace

Eigen::VectorXd lichnerowicz_residual(const Eigen::VectorXd& u, const ConformalBackground& bg, const TTData& tt,
                                      double tau) {
  check_inputs(bg, tt, tau);
  if (u.size() != bg.points()) throw DimensionError("u does not match the grid");
  if (!(u.minCoeff() > 0.0)) throw DomainError("conformal factor must be positive");
  const int n = bg.dim;
  const double p = (n + 2.0) / (n - 2.0);
  const double q = (2.0 - 3.0 * n) / (n - 2.0);
  const double a = (n - 1.0) / n * tau * tau;
  Eigen::VectorXd r = -laplace_coefficient(n) * periodic_second_difference(bg, u) + bg.scalar_curvature() * u;
  for (Eigen::Index k = 0; k < u.size(); ++k) r(k) += a * std::pow(u(k), p) - std::pow(u(k), q) * tt.sigma_sq(k);
  return r;
}

double default_lichnerowicz_tolerance(const ConformalBackground& bg) { return bg.grid_points > 0 ? 1e-10 : 1e-12; }

LichSolution solve_lichnerowicz(const ConformalBackground& bg, const TTData& tt, double tau) {
  return solve_lichnerowicz(bg, tt, tau, default_lichnerowicz_tolerance(bg));
}

LichSolution solve_lichnerowicz(const ConformalBackground& bg, const TTData& tt, double tau, double tol) {
  check_inputs(bg, tt, tau);
  if (!(tol > 0.0)) throw DomainError("tolerance must be positive");
  const int n = bg.dim;
  const int m = bg.points();
  const double p = (n + 2.0) / (n - 2.0);
  const double q = (2.0 - 3.0 * n) / (n - 2.0);
  const double a = (n - 1.0) / n * tau * tau;
  const double c = laplace_coefficient(n);

  LichSolution sol;
  sol.tau = tau;
  sol.u = Eigen::VectorXd::Constant(m, lichnerowicz_floor(n, tau));
  Eigen::VectorXd r = lichnerowicz_residual(sol.u, bg, tt, tau);
  double rnorm = r.cwiseAbs().maxCoeff();
  sol.residual_history.push_back(rnorm);

  while (rnorm > tol) {
    if (sol.iterations == 100) {
      throw ConvergenceError("Newton did not converge in 100 iterations", rnorm);
    }
    Eigen::VectorXd diag(m);
    for (int k = 0; k < m; ++k) {
      diag(k) = bg.scalar_curvature() + a * p * std::pow(sol.u(k), p - 1.0) -
                q * std::pow(sol.u(k), q - 1.0) * tt.sigma_sq(k);
    }
    Eigen::VectorXd delta;
    if (bg.grid_points == 0) {
      delta = -r.cwiseQuotient(diag);
    } else {
      const double w = c / std::pow(bg.circle_length / m, 2);
      std::vector<Eigen::Triplet<double>> trips;
      for (int k = 0; k < m; ++k) {
        trips.emplace_back(k, k, diag(k) + 2.0 * w);
        trips.emplace_back(k, (k + 1) % m, -w);
        trips.emplace_back(k, (k + m - 1) % m, -w);
      }
      Eigen::SparseMatrix<double> jac(m, m);
      jac.setFromTriplets(trips.begin(), trips.end());
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(jac);
      if (solver.info() != Eigen::Success) throw ConvergenceError("Newton Jacobian is singular", rnorm);
      delta = solver.solve(-r);
    }
    double lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving, lambda *= 0.5) {
      const Eigen::VectorXd trial = sol.u + lambda * delta;
      if (!(trial.minCoeff() > 0.0)) continue;
      const Eigen::VectorXd rt = lichnerowicz_residual(trial, bg, tt, tau);
      const double tnorm = rt.cwiseAbs().maxCoeff();
      if (tnorm < rnorm) {
        sol.u = trial;
        r = rt;
        rnorm = tnorm;
        accepted = true;
        break;
      }
    }
    ++sol.iterations;
    if (!accepted) throw ConvergenceError("line search failed to reduce the residual", rnorm);
    sol.residual_history.push_back(rnorm);
  }
  sol.residual_norm = rnorm;
  return sol;
}

double conformal_ham(const LichSolution& sol, const ConformalBackground& bg) {
  validate(bg);
  const int n = bg.dim;
  const double e = 2.0 * n / (n - 2.0);
  double mean = 0.0;
  for (Eigen::Index k = 0; k < sol.u.size(); ++k) mean += std::pow(sol.u(k), e);
  mean /= static_cast<double>(sol.u.size());
  return std::pow(std::abs(sol.tau), n) * bg.volume * mean;
}

double sigma_report(const std::vector<double>& ham_values, int n) {
  if (ham_values.empty()) throw DomainError("no Ham values");
  if (n < 2) throw DimensionError("dimension must be at least 2");
  const double lo = *std::min_element(ham_values.begin(), ham_values.end());
  if (!(lo > 0.0)) throw DomainError("Ham values must be positive");
  return -((n - 1.0) / n) * std::pow(lo, 2.0 / n);
}

CsvTable lichnerowicz_sweep(const ConformalBackground& bg, const std::vector<double>& taus,
                            const std::vector<double>& sigma_sqs) {
  CsvTable t;
  t.header = {"tau", "sigma_sq", "u_min", "u_max", "ham", "bound_nn_vol"};
  const double bound = std::pow(bg.dim, bg.dim) * bg.volume;
  for (double tau : taus) {
    for (double s2 : sigma_sqs) {
      const LichSolution sol = solve_lichnerowicz(bg, constant_tt(bg, s2), tau);
      t.add_row({tau, s2, sol.u.minCoeff(), sol.u.maxCoeff(), conformal_ham(sol, bg), bound});
    }
  }
  return t;
}

}  // namespace flatcmc
