#include "flatcmc/model_spacetimes.hpp"

#include "flatcmc/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flatcmc {

namespace {

void require_model_dim(int n) {
  if (n < 2 || n > 4) throw DimensionError("model dimension must be 2, 3 or 4");
}

void require_symmetric(const Eigen::MatrixXd& k) {
  if (k.rows() != k.cols() || k.rows() == 0) throw DimensionError("shape operator must be square");
  const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw DomainError("shape operator is not symmetric");
  }
}

}  // namespace

double default_base_volume(int n) { return n == 2 ? 4.0 * std::numbers::pi : 1.0; }

void validate(const ConeModel& m) {
  require_model_dim(m.dim);
  if (!(m.base_volume > 0.0)) throw DomainError("base_volume must be positive");
}

void validate(const KasnerModel& m) {
  require_model_dim(m.dim);
  if (!(m.sigma_volume > 0.0)) throw DomainError("sigma_volume must be positive");
  if (!(m.circle_length > 0.0)) throw DomainError("circle_length must be positive");
}

SliceData cone_slice(const ConeModel& m, double s) {
  validate(m);
  if (!(s > 0.0)) throw DomainError("cone slice parameter must be positive");
  SliceData out;
  out.blocks = {{m.dim, BlockCurvature::Hyperbolic}};
  out.block_metric_scales = {s * s};
  out.k_eigenvalues = {-1.0 / s};
  out.tau = -m.dim / s;
  out.volume = std::pow(s, m.dim) * m.base_volume;
  return out;
}

SliceData kasner_slice(const KasnerModel& m, double rho) {
  validate(m);
  if (!(rho > 0.0)) throw DomainError("Kasner slice parameter must be positive");
  SliceData out;
  out.blocks = {{m.dim - 1, BlockCurvature::Hyperbolic}, {1, BlockCurvature::Flat}};
  out.block_metric_scales = {rho * rho, 1.0};
  out.k_eigenvalues = {-1.0 / rho, 0.0};
  out.tau = -(m.dim - 1) / rho;
  out.volume = std::pow(rho, m.dim - 1) * m.sigma_volume * m.circle_length;
  return out;
}

double slice_ham(const SliceData& s) {
  int n = 0;
  for (const auto& b : s.blocks) n += b.dim;
  return std::pow(std::abs(s.tau), n) * s.volume;
}

double ham_closed_form(const ConeModel& m, double tau) {
  validate(m);
  if (!(tau < 0.0)) throw DomainError("tau must be negative");
  return std::pow(m.dim, m.dim) * m.base_volume;
}

double ham_closed_form(const KasnerModel& m, double tau) {
  validate(m);
  if (!(tau < 0.0)) throw DomainError("tau must be negative");
  return std::pow(m.dim - 1, m.dim - 1) * std::abs(tau) * m.sigma_volume * m.circle_length;
}

Eigen::MatrixXd riccati_propagate(const RiccatiState& state, double t) {
  const Eigen::MatrixXd& k = state.shape_operator;
  require_symmetric(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()));
  const Eigen::VectorXd& kappa = es.eigenvalues();
  const double scale = std::max(1.0, kappa.cwiseAbs().maxCoeff());
  Eigen::VectorXd out(kappa.size());
  for (Eigen::Index i = 0; i < kappa.size(); ++i) {
    if (std::abs(kappa(i)) < 1e-14 * scale) throw DomainError("shape operator is singular");
    const double denom = 1.0 - t * kappa(i);
    if (std::abs(denom) < 1e-12) throw DomainError("propagation time hits a focal point");
    out(i) = kappa(i) / denom;
  }
  const Eigen::MatrixXd& q = es.eigenvectors();
  Eigen::MatrixXd result = q * out.asDiagonal() * q.transpose();
  return 0.5 * (result + result.transpose());
}

Eigen::MatrixXd riccati_integrate_rk4(const Eigen::MatrixXd& k0, double t, int steps) {
  if (steps < 1) throw DomainError("RK4 needs at least one step");
  require_symmetric(k0);
  const double h = t / steps;
  Eigen::MatrixXd k = k0;
  for (int i = 0; i < steps; ++i) {
    const Eigen::MatrixXd s1 = k * k;
    const Eigen::MatrixXd y2 = k + 0.5 * h * s1;
    const Eigen::MatrixXd s2 = y2 * y2;
    const Eigen::MatrixXd y3 = k + 0.5 * h * s2;
    const Eigen::MatrixXd s3 = y3 * y3;
    const Eigen::MatrixXd y4 = k + h * s3;
    const Eigen::MatrixXd s4 = y4 * y4;
    k += (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4);
  }
  return k;
}

std::vector<double> focal_times(const RiccatiState& state) {
  require_symmetric(state.shape_operator);
  const Eigen::MatrixXd& k = state.shape_operator;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (k + k.transpose()), Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  std::vector<double> out;
  for (double kappa : es.eigenvalues()) {
    if (std::abs(kappa) > 1e-14 * scale) out.push_back(1.0 / kappa);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace flatcmc
