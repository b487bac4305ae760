#include "flatcmc/lorentz.hpp"

#include "flatcmc/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace flatcmc {

namespace {

void require_same_size(const MinkVector& u, const MinkVector& v) {
  if (u.size() != v.size()) {
    throw DimensionError("Minkowski vectors of sizes " + std::to_string(u.size()) + " and " +
                         std::to_string(v.size()));
  }
}

void require_dim(int n) {
  if (n < 1) throw DimensionError("spatial dimension must be >= 1");
}

}  // namespace

MinkVector::MinkVector(Eigen::VectorXd components) : c_(std::move(components)) {
  if (c_.size() < 2) throw DimensionError("Minkowski vector needs at least 2 components");
}

MinkVector MinkVector::zero(int n) {
  require_dim(n);
  return MinkVector(Eigen::VectorXd::Zero(n + 1));
}

MinkVector MinkVector::basis(int n, int i) {
  require_dim(n);
  if (i < 0 || i > n) throw DimensionError("basis index out of range");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(n + 1);
  c(i) = 1.0;
  return MinkVector(std::move(c));
}

MinkVector MinkVector::hyperboloid_point(const Eigen::VectorXd& spatial) {
  Eigen::VectorXd c(spatial.size() + 1);
  c(0) = std::sqrt(1.0 + spatial.squaredNorm());
  c.tail(spatial.size()) = spatial;
  return MinkVector(std::move(c));
}

MinkVector MinkVector::operator+(const MinkVector& o) const {
  require_same_size(*this, o);
  return MinkVector(c_ + o.c_);
}

MinkVector MinkVector::operator-(const MinkVector& o) const {
  require_same_size(*this, o);
  return MinkVector(c_ - o.c_);
}

double mink_inner(const MinkVector& u, const MinkVector& v) {
  require_same_size(u, v);
  const auto& a = u.components();
  const auto& b = v.components();
  return -a(0) * b(0) + a.tail(a.size() - 1).dot(b.tail(b.size() - 1));
}

CausalType causal_type(const MinkVector& v, double tol) {
  const double q = mink_inner(v, v);
  if (std::abs(q) < tol) return CausalType::Null;
  return q < 0 ? CausalType::Timelike : CausalType::Spacelike;
}

Eigen::MatrixXd minkowski_metric(int n) {
  require_dim(n);
  Eigen::MatrixXd eta = Eigen::MatrixXd::Identity(n + 1, n + 1);
  eta(0, 0) = -1.0;
  return eta;
}

bool verify_lorentz(const Eigen::MatrixXd& a, double tol) {
  if (a.rows() != a.cols() || a.rows() < 2) return false;
  const Eigen::MatrixXd eta = minkowski_metric(static_cast<int>(a.rows()) - 1);
  return (a.transpose() * eta * a - eta).cwiseAbs().maxCoeff() <= tol;
}

Eigen::MatrixXd reorthonormalize(const Eigen::MatrixXd& a) {
  const Eigen::MatrixXd eta = minkowski_metric(static_cast<int>(a.rows()) - 1);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  Eigen::MatrixXd x = a;
  // eta x^T eta x carries rounding ~ eps |x|^2 for boosts far from the
  // identity; iterating below that floor only adds noise to x.
  const double scale = a.cwiseAbs().maxCoeff();
  const double floor = std::max(1e-15, 16.0 * std::numeric_limits<double>::epsilon() * scale * scale);
  for (int it = 0; it < 8; ++it) {
    const Eigen::MatrixXd q = eta * x.transpose() * eta * x;
    if ((q - id).cwiseAbs().maxCoeff() < floor) break;
    x = 0.5 * x * (3.0 * id - q);
  }
  return x;
}

LorentzMap::LorentzMap(Eigen::MatrixXd m) : m_(std::move(m)), orthochronous_(m_(0, 0) > 0.0) {}

LorentzMap LorentzMap::from_matrix(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols() || m.rows() < 2) throw DimensionError("Lorentz map must be square");
  if (!verify_lorentz(m, tol)) throw DomainError("matrix is not in O(n,1)");
  return LorentzMap(m);
}

LorentzMap LorentzMap::unchecked(Eigen::MatrixXd m) {
  if (m.rows() != m.cols() || m.rows() < 2) throw DimensionError("Lorentz map must be square");
  return LorentzMap(std::move(m));
}

LorentzMap LorentzMap::identity(int n) {
  require_dim(n);
  return LorentzMap(Eigen::MatrixXd::Identity(n + 1, n + 1));
}

LorentzMap LorentzMap::inverse() const {
  const Eigen::MatrixXd eta = minkowski_metric(dim());
  return LorentzMap(eta * m_.transpose() * eta);
}

LorentzMap LorentzMap::operator*(const LorentzMap& o) const {
  if (o.m_.rows() != m_.rows()) throw DimensionError("composing Lorentz maps of different size");
  return LorentzMap(m_ * o.m_);
}

MinkVector LorentzMap::operator*(const MinkVector& v) const {
  if (v.size() != m_.rows()) throw DimensionError("Lorentz map applied to vector of wrong size");
  return MinkVector(m_ * v.components());
}

double LorentzMap::defect() const {
  const Eigen::MatrixXd eta = minkowski_metric(dim());
  return (m_.transpose() * eta * m_ - eta).cwiseAbs().maxCoeff();
}

LorentzMap make_boost(const Eigen::VectorXd& direction, double rapidity) {
  const int n = static_cast<int>(direction.size());
  require_dim(n);
  if (std::abs(direction.norm() - 1.0) > 1e-12) throw DomainError("boost direction must be a unit vector");
  const double ch = std::cosh(rapidity);
  const double sh = std::sinh(rapidity);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n + 1, n + 1);
  m(0, 0) = ch;
  m.block(0, 1, 1, n) = sh * direction.transpose();
  m.block(1, 0, n, 1) = sh * direction;
  m.block(1, 1, n, n) += (ch - 1.0) * direction * direction.transpose();
  return LorentzMap::unchecked(std::move(m));
}

LorentzMap make_rotation(int n, int i, int j, double angle) {
  require_dim(n);
  if (i < 1 || i > n || j < 1 || j > n || i == j) throw DimensionError("rotation plane indices out of range");
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n + 1, n + 1);
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  m(i, i) = c;
  m(i, j) = -s;
  m(j, i) = s;
  m(j, j) = c;
  return LorentzMap::unchecked(std::move(m));
}

MinkIsometry::MinkIsometry(LorentzMap linear, MinkVector translation)
    : linear_(std::move(linear)), translation_(std::move(translation)) {
  if (translation_.size() != linear_.matrix().rows()) {
    throw DimensionError("isometry translation does not match linear part");
  }
}

MinkIsometry MinkIsometry::identity(int n) { return {LorentzMap::identity(n), MinkVector::zero(n)}; }

MinkIsometry MinkIsometry::translation(const MinkVector& a) { return {LorentzMap::identity(a.dim()), a}; }

MinkIsometry MinkIsometry::compose(const MinkIsometry& other) const {
  return {linear_ * other.linear_, linear_ * other.translation_ + translation_};
}

MinkIsometry MinkIsometry::inverse() const {
  LorentzMap inv = linear_.inverse();
  MinkVector t = -(inv * translation_);
  return {std::move(inv), std::move(t)};
}

MinkVector MinkIsometry::apply(const MinkVector& x) const { return linear_ * x + translation_; }

}  // namespace flatcmc
