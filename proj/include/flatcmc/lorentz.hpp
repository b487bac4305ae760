#pragma once

// Linear algebra of Minkowski space R^{n+1}_1 with signature (-,+,...,+).
// Index 0 is the time coordinate.

#include <Eigen/Dense>

#include <cstddef>

namespace flatcmc {

/// Causal character of a Minkowski vector.
enum class CausalType { Timelike, Null, Spacelike };

/// |<x,x>| below this is classified null.
inline constexpr double kNullTolerance = 1e-10;
/// Default tolerance for group-membership checks.
inline constexpr double kLorentzTolerance = 1e-12;
/// Word evaluation re-projects onto the Lorentz group after this many products.
inline constexpr int kReorthonormalizeEvery = 16;

class MinkVector {
 public:
  MinkVector() = default;
  explicit MinkVector(Eigen::VectorXd components);

  /// Zero vector of R^{n+1}_1 for spatial dimension n.
  static MinkVector zero(int n);
  /// Unit basis vector e_i of R^{n+1}_1.
  static MinkVector basis(int n, int i);
  /// Point (sqrt(1+|x|^2), x) of the upper unit hyperboloid over spatial x.
  static MinkVector hyperboloid_point(const Eigen::VectorXd& spatial);

  /// Spatial dimension n.
  int dim() const { return static_cast<int>(c_.size()) - 1; }
  int size() const { return static_cast<int>(c_.size()); }

  double time() const { return c_(0); }
  Eigen::VectorXd spatial() const { return c_.tail(c_.size() - 1); }
  double operator[](int i) const { return c_(i); }
  const Eigen::VectorXd& components() const { return c_; }

  MinkVector operator+(const MinkVector& o) const;
  MinkVector operator-(const MinkVector& o) const;
  MinkVector operator-() const { return MinkVector(-c_); }
  MinkVector operator*(double s) const { return MinkVector(c_ * s); }
  friend MinkVector operator*(double s, const MinkVector& v) { return v * s; }

 private:
  Eigen::VectorXd c_;
};

/// <u,v> = -u0 v0 + sum_i ui vi. Throws DimensionError on size mismatch.
double mink_inner(const MinkVector& u, const MinkVector& v);

CausalType causal_type(const MinkVector& v, double tol = kNullTolerance);

/// diag(-1, 1, ..., 1) of size n+1.
Eigen::MatrixXd minkowski_metric(int n);

/// An element of O(n,1). The orthochronous flag is derived from entry (0,0).
class LorentzMap {
 public:
  LorentzMap() = default;

  /// Wraps a matrix after checking A^T eta A = eta to `tol`; throws DomainError.
  static LorentzMap from_matrix(const Eigen::MatrixXd& m, double tol = 1e-9);
  /// Wraps without validation; caller guarantees membership.
  static LorentzMap unchecked(Eigen::MatrixXd m);
  static LorentzMap identity(int n);

  int dim() const { return static_cast<int>(m_.rows()) - 1; }
  const Eigen::MatrixXd& matrix() const { return m_; }
  bool orthochronous() const { return orthochronous_; }

  /// Inverse via eta A^T eta.
  LorentzMap inverse() const;
  LorentzMap operator*(const LorentzMap& o) const;
  MinkVector operator*(const MinkVector& v) const;

  /// max |A^T eta A - eta|.
  double defect() const;

 private:
  explicit LorentzMap(Eigen::MatrixXd m);
  Eigen::MatrixXd m_;
  bool orthochronous_ = true;
};

/// True iff max|A^T eta A - eta| <= tol. A must be square.
bool verify_lorentz(const Eigen::MatrixXd& a, double tol = kLorentzTolerance);

/// Nearest Lorentz matrix by the Newton-Schulz polar iteration
/// A <- A (3I - eta A^T eta A) / 2; valid for A close to O(n,1). Stops once the
/// defect reaches its rounding floor 16 eps max|A|^2.
Eigen::MatrixXd reorthonormalize(const Eigen::MatrixXd& a);

/// Boost of the given rapidity in the (e0, direction) plane. `direction` is a
/// unit spatial vector of length n; throws DomainError if it is not unit.
LorentzMap make_boost(const Eigen::VectorXd& direction, double rapidity);

/// Rotation by `angle` in the spatial (e_i, e_j) plane, 1 <= i,j <= n.
LorentzMap make_rotation(int n, int i, int j, double angle);

/// Affine isometry x -> A x + a of Minkowski space.
class MinkIsometry {
 public:
  MinkIsometry() = default;
  MinkIsometry(LorentzMap linear, MinkVector translation);

  static MinkIsometry identity(int n);
  static MinkIsometry translation(const MinkVector& a);

  const LorentzMap& linear() const { return linear_; }
  const MinkVector& translation() const { return translation_; }
  int dim() const { return linear_.dim(); }

  /// (this o other)(x) = this(other(x)).
  MinkIsometry compose(const MinkIsometry& other) const;
  MinkIsometry inverse() const;
  MinkVector apply(const MinkVector& x) const;

 private:
  LorentzMap linear_;
  MinkVector translation_;
};

}  // namespace flatcmc
