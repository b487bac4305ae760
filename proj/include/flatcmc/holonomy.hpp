#pragma once

// Surface-group holonomy into SO(n,1)_0, translation cocycles and the
// parametrized development action x -> f(w) x + t_w.

#include "flatcmc/lorentz.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace flatcmc {

/// Signed 1-based generator indices; -i is the inverse of generator i.
using Word = std::vector<int>;

struct GroupPresentation {
  std::vector<LorentzMap> generators;
  std::vector<Word> relators;

  int dim() const;
  int generator_count() const { return static_cast<int>(generators.size()); }
};

struct Cocycle {
  std::vector<MinkVector> generator_translations;
};

struct HolonomyRep {
  GroupPresentation presentation;
  Cocycle cocycle;
};

/// Throws DimensionError if a letter is zero or out of range.
void validate_word(const GroupPresentation& p, const Word& w);

/// Removes adjacent (i, -i) pairs.
Word reduce_word(const Word& w);
Word inverse_word(const Word& w);
Word concat(const Word& a, const Word& b);

/// Product of generators in order (empty word -> identity), re-projected onto
/// the Lorentz group after every kReorthonormalizeEvery factors. There is no
/// projection after the last factor: for long words it can only add rounding.
LorentzMap evaluate_word(const GroupPresentation& p, const Word& w);

/// Max entrywise deviation from the identity over all relators.
double relator_residual(const GroupPresentation& p);

/// Full affine holonomy rho(w) = (f(w), t_w).
MinkIsometry holonomy_isometry(const HolonomyRep& rep, const Word& w);

/// t_w from t_{ab} = t_a + f(a) t_b; t_e = 0.
MinkVector extend_cocycle(const HolonomyRep& rep, const Word& w);

/// Max |t_r| over relators r; zero for a genuine cocycle.
double cocycle_relator_residual(const HolonomyRep& rep);

/// t_g = b - f(g) b for every generator g.
Cocycle coboundary_cocycle(const GroupPresentation& p, const MinkVector& b);

Cocycle zero_cocycle(const GroupPresentation& p);

/// Multiplies every generator translation by lambda > 0; linear parts untouched.
HolonomyRep scale_structure(const HolonomyRep& rep, double lambda);

/// f(w) x + t_w.
MinkVector apply_deformed_holonomy(const HolonomyRep& rep, const Word& w, const MinkVector& x);

/// Columns span the cocycle space Z^1: stacked generator translations t
/// (generator-major, (n+1) entries each) whose relator extensions vanish.
Eigen::MatrixXd cocycle_space_basis(const GroupPresentation& p);
/// Columns span the coboundaries B^1 in the same coordinates.
Eigen::MatrixXd coboundary_space_basis(const GroupPresentation& p);
/// Orthonormal columns spanning the complement of B^1 inside Z^1 (Euclidean
/// inner product on stacked translations); its dimension is dim H^1.
Eigen::MatrixXd cohomology_complement_basis(const GroupPresentation& p);

Cocycle cocycle_from_stacked(const GroupPresentation& p, const Eigen::VectorXd& stacked);
Eigen::VectorXd stacked_translations(const Cocycle& c);

/// Regular hyperbolic octagon with vertex angle pi/4 centred at (1,0,0) and
/// the side pairings generating the genus-2 Bolza group.
struct BolzaOctagon {
  /// Distance from the centre to each side midpoint.
  double inradius = 0.0;
  /// Translation length of each side pairing (twice the inradius).
  double translation_length = 0.0;
  /// Outward unit spacelike normals of the side geodesics, side k facing angle k*pi/4.
  std::array<MinkVector, 8> side_normals;
  /// Vertex k lies between sides k and k+1.
  std::array<MinkVector, 8> vertices;
};

/// Vertex angle of the regular octagon with the given inradius.
double octagon_vertex_angle(double inradius);

/// Builds the octagon by solving vertex angle = pi/4 for the inradius.
BolzaOctagon bolza_octagon();

/// Generators g_k = R(k pi/4) T(l) R(-k pi/4), k = 0..7 (stored as indices
/// 1..8). Relators: the octagon vertex cycle a0 a1^-1 a2 a3^-1 a0^-1 a1 a2^-1 a3
/// with a_k = g_k, a_k^-1 = g_{k+4}, plus g_k g_{k+4} for k = 0..3.
GroupPresentation bolza_generators();

/// <n_k, p> for each side; all <= 0 inside the octagon.
std::array<double, 8> octagon_side_values(const BolzaOctagon& oct, const MinkVector& p);

/// Membership of a hyperboloid point in the closed fundamental octagon. Points
/// on a side are kept only for sides 0..3 (paired sides 4..7 are excluded).
bool in_fundamental_domain(const BolzaOctagon& oct, const MinkVector& p);

/// Hyperbolic distance from a hyperboloid point to the octagon (0 inside).
double distance_to_octagon(const BolzaOctagon& oct, const MinkVector& p);

/// Octagon area by 40-point Gauss-Legendre quadrature of (cosh rho(theta) - 1)
/// over the polar angle on each side's wedge, rho(theta) the radial distance
/// to the boundary.
double octagon_area(const BolzaOctagon& oct);

/// Poincare disk image x / (1 + t) of a hyperboloid point.
Eigen::VectorXd to_poincare_disk(const MinkVector& p);
MinkVector from_poincare_disk(const Eigen::VectorXd& z);

/// Distinct group elements reachable by reduced words of length <= max_length,
/// identity first, in breadth-first order.
struct GroupElement {
  Word word;
  LorentzMap linear;
};
std::vector<GroupElement> enumerate_elements(const GroupPresentation& p, int max_length);

/// Plain-text key = value serialization of a presentation with its cocycle.
std::string to_key_value(const HolonomyRep& rep);
/// Inverse of to_key_value; throws DomainError on malformed input.
HolonomyRep holonomy_from_key_value(const std::string& text);

}  // namespace flatcmc
