#include "flatcmc/holonomy.hpp"

#include "flatcmc/config.hpp"
#include "flatcmc/csv.hpp"
#include "flatcmc/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <tuple>
#include <utility>

namespace flatcmc {

int GroupPresentation::dim() const {
  if (generators.empty()) throw DomainError("presentation has no generators");
  return generators.front().dim();
}

void validate_word(const GroupPresentation& p, const Word& w) {
  const int m = p.generator_count();
  for (int letter : w) {
    if (letter == 0 || std::abs(letter) > m) {
      throw DimensionError("word letter " + std::to_string(letter) + " out of range for " +
                           std::to_string(m) + " generators");
    }
  }
}

Word reduce_word(const Word& w) {
  Word out;
  out.reserve(w.size());
  for (int letter : w) {
    if (!out.empty() && out.back() == -letter) {
      out.pop_back();
    } else {
      out.push_back(letter);
    }
  }
  return out;
}

Word inverse_word(const Word& w) {
  Word out(w.rbegin(), w.rend());
  for (int& letter : out) letter = -letter;
  return out;
}

Word concat(const Word& a, const Word& b) {
  Word out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

namespace {

LorentzMap letter_map(const GroupPresentation& p, int letter) {
  const LorentzMap& g = p.generators[static_cast<std::size_t>(std::abs(letter) - 1)];
  return letter > 0 ? g : g.inverse();
}

}  // namespace

LorentzMap evaluate_word(const GroupPresentation& p, const Word& w) {
  validate_word(p, w);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(p.dim() + 1, p.dim() + 1);
  int since_projection = 0;
  for (int letter : w) {
    acc = acc * letter_map(p, letter).matrix();
    if (++since_projection == kReorthonormalizeEvery) {
      acc = reorthonormalize(acc);
      since_projection = 0;
    }
  }
  return LorentzMap::unchecked(std::move(acc));
}

double relator_residual(const GroupPresentation& p) {
  double worst = 0.0;
  const int size = p.dim() + 1;
  for (const Word& r : p.relators) {
    const Eigen::MatrixXd m = evaluate_word(p, r).matrix();
    worst = std::max(worst, (m - Eigen::MatrixXd::Identity(size, size)).cwiseAbs().maxCoeff());
  }
  return worst;
}

MinkIsometry holonomy_isometry(const HolonomyRep& rep, const Word& w) {
  const GroupPresentation& p = rep.presentation;
  validate_word(p, w);
  if (rep.cocycle.generator_translations.size() != p.generators.size()) {
    throw DimensionError("cocycle has the wrong number of generator translations");
  }
  MinkIsometry acc = MinkIsometry::identity(p.dim());
  int since_projection = 0;
  for (int letter : w) {
    const auto idx = static_cast<std::size_t>(std::abs(letter) - 1);
    MinkIsometry g(p.generators[idx], rep.cocycle.generator_translations[idx]);
    acc = acc.compose(letter > 0 ? g : g.inverse());
    if (++since_projection == kReorthonormalizeEvery) {
      acc = MinkIsometry(LorentzMap::unchecked(reorthonormalize(acc.linear().matrix())), acc.translation());
      since_projection = 0;
    }
  }
  return acc;
}

MinkVector extend_cocycle(const HolonomyRep& rep, const Word& w) { return holonomy_isometry(rep, w).translation(); }

double cocycle_relator_residual(const HolonomyRep& rep) {
  double worst = 0.0;
  for (const Word& r : rep.presentation.relators) {
    worst = std::max(worst, extend_cocycle(rep, r).components().cwiseAbs().maxCoeff());
  }
  return worst;
}

Cocycle coboundary_cocycle(const GroupPresentation& p, const MinkVector& b) {
  if (b.dim() != p.dim()) throw DimensionError("coboundary vector has the wrong dimension");
  Cocycle c;
  c.generator_translations.reserve(p.generators.size());
  for (const LorentzMap& g : p.generators) c.generator_translations.push_back(b - g * b);
  return c;
}

Cocycle zero_cocycle(const GroupPresentation& p) {
  return Cocycle{std::vector<MinkVector>(p.generators.size(), MinkVector::zero(p.dim()))};
}

HolonomyRep scale_structure(const HolonomyRep& rep, double lambda) {
  if (!(lambda > 0.0)) throw DomainError("scale factor must be positive");
  HolonomyRep out = rep;
  for (MinkVector& t : out.cocycle.generator_translations) t = t * lambda;
  return out;
}

MinkVector apply_deformed_holonomy(const HolonomyRep& rep, const Word& w, const MinkVector& x) {
  if (x.dim() != rep.presentation.dim()) throw DimensionError("point has the wrong dimension");
  return holonomy_isometry(rep, w).apply(x);
}

Eigen::VectorXd stacked_translations(const Cocycle& c) {
  if (c.generator_translations.empty()) return {};
  const auto size = c.generator_translations.front().size();
  Eigen::VectorXd out(static_cast<Eigen::Index>(c.generator_translations.size()) * size);
  for (std::size_t i = 0; i < c.generator_translations.size(); ++i) {
    out.segment(static_cast<Eigen::Index>(i) * size, size) = c.generator_translations[i].components();
  }
  return out;
}

Cocycle cocycle_from_stacked(const GroupPresentation& p, const Eigen::VectorXd& stacked) {
  const int size = p.dim() + 1;
  if (stacked.size() != size * p.generator_count()) throw DimensionError("stacked cocycle has the wrong length");
  Cocycle c;
  for (int i = 0; i < p.generator_count(); ++i) c.generator_translations.emplace_back(stacked.segment(i * size, size));
  return c;
}

namespace {

// Orthonormal basis of the column space (tol relative to the largest singular value).
Eigen::MatrixXd orthonormal_range(const Eigen::MatrixXd& a, double rel_tol) {
  if (a.cols() == 0) return Eigen::MatrixXd(a.rows(), 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  const double cut = rel_tol * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > cut) ++rank;
  return svd.matrixU().leftCols(rank);
}

}  // namespace

Eigen::MatrixXd cocycle_space_basis(const GroupPresentation& p) {
  const int size = p.dim() + 1;
  const int unknowns = size * p.generator_count();
  const auto rows = static_cast<Eigen::Index>(p.relators.size()) * size;
  Eigen::MatrixXd constraint(rows, unknowns);
  for (int j = 0; j < unknowns; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(unknowns);
    e(j) = 1.0;
    const HolonomyRep rep{p, cocycle_from_stacked(p, e)};
    for (std::size_t r = 0; r < p.relators.size(); ++r) {
      constraint.block(static_cast<Eigen::Index>(r) * size, j, size, 1) =
          extend_cocycle(rep, p.relators[r]).components();
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(constraint, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double cut = 1e-9 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > cut) ++rank;
  return svd.matrixV().rightCols(unknowns - rank);
}

Eigen::MatrixXd coboundary_space_basis(const GroupPresentation& p) {
  const int size = p.dim() + 1;
  Eigen::MatrixXd b(size * p.generator_count(), size);
  for (int j = 0; j < size; ++j) b.col(j) = stacked_translations(coboundary_cocycle(p, MinkVector::basis(p.dim(), j)));
  return b;
}

Eigen::MatrixXd cohomology_complement_basis(const GroupPresentation& p) {
  const Eigen::MatrixXd z = cocycle_space_basis(p);
  const Eigen::MatrixXd qb = orthonormal_range(coboundary_space_basis(p), 1e-10);
  const Eigen::MatrixXd residual = z - qb * (qb.transpose() * z);
  return orthonormal_range(residual, 1e-8);
}

double octagon_vertex_angle(double inradius) {
  const double sh = std::sinh(inradius);
  const double ch = std::cosh(inradius);
  // Interior angle between outward normals of adjacent sides.
  const double c = sh * sh - ch * ch * std::cos(std::numbers::pi / 4.0);
  return std::acos(std::clamp(c, -1.0, 1.0));
}

BolzaOctagon bolza_octagon() {
  const double target = std::numbers::pi / 4.0;
  // The vertex angle decreases from 3pi/4 (Euclidean limit) to 0.
  double lo = 0.0;
  double hi = 5.0;
  for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (octagon_vertex_angle(mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  BolzaOctagon oct;
  oct.inradius = 0.5 * (lo + hi);
  oct.translation_length = 2.0 * oct.inradius;
  const double sh = std::sinh(oct.inradius);
  const double ch = std::cosh(oct.inradius);
  for (int k = 0; k < 8; ++k) {
    const double a = k * std::numbers::pi / 4.0;
    oct.side_normals[static_cast<std::size_t>(k)] = MinkVector(Eigen::Vector3d(sh, ch * std::cos(a), ch * std::sin(a)));
  }
  const Eigen::Matrix3d eta = minkowski_metric(2);
  for (int k = 0; k < 8; ++k) {
    const Eigen::Vector3d n0 = oct.side_normals[static_cast<std::size_t>(k)].components();
    const Eigen::Vector3d n1 = oct.side_normals[static_cast<std::size_t>((k + 1) % 8)].components();
    Eigen::Vector3d v = eta * n0.cross(n1);
    const double q = -v(0) * v(0) + v.tail<2>().squaredNorm();
    v /= std::sqrt(-q);
    if (v(0) < 0) v = -v;
    oct.vertices[static_cast<std::size_t>(k)] = MinkVector(Eigen::VectorXd(v));
  }
  return oct;
}

GroupPresentation bolza_generators() {
  const BolzaOctagon oct = bolza_octagon();
  GroupPresentation p;
  const Eigen::Vector2d e1(1.0, 0.0);
  const LorentzMap t = make_boost(e1, oct.translation_length);
  for (int k = 0; k < 8; ++k) {
    const double a = k * std::numbers::pi / 4.0;
    const LorentzMap r = make_rotation(2, 1, 2, a);
    p.generators.push_back(LorentzMap::unchecked(reorthonormalize((r * t * r.inverse()).matrix())));
  }
  p.relators.push_back({1, 6, 3, 8, 5, 2, 7, 4});
  for (int k = 1; k <= 4; ++k) p.relators.push_back({k, k + 4});
  return p;
}

std::array<double, 8> octagon_side_values(const BolzaOctagon& oct, const MinkVector& p) {
  std::array<double, 8> out{};
  for (std::size_t k = 0; k < 8; ++k) out[k] = mink_inner(oct.side_normals[k], p);
  return out;
}

bool in_fundamental_domain(const BolzaOctagon& oct, const MinkVector& p) {
  const auto values = octagon_side_values(oct, p);
  for (std::size_t k = 0; k < 8; ++k) {
    if (k < 4 ? values[k] > 0.0 : values[k] >= 0.0) return false;
  }
  return true;
}

namespace {

MinkVector normalize_to_hyperboloid(const MinkVector& q) {
  const double norm = std::sqrt(-mink_inner(q, q));
  return q * (q.time() > 0 ? 1.0 / norm : -1.0 / norm);
}

double point_distance(const MinkVector& a, const MinkVector& b) {
  return std::acosh(std::max(1.0, -mink_inner(a, b)));
}

}  // namespace

double distance_to_octagon(const BolzaOctagon& oct, const MinkVector& p) {
  const auto values = octagon_side_values(oct, p);
  if (std::all_of(values.begin(), values.end(), [](double v) { return v <= 0.0; })) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < 8; ++k) {
    const MinkVector& n = oct.side_normals[k];
    const MinkVector foot = normalize_to_hyperboloid(p - n * values[k]);
    const bool on_segment = mink_inner(oct.side_normals[(k + 7) % 8], foot) <= 0.0 &&
                            mink_inner(oct.side_normals[(k + 1) % 8], foot) <= 0.0;
    if (on_segment) {
      best = std::min(best, std::asinh(std::abs(values[k])));
    } else {
      best = std::min({best, point_distance(p, oct.vertices[(k + 7) % 8]), point_distance(p, oct.vertices[k])});
    }
  }
  return best;
}

double octagon_area(const BolzaOctagon& oct) {
  using Rule = boost::math::quadrature::gauss<double, 40>;
  // Radial distance to the boundary along the ray at polar angle theta.
  auto boundary_cosh = [&](double theta) {
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    double tanh_min = 1.0;
    for (const MinkVector& n : oct.side_normals) {
      const double along = n[1] * c + n[2] * s;
      if (along > n[0]) tanh_min = std::min(tanh_min, n[0] / along);
    }
    return 1.0 / std::sqrt(1.0 - tanh_min * tanh_min);
  };
  double area = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    // Between consecutive vertices a single side is active, so the integrand is smooth.
    const MinkVector& v0 = oct.vertices[(k + 7) % 8];
    const MinkVector& v1 = oct.vertices[k];
    double a0 = std::atan2(v0[2], v0[1]);
    double a1 = std::atan2(v1[2], v1[1]);
    if (a1 < a0) a1 += 2.0 * std::numbers::pi;
    area += Rule::integrate([&](double th) { return boundary_cosh(th) - 1.0; }, a0, a1);
  }
  return area;
}

Eigen::VectorXd to_poincare_disk(const MinkVector& p) { return p.spatial() / (1.0 + p.time()); }

MinkVector from_poincare_disk(const Eigen::VectorXd& z) {
  const double r2 = z.squaredNorm();
  if (r2 >= 1.0) throw DomainError("point outside the Poincare disk");
  Eigen::VectorXd c(z.size() + 1);
  c(0) = (1.0 + r2) / (1.0 - r2);
  c.tail(z.size()) = 2.0 * z / (1.0 - r2);
  return MinkVector(std::move(c));
}

std::vector<GroupElement> enumerate_elements(const GroupPresentation& p, int max_length) {
  const int m = p.generator_count();
  const int size = p.dim() + 1;
  std::vector<GroupElement> out;
  std::map<std::vector<long long>, std::vector<std::size_t>> buckets;
  auto key_of = [&](const Eigen::MatrixXd& a) {
    std::vector<long long> key;
    for (int i = 0; i < size; ++i) key.push_back(std::llround(a(0, i) * 1e4));
    return key;
  };
  auto try_insert = [&](const Word& w, const LorentzMap& g) {
    const auto key = key_of(g.matrix());
    auto& bucket = buckets[key];
    for (std::size_t idx : bucket) {
      const Eigen::MatrixXd& other = out[idx].linear.matrix();
      const double scale = std::max(1.0, other.cwiseAbs().maxCoeff());
      if ((other - g.matrix()).cwiseAbs().maxCoeff() < 1e-8 * scale) return false;
    }
    bucket.push_back(out.size());
    out.push_back({w, g});
    return true;
  };
  try_insert({}, LorentzMap::identity(p.dim()));
  std::vector<std::size_t> frontier{0};
  for (int len = 1; len <= max_length; ++len) {
    std::vector<std::size_t> next;
    for (std::size_t idx : frontier) {
      for (int letter = -m; letter <= m; ++letter) {
        if (letter == 0) continue;
        const Word& base = out[idx].word;
        if (!base.empty() && base.back() == -letter) continue;
        Word w = base;
        w.push_back(letter);
        LorentzMap g = LorentzMap::unchecked(out[idx].linear.matrix() * letter_map(p, letter).matrix());
        if (try_insert(w, g)) next.push_back(out.size() - 1);
      }
    }
    frontier = std::move(next);
  }
  return out;
}

std::string to_key_value(const HolonomyRep& rep) {
  const GroupPresentation& p = rep.presentation;
  std::ostringstream os;
  os << "# holonomy representation: generators row-major, relators as signed 1-based words\n";
  os << "dim = " << p.dim() << "\n";
  os << "generators = " << p.generator_count() << "\n";
  for (int i = 0; i < p.generator_count(); ++i) {
    const Eigen::MatrixXd& m = p.generators[static_cast<std::size_t>(i)].matrix();
    os << "generator." << i + 1 << " =";
    for (int r = 0; r < m.rows(); ++r) {
      for (int c = 0; c < m.cols(); ++c) os << ' ' << format_double(m(r, c));
    }
    os << "\n";
  }
  os << "relators = " << p.relators.size() << "\n";
  for (std::size_t i = 0; i < p.relators.size(); ++i) {
    os << "relator." << i + 1 << " =";
    for (int letter : p.relators[i]) os << ' ' << letter;
    os << "\n";
  }
  for (std::size_t i = 0; i < rep.cocycle.generator_translations.size(); ++i) {
    os << "translation." << i + 1 << " =";
    const auto& c = rep.cocycle.generator_translations[i].components();
    for (Eigen::Index j = 0; j < c.size(); ++j) os << ' ' << format_double(c(j));
    os << "\n";
  }
  return os.str();
}

namespace {

std::vector<double> parse_numbers(const std::string& text, const std::string& key) {
  std::istringstream is(text);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw DomainError("malformed number '" + tok + "' for key " + key);
    }
  }
  return out;
}

}  // namespace

HolonomyRep holonomy_from_key_value(const std::string& text) {
  const KeyValueBlock kv = parse_key_value(text);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw DomainError("missing key " + key);
    return it->second;
  };
  auto get_int = [&](const std::string& key) {
    const auto v = parse_numbers(get(key), key);
    if (v.size() != 1 || v[0] != std::floor(v[0])) throw DomainError("key " + key + " must be an integer");
    return static_cast<int>(v[0]);
  };
  const int n = get_int("dim");
  const int m = get_int("generators");
  const int r = get_int("relators");
  if (n < 1 || m < 1 || r < 0) throw DomainError("invalid presentation sizes");
  HolonomyRep rep;
  for (int i = 1; i <= m; ++i) {
    const std::string key = "generator." + std::to_string(i);
    const auto v = parse_numbers(get(key), key);
    if (static_cast<int>(v.size()) != (n + 1) * (n + 1)) throw DomainError("wrong entry count for " + key);
    Eigen::MatrixXd a(n + 1, n + 1);
    for (int row = 0; row <= n; ++row) {
      for (int col = 0; col <= n; ++col) a(row, col) = v[static_cast<std::size_t>(row * (n + 1) + col)];
    }
    rep.presentation.generators.push_back(LorentzMap::from_matrix(a, 1e-9));
  }
  for (int i = 1; i <= r; ++i) {
    const std::string key = "relator." + std::to_string(i);
    Word w;
    for (double d : parse_numbers(get(key), key)) w.push_back(static_cast<int>(d));
    validate_word(rep.presentation, w);
    rep.presentation.relators.push_back(std::move(w));
  }
  for (int i = 1; i <= m; ++i) {
    const std::string key = "translation." + std::to_string(i);
    if (!kv.contains(key)) {
      rep.cocycle.generator_translations.push_back(MinkVector::zero(n));
      continue;
    }
    const auto v = parse_numbers(get(key), key);
    if (static_cast<int>(v.size()) != n + 1) throw DomainError("wrong entry count for " + key);
    rep.cocycle.generator_translations.emplace_back(Eigen::Map<const Eigen::VectorXd>(v.data(), n + 1));
  }
  return rep;
}

}  // namespace flatcmc
