#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "k3gaps/words.hpp"

namespace k3gaps::lattice {

using BigInt = boost::multiprecision::cpp_int;
using IntMatrix = std::array<BigInt, 9>;  // row major
using Vector3 = Eigen::Vector3d;

// Intersection form on NS in the basis (L_x, L_y, L_z): L_i^2 = 0, L_i.L_j = 2.
struct GramForm {
  static const std::array<int, 9>& entries();
  static Eigen::Matrix3d matrix();
  static double pair(const Vector3& u, const Vector3& v);
  static BigInt pair(const std::array<BigInt, 3>& u, const std::array<BigInt, 3>& v);
};

// Entries above this many bits push a product into floating-point mode.
inline constexpr std::size_t kDefaultBitThreshold = 32768;

/// An isometry of the Gram form. Exact while entries stay below the bit
/// threshold; past it the matrix is kept as exp(log_scale) * normalized with
/// max |normalized| = 1 and `overflowed` is set.
class IsometryMatrix {
 public:
  IsometryMatrix();  // identity
  static IsometryMatrix from_integers(const std::array<long long, 9>& m, std::string provenance = "");
  static IsometryMatrix from_exact(IntMatrix m, std::string provenance = "");

  bool exact() const { return exact_; }
  bool overflowed() const { return overflowed_; }
  const IntMatrix& integers() const;  // throws std::logic_error in float mode
  const Eigen::Matrix3d& normalized() const { return normalized_; }
  double log_scale() const { return log_scale_; }
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }
  std::size_t max_bits() const;

  // this * rhs. Falls back to float mode if either side is inexact or the
  // product exceeds `bit_threshold`.
  IsometryMatrix times(const IsometryMatrix& rhs, std::size_t bit_threshold = kDefaultBitThreshold) const;
  // G^-1 M^T G, exact for isometries.
  IsometryMatrix inverse() const;
  BigInt trace() const;
  BigInt determinant() const;
  bool is_identity() const;
  bool gram_invariant() const;  // M^T G M == G, exact mode only
  IsometryMatrix to_float() const;

  // M v for an exact integer vector.
  std::array<BigInt, 3> apply(const std::array<BigInt, 3>& v) const;
  // Direction of M v (unit Euclidean length), valid in both modes.
  Vector3 apply_direction(const Vector3& v) const;

  nlohmann::json to_json() const;

 private:
  void refresh_float();
  bool exact_ = true;
  bool overflowed_ = false;
  IntMatrix m_;
  Eigen::Matrix3d normalized_ = Eigen::Matrix3d::Identity();
  double log_scale_ = 0.0;
  std::string provenance_;
};

IsometryMatrix involution_matrix(int axis);

// Pushforward of the map a word in x, y, z defines (first letter applied
// first): the reverse-order product of involution matrices.
IsometryMatrix word_matrix(const words::Word& w);
// Same for a word over g1..gk given the generator matrices.
IsometryMatrix word_matrix(const words::Word& w, std::span<const IsometryMatrix> generators,
                           std::size_t bit_threshold = kDefaultBitThreshold);
// Matrix of [u, v] = u v u^-1 v^-1 from the matrices of u and v.
IsometryMatrix commutator_matrix(const IsometryMatrix& u, const IsometryMatrix& v,
                                 std::size_t bit_threshold = kDefaultBitThreshold);
// Matrices of the Schreier generators, in order.
std::vector<IsometryMatrix> schreier_matrices();

/// Memoized matrices of the nodes of a derived series over generator matrices.
class TreeMatrices {
 public:
  TreeMatrices(const words::DerivedSeries& series, std::vector<IsometryMatrix> generators,
               std::size_t bit_threshold = kDefaultBitThreshold);
  const IsometryMatrix& matrix(words::NodeRef ref);

 private:
  const words::DerivedSeries& series_;
  std::vector<IsometryMatrix> generators_;
  std::size_t bit_threshold_;
  std::vector<std::vector<std::optional<IsometryMatrix>>> memo_;
};

enum class IsometryType { elliptic, parabolic, loxodromic };
std::string to_string(IsometryType t);

struct Classification {
  IsometryType type = IsometryType::elliptic;
  double spectral_radius = 1.0;  // +inf if it overflows a double
  double log_spectral_radius = 0.0;
  std::string trace_minus_det;   // s = trace - det, exact decimal (float mode: approximate)
  nlohmann::json to_json() const;
};

/// Exact classification from the characteristic polynomial
/// (t - det)(t^2 - s t + 1), s = trace - det: loxodromic iff |s| > 2, with
/// spectral radius (|s| + sqrt(s^2 - 4)) / 2; parabolic iff |s| = 2 and
/// M^k != id for k <= 12; elliptic otherwise.
Classification classify(const IsometryMatrix& m);

/// [omega_0] = (1, 1, 1) / sqrt(12), self-pairing 1.
Vector3 omega0();

// A null class scaled so that its pairing with [omega_0] is 1.
struct RayClass {
  Vector3 vector = Vector3::Zero();
  bool rational = false;
  std::optional<std::array<long long, 3>> integer_vector;
  double self_pairing = 0.0;
  nlohmann::json to_json() const;
};

// Projects a forward class v (pairing with omega_0 positive, v != omega_0) to
// the null ray through omega_0 + w / sqrt(-<w, w>), w = v - <v, omega_0> omega_0.
RayClass ray_from_class(const Vector3& v);
// Angle between the omega_0-orthogonal parts, measured in the positive
// definite form -G on omega_0^perp.
double ray_distance(const RayClass& a, const RayClass& b);
// Continued-fraction test: proportional to an integer vector with entries of
// absolute value at most `max_denominator`.
std::optional<std::array<long long, 3>> rational_direction(const Vector3& v, long long max_denominator = 1000000);
// Coordinates of the ray on the unit circle (orthonormal basis of omega_0^perp).
std::array<double, 2> circle_coordinates(const RayClass& r);

struct LambdaEntry {
  int n = 0;
  bool exact = true;
  std::string lambda12;   // 12 lambda_n as an exact integer (exact mode)
  double lambda = 0.0;    // +inf past double range
  double log_lambda = 0.0;
  Vector3 normalized = Vector3::Zero();  // lambda_n^-1 (s_n)_* [omega_0]
  double normalized_self_pairing = 0.0;
  double self_pairing_residual = 0.0;  // |<v, v> - lambda^-2| for the normalized class
  bool pushforward_self_pairing_exact = false;  // (M 1)^T G (M 1) == 12
};

struct LambdaSequence {
  std::vector<LambdaEntry> entries;
  std::vector<std::string> warnings;
  bool strictly_increasing() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

LambdaSequence lambda_sequence(std::span<const IsometryMatrix> path);

struct CanonicalPath {
  std::vector<words::Word> elements;          // s_1, ..., s_n over g1..gk
  std::vector<words::Word> partners;          // t_1, ..., t_{n-1}
  std::vector<IsometryMatrix> matrices;
  nlohmann::json to_json() const;
};

/// s_1 = the `first_index`-th element of S^(1) (0 gives [g1, g2]),
/// s_{n+1} = [s_n, t_n] with t_n the first element of S^(n) other than s_n
/// and s_n^-1.
CanonicalPath canonical_path(std::span<const IsometryMatrix> generators, int length, std::size_t first_index = 0,
                             std::size_t bit_threshold = kDefaultBitThreshold);

// Powers g, g^2, ..., g^n.
std::vector<IsometryMatrix> power_path(const IsometryMatrix& g, int n);

struct BoundaryLimit {
  RayClass ray;
  std::vector<double> differences;  // |v_{n+1} - v_n| (Euclidean)
  double final_self_pairing = 0.0;
  bool converged = false;
  nlohmann::json to_json() const;
};

/// Limit of the normalized classes. Requires the final lambda above
/// `divergence_threshold`; throws NonConvergenceError unless each tail
/// difference is at most half of every earlier one, or below 1e-13.
BoundaryLimit boundary_limit(const LambdaSequence& seq, double divergence_threshold = 1e3);

// Expanding eigenray of a loxodromic matrix.
RayClass expanding_ray(const IsometryMatrix& m);
RayClass contracting_ray(const IsometryMatrix& m);
// Null fixed ray of a parabolic matrix, as an integer vector.
std::optional<RayClass> parabolic_ray(const IsometryMatrix& m);

// Parabolic rays of reduced x, y, z words up to the given length.
std::vector<std::pair<words::Word, RayClass>> short_parabolic_rays(int max_length);

}  // namespace k3gaps::lattice
