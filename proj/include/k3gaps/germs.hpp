#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "k3gaps/surface.hpp"
#include "k3gaps/words.hpp"

namespace k3gaps::germs {

using surface::Complex;
using surface::Matrix3c;
using surface::Point;

// Norms: Euclidean on C^3 = R^6, spectral norm on matrices.
inline constexpr const char* kNormConvention = "euclidean";

struct BallSpec {
  Point center = Point::Zero();
  double radius = 1.0;
};

enum class EvalStatus : std::uint8_t { ok, pole, divergence, out_of_domain, no_convergence };

/// Affine chart phi(z) = (z - center) / rho.
struct Chart {
  Point center = Point::Zero();
  double rho = 1.0;
};

/// A holomorphic germ with an evaluable inverse. Values are cheap to copy and
/// immutable; composites share their factors.
class GermMap {
 public:
  class Impl {
   public:
    virtual ~Impl() = default;
    virtual EvalStatus apply(Point& z) const = 0;
    virtual EvalStatus apply_inverse(Point& z) const = 0;
    virtual std::string describe() const = 0;
  };

  GermMap() : GermMap(identity()) {}
  explicit GermMap(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

  static GermMap identity();
  static GermMap translation(const Point& c);
  static GermMap linear(const Matrix3c& a);
  // z -> constant + linear z + (z^T quadratic[k] z)_k, defined on `domain`.
  // Inverse by Newton iteration, constrained to the domain.
  static GermMap polynomial(const Point& constant, const Matrix3c& linear, const std::array<Matrix3c, 3>& quadratic,
                            BallSpec domain = {Point::Zero(), std::numeric_limits<double>::infinity()});
  // A word in x, y, z acting by Vieta flips (first letter first), optionally
  // conjugated into a chart: phi o word o phi^-1.
  static GermMap surface_word(const words::Word& w, std::shared_ptr<const surface::Involutions> maps,
                              surface::MapOptions opts = {}, std::optional<Chart> chart = std::nullopt);

  EvalStatus apply(Point& z) const { return impl_->apply(z); }
  EvalStatus apply_inverse(Point& z) const { return impl_->apply_inverse(z); }
  GermMap inverse() const;
  std::string describe() const { return impl_->describe(); }
  const Impl& impl() const { return *impl_; }

 private:
  std::shared_ptr<const Impl> impl_;
};

// f o g: g is applied first. Two surface-word germs on the same surface and
// chart fuse into a single reduced word.
GermMap compose(const GermMap& f, const GermMap& g);
// [f, g] = f o g o f^-1 o g^-1.
GermMap commutator(const GermMap& f, const GermMap& g);
// The map of a word over generator letters g1..gk, letters applied left to right.
GermMap word_germ(const words::Word& w, std::span<const GermMap> generators);

enum class SamplingMethod { sphere_grid, random, random_polish };

std::string to_string(SamplingMethod m);
SamplingMethod parse_sampling_method(const std::string& s);

struct SamplingOptions {
  std::size_t samples = 1000;
  SamplingMethod method = SamplingMethod::random;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0: default_threads()
};

struct DeviationReport {
  double sup = 0.0;
  Point argmax = Point::Zero();
  std::size_t samples = 0;
  std::size_t polish_evaluations = 0;
  SamplingMethod method = SamplingMethod::random;
  std::size_t failures = 0;
  BallSpec ball;
  std::uint64_t seed = 0;

  bool certifying() const { return failures == 0; }
  nlohmann::json to_json() const;
};

// Unit vectors on the sphere S^5 in C^3, deterministic in (method, seed, i).
Point sphere_direction(SamplingMethod method, std::uint64_t seed, std::size_t i);

/// Estimates sup ||g(z) - z|| over the closed ball by sampling its boundary
/// sphere (||g - id|| is plurisubharmonic, so the max sits on the boundary).
DeviationReport sup_deviation(const GermMap& g, const BallSpec& ball, const SamplingOptions& opts = {});

struct SeedConditionReport {
  double epsilon = 0.0;
  double bound = 0.0;  // epsilon / 32
  bool holds = false;
  double margin = 0.0;  // min over generators and inverses of bound - deviation
  std::vector<double> deviations;
  std::vector<double> inverse_deviations;
  std::size_t failures = 0;
  nlohmann::json to_json() const;
};

/// ||g^{+-1} - id|| <= epsilon/32 on B(epsilon) for every generator.
SeedConditionReport check_seed_condition(std::span<const GermMap> generators, double epsilon,
                                         const SamplingOptions& opts = {}, const Point& center = Point::Zero());

// Jacobian at z by central differences (valid for holomorphic maps).
Matrix3c numeric_jacobian(const GermMap& g, const Point& z, double h = 1e-6);
double spectral_norm(const Matrix3c& m);

struct EpsilonSearch {
  bool found = false;
  double epsilon = 0.0;
  double max_derivative_deviation = 0.0;  // max ||Dg(center) - id|| over generators
  bool derivative_ok = false;
  double margin_fraction = 0.1;
  SeedConditionReport seed;
  nlohmann::json to_json() const;
};

struct EpsilonRange {
  double lo = 1e-4;
  double hi = 1.0;
};

/// Largest epsilon in range for which the seed condition holds with the given
/// relative margin: a log-spaced scan, then bisection above the largest
/// passing grid point. Returns found = false if the derivative hypothesis
/// ||Dg(center) - id|| <= 1/64 fails or nothing passes.
EpsilonSearch find_epsilon(std::span<const GermMap> generators, EpsilonRange range, const SamplingOptions& opts = {},
                           double margin_fraction = 0.1, const Point& center = Point::Zero(), int grid_points = 40,
                           int bisection_steps = 30);

/// Max over sampled unit directions u of |Q(u)|, the quadratic Taylor
/// coefficient at `center`, from second differences at h and h/2 combined by
/// Richardson extrapolation. Throws IllConditionedError when the two probe
/// radii disagree by more than 50%.
double estimate_hessian_constant(const GermMap& g, double probe_radius = 1e-2, std::size_t samples = 200,
                                 const Point& center = Point::Zero(), std::uint64_t seed = 7);

struct ContractionParams {
  double r = 0.5;
  double delta = 0.01;
  double tau = 0.05;
  // Throws std::invalid_argument unless 0 < r, delta, tau < 1 and 4 delta + tau < r.
  void validate() const;
  double inner_radius() const { return r - 4.0 * delta - tau; }
};

struct ContractionReport {
  double deviation_f = 0.0;
  double deviation_g = 0.0;
  double deviation_commutator = 0.0;
  double bound = 0.0;  // (2 / tau) dev_f dev_g slack
  double slack = 1.1;
  bool holds = false;
  nlohmann::json to_json() const;
};

/// Checks the commutator estimate for near-identity germs: on B(r) both
/// deviations are at most delta, [f, g] is defined on B(r - 4 delta - tau), and
/// ||[f, g] - id|| <= (2/tau) ||f - id|| ||g - id|| (times slack).
/// Throws HypothesisViolation / DomainFailure.
ContractionReport commutator_contraction_check(const GermMap& f, const GermMap& g, const ContractionParams& params,
                                               const SamplingOptions& opts = {}, double slack = 1.1);

// Radii and constants of the induction behind the decay estimate, generic in
// the scalar type so that they can be checked in exact arithmetic.
template <typename T>
T level_radius(const T& eps, int n) {
  // eps - (eps/4) * sum_{j<n} 2^-j
  T sum = 0;
  T term = 1;
  for (int j = 0; j < n; ++j) {
    sum += term;
    term /= 2;
  }
  return eps - eps / 4 * sum;
}

template <typename T>
T level_delta(const T& eps, int n) {
  T d = eps / 32;
  for (int j = 0; j < n; ++j) d /= 2;
  return d;
}

template <typename T>
T level_tau(const T& eps, int n) {
  T t = eps / 8;
  for (int j = 0; j < n; ++j) t /= 2;
  return t;
}

struct DecayOptions {
  int max_level = 5;
  int full_levels = 2;        // levels evaluated in full
  std::size_t level_cap = 64;  // lexicographic prefix size above full_levels
  bool verify_seed = true;
  SamplingOptions sampling;
  words::SeriesLimits limits;
};

struct DecayRow {
  int level = 0;
  std::size_t evaluated = 0;
  bool complete = false;
  double max_deviation = 0.0;
  double bound = 0.0;  // eps / (2^n 32)
  double ratio = 0.0;
  std::size_t worst_index = 0;
};

struct DecayTable {
  double epsilon = 0.0;
  double radius = 0.0;  // epsilon / 2
  std::vector<DecayRow> rows;
  bool passed() const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// Measures every element of S^(n) (or a lexicographic prefix) on B(eps/2)
/// against eps / (2^n 32). Throws HypothesisViolation if the seed condition
/// fails (when verified) and DomainFailure on any pole or divergence.
DecayTable derived_decay_table(std::span<const GermMap> generators, double epsilon, const DecayOptions& opts = {},
                               const Point& center = Point::Zero());

/// chart o word o chart^-1 on B(1).
GermMap chart_conjugate(const words::Word& w, const surface::SurfaceCoefficients& c, const Chart& chart,
                        surface::MapOptions opts = {});

}  // namespace k3gaps::germs
