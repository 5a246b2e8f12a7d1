#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "k3gaps/words.hpp"

namespace k3gaps::surface {

using Complex = std::complex<double>;
using Point = Eigen::Vector3cd;
using Matrix3c = Eigen::Matrix3cd;

enum class Axis : std::uint8_t { x = 0, y = 1, z = 2 };

inline Axis axis_of(const words::Letter& l) { return static_cast<Axis>(l.generator); }

/// The 27 coefficients c_ijk of sum c_ijk x^i y^j z^k = 0.
class SurfaceCoefficients {
 public:
  SurfaceCoefficients() = default;
  SurfaceCoefficients(std::array<Complex, 27> c, std::string label);

  // (1 + x^2)(1 + y^2)(1 + z^2) + xyz - 1: singular at the origin.
  static SurfaceCoefficients wehler_example();
  // x^2 + y^2 + z^2 - 1.
  static SurfaceCoefficients sphere();
  // "wehler-example" or "sphere"; throws ConfigError otherwise.
  static SurfaceCoefficients preset(const std::string& name);

  const Complex& operator()(int i, int j, int k) const { return c_[static_cast<std::size_t>(9 * i + 3 * j + k)]; }
  Complex& operator()(int i, int j, int k) { return c_[static_cast<std::size_t>(9 * i + 3 * j + k)]; }
  const std::array<Complex, 27>& data() const { return c_; }
  const std::string& label() const { return label_; }
  void set_label(std::string label) { label_ = std::move(label); }
  bool is_real() const;

  nlohmann::json to_json() const;
  friend bool operator==(const SurfaceCoefficients&, const SurfaceCoefficients&) = default;

 private:
  std::array<Complex, 27> c_{};
  std::string label_;
};

enum class PerturbationMode { real, complex };

struct PerturbationSpec {
  SurfaceCoefficients base;
  double magnitude = 0.0;
  PerturbationMode mode = PerturbationMode::complex;
  std::uint64_t seed = 1;
};

/// base + magnitude * xi, each xi_ijk drawn with |xi_ijk| <= 1 (uniform on
/// [-1, 1], or on the square inscribed in the unit disk in complex mode).
SurfaceCoefficients perturb(const PerturbationSpec& spec);

Complex evaluate(const SurfaceCoefficients& c, const Point& p);
Point gradient(const SurfaceCoefficients& c, const Point& p);

/// True iff the gradient vanishes (within tol) at p. Throws DomainError when
/// p is not on the surface within tol.
bool is_singular_at(const SurfaceCoefficients& c, const Point& p, double tol = 1e-9);

struct SurfacePoint {
  Point coords;
  double residual = 0.0;
};

// Validates membership; throws DomainError if |F(p)| > tol.
SurfacePoint make_point(const SurfaceCoefficients& c, const Point& p, double tol = 1e-9);

// F restricted to the fiber of `axis`: A t^2 + B t + C.
struct FiberQuadratic {
  Complex a, b, c;
};

struct MapOptions {
  double pole_tolerance = 1e-8;
  double escape_radius = 1e3;
  double membership_tolerance = 1e-9;
  bool reproject = false;  // Newton re-projection in z after each letter
};

enum class StepStatus : std::uint8_t { ok, pole, divergence };

/// Precomputed fiber tables for the three Vieta flips of one surface.
/// Flips act on all of the affine chart C^3 (off the polar locus), not just on
/// the surface: t -> -B/A - t with A, B depending only on the frozen coordinates.
class Involutions {
 public:
  explicit Involutions(SurfaceCoefficients c);

  const SurfaceCoefficients& coefficients() const { return c_; }

  FiberQuadratic fiber(Axis axis, const Point& p) const;

  // In-place flip; returns pole when |A| < pole_tolerance (p is left unchanged).
  StepStatus flip(Axis axis, Point& p, double pole_tolerance) const;

  // Left-to-right composition over an involution word. On failure, `failed_step`
  // receives the index of the offending letter.
  StepStatus apply(const words::Word& w, Point& p, const MapOptions& opts, std::size_t* failed_step = nullptr) const;

 private:
  SurfaceCoefficients c_;
  // table_[axis][power][u][v]: coefficient of t^power * u^i * v^j, where (u, v)
  // are the two remaining coordinates in increasing axis order.
  std::array<std::array<std::array<std::array<Complex, 3>, 3>, 3>, 3> table_{};
};

/// Vieta flip along `axis`. Throws PoleError when the leading coefficient of the
/// fiber quadratic is below the pole tolerance.
SurfacePoint vieta_involution(Axis axis, const SurfaceCoefficients& c, const SurfacePoint& p,
                              const MapOptions& opts = {});

/// Jacobian of the flip at one of its fixed points. Throws FixedPointError if p
/// is not fixed within tol, PoleError at a pole.
Matrix3c derivative_at_fixed_point(Axis axis, const SurfaceCoefficients& c, const Point& p, double tol = 1e-9,
                                   const MapOptions& opts = {});

// Jacobian of the flip at an arbitrary point.
Matrix3c flip_jacobian(Axis axis, const SurfaceCoefficients& c, const Point& p, const MapOptions& opts = {});

struct DriftReport {
  double max_residual = 0.0;  // max |F| over steps, before any re-projection
  std::size_t steps = 0;
};

struct WordImage {
  SurfacePoint point;
  DriftReport drift;
};

/// Applies an involution word letter by letter (first letter first). Throws
/// DomainError for non-involution letters, PoleError / DivergenceError with the
/// step index on failure.
WordImage apply_word(const words::Word& w, const SurfaceCoefficients& c, const SurfacePoint& p,
                     const MapOptions& opts = {});

struct BoxRegion {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

struct BallRegion {
  Point center = Point::Zero();
  double radius = 1.0;
};

using Region = std::variant<BoxRegion, BallRegion>;

enum class SampleMode { complex, real };

struct SampleOptions {
  std::size_t max_attempts = 200000;
  std::uint64_t seed = 1;
  double membership_tolerance = 1e-9;
};

/// Draws (x, y) in the region's projection, solves the fiber quadratic in z and
/// keeps roots inside the region. Throws EmptySampleError if nothing is found.
std::vector<SurfacePoint> sample_points(const SurfaceCoefficients& c, const Region& region, std::size_t count,
                                        SampleMode mode, const SampleOptions& opts = {});

// Both roots of a t^2 + b t + c (a != 0), computed stably.
std::array<Complex, 2> quadratic_roots(Complex a, Complex b, Complex c);

}  // namespace k3gaps::surface
