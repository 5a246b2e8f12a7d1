#include "k3gaps/surface.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "k3gaps/errors.hpp"
#include "k3gaps/random.hpp"

namespace k3gaps::surface {

namespace {

std::array<Complex, 3> powers(Complex t) { return {Complex(1.0), t, t * t}; }

// The two coordinates complementary to `axis`, in increasing order.
std::pair<int, int> others(Axis axis) {
  switch (axis) {
    case Axis::x: return {1, 2};
    case Axis::y: return {0, 2};
    case Axis::z: return {0, 1};
  }
  return {1, 2};
}

char axis_name(Axis a) { return "xyz"[static_cast<int>(a)]; }

}  // namespace

SurfaceCoefficients::SurfaceCoefficients(std::array<Complex, 27> c, std::string label)
    : c_(c), label_(std::move(label)) {
  if (std::all_of(c_.begin(), c_.end(), [](const Complex& v) { return v == Complex(0.0); })) {
    throw DomainError("surface coefficients are all zero");
  }
}

SurfaceCoefficients SurfaceCoefficients::wehler_example() {
  std::array<Complex, 27> c{};
  // (1 + x^2)(1 + y^2)(1 + z^2) expands to every c_ijk with i, j, k in {0, 2}.
  for (int i : {0, 2})
    for (int j : {0, 2})
      for (int k : {0, 2}) c[static_cast<std::size_t>(9 * i + 3 * j + k)] += 1.0;
  c[9 + 3 + 1] += 1.0;  // xyz
  c[0] -= 1.0;
  return SurfaceCoefficients(c, "wehler-example");
}

SurfaceCoefficients SurfaceCoefficients::sphere() {
  std::array<Complex, 27> c{};
  c[18] = 1.0;  // x^2
  c[6] = 1.0;   // y^2
  c[2] = 1.0;   // z^2
  c[0] = -1.0;
  return SurfaceCoefficients(c, "sphere");
}

SurfaceCoefficients SurfaceCoefficients::preset(const std::string& name) {
  if (name == "wehler-example") return wehler_example();
  if (name == "sphere") return sphere();
  throw ConfigError("unknown surface preset \"" + name + "\" (expected wehler-example or sphere)");
}

bool SurfaceCoefficients::is_real() const {
  return std::all_of(c_.begin(), c_.end(), [](const Complex& v) { return v.imag() == 0.0; });
}

nlohmann::json SurfaceCoefficients::to_json() const {
  nlohmann::json j;
  j["label"] = label_;
  j["coefficients"] = nlohmann::json::array();
  for (const Complex& v : c_) j["coefficients"].push_back({v.real(), v.imag()});
  return j;
}

SurfaceCoefficients perturb(const PerturbationSpec& spec) {
  if (!(spec.magnitude >= 0.0)) throw DomainError("perturbation magnitude must be nonnegative");
  std::array<Complex, 27> c = spec.base.data();
  Rng rng(spec.seed);
  for (Complex& v : c) {
    if (spec.mode == PerturbationMode::real) {
      v += spec.magnitude * rng.uniform(-1.0, 1.0);
    } else {
      const double re = rng.uniform(-1.0, 1.0) * std::numbers::sqrt2 / 2.0;
      const double im = rng.uniform(-1.0, 1.0) * std::numbers::sqrt2 / 2.0;
      v += spec.magnitude * Complex(re, im);
    }
  }
  std::ostringstream label;
  label << spec.base.label() << "+" << (spec.mode == PerturbationMode::real ? "real" : "complex") << "("
        << spec.magnitude << ",seed=" << spec.seed << ")";
  return SurfaceCoefficients(c, spec.magnitude == 0.0 ? spec.base.label() : label.str());
}

Complex evaluate(const SurfaceCoefficients& c, const Point& p) {
  const auto px = powers(p[0]), py = powers(p[1]), pz = powers(p[2]);
  Complex sum = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) sum += c(i, j, k) * px[i] * py[j] * pz[k];
  return sum;
}

Point gradient(const SurfaceCoefficients& c, const Point& p) {
  const auto px = powers(p[0]), py = powers(p[1]), pz = powers(p[2]);
  const std::array<Complex, 3> dx{0.0, 1.0, 2.0 * p[0]}, dy{0.0, 1.0, 2.0 * p[1]}, dz{0.0, 1.0, 2.0 * p[2]};
  Point g = Point::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const Complex cc = c(i, j, k);
        g[0] += cc * dx[i] * py[j] * pz[k];
        g[1] += cc * px[i] * dy[j] * pz[k];
        g[2] += cc * px[i] * py[j] * dz[k];
      }
  return g;
}

bool is_singular_at(const SurfaceCoefficients& c, const Point& p, double tol) {
  const double r = std::abs(evaluate(c, p));
  if (r > tol) {
    std::ostringstream msg;
    msg << "point is not on the surface: |F(p)| = " << r << " > " << tol;
    throw DomainError(msg.str());
  }
  return gradient(c, p).norm() <= tol;
}

SurfacePoint make_point(const SurfaceCoefficients& c, const Point& p, double tol) {
  const double r = std::abs(evaluate(c, p));
  if (r > tol) {
    std::ostringstream msg;
    msg << "point is not on the surface: |F(p)| = " << r << " > " << tol;
    throw DomainError(msg.str());
  }
  return {p, r};
}

Involutions::Involutions(SurfaceCoefficients c) : c_(std::move(c)) {
  for (int a = 0; a < 3; ++a) {
    for (int power = 0; power < 3; ++power)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          Complex v;
          switch (a) {
            case 0: v = c_(power, i, j); break;
            case 1: v = c_(i, power, j); break;
            default: v = c_(i, j, power); break;
          }
          table_[static_cast<std::size_t>(a)][static_cast<std::size_t>(power)][static_cast<std::size_t>(i)]
                [static_cast<std::size_t>(j)] = v;
        }
  }
}

FiberQuadratic Involutions::fiber(Axis axis, const Point& p) const {
  const auto [iu, iv] = others(axis);
  const Complex u = p[iu], v = p[iv];
  const auto& t = table_[static_cast<std::size_t>(axis)];
  std::array<Complex, 3> out{};
  for (std::size_t power = 0; power < 3; ++power) {
    const auto& m = t[power];
    // Horner in v, then in u.
    const Complex r0 = m[0][0] + v * (m[0][1] + v * m[0][2]);
    const Complex r1 = m[1][0] + v * (m[1][1] + v * m[1][2]);
    const Complex r2 = m[2][0] + v * (m[2][1] + v * m[2][2]);
    out[power] = r0 + u * (r1 + u * r2);
  }
  return {out[2], out[1], out[0]};
}

StepStatus Involutions::flip(Axis axis, Point& p, double pole_tolerance) const {
  // Only A and B are needed; written out to avoid the library complex division.
  const auto [iu, iv] = others(axis);
  const Complex u = p[iu], v = p[iv];
  const auto& t = table_[static_cast<std::size_t>(axis)];
  auto row = [&](std::size_t power) {
    const auto& m = t[power];
    const Complex r0 = m[0][0] + v * (m[0][1] + v * m[0][2]);
    const Complex r1 = m[1][0] + v * (m[1][1] + v * m[1][2]);
    const Complex r2 = m[2][0] + v * (m[2][1] + v * m[2][2]);
    return r0 + u * (r1 + u * r2);
  };
  const Complex a = row(2), b = row(1);
  const double a2 = std::norm(a);
  if (!(a2 >= pole_tolerance * pole_tolerance)) return StepStatus::pole;
  const Complex ratio = b * std::conj(a) / a2;
  const int k = static_cast<int>(axis);
  p[k] = -ratio - p[k];
  return StepStatus::ok;
}

namespace {

void reproject_z(const SurfaceCoefficients& c, Point& p) {
  for (int it = 0; it < 8; ++it) {
    const Complex f = evaluate(c, p);
    const Complex fz = gradient(c, p)[2];
    if (std::abs(fz) < 1e-14) return;
    const Complex step = f / fz;
    p[2] -= step;
    if (std::abs(step) < 1e-15 * (1.0 + std::abs(p[2]))) return;
  }
}

}  // namespace

StepStatus Involutions::apply(const words::Word& w, Point& p, const MapOptions& opts,
                              std::size_t* failed_step) const {
  const double escape2 = opts.escape_radius * opts.escape_radius;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const StepStatus s = flip(axis_of(w[i]), p, opts.pole_tolerance);
    if (s == StepStatus::ok && p.squaredNorm() > escape2) {
      if (failed_step) *failed_step = i;
      return StepStatus::divergence;
    }
    if (s != StepStatus::ok) {
      if (failed_step) *failed_step = i;
      return s;
    }
    if (opts.reproject) reproject_z(c_, p);
  }
  return StepStatus::ok;
}

SurfacePoint vieta_involution(Axis axis, const SurfaceCoefficients& c, const SurfacePoint& p, const MapOptions& opts) {
  make_point(c, p.coords, opts.membership_tolerance);
  const Involutions inv(c);
  Point q = p.coords;
  if (inv.flip(axis, q, opts.pole_tolerance) != StepStatus::ok) {
    throw PoleError(std::string("sigma_") + axis_name(axis) + " is undefined here: leading fiber coefficient below " +
                        "the pole tolerance",
                    0);
  }
  return {q, std::abs(evaluate(c, q))};
}

Matrix3c flip_jacobian(Axis axis, const SurfaceCoefficients& c, const Point& p, const MapOptions& opts) {
  const Involutions inv(c);
  const FiberQuadratic q = inv.fiber(axis, p);
  if (std::abs(q.a) < opts.pole_tolerance) {
    throw PoleError(std::string("sigma_") + axis_name(axis) + " has a pole at the requested point", 0);
  }
  // t' = -B(u, v)/A(u, v) - t; d/du (-B/A) = -(B_u A - B A_u)/A^2.
  const auto [iu, iv] = others(axis);
  const int k = static_cast<int>(axis);
  auto partial = [&](int var, int power) {
    // d/d(p[var]) of the fiber coefficient of t^power, by differentiating the monomials.
    const auto px = powers(p[0]), py = powers(p[1]), pz = powers(p[2]);
    const std::array<std::array<Complex, 3>, 3> pw{px, py, pz};
    Complex sum = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int l = 0; l < 3; ++l) {
          const std::array<int, 3> e{i, j, l};
          if (e[static_cast<std::size_t>(k)] != power) continue;
          Complex term = c(i, j, l);
          for (int d = 0; d < 3; ++d) {
            if (d == k) continue;
            const int ed = e[static_cast<std::size_t>(d)];
            if (d == var) {
              term *= ed == 0 ? Complex(0.0) : static_cast<double>(ed) * pw[static_cast<std::size_t>(d)][static_cast<std::size_t>(ed - 1)];
            } else {
              term *= pw[static_cast<std::size_t>(d)][static_cast<std::size_t>(ed)];
            }
          }
          sum += term;
        }
    return sum;
  };
  Matrix3c j = Matrix3c::Identity();
  j(k, k) = -1.0;
  for (int var : {iu, iv}) {
    const Complex a_d = partial(var, 2);
    const Complex b_d = partial(var, 1);
    j(k, var) = -(b_d * q.a - q.b * a_d) / (q.a * q.a);
  }
  return j;
}

Matrix3c derivative_at_fixed_point(Axis axis, const SurfaceCoefficients& c, const Point& p, double tol,
                                   const MapOptions& opts) {
  const Involutions inv(c);
  Point q = p;
  if (inv.flip(axis, q, opts.pole_tolerance) != StepStatus::ok) {
    throw PoleError(std::string("sigma_") + axis_name(axis) + " has a pole at the requested point", 0);
  }
  if ((q - p).norm() > tol) {
    std::ostringstream msg;
    msg << "point is not fixed by sigma_" << axis_name(axis) << ": displacement " << (q - p).norm();
    throw FixedPointError(msg.str());
  }
  return flip_jacobian(axis, c, p, opts);
}

WordImage apply_word(const words::Word& w, const SurfaceCoefficients& c, const SurfacePoint& p, const MapOptions& opts) {
  if (!w.is_involution_word()) throw DomainError("apply_word needs a word in x, y, z; got " + w.to_string());
  make_point(c, p.coords, opts.membership_tolerance);
  const Involutions inv(c);
  Point q = p.coords;
  DriftReport drift;
  const double escape2 = opts.escape_radius * opts.escape_radius;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (inv.flip(axis_of(w[i]), q, opts.pole_tolerance) != StepStatus::ok) {
      throw PoleError("pole at step " + std::to_string(i) + " of " + w.to_string(), i);
    }
    if (q.squaredNorm() > escape2) {
      throw DivergenceError("orbit left the escape radius at step " + std::to_string(i), i);
    }
    drift.max_residual = std::max(drift.max_residual, std::abs(evaluate(c, q)));
    ++drift.steps;
    if (opts.reproject) reproject_z(c, q);
  }
  return {{q, std::abs(evaluate(c, q))}, drift};
}

std::array<Complex, 2> quadratic_roots(Complex a, Complex b, Complex c) {
  const Complex sq = std::sqrt(b * b - 4.0 * a * c);
  // Pick the sign that avoids cancellation in b + sq.
  const Complex qq = std::abs(b + sq) >= std::abs(b - sq) ? -(b + sq) / 2.0 : -(b - sq) / 2.0;
  if (qq == Complex(0.0)) return {Complex(0.0), Complex(0.0)};
  return {qq / a, c / qq};
}

std::vector<SurfacePoint> sample_points(const SurfaceCoefficients& c, const Region& region, std::size_t count,
                                        SampleMode mode, const SampleOptions& opts) {
  if (mode == SampleMode::real && !c.is_real()) {
    throw DomainError("real sampling needs real coefficients");
  }
  const Involutions inv(c);
  std::vector<SurfacePoint> out;
  Rng rng(opts.seed);

  auto inside = [&](const Point& p) {
    if (const auto* box = std::get_if<BoxRegion>(&region)) {
      for (int d = 0; d < 3; ++d) {
        if (p[d].real() < box->lo[d] || p[d].real() > box->hi[d]) return false;
        const double half = 0.5 * (box->hi[d] - box->lo[d]);
        if (std::abs(p[d].imag()) > (mode == SampleMode::real ? 0.0 : half)) return false;
      }
      return true;
    }
    const auto& ball = std::get<BallRegion>(region);
    return (p - ball.center).norm() <= ball.radius;
  };

  auto draw_xy = [&]() -> std::pair<Complex, Complex> {
    if (const auto* box = std::get_if<BoxRegion>(&region)) {
      std::array<Complex, 2> v;
      for (int d = 0; d < 2; ++d) {
        const double re = rng.uniform(box->lo[d], box->hi[d]);
        const double half = 0.5 * (box->hi[d] - box->lo[d]);
        const double im = mode == SampleMode::real ? 0.0 : rng.uniform(-half, half);
        v[static_cast<std::size_t>(d)] = Complex(re, im);
      }
      return {v[0], v[1]};
    }
    const auto& ball = std::get<BallRegion>(region);
    if (mode == SampleMode::real) {
      const double r = ball.radius * std::sqrt(rng.uniform());
      const double th = 2.0 * std::numbers::pi * rng.uniform();
      return {Complex(ball.center[0].real() + r * std::cos(th)), Complex(ball.center[1].real() + r * std::sin(th))};
    }
    std::array<double, 4> g{};
    double n2 = 0.0;
    for (double& v : g) {
      v = rng.normal();
      n2 += v * v;
    }
    const double r = ball.radius * std::pow(rng.uniform(), 0.25) / std::sqrt(n2);
    return {ball.center[0] + r * Complex(g[0], g[1]), ball.center[1] + r * Complex(g[2], g[3])};
  };

  for (std::size_t attempt = 0; attempt < opts.max_attempts && out.size() < count; ++attempt) {
    const auto [x, y] = draw_xy();
    Point p(x, y, 0.0);
    const FiberQuadratic q = inv.fiber(Axis::z, p);
    std::vector<Complex> roots;
    if (mode == SampleMode::real) {
      const double a = q.a.real(), b = q.b.real(), cc = q.c.real();
      if (std::abs(a) < 1e-14) {
        if (std::abs(b) > 1e-14) roots.emplace_back(-cc / b);
      } else {
        const double disc = b * b - 4.0 * a * cc;
        if (disc >= 0.0) {
          const double s = std::sqrt(disc);
          const double qq = b >= 0.0 ? -0.5 * (b + s) : -0.5 * (b - s);
          if (qq != 0.0) {
            roots.emplace_back(qq / a);
            roots.emplace_back(cc / qq);
          } else {
            roots.emplace_back(0.0);
          }
        }
      }
    } else if (std::abs(q.a) < 1e-14) {
      if (std::abs(q.b) > 1e-14) roots.push_back(-q.c / q.b);
    } else {
      const auto r = quadratic_roots(q.a, q.b, q.c);
      roots.assign(r.begin(), r.end());
    }
    for (const Complex& z : roots) {
      p[2] = z;
      if (!inside(p)) continue;
      const double res = std::abs(evaluate(c, p));
      if (res > opts.membership_tolerance) continue;
      out.push_back({p, res});
      if (out.size() >= count) break;
    }
  }
  if (out.empty()) {
    throw EmptySampleError("no surface points found in the region after " + std::to_string(opts.max_attempts) +
                           " attempts");
  }
  return out;
}

}  // namespace k3gaps::surface
