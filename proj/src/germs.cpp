#include "k3gaps/germs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <Eigen/SVD>

#include "k3gaps/errors.hpp"
#include "k3gaps/parallel.hpp"
#include "k3gaps/random.hpp"

namespace k3gaps::germs {

namespace {

nlohmann::json point_json(const Point& p) {
  nlohmann::json j = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) j.push_back({p[i].real(), p[i].imag()});
  return j;
}

class IdentityGerm final : public GermMap::Impl {
 public:
  EvalStatus apply(Point&) const override { return EvalStatus::ok; }
  EvalStatus apply_inverse(Point&) const override { return EvalStatus::ok; }
  std::string describe() const override { return "identity"; }
};

class PolynomialGerm final : public GermMap::Impl {
 public:
  PolynomialGerm(Point c, Matrix3c l, std::array<Matrix3c, 3> q, BallSpec domain)
      : c_(std::move(c)), l_(std::move(l)), q_(std::move(q)), domain_(domain) {
    for (auto& m : q_) m = (0.5 * (m + m.transpose())).eval();
    quadratic_ = std::any_of(q_.begin(), q_.end(), [](const Matrix3c& m) { return !m.isZero(0.0); });
  }

  EvalStatus apply(Point& z) const override {
    if (!in_domain(z)) return EvalStatus::out_of_domain;
    z = value(z);
    return EvalStatus::ok;
  }

  EvalStatus apply_inverse(Point& z) const override {
    // Solve value(w) = z. Exact for affine maps, Newton otherwise.
    const Eigen::PartialPivLU<Matrix3c> lu(l_);
    Point w = lu.solve(z - c_);
    if (quadratic_) {
      bool converged = false;
      for (int it = 0; it < 60; ++it) {
        const Point r = value(w) - z;
        const Point step = jacobian(w).partialPivLu().solve(r);
        w -= step;
        if (!std::isfinite(w.norm())) return EvalStatus::no_convergence;
        if (step.norm() <= 1e-15 * (1.0 + w.norm())) {
          converged = true;
          break;
        }
      }
      if (!converged && (value(w) - z).norm() > 1e-12 * (1.0 + z.norm())) return EvalStatus::no_convergence;
    }
    if (!in_domain(w)) return EvalStatus::out_of_domain;
    z = w;
    return EvalStatus::ok;
  }

  std::string describe() const override { return quadratic_ ? "polynomial(deg 2)" : "affine"; }

 private:
  bool in_domain(const Point& z) const { return (z - domain_.center).norm() <= domain_.radius; }

  Point value(const Point& z) const {
    Point out = c_ + l_ * z;
    if (quadratic_) {
      for (int k = 0; k < 3; ++k) out[k] += (z.transpose() * q_[static_cast<std::size_t>(k)] * z).value();
    }
    return out;
  }

  Matrix3c jacobian(const Point& z) const {
    Matrix3c j = l_;
    for (int k = 0; k < 3; ++k) j.row(k) += 2.0 * (q_[static_cast<std::size_t>(k)] * z).transpose();
    return j;
  }

  Point c_;
  Matrix3c l_;
  std::array<Matrix3c, 3> q_;
  BallSpec domain_;
  bool quadratic_ = false;
};

EvalStatus from_step(surface::StepStatus s) {
  switch (s) {
    case surface::StepStatus::ok: return EvalStatus::ok;
    case surface::StepStatus::pole: return EvalStatus::pole;
    case surface::StepStatus::divergence: return EvalStatus::divergence;
  }
  return EvalStatus::pole;
}

class SurfaceWordGerm final : public GermMap::Impl {
 public:
  SurfaceWordGerm(words::Word w, std::shared_ptr<const surface::Involutions> maps, surface::MapOptions opts,
                  std::optional<Chart> chart)
      : word_(std::move(w)), inverse_word_(word_.inverse()), maps_(std::move(maps)), opts_(opts), chart_(chart) {
    if (!word_.is_involution_word()) throw DomainError("surface germ needs a word in x, y, z");
  }

  EvalStatus apply(Point& z) const override { return run(word_, z); }
  EvalStatus apply_inverse(Point& z) const override { return run(inverse_word_, z); }
  std::string describe() const override { return "surface word " + word_.to_string(); }

  const words::Word& word() const { return word_; }
  const std::shared_ptr<const surface::Involutions>& maps() const { return maps_; }
  const surface::MapOptions& options() const { return opts_; }
  const std::optional<Chart>& chart() const { return chart_; }

 private:
  EvalStatus run(const words::Word& w, Point& z) const {
    if (!chart_) return from_step(maps_->apply(w, z, opts_));
    Point p = chart_->center + chart_->rho * z;
    const EvalStatus s = from_step(maps_->apply(w, p, opts_));
    if (s == EvalStatus::ok) z = (p - chart_->center) / chart_->rho;
    return s;
  }

  words::Word word_;
  words::Word inverse_word_;
  std::shared_ptr<const surface::Involutions> maps_;
  surface::MapOptions opts_;
  std::optional<Chart> chart_;
};

class InverseGerm final : public GermMap::Impl {
 public:
  explicit InverseGerm(GermMap g) : g_(std::move(g)) {}
  EvalStatus apply(Point& z) const override { return g_.apply_inverse(z); }
  EvalStatus apply_inverse(Point& z) const override { return g_.apply(z); }
  std::string describe() const override { return "inverse(" + g_.describe() + ")"; }

 private:
  GermMap g_;
};

// factors_[0] is applied first.
class CompositeGerm final : public GermMap::Impl {
 public:
  explicit CompositeGerm(std::vector<GermMap> factors) : factors_(std::move(factors)) {}

  EvalStatus apply(Point& z) const override {
    for (const GermMap& f : factors_) {
      if (const EvalStatus s = f.apply(z); s != EvalStatus::ok) return s;
    }
    return EvalStatus::ok;
  }
  EvalStatus apply_inverse(Point& z) const override {
    for (auto it = factors_.rbegin(); it != factors_.rend(); ++it) {
      if (const EvalStatus s = it->apply_inverse(z); s != EvalStatus::ok) return s;
    }
    return EvalStatus::ok;
  }
  std::string describe() const override { return "composite of " + std::to_string(factors_.size()) + " germs"; }

 private:
  std::vector<GermMap> factors_;
};

const SurfaceWordGerm* as_surface_word(const GermMap& g) { return dynamic_cast<const SurfaceWordGerm*>(&g.impl()); }

bool same_chart(const std::optional<Chart>& a, const std::optional<Chart>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->center == b->center && a->rho == b->rho;
}

bool same_options(const surface::MapOptions& a, const surface::MapOptions& b) {
  return a.pole_tolerance == b.pole_tolerance && a.escape_radius == b.escape_radius && a.reproject == b.reproject;
}

}  // namespace

GermMap GermMap::identity() {
  static const auto impl = std::make_shared<const IdentityGerm>();
  return GermMap(impl);
}

GermMap GermMap::translation(const Point& c) {
  return GermMap(std::make_shared<const PolynomialGerm>(
      c, Matrix3c::Identity(), std::array<Matrix3c, 3>{Matrix3c::Zero(), Matrix3c::Zero(), Matrix3c::Zero()},
      BallSpec{Point::Zero(), std::numeric_limits<double>::infinity()}));
}

GermMap GermMap::linear(const Matrix3c& a) {
  return GermMap(std::make_shared<const PolynomialGerm>(
      Point::Zero(), a, std::array<Matrix3c, 3>{Matrix3c::Zero(), Matrix3c::Zero(), Matrix3c::Zero()},
      BallSpec{Point::Zero(), std::numeric_limits<double>::infinity()}));
}

GermMap GermMap::polynomial(const Point& constant, const Matrix3c& linear, const std::array<Matrix3c, 3>& quadratic,
                            BallSpec domain) {
  return GermMap(std::make_shared<const PolynomialGerm>(constant, linear, quadratic, domain));
}

GermMap GermMap::surface_word(const words::Word& w, std::shared_ptr<const surface::Involutions> maps,
                              surface::MapOptions opts, std::optional<Chart> chart) {
  if (w.empty()) return identity();
  return GermMap(std::make_shared<const SurfaceWordGerm>(w, std::move(maps), opts, chart));
}

GermMap GermMap::inverse() const {
  if (const auto* s = as_surface_word(*this)) {
    return surface_word(s->word().inverse(), s->maps(), s->options(), s->chart());
  }
  if (dynamic_cast<const IdentityGerm*>(impl_.get())) return *this;
  return GermMap(std::make_shared<const InverseGerm>(*this));
}

GermMap compose(const GermMap& f, const GermMap& g) {
  if (dynamic_cast<const IdentityGerm*>(&f.impl())) return g;
  if (dynamic_cast<const IdentityGerm*>(&g.impl())) return f;
  const auto* sf = as_surface_word(f);
  const auto* sg = as_surface_word(g);
  if (sf && sg && sf->maps() == sg->maps() && same_chart(sf->chart(), sg->chart()) &&
      same_options(sf->options(), sg->options())) {
    return GermMap::surface_word(sg->word() * sf->word(), sf->maps(), sf->options(), sf->chart());
  }
  return GermMap(std::make_shared<const CompositeGerm>(std::vector<GermMap>{g, f}));
}

GermMap commutator(const GermMap& f, const GermMap& g) {
  return compose(f, compose(g, compose(f.inverse(), g.inverse())));
}

GermMap word_germ(const words::Word& w, std::span<const GermMap> generators) {
  std::vector<GermMap> factors;
  factors.reserve(w.size());
  for (const words::Letter& l : w.letters()) {
    if (l.alphabet != words::Alphabet::free || l.generator >= generators.size()) {
      throw DomainError("word_germ: letter " + words::to_string(l) + " has no generator germ");
    }
    const GermMap& g = generators[l.generator];
    factors.push_back(l.inverted ? g.inverse() : g);
  }
  // Fuse runs of surface words into one reduced word.
  GermMap acc = GermMap::identity();
  std::vector<GermMap> chain;
  for (const GermMap& f : factors) {
    const GermMap next = compose(f, acc);
    if (as_surface_word(next) || dynamic_cast<const IdentityGerm*>(&next.impl())) {
      acc = next;
    } else {
      chain.push_back(acc);
      acc = f;
    }
  }
  if (chain.empty()) return acc;
  chain.push_back(acc);
  return GermMap(std::make_shared<const CompositeGerm>(std::move(chain)));
}

std::string to_string(SamplingMethod m) {
  switch (m) {
    case SamplingMethod::sphere_grid: return "sphere-grid";
    case SamplingMethod::random: return "random";
    case SamplingMethod::random_polish: return "random+polish";
  }
  return "random";
}

SamplingMethod parse_sampling_method(const std::string& s) {
  if (s == "sphere-grid") return SamplingMethod::sphere_grid;
  if (s == "random") return SamplingMethod::random;
  if (s == "random+polish") return SamplingMethod::random_polish;
  throw ConfigError("unknown sampling method \"" + s + "\"");
}

nlohmann::json DeviationReport::to_json() const {
  return {{"sup", sup},
          {"argmax", point_json(argmax)},
          {"samples", samples},
          {"polish_evaluations", polish_evaluations},
          {"method", to_string(method)},
          {"failures", failures},
          {"certifying", certifying()},
          {"radius", ball.radius},
          {"center", point_json(ball.center)},
          {"seed", seed},
          {"norm", kNormConvention}};
}

namespace {

double halton(std::size_t index, unsigned base) {
  double f = 1.0, r = 0.0;
  std::size_t i = index;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

Point from_real6(const std::array<double, 6>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  return Point(Complex(v[0], v[1]) / n, Complex(v[2], v[3]) / n, Complex(v[4], v[5]) / n);
}

std::array<double, 6> to_real6(const Point& p) {
  return {p[0].real(), p[0].imag(), p[1].real(), p[1].imag(), p[2].real(), p[2].imag()};
}

}  // namespace

Point sphere_direction(SamplingMethod method, std::uint64_t seed, std::size_t i) {
  std::array<double, 6> v{};
  if (method == SamplingMethod::sphere_grid) {
    // Halton points in [0,1)^6 mapped to Gaussians pairwise by Box-Muller; the
    // seed shifts the sequence (Cranley-Patterson rotation).
    static constexpr unsigned bases[6] = {2, 3, 5, 7, 11, 13};
    Rng shift(seed);
    std::array<double, 6> u{};
    for (int d = 0; d < 6; ++d) {
      u[static_cast<std::size_t>(d)] = std::fmod(halton(i + 1, bases[d]) + shift.uniform(), 1.0);
    }
    for (int d = 0; d < 6; d += 2) {
      const double r = std::sqrt(-2.0 * std::log(std::max(u[static_cast<std::size_t>(d)], 1e-300)));
      v[static_cast<std::size_t>(d)] = r * std::cos(2.0 * std::numbers::pi * u[static_cast<std::size_t>(d + 1)]);
      v[static_cast<std::size_t>(d + 1)] = r * std::sin(2.0 * std::numbers::pi * u[static_cast<std::size_t>(d + 1)]);
    }
  } else {
    Rng rng = Rng::stream(seed, i);
    for (double& x : v) x = rng.normal();
  }
  return from_real6(v);
}

namespace {

// Deviation at one point; NaN marks a failure.
double deviation_at(const GermMap& g, const Point& z) {
  Point w = z;
  if (g.apply(w) != EvalStatus::ok) return std::numeric_limits<double>::quiet_NaN();
  const double d = (w - z).norm();
  return std::isfinite(d) ? d : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

DeviationReport sup_deviation(const GermMap& g, const BallSpec& ball, const SamplingOptions& opts) {
  if (!(ball.radius > 0.0)) throw DomainError("ball radius must be positive");
  DeviationReport rep;
  rep.method = opts.method;
  rep.ball = ball;
  rep.seed = opts.seed;
  rep.samples = opts.samples;

  std::vector<double> dev(opts.samples);
  parallel_for(
      opts.samples,
      [&](std::size_t i) {
        const Point z = ball.center + ball.radius * sphere_direction(opts.method, opts.seed, i);
        dev[i] = deviation_at(g, z);
      },
      opts.threads);

  std::size_t best = 0;
  bool have_best = false;
  for (std::size_t i = 0; i < dev.size(); ++i) {
    if (std::isnan(dev[i])) {
      ++rep.failures;
      continue;
    }
    if (!have_best || dev[i] > dev[best]) {
      best = i;
      have_best = true;
    }
  }
  if (!have_best) return rep;
  rep.sup = dev[best];
  Point best_dir = sphere_direction(opts.method, opts.seed, best);
  rep.argmax = ball.center + ball.radius * best_dir;

  if (opts.method == SamplingMethod::random_polish) {
    // Coordinate-wise golden-section refinement on the sphere.
    constexpr double phi = 0.6180339887498949;
    std::array<double, 6> u = to_real6(best_dir);
    double h = 0.25;
    for (int sweep = 0; sweep < 3; ++sweep, h *= 0.5) {
      for (int d = 0; d < 6; ++d) {
        auto eval = [&](double t) {
          std::array<double, 6> v = u;
          v[static_cast<std::size_t>(d)] += t;
          const Point z = ball.center + ball.radius * from_real6(v);
          ++rep.polish_evaluations;
          const double val = deviation_at(g, z);
          if (std::isnan(val)) {
            ++rep.failures;
            return -1.0;
          }
          return val;
        };
        double a = -h, b = h;
        double c = b - phi * (b - a), e = a + phi * (b - a);
        double fc = eval(c), fe = eval(e);
        for (int it = 0; it < 20; ++it) {
          if (fc > fe) {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = eval(c);
          } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = eval(e);
          }
        }
        const double t = fc > fe ? c : e;
        const double ft = std::max(fc, fe);
        if (ft > rep.sup) {
          u[static_cast<std::size_t>(d)] += t;
          const Point dir = from_real6(u);
          u = to_real6(dir);
          rep.sup = ft;
          rep.argmax = ball.center + ball.radius * dir;
        }
      }
    }
  }
  return rep;
}

nlohmann::json SeedConditionReport::to_json() const {
  return {{"epsilon", epsilon},     {"bound", bound},       {"holds", holds},
          {"margin", margin},       {"deviations", deviations}, {"inverse_deviations", inverse_deviations},
          {"failures", failures}};
}

SeedConditionReport check_seed_condition(std::span<const GermMap> generators, double epsilon,
                                         const SamplingOptions& opts, const Point& center) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw DomainError("seed condition needs 0 < epsilon <= 1");
  SeedConditionReport rep;
  rep.epsilon = epsilon;
  rep.bound = epsilon / 32.0;
  rep.margin = std::numeric_limits<double>::infinity();
  const BallSpec ball{center, epsilon};
  for (const GermMap& g : generators) {
    const DeviationReport f = sup_deviation(g, ball, opts);
    const DeviationReport b = sup_deviation(g.inverse(), ball, opts);
    rep.deviations.push_back(f.sup);
    rep.inverse_deviations.push_back(b.sup);
    rep.failures += f.failures + b.failures;
    rep.margin = std::min({rep.margin, rep.bound - f.sup, rep.bound - b.sup});
  }
  if (generators.empty()) rep.margin = rep.bound;
  rep.holds = rep.failures == 0 && rep.margin >= 0.0;
  return rep;
}

Matrix3c numeric_jacobian(const GermMap& g, const Point& z, double h) {
  Matrix3c j;
  for (int k = 0; k < 3; ++k) {
    Point plus = z, minus = z;
    plus[k] += h;
    minus[k] -= h;
    if (g.apply(plus) != EvalStatus::ok || g.apply(minus) != EvalStatus::ok) {
      throw DomainFailure("germ undefined near the point where its derivative was requested");
    }
    j.col(k) = (plus - minus) / (2.0 * h);
  }
  return j;
}

double spectral_norm(const Matrix3c& m) {
  return Eigen::JacobiSVD<Matrix3c>(m).singularValues()(0);
}

nlohmann::json EpsilonSearch::to_json() const {
  return {{"found", found},
          {"epsilon", epsilon},
          {"max_derivative_deviation", max_derivative_deviation},
          {"derivative_ok", derivative_ok},
          {"margin_fraction", margin_fraction},
          {"seed_condition", seed.to_json()}};
}

EpsilonSearch find_epsilon(std::span<const GermMap> generators, EpsilonRange range, const SamplingOptions& opts,
                           double margin_fraction, const Point& center, int grid_points, int bisection_steps) {
  if (!(range.lo > 0.0 && range.lo < range.hi && range.hi <= 1.0)) {
    throw DomainError("epsilon range must satisfy 0 < lo < hi <= 1");
  }
  EpsilonSearch out;
  out.margin_fraction = margin_fraction;
  for (const GermMap& g : generators) {
    const Matrix3c d = numeric_jacobian(g, center) - Matrix3c::Identity();
    out.max_derivative_deviation = std::max(out.max_derivative_deviation, spectral_norm(d));
  }
  out.derivative_ok = out.max_derivative_deviation <= 1.0 / 64.0;
  if (!out.derivative_ok) return out;

  auto passes = [&](double eps, SeedConditionReport* keep) {
    SeedConditionReport r = check_seed_condition(generators, eps, opts, center);
    const bool ok = r.failures == 0 && r.margin >= margin_fraction * r.bound;
    if (keep) *keep = std::move(r);
    return ok;
  };

  const double log_lo = std::log(range.lo), log_hi = std::log(range.hi);
  auto grid = [&](int i) {
    if (i == grid_points - 1) return range.hi;
    return std::exp(log_lo + (log_hi - log_lo) * i / (grid_points - 1));
  };
  int best = -1;
  for (int i = grid_points - 1; i >= 0; --i) {
    if (passes(grid(i), nullptr)) {
      best = i;
      break;
    }
  }
  if (best < 0) return out;
  double lo = grid(best);
  if (best < grid_points - 1) {
    double hi = grid(best + 1);
    for (int it = 0; it < bisection_steps; ++it) {
      const double mid = std::sqrt(lo * hi);
      (passes(mid, nullptr) ? lo : hi) = mid;
    }
  }
  out.found = passes(lo, &out.seed);
  out.epsilon = out.found ? lo : 0.0;
  return out;
}

double estimate_hessian_constant(const GermMap& g, double probe_radius, std::size_t samples, const Point& center,
                                 std::uint64_t seed) {
  Point g0 = center;
  if (g.apply(g0) != EvalStatus::ok) throw DomainFailure("germ undefined at the probe center");
  auto second_difference = [&](const Point& u, double h) -> Point {
    Point plus = center + h * u, minus = center - h * u;
    if (g.apply(plus) != EvalStatus::ok || g.apply(minus) != EvalStatus::ok) {
      throw DomainFailure("germ undefined at a Hessian probe point");
    }
    return (plus + minus - 2.0 * g0) / (2.0 * h * h);
  };
  constexpr double floor = 1e-7;
  double best = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const Point u = sphere_direction(SamplingMethod::random, seed, i);
    const Point e1 = second_difference(u, probe_radius);
    const Point e2 = second_difference(u, probe_radius / 2.0);
    const double n1 = e1.norm(), n2 = e2.norm();
    const double top = std::max(n1, n2);
    if (top > floor && std::abs(n1 - n2) > 0.5 * top) {
      std::ostringstream msg;
      msg << "Hessian estimate is ill-conditioned: probe radii give " << n1 << " and " << n2;
      throw IllConditionedError(msg.str());
    }
    best = std::max(best, ((4.0 * e2 - e1) / 3.0).norm());
  }
  return best;
}

void ContractionParams::validate() const {
  auto unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!unit(r) || !unit(delta) || !unit(tau) || !(4.0 * delta + tau < r)) {
    throw std::invalid_argument("contraction parameters need 0 < r, delta, tau < 1 and 4 delta + tau < r");
  }
}

nlohmann::json ContractionReport::to_json() const {
  return {{"deviation_f", deviation_f},
          {"deviation_g", deviation_g},
          {"deviation_commutator", deviation_commutator},
          {"bound", bound},
          {"slack", slack},
          {"holds", holds}};
}

ContractionReport commutator_contraction_check(const GermMap& f, const GermMap& g, const ContractionParams& params,
                                               const SamplingOptions& opts, double slack) {
  params.validate();
  const BallSpec outer{Point::Zero(), params.r};
  const DeviationReport df = sup_deviation(f, outer, opts);
  const DeviationReport dg = sup_deviation(g, outer, opts);
  if (df.failures || dg.failures) throw DomainFailure("a germ is undefined on B(r)");
  if (df.sup > params.delta || dg.sup > params.delta) {
    std::ostringstream msg;
    msg << "deviation on B(r) exceeds delta: " << df.sup << ", " << dg.sup << " > " << params.delta;
    throw HypothesisViolation(msg.str());
  }
  const DeviationReport dc = sup_deviation(commutator(f, g), BallSpec{Point::Zero(), params.inner_radius()}, opts);
  if (dc.failures) {
    throw DomainFailure("the commutator is undefined at " + std::to_string(dc.failures) + " sampled points");
  }
  ContractionReport rep;
  rep.deviation_f = df.sup;
  rep.deviation_g = dg.sup;
  rep.deviation_commutator = dc.sup;
  rep.slack = slack;
  rep.bound = 2.0 / params.tau * df.sup * dg.sup * slack;
  rep.holds = dc.sup <= rep.bound;
  return rep;
}

bool DecayTable::passed() const {
  return std::all_of(rows.begin(), rows.end(), [](const DecayRow& r) { return r.ratio <= 1.0; });
}

nlohmann::json DecayTable::to_json() const {
  nlohmann::json j;
  j["epsilon"] = epsilon;
  j["radius"] = radius;
  j["passed"] = passed();
  j["norm"] = kNormConvention;
  j["rows"] = nlohmann::json::array();
  for (const DecayRow& r : rows) {
    j["rows"].push_back({{"level", r.level},
                         {"count_evaluated", r.evaluated},
                         {"complete", r.complete},
                         {"max_dev", r.max_deviation},
                         {"bound", r.bound},
                         {"ratio", r.ratio},
                         {"worst_index", r.worst_index}});
  }
  return j;
}

std::string DecayTable::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "level,count_evaluated,max_dev,bound,ratio\r\n";
  for (const DecayRow& r : rows) {
    out << r.level << ',' << r.evaluated << ',' << r.max_deviation << ',' << r.bound << ',' << r.ratio << "\r\n";
  }
  return out.str();
}

DecayTable derived_decay_table(std::span<const GermMap> generators, double epsilon, const DecayOptions& opts,
                               const Point& center) {
  if (generators.empty()) throw DomainError("decay table needs generators");
  if (opts.verify_seed) {
    const SeedConditionReport seed = check_seed_condition(generators, epsilon, opts.sampling, center);
    if (!seed.holds) {
      std::ostringstream msg;
      msg << "seed condition fails at epsilon = " << epsilon << " (margin " << seed.margin << ")";
      throw HypothesisViolation(msg.str());
    }
  }
  const auto series = words::DerivedSeries::prefix(words::free_seeds(static_cast<int>(generators.size())),
                                                   opts.max_level, opts.level_cap, opts.full_levels, opts.limits);
  DecayTable table;
  table.epsilon = epsilon;
  table.radius = epsilon / 2.0;
  const BallSpec ball{center, table.radius};
  for (int n = 0; n <= opts.max_level; ++n) {
    DecayRow row;
    row.level = n;
    row.complete = n <= opts.full_levels && series.complete(n);
    row.evaluated = row.complete ? series.size(n) : std::min(series.size(n), opts.level_cap);
    row.bound = level_delta(epsilon, n);
    for (std::size_t i = 0; i < row.evaluated; ++i) {
      const GermMap germ = word_germ(series.expand(n, i), generators);
      const DeviationReport d = sup_deviation(germ, ball, opts.sampling);
      if (d.failures) {
        throw DomainFailure("element " + std::to_string(i) + " of level " + std::to_string(n) +
                            " is undefined somewhere in B(eps/2)");
      }
      if (d.sup > row.max_deviation || i == 0) {
        row.max_deviation = d.sup;
        row.worst_index = i;
      }
    }
    row.ratio = row.max_deviation / row.bound;
    table.rows.push_back(row);
  }
  return table;
}

GermMap chart_conjugate(const words::Word& w, const surface::SurfaceCoefficients& c, const Chart& chart,
                        surface::MapOptions opts) {
  if (!(chart.rho > 0.0)) throw DomainError("chart scale must be positive");
  return GermMap::surface_word(w, std::make_shared<const surface::Involutions>(c), opts, chart);
}

}  // namespace k3gaps::germs
