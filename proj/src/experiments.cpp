#include "k3gaps/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "k3gaps/config.hpp"
#include "k3gaps/errors.hpp"
#include "k3gaps/parallel.hpp"
#include "k3gaps/plot.hpp"
#include "k3gaps/random.hpp"

namespace k3gaps::experiments {

using nlohmann::json;
using plot::number;
using surface::Point;

// ---------------------------------------------------------------------------
// Configuration

json ScenarioConfig::defaults(Scenario s) {
  const bool gap = s == Scenario::gap;
  return {
      {"run", {{"seed", 1}, {"output", gap ? "out/gap" : "out/real-locus"}, {"timestamp", false}}},
      {"surface",
       {{"preset", gap ? "wehler-example" : "sphere"},
        {"perturbation",
         {{"magnitude", gap ? 1e-3 : 0.0}, {"mode", gap ? "complex" : "real"}, {"seed", 1}, {"bound", 100.0}}}}},
      {"epsilon", {{"mode", "auto"}, {"value", 0.02}, {"lo", 1e-4}, {"hi", 1.0}, {"margin", 0.1}}},
      {"decay",
       {{"max_level", 5}, {"full_levels", 2}, {"level_cap", 64}, {"samples", 1000}, {"method", "random"}}},
      {"lattice", {{"path_length", 6}, {"first_index", 0}, {"bit_threshold", 32768}, {"divergence_threshold", 1e3}}},
      {"mass", {{"samples", 200000}, {"threshold", 0.1}}},
      {"cover", {{"rho", 0.4}, {"spacing", 0.05}, {"check_samples", 10000}}},
      {"real_locus",
       {{"bisection", true},
        {"magnitude_hi", 0.05},
        {"bisection_steps", 8},
        {"condition_samples", 64},
        {"max_level", 4},
        {"full_levels", 1},
        {"level_cap", 16},
        {"samples", 32},
        {"witness_samples", 200}}},
  };
}

namespace {

template <typename T>
T get(const json& tree, const char* a, const char* b) {
  try {
    return tree.at(a).at(b).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key ") + a + "." + b + ": " + e.what());
  }
}

template <typename T>
T get(const json& tree, const char* a, const char* b, const char* c) {
  try {
    return tree.at(a).at(b).at(c).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key ") + a + "." + b + "." + c + ": " + e.what());
  }
}

std::size_t count(const json& tree, const char* a, const char* b) {
  const long long v = get<long long>(tree, a, b);
  if (v <= 0) throw ConfigError(std::string(a) + "." + b + " must be positive");
  return static_cast<std::size_t>(v);
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const json& t) {
  ScenarioConfig c;
  c.seed = get<std::uint64_t>(t, "run", "seed");
  c.output = get<std::string>(t, "run", "output");
  c.timestamp = get<bool>(t, "run", "timestamp");

  c.preset = get<std::string>(t, "surface", "preset");
  c.perturbation = get<double>(t, "surface", "perturbation", "magnitude");
  const std::string mode = get<std::string>(t, "surface", "perturbation", "mode");
  if (mode == "real") c.perturbation_mode = surface::PerturbationMode::real;
  else if (mode == "complex") c.perturbation_mode = surface::PerturbationMode::complex;
  else throw ConfigError("surface.perturbation.mode must be \"real\" or \"complex\"");
  c.perturbation_seed = get<std::uint64_t>(t, "surface", "perturbation", "seed");
  c.perturbation_bound = get<double>(t, "surface", "perturbation", "bound");

  const std::string em = get<std::string>(t, "epsilon", "mode");
  if (em != "auto" && em != "fixed") throw ConfigError("epsilon.mode must be \"auto\" or \"fixed\"");
  c.epsilon_auto = em == "auto";
  c.epsilon = get<double>(t, "epsilon", "value");
  c.epsilon_lo = get<double>(t, "epsilon", "lo");
  c.epsilon_hi = get<double>(t, "epsilon", "hi");
  c.epsilon_margin = get<double>(t, "epsilon", "margin");

  c.max_level = get<int>(t, "decay", "max_level");
  c.full_levels = get<int>(t, "decay", "full_levels");
  c.level_cap = count(t, "decay", "level_cap");
  c.samples = count(t, "decay", "samples");
  c.method = germs::parse_sampling_method(get<std::string>(t, "decay", "method"));

  c.path_length = get<int>(t, "lattice", "path_length");
  c.path_first_index = static_cast<std::size_t>(get<long long>(t, "lattice", "first_index"));
  c.bit_threshold = count(t, "lattice", "bit_threshold");
  c.divergence_threshold = get<double>(t, "lattice", "divergence_threshold");

  c.mass_samples = count(t, "mass", "samples");
  c.mass_threshold = get<double>(t, "mass", "threshold");

  c.rho = get<double>(t, "cover", "rho");
  c.spacing = get<double>(t, "cover", "spacing");
  c.cover_check_samples = count(t, "cover", "check_samples");

  c.bisection = get<bool>(t, "real_locus", "bisection");
  c.bisection_hi = get<double>(t, "real_locus", "magnitude_hi");
  c.bisection_steps = get<int>(t, "real_locus", "bisection_steps");
  c.condition_samples = count(t, "real_locus", "condition_samples");
  c.chart_max_level = get<int>(t, "real_locus", "max_level");
  c.chart_full_levels = get<int>(t, "real_locus", "full_levels");
  c.chart_level_cap = count(t, "real_locus", "level_cap");
  c.chart_samples = count(t, "real_locus", "samples");
  c.witness_samples = count(t, "real_locus", "witness_samples");
  c.validate();
  return c;
}

json ScenarioConfig::to_json() const {
  json t = defaults(scenario);
  t["run"] = {{"seed", seed}, {"output", output}, {"timestamp", timestamp}};
  t["surface"] = {{"preset", preset},
                  {"perturbation",
                   {{"magnitude", perturbation},
                    {"mode", perturbation_mode == surface::PerturbationMode::real ? "real" : "complex"},
                    {"seed", perturbation_seed},
                    {"bound", perturbation_bound}}}};
  t["epsilon"] = {{"mode", epsilon_auto ? "auto" : "fixed"}, {"value", epsilon}, {"lo", epsilon_lo},
                  {"hi", epsilon_hi},                       {"margin", epsilon_margin}};
  t["decay"] = {{"max_level", max_level}, {"full_levels", full_levels}, {"level_cap", level_cap},
                {"samples", samples},     {"method", germs::to_string(method)}};
  t["lattice"] = {{"path_length", path_length},
                  {"first_index", path_first_index},
                  {"bit_threshold", bit_threshold},
                  {"divergence_threshold", divergence_threshold}};
  t["mass"] = {{"samples", mass_samples}, {"threshold", mass_threshold}};
  t["cover"] = {{"rho", rho}, {"spacing", spacing}, {"check_samples", cover_check_samples}};
  t["real_locus"] = {{"bisection", bisection},
                     {"magnitude_hi", bisection_hi},
                     {"bisection_steps", bisection_steps},
                     {"condition_samples", condition_samples},
                     {"max_level", chart_max_level},
                     {"full_levels", chart_full_levels},
                     {"level_cap", chart_level_cap},
                     {"samples", chart_samples},
                     {"witness_samples", witness_samples}};
  return t;
}

void ScenarioConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  if (perturbation < 0.0) throw ConfigError("surface.perturbation.magnitude must be nonnegative");
  positive(perturbation_bound, "surface.perturbation.bound");
  positive(epsilon, "epsilon.value");
  positive(epsilon_lo, "epsilon.lo");
  positive(epsilon_hi, "epsilon.hi");
  if (!(epsilon_lo < epsilon_hi && epsilon_hi <= 1.0)) throw ConfigError("epsilon range must satisfy lo < hi <= 1");
  if (!(epsilon_margin >= 0.0 && epsilon_margin < 1.0)) throw ConfigError("epsilon.margin must lie in [0, 1)");
  if (max_level < 0 || full_levels < 0) throw ConfigError("decay levels must be nonnegative");
  if (path_length < 2) throw ConfigError("lattice.path_length must be at least 2");
  positive(divergence_threshold, "lattice.divergence_threshold");
  positive(mass_threshold, "mass.threshold");
  if (!(rho > 0.0 && rho <= 0.5)) throw ConfigError("cover.rho must lie in (0, 1/2]");
  positive(spacing, "cover.spacing");
  positive(bisection_hi, "real_locus.magnitude_hi");
  if (bisection_steps < 0 || chart_max_level < 0 || chart_full_levels < 0) {
    throw ConfigError("real_locus levels and steps must be nonnegative");
  }
}

ScenarioConfig resolve_config(Scenario s, const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides, std::vector<std::string>* log) {
  json tree = ScenarioConfig::defaults(s);
  if (log) log->push_back("defaults: built-in");
  if (file) {
    if (!std::filesystem::exists(*file)) throw ConfigError("config file not found: " + file->string());
    config::merge(tree, config::load_toml(*file), file->string());
    if (log) log->push_back("file: " + file->string());
  }
  for (const std::string& o : overrides) {
    config::apply_override(tree, o);
    if (log) log->push_back("override: " + o);
  }
  ScenarioConfig cfg = ScenarioConfig::from_json(tree);
  cfg.scenario = s;
  return cfg;
}

// ---------------------------------------------------------------------------
// Chart cover

json ChartCover::to_json() const {
  return {{"rho", rho},
          {"spacing", spacing},
          {"charts", charts.size()},
          {"check_samples", check_samples},
          {"worst_distance", worst_distance},
          {"covering_radius_required", rho / 4.0}};
}

std::vector<Eigen::Vector3d> fibonacci_sphere(std::size_t n) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    Eigen::Vector3d p(r * std::cos(phi), r * std::sin(phi), z);
    out.push_back(p / p.norm());
  }
  return out;
}

namespace {

double radical_inverse(std::size_t i, unsigned base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

}  // namespace

std::vector<Eigen::Vector3d> sphere_check_points(std::size_t n) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) {
    const double z = 2.0 * radical_inverse(i, 2) - 1.0;
    const double phi = 2.0 * std::numbers::pi * radical_inverse(i, 3);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    out.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
  }
  return out;
}

std::pair<double, std::size_t> nearest_center(const ChartCover& cover, const Eigen::Vector3d& p) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t idx = 0;
  for (std::size_t i = 0; i < cover.charts.size(); ++i) {
    const Eigen::Vector3d c = cover.charts[i].center.real();
    const double d = (c - p).squaredNorm();
    if (d < best) best = d, idx = i;
  }
  return {std::sqrt(best), idx};
}

ChartCover build_chart_cover(double rho, const CoverPolicy& policy) {
  if (!(rho > 0.0 && rho <= 0.5)) throw DomainError("chart scale must lie in (0, 1/2]");
  if (!(policy.spacing > 0.0)) throw DomainError("spacing must be positive");
  const std::size_t n =
      policy.count ? *policy.count
                   : static_cast<std::size_t>(std::ceil(4.0 * std::numbers::pi / (policy.spacing * policy.spacing)));
  if (n == 0) throw DomainError("a cover needs at least one chart");
  ChartCover cover;
  cover.rho = rho;
  cover.spacing = std::sqrt(4.0 * std::numbers::pi / static_cast<double>(n));
  cover.check_samples = policy.check_samples;
  for (const Eigen::Vector3d& p : fibonacci_sphere(n)) {
    cover.charts.push_back({Point(p.cast<surface::Complex>()), rho});
  }
  const auto checks = sphere_check_points(policy.check_samples);
  std::vector<double> dist(checks.size());
  parallel_for(checks.size(), [&](std::size_t i) { dist[i] = nearest_center(cover, checks[i]).first; });
  for (std::size_t i = 0; i < checks.size(); ++i) {
    cover.worst_distance = std::max(cover.worst_distance, dist[i]);
    if (dist[i] > rho / 4.0) {
      std::ostringstream msg;
      msg << "sphere point (" << checks[i][0] << ", " << checks[i][1] << ", " << checks[i][2]
          << ") is at distance " << dist[i] << " > rho/4 from every one of the " << n << " chart centers";
      throw CoverFailure(msg.str());
    }
  }
  return cover;
}

// ---------------------------------------------------------------------------
// Mass gap

AreaEstimate surface_area_in_ball(const surface::SurfaceCoefficients& c, double radius, std::size_t samples,
                                  std::uint64_t seed, unsigned threads) {
  if (!(radius > 0.0) || samples == 0) throw DomainError("area estimate needs a positive radius and samples");
  const surface::Involutions inv(c);
  const double vol4 = std::numbers::pi * std::numbers::pi * std::pow(radius, 4) / 2.0;
  std::vector<std::array<double, 3>> value(samples);
  parallel_for(
      samples,
      [&](std::size_t i) {
        for (int k = 0; k < 3; ++k) {
          Rng rng = Rng::stream(seed, 3 * i + static_cast<std::size_t>(k));
          double g[4];
          double n2 = 0.0;
          for (double& x : g) x = rng.normal(), n2 += x * x;
          const double scale = radius * std::pow(rng.uniform(), 0.25) / std::sqrt(n2);
          const int a = (k + 1) % 3, b = (k + 2) % 3;
          Point p = Point::Zero();
          p[std::min(a, b)] = surface::Complex(g[0], g[1]) * scale;
          p[std::max(a, b)] = surface::Complex(g[2], g[3]) * scale;
          const surface::FiberQuadratic q = inv.fiber(static_cast<surface::Axis>(k), p);
          std::vector<surface::Complex> roots;
          if (std::abs(q.a) > 1e-14) {
            const auto r = surface::quadratic_roots(q.a, q.b, q.c);
            roots.assign(r.begin(), r.end());
          } else if (std::abs(q.b) > 1e-14) {
            roots.push_back(-q.c / q.b);
          }
          double sum = 0.0;
          for (const surface::Complex& t : roots) {
            p[k] = t;
            if (p.norm() > radius) continue;
            const Point grad = surface::gradient(c, p);
            const double gk = std::abs(grad[k]);
            if (gk == 0.0) continue;
            bool owner = true;
            for (int j = 0; j < 3; ++j) {
              const double gj = std::abs(grad[j]);
              if (gj > gk || (gj == gk && j < k)) owner = false;
            }
            if (owner) sum += grad.squaredNorm() / (gk * gk);
          }
          value[i][static_cast<std::size_t>(k)] = sum;
        }
      },
      threads);
  AreaEstimate est;
  est.samples = samples;
  double var = 0.0;
  for (int k = 0; k < 3; ++k) {
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      const double v = value[i][static_cast<std::size_t>(k)];
      if (v > 0.0) ++est.hits;
      mean += v;
      m2 += v * v;
    }
    mean /= static_cast<double>(samples);
    const double s2 = std::max(0.0, m2 / static_cast<double>(samples) - mean * mean);
    est.area += vol4 * mean;
    var += vol4 * vol4 * s2 / static_cast<double>(samples);
  }
  est.standard_error = std::sqrt(var);
  return est;
}

json MassGapReport::to_json() const {
  json rows = json::array();
  for (std::size_t i = 0; i < n.size(); ++i) {
    rows.push_back({{"n", n[i]}, {"log_lambda", log_lambda[i]}, {"ratio", ratios[i]},
                    {"log_ratio", std::isfinite(log_ratios[i]) ? json(log_ratios[i]) : json(nullptr)}});
  }
  return {{"radius", radius},
          {"ball_meets_surface", ball_meets_surface},
          {"area", area.area},
          {"area_standard_error", area.standard_error},
          {"area_samples", area.samples},
          {"area_doubled", area_doubled.area},
          {"stability", stability},
          {"kaehler_form", "flat form (i/2) sum dz^dz-bar on the affine chart, standing in for omega0"},
          {"rows", rows},
          {"ratios_decreasing", ratios_decreasing},
          {"threshold", threshold},
          {"below_threshold", below_threshold}};
}

std::string MassGapReport::to_csv() const {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < n.size(); ++i) {
    rows.push_back({std::to_string(n[i]), number(log_lambda[i]), number(ratios[i]), number(log_ratios[i])});
  }
  return plot::csv({"n", "log_lambda", "area_over_lambda", "log_area_over_lambda"}, rows);
}

bool ball_misses_surface(const surface::SurfaceCoefficients& c, double radius) {
  double bound = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        if (i + j + k > 0) bound += std::abs(c(i, j, k)) * std::pow(radius, i + j + k);
  return std::abs(c(0, 0, 0)) > bound;
}

MassGapReport mass_gap_estimate(const surface::SurfaceCoefficients& c, double epsilon,
                                const lattice::LambdaSequence& seq, std::size_t samples, std::uint64_t seed,
                                double threshold) {
  MassGapReport rep;
  rep.radius = epsilon / 2.0;
  rep.threshold = threshold;
  rep.area = surface_area_in_ball(c, rep.radius, samples, seed);
  rep.area_doubled = surface_area_in_ball(c, rep.radius, 2 * samples, seed);
  if (rep.area.hits == 0) {
    if (!ball_misses_surface(c, rep.radius)) throw EmptySampleError("no surface points sampled in the ball");
    rep.ball_meets_surface = false;
  }
  rep.stability =
      rep.area_doubled.area > 0.0 ? std::abs(rep.area_doubled.area - rep.area.area) / rep.area_doubled.area : 0.0;
  rep.ratios_decreasing = true;
  for (const lattice::LambdaEntry& e : seq.entries) {
    rep.n.push_back(e.n);
    rep.log_lambda.push_back(e.log_lambda);
    rep.ratios.push_back(rep.area.area * std::exp(-e.log_lambda));
    rep.log_ratios.push_back(rep.area.area > 0.0 ? std::log(rep.area.area) - e.log_lambda
                                                 : -std::numeric_limits<double>::infinity());
    const std::size_t k = rep.log_ratios.size();
    if (k > 1 && rep.area.area > 0.0 && !(rep.log_ratios[k - 1] < rep.log_ratios[k - 2])) {
      rep.ratios_decreasing = false;
    }
  }
  rep.below_threshold = !rep.ratios.empty() && rep.ratios.back() <= threshold * rep.area.area;
  return rep;
}

// ---------------------------------------------------------------------------
// Shared pieces

json ScenarioReport::to_json() const {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["scenario"] = scenario;
  j["passed"] = passed;
  j["failed_stage"] = failed_stage.empty() ? json(nullptr) : json(failed_stage);
  j["config"] = resolved_config;
  j["stages"] = json::array();
  for (const Stage& s : stages) {
    j["stages"].push_back({{"name", s.name}, {"passed", s.passed}, {"message", s.message}, {"data", s.data}});
  }
  return j;
}

std::vector<germs::GermMap> generator_germs(const surface::SurfaceCoefficients& c,
                                            const std::optional<germs::Chart>& chart) {
  const auto maps = std::make_shared<const surface::Involutions>(c);
  std::vector<germs::GermMap> out;
  for (const words::Word& w : words::schreier_generators()) {
    out.push_back(germs::GermMap::surface_word(w, maps, {}, chart));
  }
  return out;
}

double derivative_deviation(const surface::SurfaceCoefficients& c, const Point& at) {
  const surface::Involutions inv(c);
  double worst = 0.0;
  for (const words::Word& w : words::schreier_generators()) {
    surface::Matrix3c j = surface::Matrix3c::Identity();
    Point p = at;
    for (const words::Letter& l : w.letters()) {
      const surface::Axis axis = surface::axis_of(l);
      j = surface::flip_jacobian(axis, c, p) * j;
      if (inv.flip(axis, p, surface::MapOptions{}.pole_tolerance) != surface::StepStatus::ok) {
        throw PoleError("pole while differentiating " + w.to_string(), 0);
      }
    }
    worst = std::max(worst, germs::spectral_norm(j - surface::Matrix3c::Identity()));
  }
  return worst;
}

namespace {

surface::SurfaceCoefficients scenario_surface(const ScenarioConfig& cfg, double magnitude) {
  surface::PerturbationSpec spec;
  spec.base = surface::SurfaceCoefficients::preset(cfg.preset);
  spec.magnitude = magnitude;
  spec.mode = cfg.perturbation_mode;
  spec.seed = cfg.perturbation_seed;
  return surface::perturb(spec);
}

struct LatticeResult {
  lattice::CanonicalPath path;
  lattice::LambdaSequence seq;
  lattice::BoundaryLimit limit;
  lattice::CanonicalPath alt_path;
  lattice::BoundaryLimit alt_limit;
  double separation = 0.0;
  std::vector<std::pair<words::Word, lattice::RayClass>> parabolic;
};

LatticeResult lattice_stage(const ScenarioConfig& cfg, Stage& stage) {
  LatticeResult r;
  const auto gens = lattice::schreier_matrices();
  r.path = lattice::canonical_path(gens, cfg.path_length, cfg.path_first_index, cfg.bit_threshold);
  r.seq = lattice::lambda_sequence(r.path.matrices);
  r.limit = lattice::boundary_limit(r.seq, cfg.divergence_threshold);
  // A second path branching at depth 1, as separation evidence.
  r.alt_path = lattice::canonical_path(gens, cfg.path_length, cfg.path_first_index + 1, cfg.bit_threshold);
  r.alt_limit = lattice::boundary_limit(lattice::lambda_sequence(r.alt_path.matrices), cfg.divergence_threshold);
  r.separation = lattice::ray_distance(r.limit.ray, r.alt_limit.ray);
  r.parabolic = lattice::short_parabolic_rays(4);

  const auto& first = r.seq.entries.front();
  const auto& last = r.seq.entries.back();
  const double growth = last.log_lambda - first.log_lambda;
  const bool increasing = r.seq.strictly_increasing();
  stage.passed = increasing && growth >= std::log(10.0) && r.limit.converged;
  std::ostringstream msg;
  msg << "log(lambda_" << last.n << "/lambda_1) = " << growth << ", limit self-pairing "
      << last.normalized_self_pairing;
  stage.message = msg.str();
  stage.data = {{"path", r.path.to_json()},
                {"lambda", r.seq.to_json()},
                {"strictly_increasing", increasing},
                {"log_growth", growth},
                {"boundary_limit", r.limit.to_json()},
                {"branch_limit", r.alt_limit.to_json()},
                {"branch_separation", r.separation}};
  return r;
}

std::string lambda_svg(const lattice::LambdaSequence& seq, const std::string& ts) {
  plot::LinePlot p;
  p.title = "log lambda_n along the canonical path";
  p.x_label = "n";
  p.y_label = "log lambda_n";
  p.timestamp = ts;
  plot::Series s{"log lambda_n", {}, false, true};
  for (const auto& e : seq.entries) s.points.emplace_back(e.n, e.log_lambda);
  p.series.push_back(s);
  return plot::line_plot_svg(p);
}

std::string null_cone_svg(const LatticeResult& r, const std::string& ts) {
  std::vector<plot::CirclePoint> filled, hollow;
  const auto a = lattice::circle_coordinates(r.limit.ray);
  filled.push_back({a[0], a[1], "canonical limit", false});
  const auto b = lattice::circle_coordinates(r.alt_limit.ray);
  filled.push_back({b[0], b[1], "branch limit", false});
  for (const auto& [w, ray] : r.parabolic) {
    const auto c = lattice::circle_coordinates(ray);
    hollow.push_back({c[0], c[1], "parabolic " + w.to_string(), true});
  }
  return plot::circle_plot_svg("limit rays on the projectivized null cone", filled, hollow, ts);
}

std::string timestamp_text(bool on) {
  if (!on) return "";
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void note(const Progress& p, const std::string& s) {
  if (p) p(s);
}

// Runs `body` as a named stage; exceptions mark it failed with their message.
template <typename Fn>
bool run_stage(ScenarioReport& rep, const std::string& name, const Progress& progress, Fn&& body) {
  Stage stage;
  stage.name = name;
  note(progress, "stage " + name);
  try {
    body(stage);
  } catch (const std::exception& e) {
    stage.passed = false;
    stage.message = e.what();
  }
  note(progress, "stage " + name + (stage.passed ? " passed" : " failed") +
                     (stage.message.empty() ? "" : ": " + stage.message));
  rep.stages.push_back(stage);
  if (!stage.passed) rep.failed_stage = name;
  return stage.passed;
}

}  // namespace

// ---------------------------------------------------------------------------
// Gap scenario

ScenarioReport run_gap_theorem(const ScenarioConfig& cfg, const Progress& progress) {
  cfg.validate();
  ScenarioReport rep;
  rep.scenario = "gap";
  rep.resolved_config = cfg.to_json();
  const std::string ts = timestamp_text(cfg.timestamp);
  if (cfg.perturbation > cfg.perturbation_bound) {
    throw ConfigError("perturbation magnitude exceeds surface.perturbation.bound");
  }
  const surface::SurfaceCoefficients coeffs = scenario_surface(cfg, cfg.perturbation);
  germs::SamplingOptions sampling;
  sampling.samples = cfg.samples;
  sampling.method = cfg.method;
  sampling.seed = cfg.seed;

  std::vector<germs::GermMap> gens;
  double epsilon = 0.0;
  bool seed_ok = false;
  germs::DecayTable table;
  LatticeResult lat;

  bool ok = run_stage(rep, "generators", progress, [&](Stage& s) {
    gens = generator_germs(coeffs);
    json words = json::array();
    for (const auto& w : words::schreier_generators()) words.push_back(w.to_string());
    s.passed = true;
    s.message = std::to_string(gens.size()) + " Schreier generators";
    s.data = {{"surface", coeffs.to_json()}, {"generators", words}};
  });
  ok = ok && run_stage(rep, "derivative", progress, [&](Stage& s) {
    const double dev = derivative_deviation(coeffs);
    s.passed = dev <= 1.0 / 64.0;
    s.message = "max ||D gamma(0) - id|| = " + number(dev) + " (bound 1/64)";
    s.data = {{"max_deviation", dev}, {"bound", 1.0 / 64.0}};
  });
  ok = ok && run_stage(rep, "epsilon", progress, [&](Stage& s) {
    if (cfg.epsilon_auto) {
      const germs::EpsilonSearch found =
          germs::find_epsilon(gens, {cfg.epsilon_lo, cfg.epsilon_hi}, sampling, cfg.epsilon_margin);
      s.data = found.to_json();
      s.passed = found.found;
      epsilon = found.epsilon;
      s.message = found.found ? "epsilon = " + number(epsilon) : "no epsilon passes the seed condition";
    } else {
      epsilon = cfg.epsilon;
      const auto check = germs::check_seed_condition(gens, epsilon, sampling);
      s.data = check.to_json();
      s.passed = check.holds;
      s.message = "fixed epsilon = " + number(epsilon) + (check.holds ? "" : ": seed condition fails");
    }
    seed_ok = s.passed;
  });
  ok = ok && run_stage(rep, "decay", progress, [&](Stage& s) {
    germs::DecayOptions opts;
    opts.max_level = cfg.max_level;
    opts.full_levels = cfg.full_levels;
    opts.level_cap = cfg.level_cap;
    opts.sampling = sampling;
    table = germs::derived_decay_table(gens, epsilon, opts);
    s.passed = table.passed();
    s.data = table.to_json();
    double worst = 0.0;
    for (const auto& r : table.rows) worst = std::max(worst, r.ratio);
    s.message = "worst ratio " + number(worst);
    if (!s.passed && seed_ok) {
      s.data["theorem_consistency"] = "decay ratio above 1 with a passing seed condition: implementation bug";
    }
  });
  ok = ok && run_stage(rep, "lattice", progress, [&](Stage& s) { lat = lattice_stage(cfg, s); });
  ok = ok && run_stage(rep, "mass_gap", progress, [&](Stage& s) {
    const MassGapReport m = mass_gap_estimate(coeffs, epsilon, lat.seq, cfg.mass_samples, cfg.seed, cfg.mass_threshold);
    s.passed = m.ratios_decreasing && m.below_threshold && m.stability <= 0.02;
    s.message = m.ball_meets_surface
                    ? "A = " + number(m.area.area) + ", doubling change " + number(m.stability)
                    : "B(eps/2) misses X_u (certified), A = 0";
    s.data = m.to_json();
    rep.files.emplace_back("tables/mass_gap.csv", m.to_csv());
  });
  rep.passed = ok;

  if (!table.rows.empty()) {
    rep.files.emplace_back("tables/decay.csv", table.to_csv());
    plot::LinePlot p;
    p.title = "derived-series decay on B(eps/2)";
    p.x_label = "level n";
    p.y_label = "log10 deviation";
    p.timestamp = ts;
    plot::Series measured{"max deviation", {}, false, true}, bound{"eps/(2^n 32)", {}, true, false};
    for (const auto& r : table.rows) {
      measured.points.emplace_back(r.level, r.max_deviation > 0 ? std::log10(r.max_deviation) : std::nan(""));
      bound.points.emplace_back(r.level, std::log10(r.bound));
    }
    p.series = {measured, bound};
    rep.files.emplace_back("plots/decay.svg", plot::line_plot_svg(p));
  }
  if (!lat.seq.entries.empty()) {
    rep.files.emplace_back("tables/lambda.csv", lat.seq.to_csv());
    rep.files.emplace_back("plots/lambda.svg", lambda_svg(lat.seq, ts));
    rep.files.emplace_back("plots/null_cone.svg", null_cone_svg(lat, ts));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Real-locus scenario

namespace {

struct ChartCheck {
  double worst_deviation = 0.0;  // max over the ten germs
  std::size_t failures = 0;
  bool holds = false;
};

std::vector<ChartCheck> check_charts(const surface::SurfaceCoefficients& coeffs, const ChartCover& cover,
                                     const ScenarioConfig& cfg) {
  std::vector<ChartCheck> out(cover.charts.size());
  parallel_for(cover.charts.size(), [&](std::size_t i) {
    const auto gens = generator_germs(coeffs, cover.charts[i]);
    germs::SamplingOptions s;
    s.samples = cfg.condition_samples;
    s.method = cfg.method;
    s.seed = cfg.seed;
    s.threads = 1;
    const auto rep = germs::check_seed_condition(gens, 0.5, s);
    ChartCheck& c = out[i];
    for (double d : rep.deviations) c.worst_deviation = std::max(c.worst_deviation, d);
    for (double d : rep.inverse_deviations) c.worst_deviation = std::max(c.worst_deviation, d);
    c.failures = rep.failures;
    c.holds = rep.failures == 0 && c.worst_deviation <= (1.0 - cfg.epsilon_margin) / 64.0;
  });
  return out;
}

bool all_hold(const std::vector<ChartCheck>& v) {
  return std::all_of(v.begin(), v.end(), [](const ChartCheck& c) { return c.holds; });
}

// Real points of the surface on rays through the origin, by Newton in the radius.
std::vector<Eigen::Vector3d> real_witnesses(const surface::SurfaceCoefficients& c, std::size_t n) {
  std::vector<Eigen::Vector3d> out;
  for (const Eigen::Vector3d& d : sphere_check_points(n)) {
    double t = 1.0;
    bool ok = false;
    for (int it = 0; it < 50; ++it) {
      const Point p = (t * d).cast<surface::Complex>();
      const double f = surface::evaluate(c, p).real();
      const double df = surface::gradient(c, p).real().dot(d);
      if (df == 0.0) break;
      const double step = f / df;
      t -= step;
      if (std::abs(step) < 1e-15) {
        ok = true;
        break;
      }
    }
    const Point p = (t * d).cast<surface::Complex>();
    if ((ok || std::abs(surface::evaluate(c, p)) <= 1e-12) && t > 0.0 && std::abs(surface::evaluate(c, p)) <= 1e-9) {
      out.push_back(t * d);
    }
  }
  return out;
}

}  // namespace

ScenarioReport run_real_locus_theorem(const ScenarioConfig& cfg, const Progress& progress) {
  cfg.validate();
  ScenarioReport rep;
  rep.scenario = "real-locus";
  rep.resolved_config = cfg.to_json();
  const std::string ts = timestamp_text(cfg.timestamp);
  if (cfg.perturbation_mode != surface::PerturbationMode::real) {
    throw ConfigError("the real-locus scenario needs surface.perturbation.mode = \"real\"");
  }

  ChartCover cover;
  double magnitude = cfg.perturbation;
  surface::SurfaceCoefficients coeffs;
  std::vector<ChartCheck> checks;
  std::vector<germs::DecayTable> tables;
  LatticeResult lat;
  std::vector<std::vector<std::string>> bisection_rows;

  bool ok = run_stage(rep, "cover", progress, [&](Stage& s) {
    cover = build_chart_cover(cfg.rho, {cfg.spacing, cfg.cover_check_samples, std::nullopt});
    s.passed = true;
    s.message = std::to_string(cover.charts.size()) + " charts, worst distance " + number(cover.worst_distance);
    s.data = cover.to_json();
  });
  ok = ok && run_stage(rep, "magnitude", progress, [&](Stage& s) {
    if (cfg.bisection) {
      double lo = 0.0, hi = cfg.bisection_hi;
      auto passes = [&](double m) {
        const bool p = all_hold(check_charts(scenario_surface(cfg, m), cover, cfg));
        bisection_rows.push_back({number(m), p ? "pass" : "fail"});
        note(progress, "  magnitude " + number(m) + (p ? " passes" : " fails"));
        return p;
      };
      if (passes(hi)) {
        lo = hi;
      } else {
        for (int i = 0; i < cfg.bisection_steps; ++i) {
          const double mid = 0.5 * (lo + hi);
          (passes(mid) ? lo : hi) = mid;
        }
      }
      magnitude = lo;
      s.data = {{"magnitude", magnitude}, {"upper", hi}, {"steps", cfg.bisection_steps}, {"mode", "bisection"}};
      s.message = "largest passing magnitude " + number(magnitude);
    } else {
      s.data = {{"magnitude", magnitude}, {"mode", "fixed"}};
      s.message = "fixed magnitude " + number(magnitude);
    }
    if (magnitude > cfg.perturbation_bound) throw ConfigError("magnitude exceeds surface.perturbation.bound");
    coeffs = scenario_surface(cfg, magnitude);
    s.data["surface"] = coeffs.to_json();
    s.passed = true;
  });
  ok = ok && run_stage(rep, "real_points", progress, [&](Stage& s) {
    const auto pts = real_witnesses(coeffs, cfg.witness_samples);
    if (pts.empty()) throw DomainError("real locus appears empty: no real surface points found");
    std::size_t covered = 0;
    double worst = 0.0;
    for (const auto& p : pts) {
      const double d = nearest_center(cover, p).first;
      worst = std::max(worst, d);
      if (d <= cover.rho / 4.0) ++covered;
    }
    s.passed = covered == pts.size();
    s.message = std::to_string(covered) + "/" + std::to_string(pts.size()) + " real points covered";
    s.data = {{"points", pts.size()}, {"covered", covered}, {"worst_distance", worst}, {"residual_bound", 1e-9}};
  });
  ok = ok && run_stage(rep, "charts", progress, [&](Stage& s) {
    checks = check_charts(coeffs, cover, cfg);
    std::size_t failing = 0;
    double worst = 0.0;
    for (const ChartCheck& c : checks) {
      worst = std::max(worst, c.worst_deviation);
      if (c.failures || c.worst_deviation > 1.0 / 64.0) ++failing;
    }
    s.passed = failing == 0;
    s.message = "worst ||gamma' - id|| on B(1/2) = " + number(worst) + " over " + std::to_string(checks.size()) +
                " charts x 10 germs";
    s.data = {{"worst_deviation", worst}, {"bound", 1.0 / 64.0}, {"failing_charts", failing}};
  });
  ok = ok && run_stage(rep, "decay", progress, [&](Stage& s) {
    tables.resize(cover.charts.size());
    std::vector<std::string> errors(cover.charts.size());
    germs::DecayOptions opts;
    opts.max_level = cfg.chart_max_level;
    opts.full_levels = cfg.chart_full_levels;
    opts.level_cap = cfg.chart_level_cap;
    opts.verify_seed = false;
    opts.sampling.samples = cfg.chart_samples;
    opts.sampling.method = cfg.method;
    opts.sampling.seed = cfg.seed;
    opts.sampling.threads = 1;
    parallel_for(cover.charts.size(), [&](std::size_t i) {
      try {
        tables[i] = germs::derived_decay_table(generator_germs(coeffs, cover.charts[i]), 0.5, opts);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    });
    std::vector<double> worst(static_cast<std::size_t>(cfg.chart_max_level) + 1, 0.0);
    std::size_t failing = 0;
    for (std::size_t i = 0; i < tables.size(); ++i) {
      if (!errors[i].empty()) {
        ++failing;
        continue;
      }
      if (!tables[i].passed()) ++failing;
      for (const auto& r : tables[i].rows) worst[static_cast<std::size_t>(r.level)] = std::max(worst[static_cast<std::size_t>(r.level)], r.ratio);
    }
    s.passed = failing == 0;
    const double top = *std::max_element(worst.begin(), worst.end());
    s.message = "worst per-chart ratio " + number(top) + ", failing charts " + std::to_string(failing);
    json first_error = nullptr;
    for (std::size_t i = 0; i < errors.size(); ++i)
      if (!errors[i].empty()) {
        first_error = {{"chart", i}, {"error", errors[i]}};
        break;
      }
    s.data = {{"worst_ratio_by_level", worst}, {"failing_charts", failing}, {"first_error", first_error},
              {"epsilon", 0.5}};
  });
  ok = ok && run_stage(rep, "lattice", progress, [&](Stage& s) { lat = lattice_stage(cfg, s); });
  rep.passed = ok;

  if (!bisection_rows.empty()) rep.files.emplace_back("tables/bisection.csv", plot::csv({"magnitude", "result"}, bisection_rows));
  if (!checks.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < checks.size(); ++i) {
      const Eigen::Vector3d c = cover.charts[i].center.real();
      std::vector<std::string> row = {std::to_string(i), number(c[0]), number(c[1]), number(c[2]),
                                      number(checks[i].worst_deviation)};
      for (int l = 0; l <= cfg.chart_max_level; ++l) {
        const bool have = i < tables.size() && static_cast<int>(tables[i].rows.size()) > l;
        row.push_back(have ? number(tables[i].rows[static_cast<std::size_t>(l)].ratio) : "");
      }
      rows.push_back(row);
    }
    std::vector<std::string> head = {"chart", "x", "y", "z", "max_condition_dev"};
    for (int l = 0; l <= cfg.chart_max_level; ++l) head.push_back("ratio_level_" + std::to_string(l));
    rep.files.emplace_back("tables/charts.csv", plot::csv(head, rows));
  }
  if (!tables.empty()) {
    plot::LinePlot p;
    p.title = "worst per-chart decay ratio";
    p.x_label = "level n";
    p.y_label = "ratio";
    p.timestamp = ts;
    plot::Series s{"max over charts", {}, false, true}, one{"1", {}, true, false};
    for (int l = 0; l <= cfg.chart_max_level; ++l) {
      double w = 0.0;
      for (const auto& t : tables)
        if (static_cast<int>(t.rows.size()) > l) w = std::max(w, t.rows[static_cast<std::size_t>(l)].ratio);
      s.points.emplace_back(l, w);
      one.points.emplace_back(l, 1.0);
    }
    p.series = {s, one};
    rep.files.emplace_back("plots/chart_ratios.svg", plot::line_plot_svg(p));
  }
  if (!lat.seq.entries.empty()) {
    rep.files.emplace_back("tables/lambda.csv", lat.seq.to_csv());
    rep.files.emplace_back("plots/lambda.svg", lambda_svg(lat.seq, ts));
    rep.files.emplace_back("plots/null_cone.svg", null_cone_svg(lat, ts));
  }
  return rep;
}

void write_bundle(const ScenarioReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tables");
  std::filesystem::create_directories(dir / "plots");
  auto write = [&](const std::filesystem::path& rel, const std::string& text) {
    std::ofstream out(dir / rel, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / rel).string());
    out << text;
  };
  write("report.json", report.to_json().dump(2) + "\n");
  write("config.resolved.toml", config::to_toml(report.resolved_config));
  for (const auto& [rel, text] : report.files) write(rel, text);
}

}  // namespace k3gaps::experiments
