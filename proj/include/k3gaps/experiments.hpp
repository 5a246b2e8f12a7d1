#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "k3gaps/germs.hpp"
#include "k3gaps/lattice.hpp"
#include "k3gaps/surface.hpp"

namespace k3gaps::experiments {

inline constexpr int kSchemaVersion = 1;

enum class Scenario { gap, real_locus };

struct ScenarioConfig {
  Scenario scenario = Scenario::gap;
  std::uint64_t seed = 1;
  std::string output = "out";
  bool timestamp = false;  // SVG timestamp comment

  std::string preset = "wehler-example";
  double perturbation = 1e-3;
  surface::PerturbationMode perturbation_mode = surface::PerturbationMode::complex;
  std::uint64_t perturbation_seed = 1;
  double perturbation_bound = 100.0;

  bool epsilon_auto = true;
  double epsilon = 0.02;
  double epsilon_lo = 1e-4;
  double epsilon_hi = 1.0;
  double epsilon_margin = 0.1;

  int max_level = 5;
  int full_levels = 2;
  std::size_t level_cap = 64;
  std::size_t samples = 1000;
  germs::SamplingMethod method = germs::SamplingMethod::random;

  int path_length = 6;
  std::size_t path_first_index = 0;
  std::size_t bit_threshold = lattice::kDefaultBitThreshold;
  double divergence_threshold = 1e3;

  std::size_t mass_samples = 200000;
  double mass_threshold = 0.1;  // require A / lambda_N <= threshold * A

  double rho = 0.4;
  double spacing = 0.05;  // geodesic spacing of chart centers
  std::size_t cover_check_samples = 10000;

  bool bisection = true;
  double bisection_hi = 0.05;
  int bisection_steps = 8;
  std::size_t condition_samples = 64;
  int chart_max_level = 4;
  int chart_full_levels = 1;
  std::size_t chart_level_cap = 16;
  std::size_t chart_samples = 32;
  std::size_t witness_samples = 200;

  // The configuration tree with every key defaulted.
  static nlohmann::json defaults(Scenario s);
  static ScenarioConfig from_json(const nlohmann::json& tree);
  nlohmann::json to_json() const;
  void validate() const;  // ConfigError on non-positive counts or sizes
};

// defaults < file < overrides. Each step is appended to `log` when given.
ScenarioConfig resolve_config(Scenario s, const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides, std::vector<std::string>* log = nullptr);

struct Stage {
  std::string name;
  bool passed = false;
  std::string message;
  nlohmann::json data;
};

// --- Chart cover ---------------------------------------------------------

struct ChartCover {
  std::vector<germs::Chart> charts;
  double rho = 0.0;
  double spacing = 0.0;
  std::size_t check_samples = 0;
  double worst_distance = 0.0;  // max over samples of the distance to the nearest center
  nlohmann::json to_json() const;
};

struct CoverPolicy {
  double spacing = 0.05;
  std::size_t check_samples = 10000;
  std::optional<std::size_t> count;  // overrides the spacing-derived count
};

// Unit vectors of the n-point Fibonacci sphere lattice.
std::vector<Eigen::Vector3d> fibonacci_sphere(std::size_t n);
// Quasi-uniform check points (Halton in the sphere's area coordinates).
std::vector<Eigen::Vector3d> sphere_check_points(std::size_t n);

/// Chart centers on the unit sphere, n = ceil(4 pi / spacing^2) unless the
/// count is given. Throws CoverFailure naming an uncovered sample.
ChartCover build_chart_cover(double rho, const CoverPolicy& policy);

// Nearest center distance and index.
std::pair<double, std::size_t> nearest_center(const ChartCover& cover, const Eigen::Vector3d& p);

// --- Mass gap ------------------------------------------------------------

struct AreaEstimate {
  double area = 0.0;
  double standard_error = 0.0;
  std::size_t samples = 0;
  std::size_t hits = 0;
};

/// Euclidean 4-volume of B(radius) intersected with X, by Monte Carlo over the
/// three coordinate projections: each surface point is counted in the
/// projection where |dF/dz_k| is largest, with graph factor
/// 1 + |F_i/F_k|^2 + |F_j/F_k|^2.
AreaEstimate surface_area_in_ball(const surface::SurfaceCoefficients& c, double radius, std::size_t samples,
                                  std::uint64_t seed, unsigned threads = 0);

// True when |F(0)| exceeds sum_{ijk != 000} |c_ijk| r^(i+j+k), which bounds
// |F(p) - F(0)| on the closed ball of radius r: the ball then misses X.
bool ball_misses_surface(const surface::SurfaceCoefficients& c, double radius);

struct MassGapReport {
  double radius = 0.0;
  bool ball_meets_surface = true;  // false only when certified empty (A = 0 exactly)
  AreaEstimate area;
  AreaEstimate area_doubled;
  double stability = 0.0;  // relative change under doubling
  std::vector<int> n;
  std::vector<double> log_lambda;
  std::vector<double> ratios;  // A / lambda_n, underflows to 0 for large n
  std::vector<double> log_ratios;  // log(A / lambda_n), -inf when A = 0
  bool ratios_decreasing = false;  // strictly when A > 0, else all zero
  bool below_threshold = false;
  double threshold = 0.0;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

MassGapReport mass_gap_estimate(const surface::SurfaceCoefficients& c, double epsilon,
                                const lattice::LambdaSequence& seq, std::size_t samples, std::uint64_t seed,
                                double threshold);

// --- Scenarios -----------------------------------------------------------

struct ScenarioReport {
  std::string scenario;
  bool passed = false;
  std::vector<Stage> stages;
  std::string failed_stage;
  nlohmann::json resolved_config;
  // Files of the bundle: relative path -> contents.
  std::vector<std::pair<std::string, std::string>> files;
  nlohmann::json to_json() const;
};

using Progress = std::function<void(const std::string&)>;

// The Schreier generators as germs of the surface at the origin.
std::vector<germs::GermMap> generator_germs(const surface::SurfaceCoefficients& c,
                                            const std::optional<germs::Chart>& chart = std::nullopt);

// max over generators of ||D gamma(0) - id||, from the chain rule through the flips.
double derivative_deviation(const surface::SurfaceCoefficients& c, const surface::Point& at = surface::Point::Zero());

ScenarioReport run_gap_theorem(const ScenarioConfig& cfg, const Progress& progress = {});
ScenarioReport run_real_locus_theorem(const ScenarioConfig& cfg, const Progress& progress = {});

// Writes report.json, config.resolved.toml and the tables/plots into dir.
void write_bundle(const ScenarioReport& report, const std::filesystem::path& dir);

}  // namespace k3gaps::experiments
