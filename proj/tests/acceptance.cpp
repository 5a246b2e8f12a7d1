// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "k3gaps/errors.hpp"
#include "k3gaps/experiments.hpp"
#include "k3gaps/germs.hpp"
#include "k3gaps/lattice.hpp"
#include "k3gaps/random.hpp"
#include "k3gaps/surface.hpp"
#include "k3gaps/words.hpp"
#include "support.hpp"

using namespace k3gaps;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets.
constexpr double kJacobianTol = 1e-10;
constexpr double kSpectralTol = 1e-9;
constexpr double kSelfPairingTol = 1e-6;
constexpr double kLambdaGrowth = 10.0;
constexpr double kContractionSlack = 1.1;
constexpr double kStabilityTol = 0.02;
constexpr double kChartDerivativeBound = 1.0 / 64.0;
constexpr double kBudget1 = 1.0, kBudget2 = 1.0, kBudget3 = 10.0, kBudget4 = 1.0, kBudget5 = 120.0,
                 kBudget6 = 300.0, kBudget7 = 120.0, kBudget8 = 600.0;

struct Outcome {
  bool passed = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      passed = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, double budget, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.passed = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (budget > 0.0 && secs > budget) o.require(false, "time " + std::to_string(secs) + " s over budget");
  if (!o.passed) ++failures;
  std::printf("[%s] %d %s (%.2f s, budget %.0f s)%s%s\n", o.passed ? "PASS" : "FAIL", id, name.c_str(), secs, budget,
              o.detail.empty() ? "" : ": ", o.detail.c_str());
  std::fflush(stdout);
}

const json* stage(const json& rep, const std::string& name) {
  for (const json& s : rep["stages"])
    if (s["name"] == name) return &s;
  return nullptr;
}

std::map<std::string, std::string> bundle(const experiments::ScenarioReport& r) {
  std::map<std::string, std::string> out{{"report.json", r.to_json().dump(2)}};
  for (const auto& [path, text] : r.files)
    if (path.ends_with(".csv")) out[path] = text;
  return out;
}

std::map<std::string, std::string> gap_bundle, real_bundle;
experiments::ScenarioReport gap_report;

experiments::ScenarioConfig gap_config() {
  return experiments::resolve_config(experiments::Scenario::gap, std::nullopt, {});
}
experiments::ScenarioConfig real_config() {
  return experiments::resolve_config(experiments::Scenario::real_locus, std::nullopt, {});
}

}  // namespace

int main() {
  report(1, "exact algebra", kBudget1, [] {
    Outcome o;
    const auto& g = lattice::GramForm::entries();
    for (int a = 0; a < 3; ++a) {
      const auto m = lattice::involution_matrix(a);
      const auto& e = m.integers();
      bool inv = true;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          lattice::BigInt s = 0;
          for (int k = 0; k < 3; ++k)
            for (int l = 0; l < 3; ++l) s += e[3 * k + i] * g[3 * k + l] * e[3 * l + j];
          inv = inv && s == g[3 * i + j];
        }
      o.require(inv, "M^T G M != G for axis " + std::to_string(a));
      o.require(m.times(m).is_identity(), "M^2 != id for axis " + std::to_string(a));
    }
    Rng rng(2024);
    int bad = 0;
    for (int t = 0; t < 1000; ++t) {
      std::vector<words::Letter> raw;
      const auto n = 1 + rng.below(40);
      for (std::uint64_t i = 0; i < n; ++i) raw.push_back(words::Letter::sigma(static_cast<std::uint8_t>(rng.below(3))));
      const words::Word w = words::Word::reduce(raw);
      const auto d = lattice::word_matrix(w).determinant();
      if (d != ((w.size() % 2) ? -1 : 1)) ++bad;
    }
    o.require(bad == 0, std::to_string(bad) + " words with det != (-1)^length");
    const auto c = surface::SurfaceCoefficients::wehler_example();
    double worst = 0.0;
    for (int a = 0; a < 3; ++a) {
      surface::Matrix3c expected = surface::Matrix3c::Identity();
      expected(a, a) = -1.0;
      worst = std::max(worst, (surface::derivative_at_fixed_point(static_cast<surface::Axis>(a), c,
                                                                  surface::Point::Zero()) - expected).norm());
    }
    o.require(worst <= kJacobianTol, "Jacobian error " + std::to_string(worst));
    o.detail = o.passed ? "1000 words, Jacobian error " + std::to_string(worst) : o.detail;
    return o;
  });

  report(2, "spectral fixtures", kBudget2, [] {
    Outcome o;
    const auto m = lattice::word_matrix(words::Word::parse("x y z"));
    const auto& e = m.integers();
    const lattice::BigInt minors =
        e[0] * e[4] - e[1] * e[3] + e[0] * e[8] - e[2] * e[6] + e[4] * e[8] - e[5] * e[7];
    // (t + 1)(t^2 - 18 t + 1) = t^3 - 17 t^2 - 17 t + 1.
    o.require(m.trace() == 17 && minors == -17 && m.determinant() == -1, "characteristic polynomial mismatch");
    const auto c = lattice::classify(m);
    const double err = std::abs(c.spectral_radius - (9.0 + 4.0 * std::sqrt(5.0)));
    o.require(c.type == lattice::IsometryType::loxodromic && err <= kSpectralTol,
              "radius error " + std::to_string(err));
    o.require(lattice::classify(lattice::word_matrix(words::Word::parse("x y"))).type ==
                  lattice::IsometryType::parabolic,
              "x y not parabolic");
    if (o.passed) o.detail = "radius error " + std::to_string(err);
    return o;
  });

  report(3, "free-group suite", kBudget3, [] {
    Outcome o;
    const auto r = words::verify_fast_ramification(5, 10000, 50, 1);
    o.require(r.violations.empty(), std::to_string(r.violations.size()) + " short products");
    for (const auto& w : words::schreier_generators())
      o.require(words::klein_image(w) == words::KleinVector{0, 0, 0}, w.to_string() + " outside the kernel");
    const auto t = words::tree_path_count(5, 3);
    for (std::size_t b : t.min_branching) o.require(b >= 3, "branching " + std::to_string(b));
    if (o.passed) o.detail = "min slack " + std::to_string(r.min_slack);
    return o;
  });

  report(4, "contraction-constant identities", kBudget4, [] {
    using Q = boost::multiprecision::cpp_rational;
    Outcome o;
    int checked = 0;
    for (int den = 1; den <= 64; ++den) {
      const Q eps(1, den);
      for (int n = 0; n <= 64; ++n) {
        const Q r = germs::level_radius(eps, n), d = germs::level_delta(eps, n), t = germs::level_tau(eps, n);
        o.require(r >= eps / 2, "eps_n < eps/2");
        o.require(r - 4 * d - t == germs::level_radius(eps, n + 1), "radius recursion");
        o.require(2 / t * d * d == d / 2, "(2/tau) delta^2 != delta/2");
        ++checked;
      }
    }
    if (o.passed) o.detail = std::to_string(checked) + " (eps, n) pairs in exact rationals";
    return o;
  });

  report(5, "empirical commutator inequality", kBudget5, [] {
    Outcome o;
    const double r = 0.5;
    const germs::ContractionParams p{r, r / 100.0, r / 10.0};
    Rng rng(5);
    int bad = 0;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const auto f = testing::random_near_identity(rng, r, p.delta);
      const auto g = testing::random_near_identity(rng, r, p.delta);
      const auto rep = germs::commutator_contraction_check(f, g, p, {256, germs::SamplingMethod::random,
                                                                      static_cast<std::uint64_t>(i)}, kContractionSlack);
      if (!rep.holds) ++bad;
      if (rep.bound > 0) worst = std::max(worst, rep.deviation_commutator / rep.bound);
    }
    o.require(bad == 0, std::to_string(bad) + " pairs above the bound");
    if (o.passed) o.detail = "1000 pairs, worst measured/bound " + std::to_string(worst);
    return o;
  });

  report(6, "decay-table theorem check", kBudget6, [] {
    Outcome o;
    const auto cfg = gap_config();
    gap_report = experiments::run_gap_theorem(cfg);
    gap_bundle = bundle(gap_report);
    const json rep = gap_report.to_json();
    o.require(cfg.epsilon_auto && cfg.samples >= 1000 && cfg.max_level == 5 && cfg.perturbation == 1e-3,
              "scenario parameters differ from the criterion");
    const json* eps = stage(rep, "epsilon");
    o.require(eps && (*eps)["passed"] == true, "no epsilon found");
    const json* decay = stage(rep, "decay");
    o.require(decay != nullptr, "decay stage missing");
    if (!decay) return o;
    o.require((*decay)["passed"] == true, "decay stage: " + (*decay)["message"].get<std::string>());
    double worst = 0.0;
    const json rows = (*decay)["data"].value("rows", json::array());
    o.require(rows.size() == 6, "expected levels 0..5");
    for (const json& row : rows) worst = std::max(worst, row["ratio"].get<double>());
    o.require(worst <= 1.0, "ratio " + std::to_string(worst));
    if (o.passed) {
      o.detail = "eps " + std::to_string((*eps)["data"]["epsilon"].get<double>()) + ", worst ratio " +
                 std::to_string(worst);
    }
    return o;
  });

  report(7, "lambda divergence and mass gap", kBudget7, [] {
    Outcome o;
    const auto path = lattice::canonical_path(lattice::schreier_matrices(), 6);
    const auto seq = lattice::lambda_sequence(path.matrices);
    o.require(seq.entries.size() == 6 && seq.strictly_increasing(), "lambda_n not strictly increasing");
    const double growth = seq.entries.back().log_lambda - seq.entries.front().log_lambda;
    o.require(growth >= std::log(kLambdaGrowth), "lambda_6 / lambda_1 < 10");
    o.require(std::abs(seq.entries.back().normalized_self_pairing) <= kSelfPairingTol, "self-pairing at n = 6");
    // Frozen regression values of 12 lambda_n.
    o.require(seq.entries[0].lambda12 == "499724", "12 lambda_1 changed");
    o.require(seq.entries[1].lambda12 == "2013706264487638597644", "12 lambda_2 changed");
    const std::size_t digits[] = {6, 22, 80, 270, 917, 3177};
    for (std::size_t n = 0; n < 6; ++n)
      o.require(seq.entries[n].lambda12.size() == digits[n], "digits of 12 lambda_" + std::to_string(n + 1));

    // The scenario bundle from criterion 6 carries the same sequence and the mass-gap stage.
    const json rep = gap_report.to_json();
    const json* mass = stage(rep, "mass_gap");
    o.require(mass && (*mass)["passed"] == true, "mass-gap stage failed");
    const json* lat = stage(rep, "lattice");
    o.require(lat && (*lat)["passed"] == true, "lattice stage failed");

    // At perturbation 1e-3 the ball misses X_u; repeat at 1e-5 where A > 0.
    const auto cfg = gap_config();
    const auto c = surface::perturb({surface::SurfaceCoefficients::wehler_example(), 1e-5,
                                     surface::PerturbationMode::complex, cfg.perturbation_seed});
    const auto gens = experiments::generator_germs(c);
    const auto eps = germs::find_epsilon(gens, {cfg.epsilon_lo, cfg.epsilon_hi}, {cfg.samples, cfg.method, cfg.seed},
                                         cfg.epsilon_margin);
    o.require(eps.found, "no epsilon at perturbation 1e-5");
    const auto m = experiments::mass_gap_estimate(c, eps.epsilon, seq, cfg.mass_samples, cfg.seed, cfg.mass_threshold);
    o.require(m.ball_meets_surface && m.area.area > 0.0, "A = 0 at perturbation 1e-5");
    o.require(m.ratios_decreasing, "A / lambda_n not decreasing");
    o.require(m.ratios.back() <= m.area.area / kLambdaGrowth, "A / lambda_6 > A / 10");
    o.require(m.stability <= kStabilityTol, "area unstable under doubling: " + std::to_string(m.stability));
    if (o.passed) {
      std::ostringstream d;
      d << "log(lambda_6/lambda_1) " << growth << ", A(1e-5) " << m.area.area << ", doubling change " << m.stability
        << ", 1e-3 ball " << ((*mass)["data"]["ball_meets_surface"] == true ? "meets X_u" : "certified empty");
      o.detail = d.str();
    }
    return o;
  });

  report(8, "real-locus scenario", kBudget8, [] {
    Outcome o;
    const auto r = experiments::run_real_locus_theorem(real_config());
    real_bundle = bundle(r);
    const json rep = r.to_json();
    for (const char* name : {"cover", "magnitude", "real_points", "charts", "decay", "lattice"}) {
      const json* s = stage(rep, name);
      o.require(s && (*s)["passed"] == true,
                std::string(name) + (s ? ": " + (*s)["message"].get<std::string>() : " missing"));
    }
    const json* cover = stage(rep, "cover");
    if (cover) o.require((*cover)["data"]["check_samples"] == 10000, "cover checked on fewer than 1e4 samples");
    const json* charts = stage(rep, "charts");
    if (charts && (*charts)["data"].contains("worst_deviation"))
      o.require((*charts)["data"]["worst_deviation"].get<double>() <= kChartDerivativeBound, "chart deviation");
    const json* decay = stage(rep, "decay");
    if (decay && (*decay)["data"].contains("worst_ratio_by_level")) {
      const json w = (*decay)["data"]["worst_ratio_by_level"];
      o.require(w.size() == 5, "levels 0..4 expected");
      for (const json& x : w) o.require(x.get<double>() <= 1.0, "per-chart ratio above 1");
    }
    if (o.passed) {
      o.detail = (*cover)["message"].get<std::string>() + "; magnitude " +
                 std::to_string((*stage(rep, "magnitude"))["data"]["magnitude"].get<double>()) + "; " +
                 (*decay)["message"].get<std::string>();
    }
    return o;
  });

  report(9, "determinism of criteria 6-8", kBudget6 + kBudget8, [] {
    Outcome o;
    o.require(!gap_bundle.empty() && !real_bundle.empty(), "criteria 6 and 8 produced no bundle");
    const auto g = bundle(experiments::run_gap_theorem(gap_config()));
    const auto r = bundle(experiments::run_real_locus_theorem(real_config()));
    std::size_t files = 0;
    for (const auto& [a, b] : {std::pair{&gap_bundle, &g}, std::pair{&real_bundle, &r}}) {
      o.require(a->size() == b->size(), "different file sets");
      for (const auto& [path, text] : *a) {
        const auto it = b->find(path);
        o.require(it != b->end() && it->second == text, path + " differs");
        ++files;
      }
    }
    if (o.passed) o.detail = std::to_string(files) + " JSON/CSV files byte-identical";
    return o;
  });

  std::printf("%s: %d of 9 criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
