#include "k3gaps/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "k3gaps/config.hpp"
#include "k3gaps/errors.hpp"
#include "k3gaps/experiments.hpp"
#include "k3gaps/lattice.hpp"
#include "k3gaps/plot.hpp"
#include "k3gaps/words.hpp"

namespace k3gaps::cli {

namespace {

using nlohmann::json;

struct Options {
  bool json_mode = false;
  int verbosity = 0;

  std::string word;
  int k = 5;
  int level = 1;
  int trials = 10000;
  int max_factors = 50;
  int depth = 3;
  std::size_t cap = 16;
  std::size_t show = 10;

  int length = 6;
  std::size_t first_index = 0;
  std::string power;
  std::string out_dir;

  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

class Printer {
 public:
  Printer(const Options& o, std::ostream& out) : o_(o), out_(out) {}
  // Emits either the JSON document or the text form.
  void emit(const json& doc, const std::string& text) {
    if (o_.json_mode) out_ << doc.dump(2) << '\n';
    else out_ << text;
  }

 private:
  const Options& o_;
  std::ostream& out_;
};

std::string matrix_text(const lattice::IsometryMatrix& m) {
  std::ostringstream s;
  if (!m.exact()) {
    s << "float mode, log scale " << m.log_scale() << '\n' << m.normalized() << '\n';
    return s.str();
  }
  const auto& x = m.integers();
  for (int i = 0; i < 3; ++i) {
    s << "  [";
    for (int j = 0; j < 3; ++j) s << (j ? ", " : "") << x[static_cast<std::size_t>(3 * i + j)];
    s << "]\n";
  }
  return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

int words_reduce(const Options& o, Printer& p) {
  const words::Word w = words::Word::parse(o.word);
  json doc = {{"input", o.word}, {"reduced", w.to_string()}, {"length", w.size()}};
  std::string text = w.to_string() + "\n";
  if (w.is_involution_word()) {
    const auto k = words::klein_image(w);
    doc["klein_image"] = {k[0], k[1], k[2]};
  }
  p.emit(doc, text);
  return kPass;
}

int words_level(const Options& o, Printer& p) {
  const auto series = words::DerivedSeries::full(words::free_seeds(o.k), o.level);
  json elems = json::array();
  std::ostringstream text;
  text << "|S^(" << o.level << ")| = " << series.size(o.level) << " over " << o.k << " generators\n";
  const std::size_t n = std::min(o.show, series.size(o.level));
  for (std::size_t i = 0; i < n; ++i) {
    const words::Word w = series.expand(o.level, i);
    elems.push_back(w.to_string());
    text << "  " << i << ": " << w.to_string() << '\n';
  }
  json doc = {{"k", o.k}, {"level", o.level}, {"size", series.size(o.level)}, {"first", elems}};
  doc["manifest"] = series.manifest();
  p.emit(doc, text.str());
  return kPass;
}

int words_ramify(const Options& o, Printer& p) {
  const auto rep = words::verify_fast_ramification(o.k, o.trials, o.max_factors, o.seed.value_or(1));
  json doc = {{"k", rep.k},
              {"trials", rep.trials},
              {"max_factors", rep.max_factors},
              {"min_slack", rep.min_slack},
              {"violations", rep.violations.size()}};
  std::ostringstream text;
  text << rep.trials << " admissible products of up to " << rep.max_factors << " commutators: "
       << rep.violations.size() << " violations, min slack " << rep.min_slack << '\n';
  p.emit(doc, text.str());
  return rep.violations.empty() ? kPass : kFailure;
}

int words_tree(const Options& o, Printer& p) {
  const auto rep = words::tree_path_count(o.k, o.depth, o.cap);
  json doc = {{"depth", rep.depth}, {"min_branching", rep.min_branching}, {"branching_cap", rep.branching_cap},
              {"bound", rep.bound}};
  std::ostringstream text;
  text << "min branching per level:";
  for (auto b : rep.min_branching) text << ' ' << b;
  text << " (cap " << rep.branching_cap << "), at least " << rep.bound << " paths\n";
  p.emit(doc, text.str());
  return kPass;
}

int lattice_matrix(const Options& o, Printer& p) {
  const auto m = lattice::word_matrix(words::Word::parse(o.word));
  json doc = m.to_json();
  doc["determinant"] = m.determinant().str();
  doc["gram_invariant"] = m.gram_invariant();
  p.emit(doc, matrix_text(m));
  return kPass;
}

int lattice_classify(const Options& o, Printer& p) {
  const auto m = lattice::word_matrix(words::Word::parse(o.word));
  const auto c = lattice::classify(m);
  json doc = c.to_json();
  doc["word"] = m.provenance();
  std::ostringstream text;
  text.precision(12);
  text << lattice::to_string(c.type) << ", spectral radius " << c.spectral_radius << '\n';
  p.emit(doc, text.str());
  return kPass;
}

int lattice_lambda(const Options& o, Printer& p) {
  const auto path = lattice::canonical_path(lattice::schreier_matrices(), o.length, o.first_index);
  const auto seq = lattice::lambda_sequence(path.matrices);
  std::ostringstream text;
  text.precision(10);
  for (const auto& e : seq.entries) {
    text << "n = " << e.n << "  log lambda = " << e.log_lambda << "  normalized self-pairing "
         << e.normalized_self_pairing << '\n';
  }
  for (const auto& w : seq.warnings) text << "warning: " << w << '\n';
  if (!o.out_dir.empty()) {
    const std::filesystem::path dir(o.out_dir);
    write_file(dir / "lambda.csv", seq.to_csv());
    plot::LinePlot lp;
    lp.title = "log lambda_n along the canonical path";
    lp.x_label = "n";
    lp.y_label = "log lambda_n";
    plot::Series s{"log lambda_n", {}, false, true};
    for (const auto& e : seq.entries) s.points.emplace_back(e.n, e.log_lambda);
    lp.series.push_back(s);
    write_file(dir / "lambda.svg", plot::line_plot_svg(lp));
  }
  json doc = seq.to_json();
  doc["path"] = path.to_json();
  p.emit(doc, text.str());
  return seq.strictly_increasing() ? kPass : kFailure;
}

int lattice_limit(const Options& o, Printer& p) {
  std::vector<lattice::IsometryMatrix> mats;
  std::optional<lattice::RayClass> expected;
  if (!o.power.empty()) {
    const auto g = lattice::word_matrix(words::Word::parse(o.power));
    mats = lattice::power_path(g, o.length);
    expected = lattice::expanding_ray(g);
  } else {
    mats = lattice::canonical_path(lattice::schreier_matrices(), o.length, o.first_index).matrices;
  }
  const auto seq = lattice::lambda_sequence(mats);
  const auto limit = lattice::boundary_limit(seq);
  json doc = limit.to_json();
  std::ostringstream text;
  text.precision(12);
  text << "limit ray (" << limit.ray.vector[0] << ", " << limit.ray.vector[1] << ", " << limit.ray.vector[2]
       << "), self-pairing " << limit.final_self_pairing << (limit.ray.rational ? ", rational" : "") << '\n';
  if (expected) {
    const double d = lattice::ray_distance(limit.ray, *expected);
    doc["distance_to_expanding_ray"] = d;
    text << "distance to the expanding eigenray: " << d << '\n';
  }
  if (!o.out_dir.empty()) {
    std::vector<plot::CirclePoint> filled, hollow;
    const auto c = lattice::circle_coordinates(limit.ray);
    filled.push_back({c[0], c[1], "limit", false});
    for (const auto& [w, ray] : lattice::short_parabolic_rays(4)) {
      const auto q = lattice::circle_coordinates(ray);
      hollow.push_back({q[0], q[1], "parabolic " + w.to_string(), true});
    }
    write_file(std::filesystem::path(o.out_dir) / "null_cone.svg",
               plot::circle_plot_svg("limit ray on the projectivized null cone", filled, hollow));
  }
  p.emit(doc, text.str());
  return kPass;
}

int verify(experiments::Scenario scenario, const Options& o, Printer& p, std::ostream& err) {
  std::vector<std::string> sets = o.sets;
  if (o.seed) sets.push_back("run.seed=" + std::to_string(*o.seed));
  if (!o.out_dir.empty()) sets.push_back("run.output=" + json(o.out_dir).dump());
  std::optional<std::filesystem::path> file;
  if (!o.config.empty()) file = o.config;
  std::vector<std::string> log;
  const experiments::ScenarioConfig cfg = experiments::resolve_config(scenario, file, sets, &log);

  // Echo the resolved configuration before any long computation.
  const std::filesystem::path dir(cfg.output);
  std::filesystem::create_directories(dir);
  const std::string toml = config::to_toml(cfg.to_json());
  write_file(dir / "config.resolved.toml", toml);
  for (const auto& l : log) err << "config " << l << '\n';
  if (o.verbosity > 0) err << toml;

  experiments::Progress progress;
  if (o.verbosity > 0) progress = [&err](const std::string& s) { err << s << std::endl; };
  const experiments::ScenarioReport rep = scenario == experiments::Scenario::gap
                                              ? experiments::run_gap_theorem(cfg, progress)
                                              : experiments::run_real_locus_theorem(cfg, progress);
  experiments::write_bundle(rep, dir);

  std::ostringstream text;
  for (const auto& s : rep.stages) text << (s.passed ? "pass " : "FAIL ") << s.name << ": " << s.message << '\n';
  text << (rep.passed ? "all stages passed" : "failed at stage " + rep.failed_stage) << "; bundle in " << dir.string()
       << '\n';
  p.emit(rep.to_json(), text.str());
  return rep.passed ? kPass : kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"k3gaps: words, germs, lattice and scenario checks for (2,2,2) surfaces", "k3gaps"};
  app.require_subcommand(1);
  app.add_flag("--json", o.json_mode, "write a single JSON document to stdout");
  app.add_flag("-v,--verbose", o.verbosity, "progress on stderr");

  int (*action)(const Options&, Printer&) = nullptr;
  std::optional<experiments::Scenario> scenario;

  auto* words_cmd = app.add_subcommand("words", "free-group and derived-series tools");
  words_cmd->require_subcommand(1);
  auto* reduce = words_cmd->add_subcommand("reduce", "freely reduce a word");
  reduce->add_option("word", o.word, "word such as \"x y y x\" or \"g1 g2'\"")->required();
  reduce->callback([&] { action = words_reduce; });
  auto* level = words_cmd->add_subcommand("level", "size and first elements of S^(n)");
  level->add_option("--k", o.k, "number of free generators")->check(CLI::Range(1, 26));
  level->add_option("--n", o.level, "level")->check(CLI::Range(0, 3));
  level->add_option("--show", o.show, "elements to print");
  level->callback([&] { action = words_level; });
  auto* ramify = words_cmd->add_subcommand("ramify", "check the fast-ramification length bound");
  ramify->add_option("--k", o.k)->check(CLI::Range(2, 26));
  ramify->add_option("--trials", o.trials)->check(CLI::PositiveNumber);
  ramify->add_option("--max-factors", o.max_factors)->check(CLI::PositiveNumber);
  ramify->add_option("--seed", o.seed);
  ramify->callback([&] { action = words_ramify; });
  auto* tree = words_cmd->add_subcommand("tree", "branching of the commutator tree");
  tree->add_option("--k", o.k)->check(CLI::Range(4, 26));
  tree->add_option("--depth", o.depth)->check(CLI::Range(1, 6));
  tree->add_option("--cap", o.cap)->check(CLI::PositiveNumber);
  tree->callback([&] { action = words_tree; });

  auto* lat = app.add_subcommand("lattice", "isometries of the Neron-Severi lattice");
  lat->require_subcommand(1);
  auto* matrix = lat->add_subcommand("matrix", "integer matrix of a word in x, y, z");
  matrix->add_option("word", o.word)->required();
  matrix->callback([&] { action = lattice_matrix; });
  auto* classify = lat->add_subcommand("classify", "elliptic, parabolic or loxodromic");
  classify->add_option("word", o.word)->required();
  classify->callback([&] { action = lattice_classify; });
  auto* lambda = lat->add_subcommand("lambda", "lambda_n along the canonical path");
  lambda->add_option("--length", o.length)->check(CLI::Range(1, 12));
  lambda->add_option("--first-index", o.first_index);
  lambda->add_option("--out", o.out_dir, "directory for lambda.csv and lambda.svg");
  lambda->callback([&] { action = lattice_lambda; });
  auto* limit = lat->add_subcommand("limit", "boundary ray of the normalized classes");
  limit->add_option("--length", o.length)->check(CLI::Range(2, 12));
  limit->add_option("--first-index", o.first_index);
  limit->add_option("--power", o.power, "use powers of this x, y, z word instead of the canonical path");
  limit->add_option("--out", o.out_dir, "directory for null_cone.svg");
  limit->callback([&] { action = lattice_limit; });

  auto* ver = app.add_subcommand("verify", "run a scenario and write its report bundle");
  ver->require_subcommand(1);
  for (auto [name, s] : {std::pair{"gap", experiments::Scenario::gap},
                         std::pair{"real-locus", experiments::Scenario::real_locus}}) {
    auto* cmd = ver->add_subcommand(name, s == experiments::Scenario::gap ? "gap theorem scenario"
                                                                         : "real-locus scenario");
    cmd->add_option("--config", o.config, "TOML configuration file");
    cmd->add_option("--set", o.sets, "override a config key, e.g. --set decay.samples=200");
    cmd->add_option("--out", o.out_dir, "output directory (run.output)");
    cmd->add_option("--seed", o.seed, "run.seed");
    const auto which = s;
    cmd->callback([&, which] { scenario = which; });
  }

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kPass : kUsage;
  }

  Printer printer(o, out);
  try {
    if (scenario) return verify(*scenario, o, printer, err);
    if (action) return action(o, printer);
    err << "no command\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const DomainError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace k3gaps::cli
