#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "k3gaps/cli.hpp"

using namespace k3gaps;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  args.insert(args.begin(), "k3gaps");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("k3gaps_cli_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("words") {
    auto r = call({"words", "reduce", "x y y x"});
    CHECK(r.code == cli::kPass);
    CHECK(r.out.find('e') != std::string::npos);
    CHECK(call({"words", "reduce", "q"}).code == cli::kUsage);
    CHECK(call({"words", "frobnicate"}).code == cli::kUsage);

    r = call({"--json", "words", "level", "--k", "2", "--n", "1"});
    CHECK(r.code == cli::kPass);
    CHECK(json::parse(r.out).is_object());

    r = call({"--json", "words", "ramify", "--k", "5", "--trials", "200"});
    CHECK(r.code == cli::kPass);
    CHECK(json::parse(r.out)["violations"] == 0);
  }

  TEST_CASE("lattice") {
    auto r = call({"--json", "lattice", "classify", "x y z"});
    REQUIRE(r.code == cli::kPass);
    const json j = json::parse(r.out);
    CHECK(j["type"] == "loxodromic");
    CHECK(std::abs(j["spectral_radius"].get<double>() - 17.944272) < 1e-6);
    CHECK(json::parse(call({"--json", "lattice", "classify", "x y"}).out)["type"] == "parabolic");
    CHECK(json::parse(call({"--json", "lattice", "classify", ""}).out)["type"] == "elliptic");

    r = call({"--json", "lattice", "lambda", "--length", "3"});
    REQUIRE(r.code == cli::kPass);
    CHECK(json::parse(r.out)["entries"][0]["lambda_times_12"] == "499724");
  }

  TEST_CASE("verify usage errors") {
    auto r = call({"verify", "gap", "--config", "/no/such/dir/cfg.toml"});
    CHECK(r.code == cli::kUsage);
    CHECK(r.err.find("/no/such/dir/cfg.toml") != std::string::npos);
    CHECK(call({"verify", "gap", "--set", "decay.nonsense=1", "--out", scratch("bad").string()}).code == cli::kUsage);
  }

  TEST_CASE("verify failure exits with 1") {
    // A fixed epsilon far above what the seed condition allows.
    const auto dir = scratch("fail");
    auto r = call({"--json", "verify", "gap", "--out", dir.string(), "--set", "epsilon.mode=fixed", "--set",
                   "epsilon.value=0.5", "--set", "decay.samples=32"});
    CHECK(r.code == cli::kFailure);
    const json j = json::parse(r.out);
    CHECK(j["passed"] == false);
    CHECK(j["schema_version"] == 1);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "config.resolved.toml"));
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("verify gap at small scale") {
    const auto dir = scratch("small");
    auto r = call({"--json", "verify", "gap", "--out", dir.string(), "--set", "decay.samples=48", "--set",
                   "decay.max_level=2", "--set", "decay.level_cap=8", "--set", "decay.full_levels=1", "--set",
                   "mass.samples=4000", "--set", "lattice.path_length=5"});
    CHECK(r.code == cli::kPass);
    const json j = json::parse(r.out);
    CHECK(j["passed"] == true);
    for (const char* f : {"report.json", "config.resolved.toml", "tables/decay.csv", "tables/lambda.csv",
                          "tables/mass_gap.csv", "plots/decay.svg", "plots/lambda.svg", "plots/null_cone.svg"}) {
      CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
    }
    // The echoed configuration precedes the run and names every override.
    CHECK(r.err.find("decay.samples") != std::string::npos);
    std::filesystem::remove_all(dir);
  }
}
