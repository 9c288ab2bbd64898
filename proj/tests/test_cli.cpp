#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "enacull/cli.hpp"

using namespace enacull;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  fs::path dir;

  explicit Workspace(const std::string& name) : dir(fs::temp_directory_path() / ("enacull_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  fs::path config(const std::string& json) const {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << json;
    return p;
  }
};

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "enacull");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string small_corpus(const fs::path& out_dir, const std::string& extra = "") {
  return R"({
  "seed": 5,
  "paths": {"output_dir": ")" + out_dir.string() + R"("},
  "simulate": {
    "orbits": [1, 2, 3], "arcs": ["a"], "n_time": 30, "esa_steps": [3, 4],
    "signal": {"base": 2.0, "peak": 4.0, "center": 30, "width": 6},
    "isotropic_bg_rate": 1.0, "monitor_coupling": 0.5,
    "bursts": [{"esa_steps": [3, 4], "angles": [0, 59], "times": [10, 16], "rate": 15.0}]
  },
  "train": {"n_trees": 10, "sample_size": 4000}
  )" + extra + "}";
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("exit code mapping") {
    CHECK(cli::exit_code_for(ErrorCode::kConfig) == 2);
    CHECK(cli::exit_code_for(ErrorCode::kValidation) == 2);
    CHECK(cli::exit_code_for(ErrorCode::kTrainingData) == 3);
    CHECK(cli::exit_code_for(ErrorCode::kInputMissing) == 4);
  }

  TEST_CASE("config parsing rejects unknown keys and bad spans") {
    CHECK_THROWS_AS(cli::parse_run_config(R"({"sede": 1})"), Error);
    CHECK_THROWS_AS(cli::parse_run_config(R"({"train": {"trees": 3}})"), Error);
    CHECK_THROWS_AS(cli::parse_run_config(R"({"simulate": {"arcs": ["c"]}})"), Error);
    try {
      cli::parse_run_config(
          R"({"simulate": {"n_time": 10, "bursts": [{"angles": [0, 3], "times": [5, 12], "rate": 1}]}})");
      FAIL("expected config error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kConfig);
      CHECK(std::string(e.what()).find("bursts[0] time") != std::string::npos);
    }
    const auto c = cli::parse_run_config(R"({"seed": 9, "pipeline": {"stage3_run_len": 4}})");
    CHECK(c.seed == 9);
    CHECK(c.pipeline.stage3_run_len == 4);
    CHECK(c.pipeline.threshold == 0.40);
  }

  TEST_CASE("simulate writes matching observation and truth tables") {
    Workspace ws("simulate");
    const auto out = ws.dir / "out";
    const auto cfg = ws.config(small_corpus(out));
    const auto r = run_cli({"--config", cfg.string(), "simulate"});
    REQUIRE(r.code == 0);
    CHECK(line_count(out / "observations.csv") == line_count(out / "truth.csv"));
    CHECK(line_count(out / "observations.csv") == 1 + 3 * 2 * 60 * 30);
    const auto first = slurp(out / "observations.csv");
    REQUIRE(run_cli({"--config", cfg.string(), "simulate"}).code == 0);
    CHECK(slurp(out / "observations.csv") == first);
  }

  TEST_CASE("invalid span exits with 2 and names the span") {
    Workspace ws("badspan");
    const auto cfg = ws.config(R"({"simulate": {"n_time": 10, "bursts": [{"angles": [0, 3], "times": [5, 12]}]}})");
    const auto r = run_cli({"--config", cfg.string(), "simulate"});
    CHECK(r.code == 2);
    CHECK(r.err.find("bursts[0] time") != std::string::npos);
  }

  TEST_CASE("missing config or inputs exit with 4") {
    Workspace ws("missing");
    CHECK(run_cli({"--config", (ws.dir / "nope.json").string(), "simulate"}).code == 4);
    const auto cfg = ws.config(small_corpus(ws.dir / "empty"));
    CHECK(run_cli({"--config", cfg.string(), "cull", "--orbit", "2"}).code == 4);
    CHECK(run_cli({"--config", cfg.string(), "evaluate"}).code == 4);
  }

  TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli({"simulate"}).code == 2);
    CHECK(run_cli({"--config", "x.json"}).code == 2);
    CHECK(run_cli({"--config", "x.json", "bogus"}).code == 2);
  }

  TEST_CASE("cull without usable training rows exits with 3") {
    Workspace ws("notrain");
    const auto out = ws.dir / "out";
    const auto cfg = ws.config(R"({"seed": 1, "paths": {"output_dir": ")" + out.string() +
                               R"("}, "simulate": {"orbits": [4], "n_time": 5, "esa_steps": [2]}})");
    REQUIRE(run_cli({"--config", cfg.string(), "simulate"}).code == 0);
    const auto r = run_cli({"--config", cfg.string(), "cull", "--orbit", "4"});
    CHECK(r.code == 3);
  }

  TEST_CASE("cull writes labels only for the requested orbit and evaluates") {
    Workspace ws("cull");
    const auto out = ws.dir / "out";
    const auto cfg = ws.config(small_corpus(out));
    REQUIRE(run_cli({"--config", cfg.string(), "simulate"}).code == 0);
    const auto r = run_cli({"--config", cfg.string(), "cull", "--orbit", "2"});
    REQUIRE(r.code == 0);
    for (int stage = 1; stage <= 3; ++stage) {
      CHECK(fs::exists(out / ("labels_2a_stage" + std::to_string(stage) + ".csv")));
      CHECK_FALSE(fs::exists(out / ("labels_1a_stage" + std::to_string(stage) + ".csv")));
    }
    CHECK(fs::exists(out / "goodtimes_2a.csv"));
    CHECK(fs::exists(out / "goodtimes_2a_exceptions.csv"));
    CHECK(line_count(out / "labels_2a_stage3.csv") == 1 + 2 * 60 * 30);
    const auto stage3 = slurp(out / "labels_2a_stage3.csv");
    REQUIRE(run_cli({"--config", cfg.string(), "cull", "--orbit", "2"}).code == 0);
    CHECK(slurp(out / "labels_2a_stage3.csv") == stage3);

    REQUIRE(run_cli({"--config", cfg.string(), "rates"}).code == 0);
    CHECK(line_count(out / "rates.csv") == 1 + 2 * 60);
    REQUIRE(run_cli({"--config", cfg.string(), "map"}).code == 0);
    CHECK(fs::exists(out / "map_synthetic_esa3.pgm"));
    CHECK(fs::exists(out / "map_synthetic_esa4_values.csv"));

    const auto e = run_cli({"--config", cfg.string(), "evaluate"});
    REQUIRE(e.code == 0);
    const auto groups = slurp(out / "evaluation_rate_groups.csv");
    CHECK(std::count(groups.begin(), groups.end(), '\n') == 7);
    CHECK(fs::exists(out / "evaluation_report.txt"));
  }

  TEST_CASE("labels compared with themselves give accuracy 1") {
    Workspace ws("self");
    const auto out = ws.dir / "out";
    const auto cfg = ws.config(small_corpus(out, R"(, "evaluate": {"reference": "sme", "candidate": "sme"})"));
    REQUIRE(run_cli({"--config", cfg.string(), "simulate"}).code == 0);
    REQUIRE(run_cli({"--config", cfg.string(), "evaluate"}).code == 0);
    const auto report = slurp(out / "evaluation_report.txt");
    CHECK(report.find("Accuracy: 1\n") != std::string::npos);
  }

  TEST_CASE("output directory environment override") {
    Workspace ws("env");
    const auto cfg = ws.config(small_corpus(ws.dir / "configured"));
    const auto redirected = ws.dir / "redirected";
    ::setenv(cli::kOutputDirEnv, redirected.c_str(), 1);
    const auto r = run_cli({"--config", cfg.string(), "simulate"});
    ::unsetenv(cli::kOutputDirEnv);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(redirected / "observations.csv"));
    CHECK_FALSE(fs::exists(ws.dir / "configured" / "observations.csv"));
  }

  TEST_CASE("train then cull with a saved forest") {
    Workspace ws("train");
    const auto out = ws.dir / "out";
    const auto cfg = ws.config(small_corpus(out));
    REQUIRE(run_cli({"--config", cfg.string(), "simulate"}).code == 0);
    REQUIRE(run_cli({"--config", cfg.string(), "train", "--orbit", "1"}).code == 0);
    REQUIRE(fs::exists(out / "forest.txt"));
    REQUIRE(run_cli({"--config", cfg.string(), "features", "--orbit", "1"}).code == 0);
    CHECK(line_count(out / "features.csv") == 1 + 2 * 60 * 30);

    const auto cfg2 = ws.config(R"({"seed": 5, "paths": {"output_dir": ")" + out.string() +
                                R"(", "forest": ")" + (out / "forest.txt").string() + R"("}})");
    CHECK(run_cli({"--config", cfg2.string(), "cull", "--orbit", "1"}).code == 0);
    CHECK(fs::exists(out / "labels_1a_stage2.csv"));
  }
}
