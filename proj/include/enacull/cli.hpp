#pragma once

// Batch commands behind the `enacull` executable.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "enacull/forest.hpp"
#include "enacull/fov.hpp"
#include "enacull/pipeline.hpp"
#include "enacull/rates.hpp"
#include "enacull/simulator.hpp"

namespace enacull::cli {

/// Environment variable that, when set, replaces paths.output_dir.
inline constexpr const char* kOutputDirEnv = "ENACULL_OUTPUT_DIR";

struct Paths {
  std::filesystem::path output_dir = "enacull_out";
  std::optional<std::filesystem::path> observations;  // default <output_dir>/observations.csv
  std::optional<std::filesystem::path> truth;         // default <output_dir>/truth.csv when present
  std::optional<std::filesystem::path> pointing;
  std::optional<std::filesystem::path> ephemeris;
  std::optional<std::filesystem::path> fov_mask;
  std::optional<std::filesystem::path> forest;
  std::optional<std::filesystem::path> geometry;
  std::optional<std::filesystem::path> rates;  // default <output_dir>/rates.csv
};

struct SimulateSettings {
  std::vector<int> orbits{1};
  std::vector<char> arcs{'a'};
  SimConfig base;  // seed and arc are filled per simulated arc
};

struct FovSettings {
  fov::FovConfig config;
  std::optional<double> t0_s;
  std::optional<double> t1_s;
};

struct EvaluateSettings {
  std::string reference = "sme";
  std::string candidate = "stage3";
  double alpha = 0.01;
  bool bonferroni = false;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Paths paths;
  SimulateSettings simulate;
  TrainConfig train;
  std::string train_label_source = "sme";
  PipelineConfig pipeline;
  FovSettings fov;
  RateConfig rates;
  std::string rate_label_source = "stage3";
  std::string map_tag = "synthetic";
  double map_lon_step_deg = 6.0;
  EvaluateSettings evaluate;

  std::filesystem::path observations_path() const;
  std::filesystem::path rates_path() const;
};

/// Parses the JSON config text; unknown keys and bad values raise kConfig.
RunConfig parse_run_config(const std::string& json_text);
/// Reads the file (kInputMissing when absent), parses it, applies the output-dir
/// environment override and the optional seed override.
RunConfig load_run_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);
/// Applies the output-dir environment override in place.
void apply_environment(RunConfig& config);

/// Per-arc simulator config: the base settings with the arc and a seed derived from
/// (seed, orbit, arc).
SimConfig arc_sim_config(const RunConfig& config, OrbitArcId arc);

/// Each command returns the files it wrote, in write order.
std::vector<std::filesystem::path> cmd_simulate(const RunConfig& config);
std::vector<std::filesystem::path> cmd_fov(const RunConfig& config);
std::vector<std::filesystem::path> cmd_features(const RunConfig& config, std::optional<int> orbit);
std::vector<std::filesystem::path> cmd_train(const RunConfig& config, std::optional<int> held_out);
std::vector<std::filesystem::path> cmd_cull(const RunConfig& config, int orbit);
std::vector<std::filesystem::path> cmd_rates(const RunConfig& config);
std::vector<std::filesystem::path> cmd_map(const RunConfig& config);
std::vector<std::filesystem::path> cmd_evaluate(const RunConfig& config);

/// Label grid file written by `cull` for one arc and stage.
std::filesystem::path label_file(const RunConfig& config, const OrbitArcId& arc, int stage);

/// 0 success, 2 configuration or input error, 3 training-data error, 4 missing input.
int exit_code_for(ErrorCode code);

/// Full command-line entry point.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace enacull::cli
