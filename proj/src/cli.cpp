#include "enacull/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "enacull/features.hpp"
#include "enacull/rng.hpp"
#include "enacull/stats.hpp"
#include "enacull/table.hpp"

namespace enacull::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Config parsing

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  require(obj.is_object(), ErrorCode::kConfig, fmt::format("config: {} must be an object", where));
  for (const auto& [key, value] : obj.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return key == k; });
    require(known, ErrorCode::kConfig, fmt::format("config: unknown key '{}' in {}", key, where));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::kConfig, fmt::format("config: {}.{} has the wrong type", where, key));
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, std::optional<T>& out, const std::string& where) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  T value{};
  read(obj, key, value, where);
  out = value;
}

void read_path(const json& obj, const char* key, std::optional<fs::path>& out) {
  std::optional<std::string> s;
  read_opt(obj, key, s, "paths");
  if (s) out = fs::path(*s);
}

Span read_span(const json& v, const std::string& where) {
  require(v.is_array() && v.size() == 2 && v[0].is_number_integer() && v[1].is_number_integer(),
          ErrorCode::kConfig, fmt::format("config: {} must be [lo, hi]", where));
  return Span{v[0].get<int>(), v[1].get<int>()};
}

void parse_simulate(const json& s, SimulateSettings& out) {
  const std::string where = "simulate";
  check_keys(s, {"orbits", "arcs", "n_time", "esa_steps", "signal", "signal_profile",
                 "isotropic_bg_rate", "bursts", "fov_bands", "spun_span", "spun_rate", "gaps",
                 "monitor_coupling", "monitor_base_low", "monitor_base_high", "start_epoch_s",
                 "interval_duration_s", "duration_jitter", "sme_column_ratio"},
             where);
  read(s, "orbits", out.orbits, where);
  if (s.contains("arcs")) {
    std::vector<std::string> arcs;
    read(s, "arcs", arcs, where);
    out.arcs.clear();
    for (const auto& a : arcs) {
      require(a == "a" || a == "b", ErrorCode::kConfig,
              fmt::format("config: simulate.arcs entry '{}' must be a or b", a));
      out.arcs.push_back(a[0]);
    }
  }
  require(!out.orbits.empty() && !out.arcs.empty(), ErrorCode::kConfig,
          "config: simulate.orbits and simulate.arcs must be non-empty");
  SimConfig& c = out.base;
  read(s, "n_time", c.n_time, where);
  if (s.contains("esa_steps")) {
    std::vector<int> steps;
    read(s, "esa_steps", steps, where);
    c.esa_steps.clear();
    for (const int e : steps) {
      require(e >= kMinEsaStep && e <= kMaxEsaStep, ErrorCode::kConfig,
              fmt::format("config: simulate.esa_steps holds {} outside [2,6]", e));
      c.esa_steps.emplace_back(e);
    }
  }
  if (s.contains("signal")) {
    const json& g = s.at("signal");
    check_keys(g, {"base", "peak", "center", "width"}, "simulate.signal");
    double base = 0, peak = 0, center = 30, width = 5;
    read(g, "base", base, "simulate.signal");
    read(g, "peak", peak, "simulate.signal");
    read(g, "center", center, "simulate.signal");
    read(g, "width", width, "simulate.signal");
    c.signal_profile = bump_signal_profile(base, peak, center, width);
  }
  if (s.contains("signal_profile")) {
    std::vector<double> profile;
    read(s, "signal_profile", profile, where);
    require(profile.size() == kAngleBins, ErrorCode::kConfig,
            "config: simulate.signal_profile must hold 60 values");
    std::copy(profile.begin(), profile.end(), c.signal_profile.begin());
  }
  read(s, "isotropic_bg_rate", c.isotropic_bg_rate, where);
  if (s.contains("bursts")) {
    std::size_t i = 0;
    for (const auto& b : s.at("bursts")) {
      const std::string w = fmt::format("simulate.bursts[{}]", i++);
      check_keys(b, {"esa_steps", "angles", "times", "rate"}, w);
      BurstSpec spec;
      read(b, "esa_steps", spec.esa_steps, w);
      require(b.contains("angles") && b.contains("times"), ErrorCode::kConfig,
              fmt::format("config: {} needs angles and times", w));
      spec.angles = read_span(b.at("angles"), w + ".angles");
      spec.times = read_span(b.at("times"), w + ".times");
      read(b, "rate", spec.rate, w);
      c.bursts.push_back(spec);
    }
  }
  if (s.contains("fov_bands")) {
    std::size_t i = 0;
    for (const auto& b : s.at("fov_bands")) {
      const std::string w = fmt::format("simulate.fov_bands[{}]", i++);
      check_keys(b, {"target", "angles", "times", "rate"}, w);
      FovBandSpec spec;
      std::string target = "earth";
      read(b, "target", target, w);
      spec.target = parse_body(target);
      require(b.contains("angles") && b.contains("times"), ErrorCode::kConfig,
              fmt::format("config: {} needs angles and times", w));
      spec.angles = read_span(b.at("angles"), w + ".angles");
      spec.times = read_span(b.at("times"), w + ".times");
      read(b, "rate", spec.rate, w);
      c.fov_bands.push_back(spec);
    }
  }
  if (s.contains("spun_span") && !s.at("spun_span").is_null()) {
    c.spun_span = read_span(s.at("spun_span"), "simulate.spun_span");
  }
  read(s, "spun_rate", c.spun_rate, where);
  if (s.contains("gaps")) {
    std::size_t i = 0;
    for (const auto& g : s.at("gaps")) {
      const std::string w = fmt::format("simulate.gaps[{}]", i++);
      check_keys(g, {"esa_steps", "angles", "times"}, w);
      GapSpec spec;
      read(g, "esa_steps", spec.esa_steps, w);
      if (g.contains("angles")) spec.angles = read_span(g.at("angles"), w + ".angles");
      require(g.contains("times"), ErrorCode::kConfig, fmt::format("config: {} needs times", w));
      spec.times = read_span(g.at("times"), w + ".times");
      c.gaps.push_back(spec);
    }
  }
  read(s, "monitor_coupling", c.monitor_coupling, where);
  read(s, "monitor_base_low", c.monitor_base_low, where);
  read(s, "monitor_base_high", c.monitor_base_high, where);
  read(s, "start_epoch_s", c.start_epoch_s, where);
  read(s, "interval_duration_s", c.interval_duration_s, where);
  read(s, "duration_jitter", c.duration_jitter, where);
  read(s, "sme_column_ratio", c.sme_column_ratio, where);
}

void check_label_source(const std::string& source, const std::string& where) {
  static const std::set<std::string> kSources = {"sme", "truth", "stage1", "stage2", "stage3"};
  require(kSources.count(source) > 0, ErrorCode::kConfig,
          fmt::format("config: {} must be one of sme, truth, stage1, stage2, stage3 (got '{}')",
                      where, source));
}

}  // namespace

fs::path RunConfig::observations_path() const {
  return paths.observations ? *paths.observations : paths.output_dir / "observations.csv";
}

fs::path RunConfig::rates_path() const {
  return paths.rates ? *paths.rates : paths.output_dir / "rates.csv";
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, fmt::format("config: invalid JSON: {}", e.what()));
  }
  check_keys(root, {"seed", "paths", "simulate", "train", "pipeline", "fov", "rates", "map", "evaluate"},
             "the top level");
  RunConfig c;
  read(root, "seed", c.seed, "config");

  if (root.contains("paths")) {
    const json& p = root.at("paths");
    check_keys(p, {"output_dir", "observations", "truth", "pointing", "ephemeris", "fov_mask",
                   "forest", "geometry", "rates"},
               "paths");
    std::optional<fs::path> out;
    read_path(p, "output_dir", out);
    if (out) c.paths.output_dir = *out;
    read_path(p, "observations", c.paths.observations);
    read_path(p, "truth", c.paths.truth);
    read_path(p, "pointing", c.paths.pointing);
    read_path(p, "ephemeris", c.paths.ephemeris);
    read_path(p, "fov_mask", c.paths.fov_mask);
    read_path(p, "forest", c.paths.forest);
    read_path(p, "geometry", c.paths.geometry);
    read_path(p, "rates", c.paths.rates);
  }
  if (root.contains("simulate")) parse_simulate(root.at("simulate"), c.simulate);
  if (root.contains("train")) {
    const json& t = root.at("train");
    check_keys(t, {"n_trees", "mtry", "min_leaf", "max_depth", "sample_size", "threshold",
                   "hard_vote", "label_source"},
               "train");
    read(t, "n_trees", c.train.n_trees, "train");
    read(t, "mtry", c.train.mtry, "train");
    read(t, "min_leaf", c.train.min_leaf, "train");
    read(t, "max_depth", c.train.max_depth, "train");
    read(t, "sample_size", c.train.sample_size, "train");
    read(t, "threshold", c.train.threshold, "train");
    read(t, "hard_vote", c.train.hard_vote, "train");
    read(t, "label_source", c.train_label_source, "train");
    require(c.train_label_source == "sme" || c.train_label_source == "truth", ErrorCode::kConfig,
            "config: train.label_source must be sme or truth");
  }
  if (root.contains("pipeline")) {
    const json& p = root.at("pipeline");
    check_keys(p, {"threshold", "stage3_low", "stage3_col_frac", "stage3_run_len"}, "pipeline");
    read(p, "threshold", c.pipeline.threshold, "pipeline");
    read(p, "stage3_low", c.pipeline.stage3_low, "pipeline");
    read(p, "stage3_col_frac", c.pipeline.stage3_col_frac, "pipeline");
    read(p, "stage3_run_len", c.pipeline.stage3_run_len, "pipeline");
  }
  if (root.contains("fov")) {
    const json& f = root.at("fov");
    check_keys(f, {"fov_diameter_deg", "magnetosphere_radius_re", "earth_radius_km",
                   "spins_per_sample", "spin_period_s", "t0_s", "t1_s"},
               "fov");
    read(f, "fov_diameter_deg", c.fov.config.fov_diameter_deg, "fov");
    read(f, "magnetosphere_radius_re", c.fov.config.magnetosphere_radius_re, "fov");
    read(f, "earth_radius_km", c.fov.config.earth_radius_km, "fov");
    read(f, "spins_per_sample", c.fov.config.spins_per_sample, "fov");
    read(f, "spin_period_s", c.fov.config.spin_period_s, "fov");
    read_opt(f, "t0_s", c.fov.t0_s, "fov");
    read_opt(f, "t1_s", c.fov.t1_s, "fov");
  }
  if (root.contains("rates")) {
    const json& r = root.at("rates");
    check_keys(r, {"isotropic_bg_override", "bg_percentile", "label_source"}, "rates");
    read_opt(r, "isotropic_bg_override", c.rates.isotropic_bg_override, "rates");
    read(r, "bg_percentile", c.rates.bg_percentile, "rates");
    read(r, "label_source", c.rate_label_source, "rates");
  }
  if (root.contains("map")) {
    const json& m = root.at("map");
    check_keys(m, {"tag", "lon_step_deg"}, "map");
    read(m, "tag", c.map_tag, "map");
    read(m, "lon_step_deg", c.map_lon_step_deg, "map");
  }
  if (root.contains("evaluate")) {
    const json& e = root.at("evaluate");
    check_keys(e, {"reference", "candidate", "alpha", "bonferroni"}, "evaluate");
    read(e, "reference", c.evaluate.reference, "evaluate");
    read(e, "candidate", c.evaluate.candidate, "evaluate");
    read(e, "alpha", c.evaluate.alpha, "evaluate");
    read(e, "bonferroni", c.evaluate.bonferroni, "evaluate");
  }

  try {
    c.train.validate();
    c.pipeline.validate();
    c.fov.config.validate();
    c.rates.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("config: ") + e.what());
  }
  check_label_source(c.rate_label_source, "rates.label_source");
  check_label_source(c.evaluate.reference, "evaluate.reference");
  check_label_source(c.evaluate.candidate, "evaluate.candidate");
  require(c.evaluate.alpha > 0.0 && c.evaluate.alpha < 1.0, ErrorCode::kConfig,
          "config: evaluate.alpha must lie in (0,1)");
  require(c.map_lon_step_deg > 0.0, ErrorCode::kConfig, "config: map.lon_step_deg must be positive");
  require(!c.map_tag.empty() && c.map_tag.find_first_of("/\\ ,") == std::string::npos,
          ErrorCode::kConfig, "config: map.tag must be a non-empty name without separators");

  // Span errors surface here, before any file is written.
  for (const int orbit : c.simulate.orbits) {
    for (const char arc : c.simulate.arcs) validate(arc_sim_config(c, OrbitArcId{orbit, arc}));
  }
  return c;
}

void apply_environment(RunConfig& config) {
  if (const char* dir = std::getenv(kOutputDirEnv); dir != nullptr && *dir != '\0') {
    config.paths.output_dir = dir;
  }
}

RunConfig load_run_config(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  std::ifstream in = table::open_input(path);
  std::stringstream text;
  text << in.rdbuf();
  RunConfig c = parse_run_config(text.str());
  if (seed_override) c.seed = *seed_override;
  apply_environment(c);
  return c;
}

SimConfig arc_sim_config(const RunConfig& config, OrbitArcId arc) {
  SimConfig c = config.simulate.base;
  c.arc = arc;
  c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(arc.orbit) * 32 +
                                        static_cast<std::uint64_t>(arc.arc - 'a'));
  return c;
}

fs::path label_file(const RunConfig& config, const OrbitArcId& arc, int stage) {
  return config.paths.output_dir / fmt::format("labels_{}_stage{}.csv", arc.str(), stage);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTrainingData:
      return 3;
    case ErrorCode::kInputMissing:
      return 4;
    default:
      return 2;
  }
}

// ---------------------------------------------------------------------------
// Shared command plumbing

namespace {

template <typename Writer>
fs::path write_file(const fs::path& path, Writer&& writer) {
  std::ofstream out = table::open_output(path);
  writer(out);
  out.flush();
  require(out.good(), ErrorCode::kIo, "failed writing " + path.string());
  return path;
}

std::vector<Observation> load_observations(const RunConfig& config) {
  auto obs = ingest_observations(config.observations_path());
  const fs::path truth = config.paths.truth ? *config.paths.truth : config.paths.output_dir / "truth.csv";
  if (config.paths.truth || fs::exists(truth)) attach_truth(obs, truth);
  return obs;
}

std::optional<fov::ExclusionMask> load_mask(const RunConfig& config) {
  if (!config.paths.fov_mask) return std::nullopt;
  std::ifstream in = table::open_input(*config.paths.fov_mask);
  return fov::read_mask(in);
}

struct ArcInputs {
  FeatureMatrix features;
  FovCells fov_cells;
};

ArcInputs arc_inputs(const ArcGrid& grid, const std::optional<fov::ExclusionMask>& mask) {
  ArcInputs in;
  in.fov_cells = fov_cells_from_visibility(grid);
  if (mask) {
    const auto body_mask = fov::cell_mask(*mask, grid.times());
    in.features = compute_features(grid, &body_mask);
    const FovCells from_mask = fov_cells_from_mask(grid, body_mask);
    for (std::size_t c = 0; c < in.fov_cells.size(); ++c) in.fov_cells[c] |= from_mask[c];
  } else {
    in.features = compute_features(grid);
  }
  return in;
}

Forest train_forest(const RunConfig& config, const std::vector<ArcGrid>& grids,
                    const std::optional<fov::ExclusionMask>& mask, int held_out) {
  FeatureMatrix pool;
  for (const auto& g : grids) {
    if (g.arc().orbit != held_out) pool.append(arc_inputs(g, mask).features);
  }
  const auto& labels = config.train_label_source == "truth" ? pool.truth : pool.sme;
  const TrainingSet data = sample_training_set(pool, labels, held_out, config.train);
  return fit_forest(data, config.train);
}

/// Labels of one arc from the named source, or nothing when that source has none.
std::optional<LabelGrid> labels_for(const RunConfig& config, const ArcGrid& grid,
                                    const std::string& source) {
  LabelGrid labels;
  if (source == "sme" || source == "truth") {
    labels = source == "sme" ? sme_label_grid(grid) : truth_label_grid(grid);
    if (labels.count(0) + labels.count(1) == 0) return std::nullopt;
    return labels;
  }
  const int stage = source.back() - '0';
  const fs::path path = label_file(config, grid.arc(), stage);
  if (!fs::exists(path)) return std::nullopt;
  std::ifstream in = table::open_input(path);
  return read_label_grid(in, grid, path.string());
}

GeometryTable load_geometry(const RunConfig& config, const std::vector<OrbitArcId>& arcs) {
  if (!config.paths.geometry) return synthetic_geometry(arcs, config.map_lon_step_deg);
  std::ifstream in = table::open_input(*config.paths.geometry);
  return read_geometry(in, config.paths.geometry->string());
}

std::vector<OrbitArcId> arcs_of(const std::vector<ArcGrid>& grids) {
  std::vector<OrbitArcId> arcs;
  for (const auto& g : grids) arcs.push_back(g.arc());
  return arcs;
}

std::set<int> esa_values(const std::vector<EnaRate>& rates) {
  std::set<int> out;
  for (const auto& r : rates) out.insert(r.esa);
  return out;
}

std::string opt_text(const std::optional<double>& v) {
  return v ? fmt::format("{}", *v) : std::string("NA");
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands

std::vector<fs::path> cmd_simulate(const RunConfig& config) {
  std::vector<TruthLabeledArc> arcs;
  std::vector<Observation> rows;
  std::vector<int> orbits = config.simulate.orbits;
  std::sort(orbits.begin(), orbits.end());
  orbits.erase(std::unique(orbits.begin(), orbits.end()), orbits.end());
  std::vector<char> letters = config.simulate.arcs;
  std::sort(letters.begin(), letters.end());
  letters.erase(std::unique(letters.begin(), letters.end()), letters.end());
  for (const int orbit : orbits) {
    for (const char arc : letters) {
      arcs.push_back(simulate_arc(arc_sim_config(config, OrbitArcId{orbit, arc})));
      const auto arc_rows = observation_rows(arcs.back());
      rows.insert(rows.end(), arc_rows.begin(), arc_rows.end());
    }
  }
  const fs::path obs_path = config.observations_path();
  const fs::path truth_path = config.paths.truth ? *config.paths.truth : config.paths.output_dir / "truth.csv";
  return {write_file(obs_path, [&](std::ostream& o) { write_observations(o, rows); }),
          write_file(truth_path, [&](std::ostream& o) { write_truth_table(o, arcs); })};
}

std::vector<fs::path> cmd_fov(const RunConfig& config) {
  require(config.paths.pointing.has_value() && config.paths.ephemeris.has_value(), ErrorCode::kConfig,
          "fov needs paths.pointing and paths.ephemeris");
  const auto pointing = fov::read_pointing(*config.paths.pointing);
  const auto ephemeris = fov::read_ephemeris(*config.paths.ephemeris);
  std::optional<double> t0 = config.fov.t0_s;
  std::optional<double> t1 = config.fov.t1_s;
  if (!t0 || !t1) {
    require(fs::exists(config.observations_path()), ErrorCode::kConfig,
            "fov needs fov.t0_s and fov.t1_s or an observation table to take the time range from");
    const auto obs = ingest_observations(config.observations_path());
    require(!obs.empty(), ErrorCode::kConfig, "observation table is empty; set fov.t0_s and fov.t1_s");
    double lo = obs.front().time.start_epoch_s;
    double hi = lo;
    for (const auto& o : obs) {
      lo = std::min(lo, o.time.start_epoch_s);
      hi = std::max(hi, o.time.start_epoch_s + o.time.duration_s);
    }
    if (!t0) t0 = lo;
    if (!t1) t1 = hi;
  }
  const auto mask = fov::build_masks(pointing, ephemeris, config.fov.config, *t0, *t1);
  const fs::path path = config.paths.fov_mask ? *config.paths.fov_mask : config.paths.output_dir / "fov_mask.csv";
  return {write_file(path, [&](std::ostream& o) { fov::write_mask(o, mask); })};
}

std::vector<fs::path> cmd_features(const RunConfig& config, std::optional<int> orbit) {
  const auto grids = build_grids(load_observations(config));
  const auto mask = load_mask(config);
  FeatureMatrix all;
  for (const auto& g : grids) {
    if (!orbit || g.arc().orbit == *orbit) all.append(arc_inputs(g, mask).features);
  }
  require(!orbit || all.rows() > 0, ErrorCode::kInputMissing,
          fmt::format("orbit {} has no observations", orbit.value_or(0)));
  return {write_file(config.paths.output_dir / "features.csv",
                     [&](std::ostream& o) { write_feature_matrix(o, all); })};
}

std::vector<fs::path> cmd_train(const RunConfig& config, std::optional<int> held_out) {
  const auto grids = build_grids(load_observations(config));
  const Forest forest = train_forest(config, grids, load_mask(config),
                                     held_out.value_or(std::numeric_limits<int>::min()));
  const fs::path path = config.paths.forest ? *config.paths.forest : config.paths.output_dir / "forest.txt";
  return {write_file(path, [&](std::ostream& o) { save_forest(o, forest); })};
}

std::vector<fs::path> cmd_cull(const RunConfig& config, int orbit) {
  const auto grids = build_grids(load_observations(config));
  const auto mask = load_mask(config);
  const bool any = std::any_of(grids.begin(), grids.end(), [&](const ArcGrid& g) { return g.arc().orbit == orbit; });
  require(any, ErrorCode::kInputMissing, fmt::format("orbit {} has no observations", orbit));

  Forest forest;
  if (config.paths.forest) {
    std::ifstream in = table::open_input(*config.paths.forest);
    forest = load_forest(in);
  } else {
    forest = train_forest(config, grids, mask, orbit);
  }
  forest.config.threshold = config.pipeline.threshold;

  std::vector<fs::path> written;
  for (const auto& grid : grids) {
    if (grid.arc().orbit != orbit) continue;
    const ArcInputs in = arc_inputs(grid, mask);
    const PipelineResult r = run_pipeline(forest, in.features, grid, in.fov_cells, config.pipeline);
    const GoodTimesList goodtimes = export_goodtimes(r.stage3, grid);
    const std::string arc = grid.arc().str();
    const fs::path dir = config.paths.output_dir;
    written.push_back(write_file(label_file(config, grid.arc(), 1), [&](std::ostream& o) { write_label_grid(o, r.stage1); }));
    written.push_back(write_file(label_file(config, grid.arc(), 2), [&](std::ostream& o) { write_label_grid(o, r.stage2.labels); }));
    written.push_back(write_file(label_file(config, grid.arc(), 3), [&](std::ostream& o) { write_label_grid(o, r.stage3); }));
    written.push_back(write_file(dir / fmt::format("goodtimes_{}.csv", arc),
                                 [&](std::ostream& o) { write_goodtimes(o, goodtimes); }));
    written.push_back(write_file(dir / fmt::format("goodtimes_{}_exceptions.csv", arc),
                                 [&](std::ostream& o) { write_goodtime_exceptions(o, goodtimes); }));
    written.push_back(write_file(dir / fmt::format("diagnostics_{}.txt", arc), [&](std::ostream& o) {
      for (const auto& d : r.stage2.diagnostics) o << d << '\n';
    }));
  }
  return written;
}

std::vector<fs::path> cmd_rates(const RunConfig& config) {
  const auto grids = build_grids(load_observations(config));
  std::vector<EnaRate> rates;
  bool any = false;
  for (const auto& grid : grids) {
    const auto labels = labels_for(config, grid, config.rate_label_source);
    if (!labels) continue;
    any = true;
    const auto arc_rates = compute_rates(grid, *labels, config.rates);
    rates.insert(rates.end(), arc_rates.begin(), arc_rates.end());
  }
  require(any, ErrorCode::kInputMissing,
          fmt::format("no arc has {} labels", config.rate_label_source));
  return {write_file(config.rates_path(), [&](std::ostream& o) { write_rates(o, rates); })};
}

std::vector<fs::path> cmd_map(const RunConfig& config) {
  std::ifstream in = table::open_input(config.rates_path());
  const auto rates = read_rates(in, config.rates_path().string());
  std::vector<OrbitArcId> arcs;
  if (fs::exists(config.observations_path())) {
    arcs = arcs_of(build_grids(ingest_observations(config.observations_path())));
  } else {
    for (const auto& r : rates) arcs.push_back(r.arc);
  }
  const GeometryTable geometry = load_geometry(config, arcs);
  std::vector<fs::path> written;
  for (const int esa : esa_values(rates)) {
    const SkyMap map = build_sky_map(rates, geometry, esa, config.map_tag);
    const std::string stem = fmt::format("map_{}_esa{}", config.map_tag, esa);
    const fs::path dir = config.paths.output_dir;
    written.push_back(write_file(dir / (stem + "_values.csv"), [&](std::ostream& o) { write_map_grid(o, map.value); }));
    written.push_back(write_file(dir / (stem + "_exposure.csv"), [&](std::ostream& o) { write_map_grid(o, map.exposure); }));
    written.push_back(write_file(dir / (stem + ".pgm"), [&](std::ostream& o) { write_map_pgm(o, map); }));
  }
  return written;
}

std::vector<fs::path> cmd_evaluate(const RunConfig& config) {
  const auto& ev = config.evaluate;
  const auto grids = build_grids(load_observations(config));
  const GeometryTable geometry = load_geometry(config, arcs_of(grids));

  struct ArcRow {
    std::string arc;
    ConfusionMetrics metrics;
  };
  std::vector<ArcRow> arc_rows;
  ConfusionCounts total;
  std::vector<EnaRate> ref_rates;
  std::vector<EnaRate> cand_rates;
  bool have_reference = false;
  for (const auto& grid : grids) {
    const auto ref = labels_for(config, grid, ev.reference);
    if (!ref) continue;
    have_reference = true;
    const auto cand = labels_for(config, grid, ev.candidate);
    if (!cand) continue;
    const ConfusionMetrics m = confusion_metrics(cand->labels, ref->labels);
    arc_rows.push_back({grid.arc().str(), m});
    total.tp += m.counts.tp;
    total.fp += m.counts.fp;
    total.tn += m.counts.tn;
    total.fn += m.counts.fn;
    const auto r = compute_rates(grid, *ref, config.rates);
    const auto c = compute_rates(grid, *cand, config.rates);
    ref_rates.insert(ref_rates.end(), r.begin(), r.end());
    cand_rates.insert(cand_rates.end(), c.begin(), c.end());
  }
  require(have_reference, ErrorCode::kInputMissing,
          fmt::format("no arc has reference ({}) labels", ev.reference));
  require(!arc_rows.empty(), ErrorCode::kInputMissing,
          fmt::format("no arc has both {} and {} labels", ev.reference, ev.candidate));

  const fs::path dir = config.paths.output_dir;
  std::vector<fs::path> written;
  const ConfusionMetrics overall = confusion_metrics(total);
  written.push_back(write_file(dir / "evaluation_confusion.csv", [&](std::ostream& o) {
    o << "arc,tp,fp,tn,fn,accuracy,sensitivity,specificity\n";
    auto line = [&](const std::string& name, const ConfusionMetrics& m) {
      o << fmt::format("{},{},{},{},{},{},{},{}\n", name, m.counts.tp, m.counts.fp, m.counts.tn,
                       m.counts.fn, opt_text(m.accuracy), opt_text(m.sensitivity),
                       opt_text(m.specificity));
    };
    for (const auto& row : arc_rows) line(row.arc, row.metrics);
    line("all", overall);
  }));

  const auto groups = rate_ratio_by_group(ref_rates, cand_rates);
  written.push_back(write_file(dir / "evaluation_rate_groups.csv", [&](std::ostream& o) {
    o << "exposure_group,n,median_rate_ratio\n";
    for (const auto& g : groups) o << fmt::format("{},{},{}\n", g.group, g.n, opt_text(g.median_ratio));
  }));

  std::vector<MapTestRow> map_rows;
  std::set<int> esas = esa_values(ref_rates);
  for (const int e : esa_values(cand_rates)) esas.insert(e);
  for (const int esa : esas) {
    const SkyMap ref_map = build_sky_map(ref_rates, geometry, esa, config.map_tag);
    const SkyMap cand_map = build_sky_map(cand_rates, geometry, esa, config.map_tag);
    MapTestRow row{config.map_tag, esa, std::nullopt};
    try {
      const MapComparison cmp = compare_maps(ref_map, cand_map, ev.alpha, ev.bonferroni);
      row.passes = std::array<bool, 3>{cmp.ks_pass, cmp.ccf_pass, cmp.ccc_pass};
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kContract) throw;
    }
    map_rows.push_back(row);
    written.push_back(write_file(dir / fmt::format("evaluation_pctdiff_{}_esa{}.csv", config.map_tag, esa),
                                 [&](std::ostream& o) { write_map_grid(o, percent_diff(cand_map, ref_map)); }));
  }
  const MapTestSummary summary = summarize_map_tests(map_rows, ev.alpha, ev.bonferroni);
  written.push_back(write_file(dir / "evaluation_map_tests.csv",
                               [&](std::ostream& o) { write_map_test_csv(o, summary); }));

  written.push_back(write_file(dir / "evaluation_report.txt", [&](std::ostream& o) {
    o << fmt::format("Reference labels: {}\nCandidate labels: {}\n\n", ev.reference, ev.candidate);
    o << fmt::format("Cells compared: {}\nAccuracy: {}\nSensitivity: {}\nSpecificity: {}\n",
                     overall.counts.total(), opt_text(overall.accuracy),
                     opt_text(overall.sensitivity), opt_text(overall.specificity));
    std::vector<double> accuracies;
    for (const auto& row : arc_rows) {
      if (row.metrics.accuracy) accuracies.push_back(*row.metrics.accuracy);
    }
    if (!accuracies.empty()) {
      const auto [lo, hi] = empirical_interval(accuracies, 0.95);
      o << fmt::format("Per-arc accuracy 95% empirical interval: [{}, {}] over {} arcs\n", lo, hi,
                       accuracies.size());
    }
    o << "\nMedian rate ratio (reference / candidate) by exposure group\n";
    for (const auto& g : groups) {
      o << fmt::format("  group {}: n={} median={}\n", g.group, g.n, opt_text(g.median_ratio));
    }
    o << '\n';
    write_map_test_report(o, summary);
  }));
  return written;
}

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"enacull: good-time culling for ENA count data"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> orbit;
  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--orbit", orbit, "Orbit to cull, hold out or restrict to");
  // Subcommands copy this setting when created, so global options may follow them.
  app.fallthrough();
  for (const char* name : {"simulate", "fov", "features", "train", "cull", "rates", "map", "evaluate"}) {
    app.add_subcommand(name);
  }

  try {
    std::vector<const char*> args(argv, argv + argc);
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "enacull: " << e.what() << '\n';
    return 2;
  }

  try {
    const RunConfig config = load_run_config(config_path, seed);
    const std::string command = app.get_subcommands().front()->get_name();
    std::vector<fs::path> written;
    if (command == "simulate") written = cmd_simulate(config);
    else if (command == "fov") written = cmd_fov(config);
    else if (command == "features") written = cmd_features(config, orbit);
    else if (command == "train") written = cmd_train(config, orbit);
    else if (command == "cull") {
      require(orbit.has_value(), ErrorCode::kConfig, "cull needs --orbit");
      written = cmd_cull(config, *orbit);
    } else if (command == "rates") written = cmd_rates(config);
    else if (command == "map") written = cmd_map(config);
    else written = cmd_evaluate(config);
    for (const auto& p : written) out << p.string() << '\n';
    return 0;
  } catch (const Error& e) {
    err << "enacull: " << to_string(e.code()) << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "enacull: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace enacull::cli
