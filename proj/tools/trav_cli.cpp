// Command-line driver for the traversability pipeline.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "trav/errors.hpp"
#include "trav/pipeline.hpp"
#include "trav/planner.hpp"
#include "trav/sweep.hpp"

using namespace trav;
namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------------ config ---

struct Globals {
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::string config_file;
  bool paper_scale = false;
  std::vector<std::string> sets;
};

/// Defaults, then paper scale, then the config file, then --set and flags.
/// The global seed feeds every stage seed that was not set explicitly.
KeyValueConfig resolve(const Globals& g) {
  KeyValueConfig cfg = pipeline_defaults(g.paper_scale);
  std::set<std::string> explicit_keys;
  if (!g.config_file.empty()) {
    if (!fs::exists(g.config_file)) throw ConfigError("config file " + g.config_file + " does not exist");
    const KeyValueConfig file = KeyValueConfig::load(g.config_file);
    for (const auto& [k, v] : file.values()) explicit_keys.insert(k);
    cfg.merge(file);
  }
  for (const std::string& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw ArgumentError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    if (!cfg.has(key)) throw ArgumentError("unknown config key '" + key + "'");
    cfg.set(key, kv.substr(eq + 1));
    explicit_keys.insert(key);
  }
  if (g.seed) cfg.set("seed", std::to_string(*g.seed));
  const std::string seed = cfg.get_string("seed", "1");
  try {
    std::stoull(seed);
  } catch (const std::exception&) {
    throw ConfigError("seed '" + seed + "' is not an unsigned integer");
  }
  for (const char* key : {"collect.seed", "train.seed"})
    if (!explicit_keys.count(key)) cfg.set(key, seed);
  return cfg;
}

std::uint64_t seed_of(const KeyValueConfig& cfg) { return std::stoull(cfg.get_string("seed", "1")); }

VehicleConfig vehicle_of(const KeyValueConfig& cfg) {
  VehicleConfig v = VehicleConfig::from_config(config_section(cfg, "vehicle."));
  v.validate();
  return v;
}

/// Creates the output directory and writes the resolved configuration.
void open_output(const fs::path& out, const KeyValueConfig& cfg) {
  fs::create_directories(out);
  cfg.save(out / "resolved.cfg");
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw ConfigError(what + " " + p.string() + " does not exist");
}

void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw ConfigError(what + " " + p.string() + " does not exist");
}

Cell parse_cell(const std::string& text, const char* what) {
  std::istringstream in(text);
  Cell c{};
  char comma = 0;
  if (!(in >> c.i >> comma >> c.j) || comma != ',' || !(in >> std::ws).eof())
    throw ArgumentError(std::string(what) + " must be given as i,j (got '" + text + "')");
  return c;
}

double target_speed(double v) {
  if (!(v >= kMinSpeed && v <= kMaxSpeed)) throw ArgumentError("speed must lie in [0.07, 2.69] m/s");
  return v;
}

std::vector<Eigen::Vector2d> headings_of(long long n) {
  if (n < 1 || n > 64) throw ArgumentError("heading count must lie in [1, 64]");
  return compass_headings(static_cast<int>(n));
}

// ----------------------------------------------------------- subcommands ---

struct GenTerrainArgs {
  std::string recipes = "default";
  std::string out;
};

void gen_terrain(const Globals& g, const GenTerrainArgs& a) {
  const KeyValueConfig cfg = resolve(g);
  const std::string ext = cfg.get_string("terrain.format", "hfb");
  if (ext != "hfb" && ext != "asc") throw ConfigError("terrain.format must be hfb or asc");

  std::vector<TerrainEntry> entries;
  std::vector<Heightfield> synthetic;
  if (a.recipes == "default") {
    const auto recipes = default_recipes(
        seed_of(cfg), static_cast<int>(cfg.get_int("terrain.n_train", 30)),
        static_cast<int>(cfg.get_int("terrain.n_validation", 10)), cfg.get_double("terrain.size", 50.0),
        cfg.get_double("terrain.cell_size", 0.1));
    const std::size_t n_train = static_cast<std::size_t>(cfg.get_int("terrain.n_train", 30));
    for (std::size_t k = 0; k < recipes.size(); ++k) {
      TerrainEntry e;
      e.terrain.id = static_cast<std::uint32_t>(k);
      e.terrain.split = k < n_train ? Split::kTrain : Split::kValidation;
      e.terrain.recipe = recipes[k];
      entries.push_back(e);
    }
  } else if (a.recipes == "hill" || a.recipes == "ditch" || a.recipes == "step") {
    TerrainEntry e;
    e.synthetic = a.recipes;
    e.terrain.split = Split::kValidation;
    entries.push_back(e);
    synthetic.push_back(synthetic_test_terrain(parse_synthetic_kind(a.recipes)));
  } else {
    // A recipe list in the manifest layout; raster file names are assigned here.
    const fs::path file = a.recipes;
    require_file(file, "recipe file");
    const fs::path tmp = fs::temp_directory_path() / "trav_recipe_check";
    fs::create_directories(tmp);
    fs::copy_file(file, tmp / "manifest.txt", fs::copy_options::overwrite_existing);
    entries = read_terrain_manifest(tmp);
    fs::remove_all(tmp);
    for (const auto& e : entries)
      if (!e.synthetic.empty()) throw ConfigError("recipe file entries must be recipes, not synthetic kinds");
  }
  for (std::size_t k = 0; k < entries.size(); ++k) {
    char name[64];
    if (entries[k].synthetic.empty())
      std::snprintf(name, sizeof name, "terrain_%03u.%s", entries[k].terrain.id, ext.c_str());
    else
      std::snprintf(name, sizeof name, "%s.%s", entries[k].synthetic.c_str(), ext.c_str());
    entries[k].file = name;
  }

  const fs::path out = a.out;
  open_output(out, cfg);
  for (std::size_t k = 0; k < entries.size(); ++k)
    write_raster(synthetic.empty() ? generate(entries[k].terrain.recipe) : synthetic[k], out / entries[k].file);
  write_terrain_manifest(entries, out);
  std::printf("wrote %zu terrain(s) and manifest.txt to %s\n", entries.size(), out.string().c_str());
}

struct CollectArgs {
  std::string terrains, out;
};

void collect(const Globals& g, const CollectArgs& a) {
  const KeyValueConfig cfg = resolve(g);
  require_dir(a.terrains, "terrain directory");
  const auto entries = read_terrain_manifest(a.terrains);
  std::vector<CorpusTerrain> terrains;
  for (const auto& e : entries) {
    if (!e.synthetic.empty()) throw ConfigError("collection needs recipe terrains, " + e.file + " is synthetic");
    require_file(fs::path(a.terrains) / e.file, "terrain raster");
    terrains.push_back(e.terrain);
  }
  CollectionSchedule schedule = CollectionSchedule::from_config(cfg);
  schedule.jobs = g.jobs;
  schedule.validate();
  const VehicleConfig vehicle = vehicle_of(cfg);

  const fs::path out = a.out;
  open_output(out, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const CollectionStats s = collect_corpus(terrains, vehicle, schedule, out);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  KeyValueConfig stats;
  stats.set("train_samples", static_cast<long long>(s.train_samples));
  stats.set("validation_samples", static_cast<long long>(s.validation_samples));
  stats.set("episodes", static_cast<long long>(s.episodes));
  stats.set("discarded", static_cast<long long>(s.discarded));
  const char* names[] = {"ok", "stuck", "overturned", "out_of_bounds"};
  for (std::size_t k = 0; k < s.terminations.size(); ++k)
    stats.set(std::string("termination.") + names[k], static_cast<long long>(s.terminations[k]));
  stats.save(out / "collect_stats.txt");
  std::printf("collected %llu train and %llu validation samples from %zu terrains in %.1f s\n",
              static_cast<unsigned long long>(s.train_samples), static_cast<unsigned long long>(s.validation_samples),
              terrains.size(), secs);
}

struct TrainArgs {
  std::string data, out;
};

void train_cmd(const Globals& g, const TrainArgs& a) {
  const KeyValueConfig cfg = resolve(g);
  const TrainConfig tc = TrainConfig::from_config(cfg);
  const fs::path data = a.data;
  require_file(data / "train.tsamp", "training store");
  require_file(data / "validation.tsamp", "validation store");
  auto train_set = open_samples(data / "train.tsamp");
  auto val_set = open_samples(data / "validation.tsamp");
  if (train_set->size() == 0 || val_set->size() == 0) throw ConfigError("sample stores must not be empty");

  const fs::path out = a.out;
  open_output(out, cfg);
  const HeadErrors base = mean_predictor_error(*train_set, *val_set);
  const TrainResult r = train(*train_set, *val_set, tc, [](const EpochRecord& e) {
    std::printf("epoch %3d  train %.4f  validation %.4f (L %.4f E %.4f A %.4f)\n", e.epoch, e.train.overall,
                e.validation.overall, e.validation.head[0], e.validation.head[1], e.validation.head[2]);
    std::fflush(stdout);
  });
  save_weights(r.best, out / "weights.twts");
  write_history_csv(r.history, out / "history.csv");
  KeyValueConfig summary;
  summary.set("best_epoch", static_cast<long long>(r.best_epoch));
  summary.set("validation_mae", r.best_validation);
  summary.set("baseline_mae", base.overall);
  for (int h = 0; h < 3; ++h) summary.set(std::string("baseline_mae.") + measure_name(h), base.head[h]);
  summary.set("relative_improvement", 1.0 - r.best_validation / base.overall);
  summary.save(out / "summary.txt");
  std::printf("best epoch %d: validation MAE %.4f, mean predictor %.4f\n", r.best_epoch, r.best_validation,
              base.overall);
}

struct SweepArgs {
  std::string weights, terrain, out;
  std::optional<double> speed, stride;
  std::optional<int> grid;
};

void sweep_cmd(const Globals& g, const SweepArgs& a) {
  KeyValueConfig cfg = resolve(g);
  if (a.speed) cfg.set("sweep.speed", *a.speed);
  if (a.stride) cfg.set("sweep.stride", *a.stride);
  require_file(a.weights, "weight file");
  require_file(a.terrain, "terrain raster");
  const ModelParamsF params = load_weights(a.weights);
  const Heightfield hf = read_raster(a.terrain);
  const double v = target_speed(cfg.get_double("sweep.speed", 1.3));
  const auto headings = headings_of(cfg.get_int("sweep.headings", 8));
  // --grid reproduces the ground-truth grid so the two maps can be compared.
  if (a.grid && *a.grid < 1) throw ArgumentError("--grid must be positive");
  const MapGrid grid = a.grid ? MapGrid::inset(hf, *a.grid, probe_margin(vehicle_of(cfg), v))
                              : MapGrid::covering(hf, cfg.get_double("sweep.stride", 1.0));
  if (grid.nx < 1 || grid.ny < 1) throw ArgumentError("stride leaves no grid cells on the terrain");

  const auto t0 = std::chrono::steady_clock::now();
  const TraversabilityMap map = sweep_map(params, hf, headings, v, grid, g.jobs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  open_output(a.out, cfg);
  write_map(map, a.out);
  std::printf("swept %d x %d cells x %zu headings in %.2f s (%zu valid)\n", grid.nx, grid.ny, headings.size(), secs,
              map.valid_count());
}

struct TruthArgs {
  std::string terrain, out;
  std::optional<double> speed;
  std::optional<int> grid;
};

void ground_truth_cmd(const Globals& g, const TruthArgs& a) {
  KeyValueConfig cfg = resolve(g);
  if (a.speed) cfg.set("sweep.speed", *a.speed);
  if (a.grid) cfg.set("truth.grid", static_cast<long long>(*a.grid));
  require_file(a.terrain, "terrain raster");
  const Heightfield hf = read_raster(a.terrain);
  const VehicleConfig vehicle = vehicle_of(cfg);
  const double v = target_speed(cfg.get_double("sweep.speed", 1.3));
  const long long n = cfg.get_int("truth.grid", 30);
  if (n < 1) throw ArgumentError("truth.grid must be positive");
  const MapGrid grid = MapGrid::inset(hf, static_cast<int>(n), probe_margin(vehicle, v));
  const auto headings = headings_of(cfg.get_int("sweep.headings", 8));

  open_output(a.out, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const TraversabilityMap map = ground_truth_map(hf, vehicle, headings, v, grid, g.jobs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_map(map, a.out);
  std::printf("probed %d x %d cells x %zu headings in %.1f s (%zu valid)\n", grid.nx, grid.ny, headings.size(), secs,
              map.valid_count());
}

struct AnalyzeArgs {
  std::string weights, terrain, terrains, data, pred, truth, out;
  std::optional<double> speed;
  std::optional<int> points;
};

void analyze_resolution(const Globals& g, const AnalyzeArgs& a) {
  KeyValueConfig cfg = resolve(g);
  if (a.speed) cfg.set("sweep.speed", *a.speed);
  require_file(a.weights, "weight file");
  require_file(a.terrain, "terrain raster");
  const ModelParamsF params = load_weights(a.weights);
  const Heightfield hf = read_raster(a.terrain);
  const double v = target_speed(cfg.get_double("sweep.speed", 1.3));
  std::vector<double> res = cfg.get_doubles("analyze.resolutions", {});
  if (res.empty()) throw ConfigError("analyze.resolutions is empty");
  for (double& r : res) r = std::max(r, hf.cell_size());
  for (std::size_t k = 1; k < res.size(); ++k)
    if (!(res[k] > res[k - 1])) throw ConfigError("analyze.resolutions must be strictly ascending");
  const long long n = cfg.get_int("analyze.grid", 30);
  if (n < 1) throw ArgumentError("analyze.grid must be positive");
  const MapGrid grid = MapGrid::inset(hf, static_cast<int>(n), PatchSpec{}.reach() + 0.05);
  const auto headings = headings_of(cfg.get_int("sweep.headings", 8));

  const auto points = resolution_study(params, hf, res, headings, v, grid, g.jobs);
  open_output(a.out, cfg);
  write_resolution_csv(points, fs::path(a.out) / "resolution.csv");
  for (const auto& p : points)
    std::printf("resolution %6.3f m  normalized L %.3f E %.3f A %.3f  mean %.3f\n", p.resolution, p.normalized[0],
                p.normalized[1], p.normalized[2], p.mean_normalized);
}

void analyze_sensitivity(const Globals& g, const AnalyzeArgs& a) {
  KeyValueConfig cfg = resolve(g);
  if (a.speed) cfg.set("sweep.speed", *a.speed);
  if (a.points) cfg.set("analyze.points", static_cast<long long>(*a.points));
  require_file(a.weights, "weight file");
  require_dir(a.terrains, "terrain directory");
  const ModelParamsF params = load_weights(a.weights);
  const auto entries = read_terrain_manifest(a.terrains);
  std::vector<Heightfield> fields;
  for (const auto& e : entries)
    if (e.terrain.split == Split::kValidation) fields.push_back(load_terrain(a.terrains, e));
  if (fields.empty()) throw ConfigError("no validation terrains in " + a.terrains);
  std::vector<const Heightfield*> ptrs;
  for (const auto& f : fields) ptrs.push_back(&f);
  const double v = target_speed(cfg.get_double("sweep.speed", 1.3));
  const long long n = cfg.get_int("analyze.points", 1000);
  if (n < 1) throw ArgumentError("analyze.points must be positive");

  const SensitivityReport r = feature_sensitivity(params, ptrs, static_cast<int>(n), v, seed_of(cfg), g.jobs);
  open_output(a.out, cfg);
  write_sensitivity_csv(r, fs::path(a.out) / "sensitivity.csv");
  std::printf("%zu points (%zu degenerate) over %zu terrains\n", r.points, r.degenerate, fields.size());
  for (const auto& b : r.bins)
    if (b.reported) std::printf("roughness [%.4f, %.4f)  n %5zu  rmsd %.4f  std %.4f\n", b.lo, b.hi, b.count, b.rmsd, b.stddev);
}

void analyze_correlation(const Globals& g, const AnalyzeArgs& a) {
  const KeyValueConfig cfg = resolve(g);
  fs::path store = a.data;
  if (fs::is_directory(store)) store /= "validation.tsamp";
  require_file(store, "sample store");
  const long long bins = cfg.get_int("analyze.bins", 20);
  if (bins < 2) throw ArgumentError("analyze.bins must be at least 2");

  const CorrelationReport r = correlation_study(store, static_cast<int>(bins));
  const fs::path out = a.out;
  open_output(out, cfg);
  write_correlation_csv(r, out / "correlation.csv");
  const char* pairs[] = {"L_E", "L_A", "E_A"};
  for (int k = 0; k < 3; ++k) write_histogram_csv(r.pairs[k], out / (std::string("hist_") + pairs[k] + ".csv"));
  for (int m = 0; m < 3; ++m)
    write_histogram_csv(r.velocity[m], out / (std::string("hist_v_") + measure_name(m) + ".csv"));
  std::printf("%zu samples  rho(L,E) %.3f  rho(L,A) %.3f  rho(E,A) %.3f\n", r.samples, r.rho[0][1], r.rho[0][2],
              r.rho[1][2]);
}

void analyze_error(const Globals& g, const AnalyzeArgs& a) {
  const KeyValueConfig cfg = resolve(g);
  require_dir(a.pred, "predicted map");
  require_dir(a.truth, "ground-truth map");
  const MapError e = map_error(read_map(a.pred), read_map(a.truth));
  std::printf("cells %zu  L %.4f  E %.4f  A %.4f  mean %.4f\n", e.cells, e.measure[0], e.measure[1], e.measure[2],
              e.mean);
  if (a.out.empty()) return;
  open_output(a.out, cfg);
  KeyValueConfig r;
  r.set("cells", static_cast<long long>(e.cells));
  for (int m = 0; m < 3; ++m) r.set(std::string("error.") + measure_name(m), e.measure[m]);
  r.set("error.mean", e.mean);
  r.save(fs::path(a.out) / "error.txt");
}

struct PlanArgs {
  std::string map, out, start, goal;
  std::optional<std::string> objective;
};

void plan_cmd(const Globals& g, const PlanArgs& a) {
  KeyValueConfig cfg = resolve(g);
  if (a.objective) cfg.set("plan.objective", *a.objective);
  const Objective objective = parse_objective(cfg.get_string("plan.objective", "multi"));
  const Cell start = parse_cell(a.start, "--start");
  const Cell goal = parse_cell(a.goal, "--goal");
  require_dir(a.map, "map directory");
  const TraversabilityMap map = read_map(a.map);
  const CostRaster cost = build_cost(map, objective);
  const ObjectiveComparison c = compare_objectives(map, start, goal);
  const PlannedPath& path = objective == Objective::kMulti ? c.multi : c.locomotion;

  const fs::path out = a.out;
  open_output(out, cfg);
  write_path_csv(path, cost, out / "path.csv");
  write_path_overlay(path, cost, out / "path.pgm");
  const std::string table = comparison_table(c);
  std::ofstream(out / "summary.txt") << table;
  std::printf("%s", table.c_str());
}

struct DemoArgs {
  std::string scenario, weights, out;
  std::optional<double> speed;
};

void demo_cmd(const Globals& g, const DemoArgs& a) {
  KeyValueConfig cfg = resolve(g);
  if (a.speed) cfg.set("demo.speed", *a.speed);
  const SyntheticKind kind = parse_synthetic_kind(a.scenario);
  const VehicleConfig vehicle = vehicle_of(cfg);
  const double v = target_speed(cfg.get_double("demo.speed", 1.0));
  const double duration = cfg.get_double("demo.duration", 15.0);
  std::optional<ModelParamsF> model;
  if (!a.weights.empty()) {
    require_file(a.weights, "weight file");
    model = load_weights(a.weights);
  }

  const auto traces = demo_traces(kind, vehicle, v, duration, model ? &*model : nullptr);
  const auto scans = approach_scans(kind, vehicle, v, 10.0, 0.25);
  const fs::path out = a.out;
  open_output(out, cfg);
  const char* status[] = {"ok", "stuck", "overturned", "out_of_bounds"};
  std::string summary = "approach  termination    rows  probe_min_L  probe_E_at_min  probe_max_E\n";
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& t = traces[k];
    write_demo_csv(t, out / ("trace_" + t.approach.name + ".csv"));
    write_scan_csv(scans[k], out / ("probes_" + t.approach.name + ".csv"));
    char line[160];
    std::snprintf(line, sizeof line, "%-9s %-13s %5zu  %-11.4f  %-14.4f  %.4f\n", t.approach.name.c_str(),
                  t.discarded ? "discarded" : status[static_cast<int>(t.termination)], t.rows.size(), scans[k].min_L,
                  scans[k].E_at_min, scans[k].max_E);
    summary += line;
  }
  std::ofstream(out / "summary.txt") << summary;
  std::printf("%s", summary.c_str());
}

std::string error_kind(const std::exception& e) {
  if (dynamic_cast<const BoundsError*>(&e)) return "BoundsError";
  if (dynamic_cast<const ArgumentError*>(&e)) return "ArgumentError";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
  if (dynamic_cast<const SimulationDiverged*>(&e)) return "SimulationDiverged";
  if (dynamic_cast<const TrainingError*>(&e)) return "TrainingError";
  if (dynamic_cast<const NoPathError*>(&e)) return "NoPathError";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "IOError";
  return "Error";
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::string config_key_help() {
  std::string out = "\nConfig keys (defaults at desk scale; set with --config FILE or --set key=value):\n";
  const KeyValueConfig defaults = pipeline_defaults(false);
  for (const auto& [k, v] : defaults.values()) out += "  " + k + " = " + v + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Traversability pipeline: terrains, data collection, training, maps, analyses and planning."};
  app.require_subcommand(1);
  app.footer(config_key_help());
  Globals g;
  app.add_option("--jobs,-j", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", g.seed, "Global seed for every stochastic stage");
  app.add_option("--config", g.config_file, "Key-value config file layered over the defaults");
  app.add_flag("--paper-scale", g.paper_scale, "Raise resolution and budgets toward the published setup");
  app.add_option("--set", g.sets, "Override one config key (key=value), repeatable");

  GenTerrainArgs gen;
  auto* c_gen = app.add_subcommand("gen-terrain", "Generate terrain rasters and a manifest");
  c_gen->add_option("--recipes", gen.recipes, "default, hill, ditch, step, or a recipe file")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->callback([&] { gen_terrain(g, gen); });

  CollectArgs col;
  auto* c_col = app.add_subcommand("collect", "Drive vehicles over the terrains and write sample stores");
  c_col->add_option("--terrains", col.terrains, "Terrain directory with manifest.txt")->required();
  c_col->add_option("--out", col.out, "Output directory")->required();
  c_col->callback([&] { collect(g, col); });

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train the network on a collected corpus");
  c_tr->add_option("--data", tr.data, "Directory with train.tsamp and validation.tsamp")->required();
  c_tr->add_option("--out", tr.out, "Output directory")->required();
  c_tr->callback([&] { train_cmd(g, tr); });

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "Evaluate the model over a terrain grid");
  c_sw->add_option("--weights", sw.weights, "Weight file")->required();
  c_sw->add_option("--terrain", sw.terrain, "Terrain raster (.hfb or .asc)")->required();
  c_sw->add_option("--speed", sw.speed, "Target speed [m/s]");
  c_sw->add_option("--stride", sw.stride, "Grid stride [m]");
  c_sw->add_option("--grid", sw.grid, "Use the n x n ground-truth grid instead of the stride")->excludes("--stride");
  c_sw->add_option("--out", sw.out, "Output map directory")->required();
  c_sw->callback([&] { sweep_cmd(g, sw); });

  TruthArgs gt;
  auto* c_gt = app.add_subcommand("ground-truth", "Anchored simulator probes on an n x n grid");
  c_gt->add_option("--terrain", gt.terrain, "Terrain raster (.hfb or .asc)")->required();
  c_gt->add_option("--speed", gt.speed, "Target speed [m/s]");
  c_gt->add_option("--grid", gt.grid, "Cells per axis");
  c_gt->add_option("--out", gt.out, "Output map directory")->required();
  c_gt->callback([&] { ground_truth_cmd(g, gt); });

  AnalyzeArgs an;
  auto* c_an = app.add_subcommand("analyze", "Analysis studies");
  c_an->require_subcommand(1);
  auto* a_res = c_an->add_subcommand("resolution", "Map error against terrain resolution");
  a_res->add_option("--weights", an.weights, "Weight file")->required();
  a_res->add_option("--terrain", an.terrain, "Terrain raster")->required();
  a_res->add_option("--speed", an.speed, "Target speed [m/s]");
  a_res->add_option("--out", an.out, "Output directory")->required();
  a_res->callback([&] { analyze_resolution(g, an); });
  auto* a_sen = c_an->add_subcommand("sensitivity", "Locomotion difference between equivalent headings");
  a_sen->add_option("--weights", an.weights, "Weight file")->required();
  a_sen->add_option("--terrains", an.terrains, "Terrain directory (validation split is used)")->required();
  a_sen->add_option("--points", an.points, "Random points per terrain");
  a_sen->add_option("--speed", an.speed, "Target speed [m/s]");
  a_sen->add_option("--out", an.out, "Output directory")->required();
  a_sen->callback([&] { analyze_sensitivity(g, an); });
  auto* a_cor = c_an->add_subcommand("correlation", "Spearman correlations and histograms of the labels");
  a_cor->add_option("--data", an.data, "Sample store, or a corpus directory (validation store)")->required();
  a_cor->add_option("--out", an.out, "Output directory")->required();
  a_cor->callback([&] { analyze_correlation(g, an); });
  auto* a_err = c_an->add_subcommand("error", "Mean absolute error between two maps");
  a_err->add_option("--pred", an.pred, "Predicted map directory")->required();
  a_err->add_option("--truth", an.truth, "Ground-truth map directory")->required();
  a_err->add_option("--out", an.out, "Optional output directory");
  a_err->callback([&] { analyze_error(g, an); });

  PlanArgs pl;
  auto* c_pl = app.add_subcommand("plan", "Shortest path over a traversability map");
  c_pl->add_option("--map", pl.map, "Map directory with all eight headings")->required();
  c_pl->add_option("--objective", pl.objective, "multi or locomotion_only");
  c_pl->add_option("--start", pl.start, "Start cell i,j")->required();
  c_pl->add_option("--goal", pl.goal, "Goal cell i,j")->required();
  c_pl->add_option("--out", pl.out, "Output directory")->required();
  c_pl->callback([&] { plan_cmd(g, pl); });

  DemoArgs dm;
  auto* c_dm = app.add_subcommand("demo", "Simulated and predicted traces on a synthetic obstacle");
  c_dm->add_option("--scenario", dm.scenario, "hill, ditch or step")->required();
  c_dm->add_option("--weights", dm.weights, "Optional weight file for predictions");
  c_dm->add_option("--speed", dm.speed, "Target speed [m/s]");
  c_dm->add_option("--out", dm.out, "Output directory")->required();
  c_dm->callback([&] { demo_cmd(g, dm); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "trav: error: UsageError: %s\n", one_line(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "trav: error: %s: %s\n", error_kind(e).c_str(), one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
