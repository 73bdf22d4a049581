// Acceptance run: one PASS/FAIL line per criterion at desk scale.
//
//   acceptance [--work DIR] [--only N]... [--known-gap N]...
//
// A criterion listed with --known-gap still prints FAIL when it fails; it
// only stops that failure from setting the exit status. If it passes, the
// gap is reported as stale and the exit status is nonzero.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "planner_oracles.hpp"
#include "trav/dataset.hpp"
#include "trav/errors.hpp"
#include "trav/measures.hpp"
#include "trav/nnmodel.hpp"
#include "trav/pipeline.hpp"
#include "trav/planner.hpp"
#include "trav/random.hpp"
#include "trav/sweep.hpp"
#include "trav/terraingen.hpp"
#include "trav/vehiclesim.hpp"

using namespace trav;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects named sub-checks; the criterion passes only if all of them do.
class Checks {
 public:
  void add(bool ok, const std::string& what) {
    all_ &= ok;
    if (!ok) failed_.push_back(what);
  }
  Outcome done(const std::string& detail) const {
    std::string d = detail;
    for (const auto& f : failed_) d += "; failed: " + f;
    return {all_, d};
  }

 private:
  bool all_ = true;
  std::vector<std::string> failed_;
};

// ------------------------------------------------------------ criterion 1 ---

std::vector<Observation> straight_window(double travel, double total_power) {
  std::vector<Observation> w(21);
  for (int k = 0; k <= 20; ++k) {
    w[k].time = k * 0.05;
    w[k].position = {travel * k * 0.05, 0.0, 0.0};
    w[k].velocity = {1.0, 0.0, 0.0};
    w[k].wheel_power.fill(total_power / kWheels);
  }
  return w;
}

Outcome measure_formulas() {
  const MeasureParams p;
  const double v = 1.3;
  Checks c;
  c.add(locomotion(straight_window(v, 0.0), v, p) == 1.0, "L(d_tau = d) = 1");
  const double l0 = locomotion(straight_window(0.0, 0.0), v, p);
  c.add(std::abs(l0 - std::exp(-4.5)) <= 1e-12, "L(0) = exp(-4.5)");
  c.add(energy(straight_window(-0.2, 1000.0), v, p) == 1.0, "E = 1 when d_tau < 0");
  c.add(energy(straight_window(-0.2, 0.0), v, p) == 1.0, "E = 1 when d_tau < 0 and no work");
  auto w = straight_window(v, 0.0);
  w[5].acceleration = 250.0;
  c.add(acceleration(w, p) == 1.0, "A clipped at 1");
  w[5].acceleration = 50.0;
  c.add(acceleration(w, p) == 0.5, "A = a / A0 below the clip");

  const double d = v * p.tau;
  StuckDetector s(v, p);
  bool early = false;
  for (int i = 0; i < 4; ++i) early |= s.update(0.1 * d);
  c.add(!early && s.update(0.1 * d), "stuck on the fifth short window");
  StuckDetector r(v, p);
  bool any = false;
  for (int i = 0; i < 50; ++i) any |= r.update(i % 5 == 4 ? 0.5 * d : 0.0);
  c.add(!any, "a moving window resets the run");
  StuckDetector t(v, p);
  for (int i = 0; i < 20; ++i) any |= t.update(0.2 * d);
  c.add(!any, "0.2 d is not short");
  return c.done(fmt("L(0) - exp(-4.5) = %.1e", l0 - std::exp(-4.5)));
}

// ------------------------------------------------------------ criterion 2 ---

double total_power(const VehicleState& s) {
  double sum = 0.0;
  for (double x : s.wheel_power) sum += x;
  return sum;
}

Outcome physics() {
  constexpr double dt = 1.0 / 60.0;
  const VehicleConfig cfg;
  const double mg = cfg.mass * kGravity;
  Checks c;

  const Heightfield flat = Heightfield::constant(0.0, 0.0, 0.1, 401, 401, 0.0);
  const VehicleModel model(cfg, flat);
  VehicleState s = model.place(20.0, 20.0, 0.4);
  for (int i = 0; i < 240; ++i) s = model.step(s, 0.0, dt);
  const double balance = std::abs(s.vertical_contact_force - mg) / mg;
  c.add(balance <= 0.01, "static balance within 1%");

  s = model.place(10.0, 10.0, 0.0);
  for (int i = 0; i < 60; ++i) s = model.step(s, 0.0, dt);
  for (int i = 0; i < 300; ++i) s = model.step(s, 1.3, dt);
  const double speed_err = std::abs(model.pose(s).joint_velocity.norm() - 1.3) / 1.3;
  c.add(speed_err <= 0.02, "steady speed within 2%");

  const Heightfield incline =
      Heightfield::from_function(0.0, 0.0, 0.1, 401, 201, [](double x, double) { return x; });
  const VehicleModel climb(cfg, incline);
  const double v = 0.675;
  s = climb.place(10.0, 10.0, 0.0);
  for (int i = 0; i < 60; ++i) s = climb.step(s, 0.0, dt);
  for (int i = 0; i < 120; ++i) s = climb.step(s, v, dt);
  const Eigen::Vector3d start = climb.pose(s).joint;
  double work = 0.0;
  for (int i = 0; i < 240; ++i) {
    s = climb.step(s, v, dt);
    work += total_power(s) * dt;
  }
  const double ratio = work / (climb.pose(s).joint - start).norm() / (mg * std::sin(M_PI / 4));
  c.add(ratio >= 0.8 && ratio <= 1.3, "45 degree energy within [0.8, 1.3]");
  return c.done(fmt("balance %.3g%%, speed error %.3g%%, incline energy %.3f x m g sin45", 100 * balance,
                    100 * speed_err, ratio));
}

// ------------------------------------------------------------ criterion 3 ---

Outcome synthetic_obstacles() {
  const VehicleConfig vehicle;
  Checks c;
  std::string detail;
  for (SyntheticKind kind : {SyntheticKind::kStep, SyntheticKind::kDitch}) {
    const auto scans = approach_scans(kind, vehicle, 1.0, 10.0, 0.25);
    const ApproachScan& head = scans.at(0);
    const std::string name = kind == SyntheticKind::kStep ? "step" : "ditch";
    c.add(head.valid > 0 && head.min_L < 0.2, name + " head-on L < 0.2");
    c.add(head.E_at_min == 1.0, name + " head-on E = 1");
    detail += fmt("%s head_on L %.3f E %.3f", name.c_str(), head.min_L, head.E_at_min);
    for (std::size_t k = 1; k < scans.size(); ++k) {
      c.add(scans[k].valid > 0 && scans[k].min_L > head.min_L, name + " " + scans[k].approach.name + " L > head-on");
      detail += fmt(", %s L %.3f", scans[k].approach.name.c_str(), scans[k].min_L);
    }
    detail += "; ";
  }
  detail.resize(detail.size() - 2);
  return c.done(detail);
}

// ------------------------------------------------------------ criterion 4 ---

Outcome gradients() {
  Checks c;
  double worst = 0.0;
  int checked = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const ModelParams<double> params = ModelParams<double>::initialize(seed);
    Rng rng(seed + 1000);
    const int n = 3;
    Mat<double> x(kPatchSize, n), y(3, n);
    RowVec<double> v(n);
    for (int b = 0; b < n; ++b) {
      const double a = rng.uniform(-1, 1), bb = rng.uniform(-1, 1), f = rng.uniform(0.2, 1.5);
      for (int i = 0; i < kPatchLat; ++i)
        for (int j = 0; j < kPatchLong; ++j)
          x(i * kPatchLong + j, b) = 0.3 * std::sin(f * j * 0.15625 + a) * std::cos(0.7 * i * 0.15625 + bb) +
                                     0.1 * rng.uniform(-1.0, 1.0);
      x(PatchSpec{}.mid_index(), b) = 0.0;
      v(b) = rng.uniform(0.03, 1.0);
      for (int h = 0; h < 3; ++h) y(h, b) = rng.uniform(0.0, 1.0);
    }
    const GradientCheck g = gradient_check(params, x, v, y, seed);
    worst = std::max(worst, g.max_relative_deviation);
    checked += g.checked;
    c.add(g.checked > 0, fmt("seed %d checked weights", static_cast<int>(seed)));
  }
  c.add(worst < 1e-4, "max relative deviation < 1e-4");
  return c.done(fmt("max relative deviation %.2e over %d weights, 10 seeds", worst, checked));
}

// -------------------------------------------------------- criteria 5 to 9 ---

struct DeskRun {
  KeyValueConfig cfg = pipeline_defaults(false);
  VehicleConfig vehicle;
  std::vector<TerrainRecipe> recipes;
  int n_train = 0, n_validation = 0;
  fs::path data;
  CollectionStats stats;
  std::optional<ModelParamsF> model;
  double speed = 1.3;
  std::vector<Eigen::Vector2d> headings = compass_headings(8);
  double ground_truth_seconds = 0.0;
  std::size_t ground_truth_evals = 0;
};

Outcome training(DeskRun& run) {
  const KeyValueConfig& cfg = run.cfg;
  run.n_train = static_cast<int>(cfg.get_int("terrain.n_train", 30));
  run.n_validation = static_cast<int>(cfg.get_int("terrain.n_validation", 10));
  run.recipes = default_recipes(1, run.n_train, run.n_validation, cfg.get_double("terrain.size", 50.0),
                                cfg.get_double("terrain.cell_size", 0.1));
  std::vector<CorpusTerrain> terrains;
  for (std::size_t k = 0; k < run.recipes.size(); ++k)
    terrains.push_back({static_cast<std::uint32_t>(k), static_cast<int>(k) < run.n_train ? Split::kTrain : Split::kValidation,
                        run.recipes[k]});
  CollectionSchedule schedule = CollectionSchedule::from_config(cfg);
  const auto t0 = Clock::now();
  run.stats = collect_corpus(terrains, run.vehicle, schedule, run.data);
  const double collect_s = seconds_since(t0);

  auto train_set = open_samples(run.data / "train.tsamp");
  auto val_set = open_samples(run.data / "validation.tsamp");
  const HeadErrors base = mean_predictor_error(*train_set, *val_set);
  const auto t1 = Clock::now();
  const TrainResult r = train(*train_set, *val_set, TrainConfig::from_config(cfg));
  const double train_s = seconds_since(t1);
  run.model = r.best;

  const std::uint64_t total = run.stats.train_samples + run.stats.validation_samples;
  const double improvement = 1.0 - r.best_validation / base.overall;
  Checks c;
  c.add(total >= 50000, "at least 50k samples");
  c.add(run.n_train + run.n_validation >= 5, "at least 5 terrains");
  c.add(r.best_validation < 0.20, "validation MAE < 0.20");
  c.add(improvement >= 0.25, "25% better than the mean predictor");
  return c.done(fmt("%llu samples from %d terrains, validation MAE %.4f vs mean predictor %.4f (%.1f%% better); "
                    "collect %.0f s, train %.0f s",
                    static_cast<unsigned long long>(total), run.n_train + run.n_validation, r.best_validation,
                    base.overall, 100 * improvement, collect_s, train_s));
}

const TerrainRecipe& held_out(const DeskRun& run) {
  return run.recipes.at(static_cast<std::size_t>(run.n_train + run.n_validation / 2));
}

Outcome map_agreement(DeskRun& run) {
  if (!run.model) return {false, "no trained model"};
  const Heightfield hf = generate(held_out(run));
  const int n = static_cast<int>(run.cfg.get_int("truth.grid", 30));
  const MapGrid grid = MapGrid::inset(hf, n, probe_margin(run.vehicle, run.speed));
  const auto t0 = Clock::now();
  const TraversabilityMap truth = ground_truth_map(hf, run.vehicle, run.headings, run.speed, grid);
  run.ground_truth_seconds = seconds_since(t0);
  run.ground_truth_evals = grid.cells() * run.headings.size();

  const TraversabilityMap pred = sweep_map(*run.model, hf, run.headings, run.speed, grid);
  const Heightfield flat =
      Heightfield::constant(hf.origin_x(), hf.origin_y(), hf.cell_size(), hf.nx(), hf.ny(), 0.0);
  const TraversabilityMap flat_pred = sweep_map(*run.model, flat, run.headings, run.speed, grid);
  // The flat prediction is placed on the held-out terrain's grid cells.
  const MapError e = map_error(pred, truth), base = map_error(flat_pred, truth);
  Checks c;
  c.add(e.cells > 0, "ground truth has valid cells");
  c.add(e.mean < 0.25, "mean map error < 0.25");
  c.add(e.mean < base.mean, "beats the flat-terrain prediction");
  return c.done(fmt("map error %.4f (L %.4f E %.4f A %.4f) vs flat baseline %.4f over %zu cell-headings; "
                    "ground truth %.0f s",
                    e.mean, e.measure[0], e.measure[1], e.measure[2], base.mean, e.cells, run.ground_truth_seconds));
}

Outcome throughput(const DeskRun& run) {
  if (!run.model) return {false, "no trained model"};
  const Heightfield hf = generate(held_out(run));
  const Patch patch = extract_patch_f32(hf, 25.0, 25.0, Eigen::Vector2d(1.0, 0.0));
  const int reps = 2000;
  float sink = 0.0f;
  const auto t0 = Clock::now();
  for (int k = 0; k < reps; ++k) sink += predict(*run.model, patch, run.speed)[k % 3];
  const double single_ms = 1e3 * seconds_since(t0) / reps;

  const MapGrid grid = MapGrid::inset(hf, 100, PatchSpec{}.reach() + 0.05);
  const auto t1 = Clock::now();
  const TraversabilityMap map = sweep_map(*run.model, hf, run.headings, run.speed, grid, 1);
  const double sweep_s = seconds_since(t1);
  const double per_sweep = sweep_s / (static_cast<double>(grid.cells()) * run.headings.size());

  Checks c;
  c.add(std::isfinite(sink), "finite predictions");
  c.add(map.valid_count() == grid.cells() * run.headings.size(), "every sweep cell valid");
  c.add(single_ms < 5.0, "single eval < 5 ms");
  c.add(sweep_s < 60.0, "100 x 100 x 8 sweep < 60 s");
  std::string ratio_text = "no ground-truth timing";
  if (run.ground_truth_evals > 0) {
    const double ratio = run.ground_truth_seconds / run.ground_truth_evals / per_sweep;
    c.add(ratio > 100.0, "sweep > 100x faster than ground truth");
    ratio_text = fmt("ground truth / sweep per evaluation %.0fx", ratio);
  } else {
    c.add(false, "ground-truth timing available");
  }
  return c.done(fmt("single eval %.3f ms, 100x100x8 sweep %.1f s, %s", single_ms, sweep_s, ratio_text.c_str()));
}

Outcome resolution(const DeskRun& run) {
  if (!run.model) return {false, "no trained model"};
  const Heightfield hf = generate(held_out(run));
  std::vector<double> res = run.cfg.get_doubles("analyze.resolutions", {});
  for (double& r : res) r = std::max(r, hf.cell_size());
  const int n = static_cast<int>(run.cfg.get_int("analyze.grid", 30));
  const MapGrid grid = MapGrid::inset(hf, n, PatchSpec{}.reach() + 0.05);
  const auto points = resolution_study(*run.model, hf, res, run.headings, run.speed, grid);

  Checks c;
  c.add(points.size() == res.size(), "one point per resolution");
  std::string curve;
  for (int m = 0; m < 3; ++m) {
    c.add(points.front().normalized[m] == 0.0, fmt("%s is 0 at native resolution", measure_name(m)));
    c.add(points.back().normalized[m] == 1.0, fmt("%s is 1 at the coarsest resolution", measure_name(m)));
    for (std::size_t k = 1; k < points.size(); ++k)
      c.add(points[k].normalized[m] >= points[k - 1].normalized[m] - 0.05,
            fmt("%s non-decreasing at %.2f m", measure_name(m), points[k].resolution));
  }
  auto mean_error = [&](double r) {
    for (const auto& p : points)
      if (std::abs(p.resolution - r) < 1e-9) return (p.error[0] + p.error[1] + p.error[2]) / 3.0;
    throw ConfigError(fmt("resolution %.2f not in the study", r));
  };
  const double e025 = mean_error(0.25), e1 = mean_error(1.0);
  c.add(e025 < e1, "error at 0.25 m < error at 1 m");
  for (const auto& p : points) curve += fmt(" %.3f", p.mean_normalized);
  return c.done(fmt("normalized mean curve%s; error 0.25 m %.4f < 1 m %.4f", curve.c_str(), e025, e1));
}

Outcome correlation(const DeskRun& run) {
  Checks c;
  // Rank oracle: Spearman equals Pearson on average ranks for all 720
  // permutations of six.
  std::vector<double> base = {1, 2, 3, 4, 5, 6}, perm = base;
  auto rank = [](const std::vector<double>& x, std::size_t i) {
    double less = 0.0, equal = 0.0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    return less + (equal + 1.0) / 2.0;
  };
  int n = 0, exact = 0;
  do {
    std::vector<double> rx(6), ry(6);
    for (std::size_t i = 0; i < 6; ++i) {
      rx[i] = rank(base, i);
      ry[i] = rank(perm, i);
    }
    exact += spearman(base, perm) == pearson(rx, ry);
    ++n;
  } while (std::next_permutation(perm.begin(), perm.end()));
  c.add(n == 720 && exact == 720, "spearman equals the rank oracle on 720 permutations");

  const CorrelationReport r = correlation_study(run.data / "validation.tsamp");
  const double le = r.rho[0][1], la = r.rho[0][2], ea = r.rho[1][2];
  c.add(le < -0.5, "rho(L,E) < -0.5");
  c.add(std::abs(la) < 0.3, "|rho(A,L)| < 0.3");
  c.add(std::abs(ea) < 0.3, "|rho(A,E)| < 0.3");
  return c.done(fmt("oracle %d/720 exact; rho(L,E) %.3f, rho(L,A) %.3f, rho(E,A) %.3f over %zu validation samples",
                    exact, le, la, ea, r.samples));
}

// ----------------------------------------------------------- criterion 10 ---

Outcome planner_optimality() {
  Checks c;
  int exhaustive = 0, bellman = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const int nx = 2 + static_cast<int>(rng.below(4)), ny = 2 + static_cast<int>(rng.below(4));
    const CostRaster raster = oracle::random_raster(nx, ny, seed * 7);
    const Cell s{static_cast<int>(rng.below(nx)), static_cast<int>(rng.below(ny))};
    Cell g{static_cast<int>(rng.below(nx)), static_cast<int>(rng.below(ny))};
    if (s == g) g = {(s.i + 1) % nx, s.j};
    exhaustive += plan(raster, s, g).total_cost == oracle::exhaustive_best(raster, s, g);
  }
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const CostRaster raster = oracle::random_raster(20, 20, 5000 + seed);
    Rng rng(seed + 77);
    const Cell s{static_cast<int>(rng.below(20)), static_cast<int>(rng.below(20))};
    bellman += cost_to_go(raster, s) == oracle::bellman_ford(raster, s);
  }
  c.add(exhaustive == 20, "dijkstra equals exhaustive search on 20 instances");
  c.add(bellman == 50, "dijkstra equals bellman-ford on 50 instances");
  const double lo = step_cost(1.0, 0.0, 0.0, Objective::kMulti, 0), hi = step_cost(0.0, 1.0, 1.0, Objective::kMulti, 0);
  c.add(lo == 0.1 && hi == 11.0, "cost endpoints 0.1 and 11");
  return c.done(fmt("exhaustive %d/20, bellman-ford %d/50, endpoints %.1f and %.1f", exhaustive, bellman, lo, hi));
}

// ----------------------------------------------------------- criterion 11 ---

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome determinism(const fs::path& work) {
  const std::string small =
      " --seed 7 --set terrain.n_train=3 --set terrain.n_validation=1 --set terrain.size=25"
      " --set collect.seconds_per_vehicle=20 --set train.epochs=2 --set train.batch_size=64";
  auto run = [&](const std::string& args) {
    const std::string cmd = "cd " + work.string() + " && " + TRAV_CLI_PATH + " " + args + " >>cli.log 2>&1";
    const int status = std::system(cmd.c_str());
    if (!(WIFEXITED(status) && WEXITSTATUS(status) == 0)) throw ConfigError("cli failed: " + args);
  };
  for (const std::string d : {"a", "b"}) {
    fs::remove_all(work / d);
    // The second run also changes the worker count.
    const std::string s = small + (d == "b" ? " --jobs 2" : "");
    run(s + " gen-terrain --out " + d + "/terr");
    run(s + " collect --terrains " + d + "/terr --out " + d + "/data");
    run(s + " train --data " + d + "/data --out " + d + "/model");
    run(s + " sweep --weights " + d + "/model/weights.twts --terrain " + d + "/terr/terrain_003.hfb --stride 1 --out " +
        d + "/map");
    run(s + " plan --map " + d + "/map --start 8,8 --goal 15,13 --out " + d + "/path");
  }
  Checks c;
  int same = 0;
  const std::vector<std::string> files = {"data/train.tsamp", "data/validation.tsamp", "model/weights.twts",
                                          "map/h0_L.asc",     "map/h5_E.asc",          "map/h7_A.asc",
                                          "path/path.csv"};
  for (const auto& f : files) {
    const bool ok = fs::exists(work / "a" / f) && slurp(work / "a" / f) == slurp(work / "b" / f);
    same += ok;
    c.add(ok, f + " identical");
  }
  return c.done(fmt("%d/%zu artefacts byte-identical across two runs (1 and 2 workers)", same, files.size()));
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "trav_acceptance";
  std::set<int> only, known_gaps;
  for (int k = 1; k < argc; ++k) {
    const std::string a = argv[k];
    if (a == "--work" && k + 1 < argc)
      work = argv[++k];
    else if (a == "--only" && k + 1 < argc)
      only.insert(std::atoi(argv[++k]));
    else if (a == "--known-gap" && k + 1 < argc)
      known_gaps.insert(std::atoi(argv[++k]));
    else {
      std::fprintf(stderr, "usage: acceptance [--work DIR] [--only N]... [--known-gap N]...\n");
      return 2;
    }
  }
  fs::remove_all(work);
  fs::create_directories(work);

  DeskRun desk;
  desk.data = work / "data";
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
      {1, measure_formulas},
      {2, physics},
      {3, synthetic_obstacles},
      {4, gradients},
      {5, [&] { return training(desk); }},
      {6, [&] { return map_agreement(desk); }},
      {7, [&] { return throughput(desk); }},
      {8, [&] { return resolution(desk); }},
      {9, [&] { return correlation(desk); }},
      {10, planner_optimality},
      {11, [&] { return determinism(work); }},
  };
  // Criteria 6 to 9 need the desk corpus and model from criterion 5.
  if (!only.empty() && std::any_of(only.begin(), only.end(), [](int k) { return k >= 6 && k <= 9; })) only.insert(5);
  if (only.count(7)) only.insert(6);

  int unexpected = 0, passed = 0, ran = 0;
  for (const auto& [id, fn] : criteria) {
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const bool gap = known_gaps.count(id) > 0;
    ++ran;
    passed += o.pass;
    if (o.pass == gap) ++unexpected;
    std::printf("criterion %2d %s%s (%.1f s) %s\n", id, o.pass ? "PASS" : "FAIL",
                gap ? (o.pass ? " [listed as known gap, now passing]" : " [known gap]") : "", seconds_since(t0),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria pass\n", passed, ran);
  return unexpected == 0 ? 0 : 1;
}
