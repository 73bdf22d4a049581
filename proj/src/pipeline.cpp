#include "trav/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "trav/errors.hpp"

namespace trav {

namespace fs = std::filesystem;

KeyValueConfig config_section(const KeyValueConfig& cfg, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : cfg.values())
    if (k.size() > prefix.size() && k.compare(0, prefix.size(), prefix) == 0) out.set(k.substr(prefix.size()), v);
  return out;
}

KeyValueConfig with_prefix(const KeyValueConfig& cfg, const std::string& prefix) {
  KeyValueConfig out;
  for (const auto& [k, v] : cfg.values()) out.set(prefix + k, v);
  return out;
}

KeyValueConfig pipeline_defaults(bool paper_scale) {
  KeyValueConfig c;
  c.set("seed", "1");
  c.set("terrain.n_train", 30LL);
  c.set("terrain.n_validation", 10LL);
  c.set("terrain.size", 50.0);
  c.set("terrain.cell_size", paper_scale ? 0.05 : 0.1);
  c.set("terrain.format", "hfb");

  // Desk scale gives roughly 60k samples; paper scale uses 20 vehicles of
  // 500 s each per terrain.
  CollectionSchedule s;
  s.vehicles_per_terrain = paper_scale ? 20 : 1;
  s.seconds_per_vehicle = paper_scale ? 500.0 : 80.0;
  c.merge(s.to_config());

  TrainConfig t;
  t.epochs = paper_scale ? 100 : 8;
  c.merge(t.to_config());

  c.set("sweep.speed", 1.3);
  c.set("sweep.stride", paper_scale ? 0.5 : 1.0);
  c.set("sweep.headings", 8LL);
  c.set("truth.grid", 30LL);
  c.set("analyze.resolutions", std::vector<double>{0.1, 0.25, 0.5, 1, 2, 5, 10, 25, 50});
  c.set("analyze.grid", 30LL);
  c.set("analyze.points", paper_scale ? 5000LL : 1000LL);
  c.set("analyze.bins", 20LL);
  c.set("plan.objective", "multi");
  c.set("demo.speed", 1.0);
  c.set("demo.duration", 15.0);
  c.merge(with_prefix(VehicleConfig{}.to_config(), "vehicle."));
  return c;
}

// ------------------------------------------------------------ terrain set ---

void write_terrain_manifest(const std::vector<TerrainEntry>& entries, const fs::path& dir) {
  KeyValueConfig m;
  m.set("terrain.count", static_cast<long long>(entries.size()));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    const std::string p = "terrain." + std::to_string(k) + ".";
    m.set(p + "id", static_cast<long long>(entries[k].terrain.id));
    m.set(p + "split", split_name(entries[k].terrain.split));
    m.set(p + "file", entries[k].file);
    if (entries[k].synthetic.empty())
      m.merge(with_prefix(entries[k].terrain.recipe.to_config(), p + "recipe."));
    else
      m.set(p + "synthetic", entries[k].synthetic);
  }
  m.save(dir / "manifest.txt");
}

std::vector<TerrainEntry> read_terrain_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.txt";
  if (!fs::exists(path)) throw ConfigError("no terrain manifest at " + path.string());
  const KeyValueConfig m = KeyValueConfig::load(path);
  const long long n = m.get_int("terrain.count", -1);
  if (n < 1) throw ConfigError(path.string() + " lists no terrains");
  std::vector<TerrainEntry> out;
  for (long long k = 0; k < n; ++k) {
    const std::string p = "terrain." + std::to_string(k) + ".";
    TerrainEntry e;
    const long long id = m.get_int(p + "id", -1);
    if (id < 0) throw ConfigError(path.string() + " has no id for entry " + std::to_string(k));
    e.terrain.id = static_cast<std::uint32_t>(id);
    e.terrain.split = parse_split(m.get_string(p + "split", ""));
    e.file = m.get_string(p + "file", "");
    if (e.file.empty()) throw ConfigError(path.string() + " has no file for entry " + std::to_string(k));
    e.synthetic = m.get_string(p + "synthetic", "");
    if (e.synthetic.empty())
      e.terrain.recipe = TerrainRecipe::from_config(config_section(m, p + "recipe."));
    else
      parse_synthetic_kind(e.synthetic);
    out.push_back(std::move(e));
  }
  return out;
}

Heightfield load_terrain(const fs::path& dir, const TerrainEntry& entry) {
  Heightfield hf = read_raster(dir / entry.file);
  if (!entry.synthetic.empty()) return hf;
  const TerrainRecipe& r = entry.terrain.recipe;
  const int n = static_cast<int>(std::lround(r.size / r.cell_size));
  if (hf.nx() != n || hf.ny() != n || std::abs(hf.cell_size() - r.cell_size) > 1e-12)
    throw ConfigError(entry.file + " does not match its recipe");
  return hf;
}

double probe_margin(const VehicleConfig& vehicle, double v, const MeasureParams& p) {
  return vehicle.footprint_radius() + 0.2 + v * p.tau + 0.05;
}

// ------------------------------------------------------------------- demo ---

std::vector<DemoApproach> demo_approaches(SyntheticKind kind) {
  const double deg = M_PI / 180.0;
  switch (kind) {
    case SyntheticKind::kStep:
      // The face spans the whole terrain, so a lateral offset changes nothing;
      // two crossing angles that clear the step replace it.
      return {{"head_on", 12.0, 20.0, 0.0}, {"angled", 17.0, 14.8, 60.0 * deg}, {"shallow", 18.0, 14.4, 70.0 * deg}};
    case SyntheticKind::kDitch:
      // Ring of radius 5 around (20, 20).
      return {{"head_on", 8.0, 20.0, 0.0}, {"offset", 8.0, 24.0, 0.0}, {"angled", 8.0, 20.0, 20.0 * deg}};
    case SyntheticKind::kHill:
      return {{"head_on", 8.0, 20.0, 0.0}, {"offset", 8.0, 25.0, 0.0}, {"angled", 8.0, 20.0, 20.0 * deg}};
  }
  throw ArgumentError("unknown scenario");
}

std::vector<DemoTrace> demo_traces(SyntheticKind kind, const VehicleConfig& vehicle, double v, double duration,
                                   const ModelParamsF* model, const MeasureParams& p) {
  if (!(v >= kMinSpeed && v <= kMaxSpeed)) throw ArgumentError("demo speed outside [0.07, 2.69] m/s");
  if (!(duration > p.tau)) throw ArgumentError("demo duration must exceed one window");
  const Heightfield hf = synthetic_test_terrain(kind);
  const int window = static_cast<int>(std::lround(p.tau * 20.0));
  std::vector<DemoTrace> out;
  for (const DemoApproach& a : demo_approaches(kind)) {
    EpisodeConfig ep;
    ep.target_speed = v;
    ep.spawn_x = a.x;
    ep.spawn_y = a.y;
    ep.spawn_heading = a.heading;
    ep.max_duration = duration;
    ep.boundary_margin = collection_margin(vehicle);
    const EpisodeResult r = run_episode(hf, vehicle, ep, p);
    DemoTrace t;
    t.approach = a;
    t.termination = r.termination;
    t.discarded = r.discarded;
    const auto& obs = r.observations;
    for (int k = window; k < static_cast<int>(obs.size()); ++k) {
      const Observation& start = obs[k - window];
      if (std::abs(obs[k].time - start.time - p.tau) > 1e-6) continue;
      DemoRow row;
      row.time = start.time;
      row.x = start.position.x();
      row.y = start.position.y();
      row.heading = std::atan2(start.heading.y(), start.heading.x());
      row.simulated = label(std::span<const Observation>(obs.data() + (k - window), static_cast<std::size_t>(window + 1)), v, p);
      if (model) {
        try {
          row.predicted = predict(*model, extract_patch_f32(hf, row.x, row.y, start.heading), v);
          row.has_prediction = true;
        } catch (const BoundsError&) {
        }
      }
      t.rows.push_back(row);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<ApproachScan> approach_scans(SyntheticKind kind, const VehicleConfig& vehicle, double v, double length,
                                         double spacing, const MeasureParams& p) {
  if (!(length > 0.0) || !(spacing > 0.0)) throw ArgumentError("scan length and spacing must be positive");
  const Heightfield hf = synthetic_test_terrain(kind);
  std::vector<ApproachScan> out;
  for (const DemoApproach& a : demo_approaches(kind)) {
    ApproachScan s;
    s.approach = a;
    const int n = static_cast<int>(std::floor(length / spacing + 1e-9)) + 1;
    for (int k = 0; k < n; ++k) {
      const double d = k * spacing;
      const double x = a.x + d * std::cos(a.heading), y = a.y + d * std::sin(a.heading);
      const ProbeResult r = anchored_spawn_probe(hf, vehicle, x, y, a.heading, v, p);
      s.points.push_back({d, x, y, r.valid, r.label});
      if (!r.valid) continue;
      ++s.valid;
      if (r.label.L < s.min_L) {
        s.min_L = r.label.L;
        s.E_at_min = r.label.E;
      }
      s.max_E = std::max(s.max_E, r.label.E);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_scan_csv(const ApproachScan& scan, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "distance,x,y,valid,L,E,A\n";
  f.precision(9);
  for (const ScanPoint& q : scan.points) {
    f << q.distance << "," << q.x << "," << q.y << "," << (q.valid ? 1 : 0) << ",";
    if (q.valid)
      f << q.label.L << "," << q.label.E << "," << q.label.A << "\n";
    else
      f << ",,\n";
  }
  if (!f) throw ConfigError("failed writing " + path.string());
}

void write_demo_csv(const DemoTrace& trace, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "time,x,y,heading,sim_L,sim_E,sim_A,pred_L,pred_E,pred_A\n";
  f.precision(9);
  for (const DemoRow& r : trace.rows) {
    f << r.time << "," << r.x << "," << r.y << "," << r.heading << "," << r.simulated.L << "," << r.simulated.E << ","
      << r.simulated.A;
    if (r.has_prediction)
      f << "," << r.predicted[0] << "," << r.predicted[1] << "," << r.predicted[2] << "\n";
    else
      f << ",,,\n";
  }
  if (!f) throw ConfigError("failed writing " + path.string());
}

}  // namespace trav
