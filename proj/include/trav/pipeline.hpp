#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "trav/dataset.hpp"
#include "trav/kvconfig.hpp"
#include "trav/nnmodel.hpp"
#include "trav/terraingen.hpp"
#include "trav/vehiclesim.hpp"

namespace trav {

/// Keys that start with `prefix`, with the prefix removed.
KeyValueConfig config_section(const KeyValueConfig& cfg, const std::string& prefix);
/// Every key of `cfg` with `prefix` prepended.
KeyValueConfig with_prefix(const KeyValueConfig& cfg, const std::string& prefix);

/// Built-in defaults for every pipeline key. Paper scale raises terrain
/// resolution, collection budget and training length.
KeyValueConfig pipeline_defaults(bool paper_scale);

// ------------------------------------------------------------ terrain set ---
//
// manifest.txt holds terrain.count and, per entry k, terrain.k.id,
// terrain.k.split, terrain.k.file and either the recipe under
// terrain.k.recipe. or the obstacle kind in terrain.k.synthetic.

struct TerrainEntry {
  CorpusTerrain terrain;
  std::string file;       ///< raster file name relative to the manifest
  std::string synthetic;  ///< obstacle kind for synthetic rasters, empty for recipes
};

void write_terrain_manifest(const std::vector<TerrainEntry>& entries, const std::filesystem::path& dir);
std::vector<TerrainEntry> read_terrain_manifest(const std::filesystem::path& dir);

/// Loads the raster of one entry and checks a recipe entry against its size.
Heightfield load_terrain(const std::filesystem::path& dir, const TerrainEntry& entry);

/// Inset that keeps every anchored probe footprint on the raster at speed v.
double probe_margin(const VehicleConfig& vehicle, double v, const MeasureParams& p = {});

// ------------------------------------------------------------------- demo ---

struct DemoApproach {
  std::string name;
  double x = 0.0, y = 0.0, heading = 0.0;  ///< spawn pose [m, rad]
};

/// Head-on plus two easier approaches on each 40 m synthetic terrain: a
/// lateral offset and an angle for the hill and ditch, two crossing angles
/// for the full-width step.
std::vector<DemoApproach> demo_approaches(SyntheticKind kind);

struct DemoRow {
  double time = 0.0;  ///< window start [s]
  double x = 0.0, y = 0.0, heading = 0.0;
  TraversabilityLabel simulated;
  std::array<float, 3> predicted{};  ///< raw model outputs
  bool has_prediction = false;
};

struct DemoTrace {
  DemoApproach approach;
  VehicleStatus termination = VehicleStatus::kOk;
  bool discarded = false;
  std::vector<DemoRow> rows;
};

/// Drives each approach once and labels every complete window. Predictions
/// are added when `model` is given and the patch fits on the terrain.
std::vector<DemoTrace> demo_traces(SyntheticKind kind, const VehicleConfig& vehicle, double v, double duration,
                                   const ModelParamsF* model, const MeasureParams& p = {});

struct ScanPoint {
  double distance = 0.0, x = 0.0, y = 0.0;
  bool valid = false;
  TraversabilityLabel label;
};

struct ApproachScan {
  DemoApproach approach;
  std::vector<ScanPoint> points;
  int valid = 0;
  double min_L = 2.0;     ///< lowest ground-truth L along the line
  double E_at_min = 0.0;  ///< E of the probe with the lowest L
  double max_E = 0.0;
};

/// Anchored probes every `spacing` metres along each approach line, from the
/// spawn pose forward for `length` metres.
std::vector<ApproachScan> approach_scans(SyntheticKind kind, const VehicleConfig& vehicle, double v, double length,
                                         double spacing, const MeasureParams& p = {});

void write_scan_csv(const ApproachScan& scan, const std::filesystem::path& path);

void write_demo_csv(const DemoTrace& trace, const std::filesystem::path& path);

}  // namespace trav
