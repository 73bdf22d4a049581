#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trav/dataset.hpp"
#include "trav/heightfield.hpp"
#include "trav/nnmodel.hpp"
#include "trav/vehiclesim.hpp"

namespace trav {

/// Cell-centred evaluation grid: point (i, j) at
/// (origin_x + (i + 0.5) * stride, origin_y + (j + 0.5) * stride).
struct MapGrid {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double stride = 1.0;
  int nx = 0;
  int ny = 0;

  double x(int i) const { return origin_x + (i + 0.5) * stride; }
  double y(int j) const { return origin_y + (j + 0.5) * stride; }
  std::size_t cells() const { return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny); }
  bool operator==(const MapGrid&) const = default;

  /// floor(extent / stride) cells per axis over the raster.
  static MapGrid covering(const Heightfield& hf, double stride);
  /// n x n cells spread evenly over the square inset by `margin`.
  static MapGrid inset(const Heightfield& hf, int n, double margin);
};

/// The eight compass headings, counter-clockwise from +x in 45 degree steps.
std::vector<Eigen::Vector2d> compass_headings(int n = 8);

enum Measure : int { kLocomotion = 0, kEnergy = 1, kAcceleration = 2 };
const char* measure_name(int m);

/// Per-heading, per-measure grids in [0, 1]. Cell index is j * nx + i.
struct TraversabilityMap {
  MapGrid grid;
  std::vector<Eigen::Vector2d> headings;
  double target_speed = 0.0;
  std::vector<std::array<std::vector<float>, 3>> values;  ///< [heading][measure][cell]
  std::vector<std::vector<std::uint8_t>> valid;           ///< [heading][cell]

  void reset(const MapGrid& g, const std::vector<Eigen::Vector2d>& h, double v);
  float at(int heading, int measure, int i, int j) const {
    return values[heading][measure][static_cast<std::size_t>(j) * grid.nx + i];
  }
  bool is_valid(int heading, int i, int j) const {
    return valid[heading][static_cast<std::size_t>(j) * grid.nx + i] != 0;
  }
  std::size_t valid_count() const;
};

/// Model sweep. Cells whose patch leaves the raster are masked. Patches are
/// batched in fixed chunks, so any `jobs` gives bit-identical maps. Outputs
/// are clipped to [0, 1] here.
TraversabilityMap sweep_map(const ModelParamsF& params, const Heightfield& hf,
                            const std::vector<Eigen::Vector2d>& headings, double v, const MapGrid& grid,
                            int jobs = 1);
TraversabilityMap sweep_map(const ModelParamsF& params, const Heightfield& hf,
                            const std::vector<Eigen::Vector2d>& headings, double v, double stride, int jobs = 1);

/// Anchored spawn probe per cell and heading. Cells whose footprint leaves
/// the raster or whose relaxation failed are masked.
TraversabilityMap ground_truth_map(const Heightfield& hf, const VehicleConfig& vehicle,
                                   const std::vector<Eigen::Vector2d>& headings, double v, const MapGrid& grid,
                                   int jobs = 1, const MeasureParams& p = {});

struct MapError {
  std::array<double, 3> measure{};
  double mean = 0.0;  ///< average over the three measures
  std::size_t cells = 0;
};

/// Mean |pred - truth| over cells valid in both maps, per measure.
MapError map_error(const TraversabilityMap& pred, const TraversabilityMap& truth);

/// Block average at `resolution`, interpolated back onto the source nodes
/// (edges clamped). A block larger than the raster gives the flat mean.
Heightfield coarsen(const Heightfield& hf, double resolution);

struct ResolutionPoint {
  double resolution = 0.0;
  std::array<double, 3> error{};       ///< mean |delta| against the native sweep
  std::array<double, 3> normalized{};  ///< divided by the coarsest error
  double mean_normalized = 0.0;
};

/// Sweeps coarsened copies of `hf` and compares them with the native sweep.
/// `resolutions` must be ascending; the first should be the native cell size.
std::vector<ResolutionPoint> resolution_study(const ModelParamsF& params, const Heightfield& hf,
                                              const std::vector<double>& resolutions,
                                              const std::vector<Eigen::Vector2d>& headings, double v,
                                              const MapGrid& grid, int jobs = 1);

/// Lower bin edges for the sensitivity study: four bins over [1, 1.01], two
/// over [1.01, 1.02], then 0.01 steps up to `max_roughness`.
std::vector<double> roughness_bin_edges(double max_roughness);

struct SensitivityBin {
  double lo = 0.0, hi = 0.0;
  std::size_t count = 0;
  double rmsd = 0.0;
  double stddev = 0.0;
  bool reported = false;  ///< at least `min_count` samples
};

struct SensitivityReport {
  std::vector<SensitivityBin> bins;
  std::size_t points = 0;
  std::size_t degenerate = 0;  ///< smoothed gradient too small to define t'
};

/// Reflects `t` across the downhill direction of the gradient `g`.
Eigen::Vector2d equivalent_heading(const Eigen::Vector2d& t, const Eigen::Vector2d& g);

/// Random points and headings per terrain; epsilon = L(t) - L(t') with t'
/// the equivalent heading about the 3 m Gaussian-smoothed gradient, binned
/// by roughness within 3 m.
SensitivityReport feature_sensitivity(const ModelParamsF& params, const std::vector<const Heightfield*>& terrains,
                                      int points_per_terrain, double v, std::uint64_t seed, int jobs = 1,
                                      std::size_t min_count = 20);

/// Average ranks, ties sharing the mean of their positions (1-based).
std::vector<double> average_ranks(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

struct Histogram2D {
  int nx = 20, ny = 20;
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  std::vector<double> counts;  ///< row-major, y outer

  Histogram2D() = default;
  Histogram2D(int nx, int ny, double x_lo, double x_hi, double y_lo, double y_hi);
  void add(double x, double y);
  double at(int ix, int iy) const { return counts[static_cast<std::size_t>(iy) * nx + ix]; }
  /// Scales every column (fixed x bin) to sum 1; empty columns stay 0.
  void normalize_columns();
};

struct CorrelationReport {
  std::array<std::array<double, 3>, 3> rho{};  ///< Spearman between L, E, A
  std::size_t samples = 0;
  std::array<Histogram2D, 3> pairs;     ///< (L,E), (L,A), (E,A)
  std::array<Histogram2D, 3> velocity;  ///< (v, L|E|A), column-normalized
};

CorrelationReport correlation_study(const std::filesystem::path& store, int bins = 20);

// ---------------------------------------------------------------- output ---

/// One ESRI ASCII grid per (heading, measure) with -9999 for masked cells,
/// PGM previews, and manifest.txt.
void write_map(const TraversabilityMap& map, const std::filesystem::path& dir, bool pgm = true);
TraversabilityMap read_map(const std::filesystem::path& dir);

/// 8-bit grayscale, row 0 at the top (north), value 0..1 to 0..255.
void write_pgm(const std::vector<float>& values, const std::vector<std::uint8_t>& valid, int nx, int ny,
               const std::filesystem::path& path);

void write_resolution_csv(const std::vector<ResolutionPoint>& points, const std::filesystem::path& path);
void write_sensitivity_csv(const SensitivityReport& report, const std::filesystem::path& path);
void write_correlation_csv(const CorrelationReport& report, const std::filesystem::path& path);
void write_histogram_csv(const Histogram2D& h, const std::filesystem::path& path);

}  // namespace trav
