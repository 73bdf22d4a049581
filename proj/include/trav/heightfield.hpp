#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "trav/errors.hpp"

namespace trav {

struct SurfaceQuery {
  double height = 0.0;
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double slope = 0.0;  ///< angle between normal and vertical [rad]
};

/// Regular-grid elevation raster. Node (ix, iy) sits at
/// (origin_x + ix * cell_size, origin_y + iy * cell_size); heights are stored
/// row-major with y as the row index. Immutable once built.
class Heightfield {
 public:
  Heightfield(double origin_x, double origin_y, double cell_size, int nx, int ny,
              std::vector<double> heights);

  static Heightfield constant(double origin_x, double origin_y, double cell_size, int nx, int ny,
                              double value = 0.0);

  /// Builds a raster by evaluating `fn(x, y)` at every node.
  template <typename Fn>
  static Heightfield from_function(double origin_x, double origin_y, double cell_size, int nx,
                                   int ny, Fn&& fn) {
    std::vector<double> h(static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny));
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix)
        h[static_cast<std::size_t>(iy) * nx + ix] =
            fn(origin_x + ix * cell_size, origin_y + iy * cell_size);
    return Heightfield(origin_x, origin_y, cell_size, nx, ny, std::move(h));
  }

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  double cell_size() const noexcept { return cell_size_; }
  double origin_x() const noexcept { return origin_x_; }
  double origin_y() const noexcept { return origin_y_; }
  double min_x() const noexcept { return origin_x_; }
  double min_y() const noexcept { return origin_y_; }
  double max_x() const noexcept { return origin_x_ + (nx_ - 1) * cell_size_; }
  double max_y() const noexcept { return origin_y_ + (ny_ - 1) * cell_size_; }
  double width() const noexcept { return (nx_ - 1) * cell_size_; }
  double height_extent() const noexcept { return (ny_ - 1) * cell_size_; }

  double at(int ix, int iy) const { return heights_[index(ix, iy)]; }
  std::span<const double> heights() const noexcept { return heights_; }

  /// True when (x, y) lies at least `margin` inside the raster bounds.
  bool contains(double x, double y, double margin = 0.0) const noexcept {
    return x >= min_x() + margin && x <= max_x() - margin && y >= min_y() + margin &&
           y <= max_y() - margin;
  }

  /// Bilinear interpolation; throws BoundsError outside the raster.
  double sample(double x, double y) const {
    double fx = (x - origin_x_) * inv_cell_;
    double fy = (y - origin_y_) * inv_cell_;
    const double tol = 1e-9;
    if (!(fx >= -tol && fx <= (nx_ - 1) + tol && fy >= -tol && fy <= (ny_ - 1) + tol))
      throw_bounds(x, y);
    fx = std::clamp(fx, 0.0, static_cast<double>(nx_ - 1));
    fy = std::clamp(fy, 0.0, static_cast<double>(ny_ - 1));
    const int ix = std::min(static_cast<int>(fx), nx_ - 2);
    const int iy = std::min(static_cast<int>(fy), ny_ - 2);
    const double tx = fx - ix;
    const double ty = fy - iy;
    const double* row0 = heights_.data() + static_cast<std::size_t>(iy) * nx_ + ix;
    const double* row1 = row0 + nx_;
    const double a = row0[0] + tx * (row0[1] - row0[0]);
    const double b = row1[0] + tx * (row1[1] - row1[0]);
    return a + ty * (b - a);
  }

  /// Height, unit normal and slope from central differences at cell spacing.
  /// Requires a one-cell margin.
  SurfaceQuery surface_query(double x, double y) const;

  /// Mean of all node heights.
  double mean() const;

  bool operator==(const Heightfield& other) const;

 private:
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(ix);
  }
  [[noreturn]] void throw_bounds(double x, double y) const;

  double origin_x_;
  double origin_y_;
  double cell_size_;
  double inv_cell_;
  int nx_;
  int ny_;
  std::vector<double> heights_;
};

/// Block-average coarsening. Output node k is the mean of the source nodes
/// whose centres fall in the k-th cell of size `new_cell_size`; incomplete
/// trailing cells are dropped. Equal cell size returns an identical raster.
Heightfield resample(const Heightfield& hf, double new_cell_size);

/// Separable Gaussian filter, kernel truncated at 3 sigma and renormalised
/// over the in-bounds support. `sigma` is in metres; zero is the identity.
Heightfield gaussian_smooth(const Heightfield& hf, double sigma);

/// Surface-area ratio over the grid cells whose centres lie within `radius`:
/// triangulated area of the heights with the mean cell gradient removed,
/// divided by the cells' horizontal area. Exactly 1 on any plane.
double roughness(const Heightfield& hf, double x, double y, double radius = 3.0);

/// Returns a copy with every height shifted by `offset`.
Heightfield offset_heights(const Heightfield& hf, double offset);

// ESRI ASCII grid: ncols, nrows, xllcorner, yllcorner, cellsize, NODATA_value,
// then rows north to south. Nodes are cell centres, so node (0,0) sits half a
// cell inside the lower-left corner. Any nodata value is rejected.
void write_asc(const Heightfield& hf, const std::filesystem::path& path);
Heightfield read_asc(const std::filesystem::path& path);

// Binary: "HFB1", u32 nx, u32 ny, f64 origin_x, f64 origin_y, f64 cell_size,
// nx*ny f32 heights row-major (south row first), all little-endian. Heights are
// narrowed to f32, so only f32-representable rasters round-trip bit-exactly.
void write_hfb(const Heightfield& hf, const std::filesystem::path& path);
Heightfield read_hfb(const std::filesystem::path& path);

/// Dispatches on extension (.asc or .hfb).
void write_raster(const Heightfield& hf, const std::filesystem::path& path);
Heightfield read_raster(const std::filesystem::path& path);

}  // namespace trav
