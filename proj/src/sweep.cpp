#include "trav/sweep.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "trav/errors.hpp"
#include "trav/kvconfig.hpp"
#include "trav/parallel.hpp"
#include "trav/random.hpp"

namespace trav {

namespace fs = std::filesystem;

namespace {

// Cells per sweep batch. Fixed so the batch layout never depends on `jobs`.
constexpr int kChunkCells = 32;
constexpr double kNoData = -9999.0;

float clip01(float x) { return std::clamp(x, 0.0f, 1.0f); }

void check_heading(const Eigen::Vector2d& h) {
  if (!(std::abs(h.norm() - 1.0) < 1e-9)) throw ArgumentError("headings must be unit vectors");
}

// True when every patch sample for this pose lies on the raster.
bool patch_fits(const Heightfield& hf, double x, double y, const Eigen::Vector2d& t) {
  const PatchSpec spec;
  const double a = 0.5 * (spec.n_long - 1) * spec.spacing();
  const double b = 0.5 * (spec.n_lat - 1) * spec.spacing();
  const Eigen::Vector2d n(-t.y(), t.x());
  const double tol = 1e-9 * hf.cell_size();
  for (int sl : {-1, 1})
    for (int sw : {-1, 1}) {
      const Eigen::Vector2d c = Eigen::Vector2d(x, y) + sl * a * t + sw * b * n;
      if (c.x() < hf.min_x() - tol || c.x() > hf.max_x() + tol || c.y() < hf.min_y() - tol ||
          c.y() > hf.max_y() + tol)
        return false;
    }
  return true;
}

void check_footprint(const Heightfield& hf) {
  const double reach = PatchSpec{}.reach();
  if (!(hf.width() > 2.0 * reach && hf.height_extent() > 2.0 * reach))
    throw ConfigError("terrain is smaller than the patch footprint");
}

struct PatchJob {
  std::size_t cell;
  int heading;
};

// Eval-mode forward over a list of poses; outputs are raw head values.
void run_patches(Network<float>& net, const Heightfield& hf, const MapGrid& grid,
                 const std::vector<Eigen::Vector2d>& headings, double v, const std::vector<PatchJob>& jobs,
                 Mat<float>& patches, Mat<float>& out) {
  const int n = static_cast<int>(jobs.size());
  patches.resize(kPatchSize, n);
  for (int k = 0; k < n; ++k) {
    const int i = static_cast<int>(jobs[k].cell % grid.nx);
    const int j = static_cast<int>(jobs[k].cell / grid.nx);
    const Patch p = extract_patch_f32(hf, grid.x(i), grid.y(j), headings[jobs[k].heading]);
    std::copy(p.begin(), p.end(), patches.col(k).data());
  }
  const RowVec<float> vn = RowVec<float>::Constant(n, static_cast<float>(normalize_speed(v)));
  out = net.forward(patches, vn, Mode::kEval);
}

}  // namespace

// ------------------------------------------------------------------ grid ---

MapGrid MapGrid::covering(const Heightfield& hf, double stride) {
  if (!(stride > 0.0)) throw ArgumentError("sweep stride must be positive");
  MapGrid g;
  g.origin_x = hf.min_x();
  g.origin_y = hf.min_y();
  g.stride = stride;
  g.nx = static_cast<int>(std::floor(hf.width() / stride + 1e-9));
  g.ny = static_cast<int>(std::floor(hf.height_extent() / stride + 1e-9));
  if (g.nx < 1 || g.ny < 1) throw ConfigError("sweep stride exceeds the terrain extent");
  return g;
}

MapGrid MapGrid::inset(const Heightfield& hf, int n, double margin) {
  if (n < 1) throw ArgumentError("grid needs at least one cell");
  const double w = std::min(hf.width(), hf.height_extent()) - 2.0 * margin;
  if (!(w > 0.0)) throw ConfigError("margin leaves no room for the grid");
  MapGrid g;
  g.stride = w / n;
  g.origin_x = hf.min_x() + margin;
  g.origin_y = hf.min_y() + margin;
  g.nx = n;
  g.ny = n;
  return g;
}

std::vector<Eigen::Vector2d> compass_headings(int n) {
  if (n < 1) throw ArgumentError("need at least one heading");
  std::vector<Eigen::Vector2d> out;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * M_PI * k / n;
    Eigen::Vector2d h(std::cos(a), std::sin(a));
    // Snap the cos/sin residue at the axis points to exact zeros.
    for (int c = 0; c < 2; ++c)
      if (std::abs(h[c]) < 1e-15) h[c] = 0.0;
    out.push_back(h);
  }
  return out;
}

const char* measure_name(int m) {
  static const char* names[] = {"L", "E", "A"};
  if (m < 0 || m > 2) throw ArgumentError("measure index out of range");
  return names[m];
}

void TraversabilityMap::reset(const MapGrid& g, const std::vector<Eigen::Vector2d>& h, double v) {
  grid = g;
  headings = h;
  target_speed = v;
  values.assign(h.size(), {});
  for (auto& hm : values)
    for (auto& m : hm) m.assign(g.cells(), 0.0f);
  valid.assign(h.size(), std::vector<std::uint8_t>(g.cells(), 0));
}

std::size_t TraversabilityMap::valid_count() const {
  std::size_t n = 0;
  for (const auto& m : valid) n += static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
  return n;
}

// ----------------------------------------------------------------- sweeps ---

TraversabilityMap sweep_map(const ModelParamsF& params, const Heightfield& hf,
                            const std::vector<Eigen::Vector2d>& headings, double v, const MapGrid& grid, int jobs) {
  if (headings.empty()) throw ArgumentError("no headings to sweep");
  for (const auto& h : headings) check_heading(h);
  if (!(v >= kMinSpeed && v <= kMaxSpeed)) throw ArgumentError("target speed outside the trained range");
  if (!(grid.stride >= hf.cell_size() - 1e-12)) throw ArgumentError("sweep stride is finer than the raster");
  check_footprint(hf);

  TraversabilityMap map;
  map.reset(grid, headings, v);
  const std::size_t cells = grid.cells();
  const std::size_t chunks = (cells + kChunkCells - 1) / kChunkCells;
  const int workers = worker_count(chunks, jobs);
  std::vector<Network<float>> nets;
  for (int w = 0; w < workers; ++w) nets.emplace_back(params);
  std::vector<Mat<float>> patches(workers), outs(workers);

  parallel_for(chunks, jobs, [&](int w, std::size_t c) {
    std::vector<PatchJob> todo;
    const std::size_t end = std::min(cells, (c + 1) * kChunkCells);
    for (std::size_t cell = c * kChunkCells; cell < end; ++cell) {
      const int i = static_cast<int>(cell % grid.nx);
      const int j = static_cast<int>(cell / grid.nx);
      for (int h = 0; h < static_cast<int>(headings.size()); ++h)
        if (patch_fits(hf, grid.x(i), grid.y(j), headings[h])) todo.push_back({cell, h});
    }
    if (todo.empty()) return;
    run_patches(nets[w], hf, grid, headings, v, todo, patches[w], outs[w]);
    for (std::size_t k = 0; k < todo.size(); ++k) {
      auto& slot = map.values[todo[k].heading];
      for (int m = 0; m < 3; ++m) slot[m][todo[k].cell] = clip01(outs[w](m, static_cast<int>(k)));
      map.valid[todo[k].heading][todo[k].cell] = 1;
    }
  });
  return map;
}

TraversabilityMap sweep_map(const ModelParamsF& params, const Heightfield& hf,
                            const std::vector<Eigen::Vector2d>& headings, double v, double stride, int jobs) {
  return sweep_map(params, hf, headings, v, MapGrid::covering(hf, stride), jobs);
}

TraversabilityMap ground_truth_map(const Heightfield& hf, const VehicleConfig& vehicle,
                                   const std::vector<Eigen::Vector2d>& headings, double v, const MapGrid& grid,
                                   int jobs, const MeasureParams& p) {
  if (headings.empty()) throw ArgumentError("no headings to probe");
  for (const auto& h : headings) check_heading(h);
  if (!(v > 0.0)) throw ArgumentError("target speed must be positive");
  TraversabilityMap map;
  map.reset(grid, headings, v);
  const std::size_t nh = headings.size();
  parallel_for(grid.cells() * nh, jobs, [&](int, std::size_t task) {
    const std::size_t cell = task / nh;
    const int h = static_cast<int>(task % nh);
    const int i = static_cast<int>(cell % grid.nx);
    const int j = static_cast<int>(cell / grid.nx);
    ProbeResult r;
    try {
      r = anchored_spawn_probe(hf, vehicle, grid.x(i), grid.y(j), std::atan2(headings[h].y(), headings[h].x()), v, p);
    } catch (const BoundsError&) {
      return;
    }
    if (!r.valid) return;
    map.values[h][0][cell] = clip01(static_cast<float>(r.label.L));
    map.values[h][1][cell] = clip01(static_cast<float>(r.label.E));
    map.values[h][2][cell] = clip01(static_cast<float>(r.label.A));
    map.valid[h][cell] = 1;
  });
  return map;
}

MapError map_error(const TraversabilityMap& pred, const TraversabilityMap& truth) {
  if (!(pred.grid == truth.grid) || pred.headings.size() != truth.headings.size())
    throw ArgumentError("maps differ in grid or heading count");
  MapError e;
  std::array<double, 3> sum{};
  for (std::size_t h = 0; h < pred.headings.size(); ++h)
    for (std::size_t c = 0; c < pred.grid.cells(); ++c) {
      if (!pred.valid[h][c] || !truth.valid[h][c]) continue;
      ++e.cells;
      for (int m = 0; m < 3; ++m)
        sum[m] += std::abs(static_cast<double>(pred.values[h][m][c]) - truth.values[h][m][c]);
    }
  if (e.cells == 0) throw ArgumentError("maps share no valid cells");
  for (int m = 0; m < 3; ++m) e.measure[m] = sum[m] / static_cast<double>(e.cells);
  e.mean = (e.measure[0] + e.measure[1] + e.measure[2]) / 3.0;
  return e;
}

// ------------------------------------------------------------- resolution ---

Heightfield coarsen(const Heightfield& hf, double resolution) {
  if (!(resolution > 0.0)) throw ArgumentError("resolution must be positive");
  const double cs = hf.cell_size();
  if (resolution <= cs * (1.0 + 1e-9)) return hf;
  const int nx = static_cast<int>(std::floor(hf.nx() * cs / resolution + 1e-9));
  const int ny = static_cast<int>(std::floor(hf.ny() * cs / resolution + 1e-9));
  if (nx < 2 || ny < 2)
    return Heightfield::constant(hf.origin_x(), hf.origin_y(), cs, hf.nx(), hf.ny(), hf.mean());
  const Heightfield coarse = resample(hf, resolution);
  return Heightfield::from_function(hf.origin_x(), hf.origin_y(), cs, hf.nx(), hf.ny(), [&](double x, double y) {
    return coarse.sample(std::clamp(x, coarse.min_x(), coarse.max_x()), std::clamp(y, coarse.min_y(), coarse.max_y()));
  });
}

std::vector<ResolutionPoint> resolution_study(const ModelParamsF& params, const Heightfield& hf,
                                              const std::vector<double>& resolutions,
                                              const std::vector<Eigen::Vector2d>& headings, double v,
                                              const MapGrid& grid, int jobs) {
  if (resolutions.size() < 2) throw ArgumentError("resolution study needs at least two resolutions");
  for (std::size_t k = 1; k < resolutions.size(); ++k)
    if (!(resolutions[k] > resolutions[k - 1])) throw ArgumentError("resolutions must be ascending");
  if (resolutions.front() < hf.cell_size() * (1.0 - 1e-9))
    throw ArgumentError("resolution finer than the raster");

  const TraversabilityMap native = sweep_map(params, hf, headings, v, grid, jobs);
  std::vector<ResolutionPoint> out;
  for (double r : resolutions) {
    const TraversabilityMap m = sweep_map(params, coarsen(hf, r), headings, v, grid, jobs);
    ResolutionPoint pt;
    pt.resolution = r;
    pt.error = map_error(m, native).measure;
    out.push_back(pt);
  }
  const auto& last = out.back().error;
  const double last_mean = (last[0] + last[1] + last[2]) / 3.0;
  for (auto& pt : out) {
    for (int m = 0; m < 3; ++m) pt.normalized[m] = last[m] > 0.0 ? pt.error[m] / last[m] : 0.0;
    const double mean = (pt.error[0] + pt.error[1] + pt.error[2]) / 3.0;
    pt.mean_normalized = last_mean > 0.0 ? mean / last_mean : 0.0;
  }
  return out;
}

// ------------------------------------------------------------ sensitivity ---

std::vector<double> roughness_bin_edges(double max_roughness) {
  std::vector<double> e = {1.0, 1.0025, 1.005, 1.0075, 1.01, 1.015, 1.02};
  for (int k = 3; e.back() <= max_roughness; ++k) e.push_back(1.0 + 0.01 * k);
  return e;
}

Eigen::Vector2d equivalent_heading(const Eigen::Vector2d& t, const Eigen::Vector2d& g) {
  const double n = g.norm();
  if (!(n > 0.0)) throw ArgumentError("equivalent heading needs a nonzero gradient");
  const Eigen::Vector2d d = -g / n;
  return (2.0 * t.dot(d) * d - t).normalized();
}

SensitivityReport feature_sensitivity(const ModelParamsF& params, const std::vector<const Heightfield*>& terrains,
                                      int points_per_terrain, double v, std::uint64_t seed, int jobs,
                                      std::size_t min_count) {
  if (terrains.empty() || points_per_terrain < 1) throw ArgumentError("sensitivity study needs terrains and points");
  if (!(v >= kMinSpeed && v <= kMaxSpeed)) throw ArgumentError("target speed outside the trained range");
  constexpr double kSigma = 3.0;
  constexpr double kRadius = 3.0;
  struct Point {
    const Heightfield* hf;
    double x, y, roughness;
    Eigen::Vector2d t, t2;
  };
  SensitivityReport report;
  std::vector<Point> points;
  Rng rng(Rng::mix(seed));
  for (const Heightfield* hf : terrains) {
    check_footprint(*hf);
    const Heightfield smooth = gaussian_smooth(*hf, kSigma);
    const double cs = hf->cell_size();
    // Keep the smoothing kernel clear of the edges, where its renormalisation
    // would bend even a plane.
    const double margin = std::max(PatchSpec{}.reach(), 3.0 * kSigma + 2.0 * cs) + 1e-6;
    if (!(hf->width() > 2.0 * margin && hf->height_extent() > 2.0 * margin))
      throw ConfigError("terrain is too small for the sensitivity study");
    for (int k = 0; k < points_per_terrain; ++k) {
      const double x = rng.uniform(hf->min_x() + margin, hf->max_x() - margin);
      const double y = rng.uniform(hf->min_y() + margin, hf->max_y() - margin);
      const double a = rng.uniform(0.0, 2.0 * M_PI);
      ++report.points;
      const Eigen::Vector2d g((smooth.sample(x + cs, y) - smooth.sample(x - cs, y)) / (2.0 * cs),
                              (smooth.sample(x, y + cs) - smooth.sample(x, y - cs)) / (2.0 * cs));
      if (g.norm() < 1e-6) {
        ++report.degenerate;
        continue;
      }
      const Eigen::Vector2d t(std::cos(a), std::sin(a));
      points.push_back({hf, x, y, roughness(*hf, x, y, kRadius), t, equivalent_heading(t, g)});
    }
  }

  // Locomotion difference per point, batched in fixed chunks.
  constexpr std::size_t kChunk = 64;
  std::vector<double> eps(points.size());
  const std::size_t chunks = (points.size() + kChunk - 1) / kChunk;
  const int workers = worker_count(chunks, jobs);
  std::vector<Network<float>> nets;
  for (int w = 0; w < workers; ++w) nets.emplace_back(params);
  parallel_for(chunks, jobs, [&](int w, std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t n = std::min(points.size(), begin + kChunk) - begin;
    Mat<float> patches(kPatchSize, static_cast<int>(2 * n));
    for (std::size_t k = 0; k < n; ++k) {
      const Point& p = points[begin + k];
      const Patch a = extract_patch_f32(*p.hf, p.x, p.y, p.t);
      const Patch b = extract_patch_f32(*p.hf, p.x, p.y, p.t2);
      std::copy(a.begin(), a.end(), patches.col(static_cast<int>(2 * k)).data());
      std::copy(b.begin(), b.end(), patches.col(static_cast<int>(2 * k + 1)).data());
    }
    const RowVec<float> vn = RowVec<float>::Constant(static_cast<int>(2 * n), static_cast<float>(normalize_speed(v)));
    const Mat<float>& out = nets[w].forward(patches, vn, Mode::kEval);
    for (std::size_t k = 0; k < n; ++k)
      eps[begin + k] = static_cast<double>(clip01(out(0, static_cast<int>(2 * k)))) -
                       static_cast<double>(clip01(out(0, static_cast<int>(2 * k + 1))));
  });

  double max_r = 1.0;
  for (const auto& p : points) max_r = std::max(max_r, p.roughness);
  const std::vector<double> edges = roughness_bin_edges(max_r);
  std::vector<std::vector<double>> per_bin(edges.size() - 1);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const double r = std::max(points[k].roughness, 1.0);
    const auto it = std::upper_bound(edges.begin(), edges.end(), r);
    const std::size_t b = std::min<std::size_t>(static_cast<std::size_t>(it - edges.begin()) - 1, per_bin.size() - 1);
    per_bin[b].push_back(eps[k]);
  }
  for (std::size_t b = 0; b < per_bin.size(); ++b) {
    SensitivityBin bin;
    bin.lo = edges[b];
    bin.hi = edges[b + 1];
    bin.count = per_bin[b].size();
    bin.reported = bin.count >= min_count && bin.count > 0;
    if (bin.count > 0) {
      double sum = 0.0, sq = 0.0;
      for (double e : per_bin[b]) {
        sum += e;
        sq += e * e;
      }
      const double n = static_cast<double>(bin.count);
      const double mean = sum / n;
      bin.rmsd = std::sqrt(sq / n);
      double var = 0.0;
      for (double e : per_bin[b]) var += (e - mean) * (e - mean);
      bin.stddev = std::sqrt(var / n);
    }
    report.bins.push_back(bin);
  }
  return report;
}

// ------------------------------------------------------------ correlation ---

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = r;
    i = j;
  }
  return rank;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("correlation needs two equal series of length >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0 && syy > 0.0)) throw ArgumentError("correlation of a constant series");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

Histogram2D::Histogram2D(int nx_, int ny_, double xl, double xh, double yl, double yh)
    : nx(nx_), ny(ny_), x_lo(xl), x_hi(xh), y_lo(yl), y_hi(yh) {
  if (nx < 1 || ny < 1 || !(x_hi > x_lo) || !(y_hi > y_lo)) throw ArgumentError("bad histogram shape");
  counts.assign(static_cast<std::size_t>(nx) * ny, 0.0);
}

void Histogram2D::add(double x, double y) {
  const int ix = std::clamp(static_cast<int>(std::floor((x - x_lo) / (x_hi - x_lo) * nx)), 0, nx - 1);
  const int iy = std::clamp(static_cast<int>(std::floor((y - y_lo) / (y_hi - y_lo) * ny)), 0, ny - 1);
  counts[static_cast<std::size_t>(iy) * nx + ix] += 1.0;
}

void Histogram2D::normalize_columns() {
  for (int ix = 0; ix < nx; ++ix) {
    double s = 0.0;
    for (int iy = 0; iy < ny; ++iy) s += at(ix, iy);
    if (s > 0.0)
      for (int iy = 0; iy < ny; ++iy) counts[static_cast<std::size_t>(iy) * nx + ix] /= s;
  }
}

CorrelationReport correlation_study(const fs::path& store, int bins) {
  SampleReader reader(store);
  const std::size_t n = reader.size();
  if (n < 2) throw ArgumentError("correlation study needs at least two samples");
  std::array<std::vector<double>, 3> m;
  std::vector<double> v(n);
  for (auto& s : m) s.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const TraversabilitySample s = reader.read(i);
    m[0][i] = s.L;
    m[1][i] = s.E;
    m[2][i] = s.A;
    v[i] = s.v;
  }
  CorrelationReport r;
  r.samples = n;
  std::array<std::vector<double>, 3> ranks;
  for (int a = 0; a < 3; ++a) ranks[a] = average_ranks(m[a]);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) r.rho[a][b] = a == b ? 1.0 : pearson(ranks[a], ranks[b]);
  const int pair[3][2] = {{0, 1}, {0, 2}, {1, 2}};
  for (int k = 0; k < 3; ++k) {
    r.pairs[k] = Histogram2D(bins, bins, 0.0, 1.0, 0.0, 1.0);
    r.velocity[k] = Histogram2D(bins, bins, kMinSpeed, kMaxSpeed, 0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      r.pairs[k].add(m[pair[k][0]][i], m[pair[k][1]][i]);
      r.velocity[k].add(v[i], m[k][i]);
    }
    r.velocity[k].normalize_columns();
  }
  return r;
}

// ---------------------------------------------------------------- output ---

namespace {

fs::path grid_path(const fs::path& dir, int h, int m, const char* ext) {
  return dir / ("h" + std::to_string(h) + "_" + measure_name(m) + ext);
}

std::ofstream open_out(const fs::path& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

}  // namespace

void write_map(const TraversabilityMap& map, const fs::path& dir, bool pgm) {
  fs::create_directories(dir);
  const MapGrid& g = map.grid;
  char buf[64];
  for (int h = 0; h < static_cast<int>(map.headings.size()); ++h)
    for (int m = 0; m < 3; ++m) {
      std::ofstream f = open_out(grid_path(dir, h, m, ".asc"));
      f << "ncols " << g.nx << "\nnrows " << g.ny << "\n";
      std::snprintf(buf, sizeof buf, "%.17g", g.origin_x);
      f << "xllcorner " << buf << "\n";
      std::snprintf(buf, sizeof buf, "%.17g", g.origin_y);
      f << "yllcorner " << buf << "\n";
      std::snprintf(buf, sizeof buf, "%.17g", g.stride);
      f << "cellsize " << buf << "\nNODATA_value " << kNoData << "\n";
      for (int j = g.ny - 1; j >= 0; --j) {
        for (int i = 0; i < g.nx; ++i) {
          if (map.is_valid(h, i, j))
            std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(map.at(h, m, i, j)));
          else
            std::snprintf(buf, sizeof buf, "%g", kNoData);
          f << (i ? " " : "") << buf;
        }
        f << "\n";
      }
      if (!f) throw ConfigError("failed writing map raster in " + dir.string());
      if (pgm) write_pgm(map.values[h][m], map.valid[h], g.nx, g.ny, grid_path(dir, h, m, ".pgm"));
    }
  KeyValueConfig manifest;
  manifest.set("map.nx", static_cast<long long>(g.nx));
  manifest.set("map.ny", static_cast<long long>(g.ny));
  manifest.set("map.origin_x", g.origin_x);
  manifest.set("map.origin_y", g.origin_y);
  manifest.set("map.stride", g.stride);
  manifest.set("map.target_speed", map.target_speed);
  manifest.set("map.headings", static_cast<long long>(map.headings.size()));
  for (std::size_t h = 0; h < map.headings.size(); ++h)
    manifest.set("map.heading." + std::to_string(h), std::vector<double>{map.headings[h].x(), map.headings[h].y()});
  manifest.save(dir / "manifest.txt");
}

TraversabilityMap read_map(const fs::path& dir) {
  const KeyValueConfig manifest = KeyValueConfig::load(dir / "manifest.txt");
  MapGrid g;
  g.nx = static_cast<int>(manifest.get_int("map.nx", 0));
  g.ny = static_cast<int>(manifest.get_int("map.ny", 0));
  g.origin_x = manifest.get_double("map.origin_x", 0.0);
  g.origin_y = manifest.get_double("map.origin_y", 0.0);
  g.stride = manifest.get_double("map.stride", 0.0);
  const int nh = static_cast<int>(manifest.get_int("map.headings", 0));
  if (g.nx < 1 || g.ny < 1 || nh < 1 || !(g.stride > 0.0))
    throw ParseError((dir / "manifest.txt").string() + ": map manifest is incomplete", 0);
  std::vector<Eigen::Vector2d> headings;
  for (int h = 0; h < nh; ++h) {
    const auto c = manifest.get_doubles("map.heading." + std::to_string(h), {});
    if (c.size() != 2) throw ParseError((dir / "manifest.txt").string() + ": heading " + std::to_string(h) + " malformed", 0);
    headings.emplace_back(c[0], c[1]);
  }
  TraversabilityMap map;
  map.reset(g, headings, manifest.get_double("map.target_speed", 0.0));
  for (int h = 0; h < nh; ++h)
    for (int m = 0; m < 3; ++m) {
      const fs::path path = grid_path(dir, h, m, ".asc");
      std::ifstream f(path);
      if (!f) throw ParseError("cannot open " + path.string(), 0);
      std::string key;
      double value;
      std::map<std::string, double> header;
      for (int k = 0; k < 6; ++k) {
        if (!(f >> key >> value)) throw ParseError(path.string() + ": truncated header", static_cast<std::size_t>(k + 1));
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
        header[key] = value;
      }
      if (header["ncols"] != g.nx || header["nrows"] != g.ny)
        throw ParseError(path.string() + ": size does not match the manifest", 1);
      const double nodata = header["nodata_value"];
      for (int j = g.ny - 1; j >= 0; --j)
        for (int i = 0; i < g.nx; ++i) {
          const std::size_t line = 7 + static_cast<std::size_t>(g.ny - 1 - j);
          if (!(f >> value)) throw ParseError(path.string() + ": truncated grid", line);
          const std::size_t c = static_cast<std::size_t>(j) * g.nx + i;
          if (value == nodata) {
            if (m > 0 && map.valid[h][c]) throw ParseError(path.string() + ": mask differs from the L grid", line);
            continue;
          }
          if (!(value >= 0.0 && value <= 1.0)) throw ParseError(path.string() + ": value outside [0, 1]", line);
          if (m > 0 && !map.valid[h][c]) throw ParseError(path.string() + ": mask differs from the L grid", line);
          map.values[h][m][c] = static_cast<float>(value);
          map.valid[h][c] = 1;
        }
    }
  return map;
}

void write_pgm(const std::vector<float>& values, const std::vector<std::uint8_t>& valid, int nx, int ny,
               const fs::path& path) {
  if (values.size() != static_cast<std::size_t>(nx) * ny || valid.size() != values.size())
    throw ArgumentError("image size does not match its dimensions");
  std::ofstream f = open_out(path, true);
  f << "P5\n" << nx << " " << ny << "\n255\n";
  std::vector<unsigned char> row(nx);
  for (int j = ny - 1; j >= 0; --j) {
    for (int i = 0; i < nx; ++i) {
      const std::size_t c = static_cast<std::size_t>(j) * nx + i;
      row[i] = valid[c] ? static_cast<unsigned char>(std::lround(255.0 * std::clamp(values[c], 0.0f, 1.0f))) : 0;
    }
    f.write(reinterpret_cast<const char*>(row.data()), nx);
  }
  if (!f) throw ConfigError("failed writing " + path.string());
}

void write_resolution_csv(const std::vector<ResolutionPoint>& points, const fs::path& path) {
  std::ofstream f = open_out(path);
  f << "resolution,error_L,error_E,error_A,norm_L,norm_E,norm_A,norm_mean\n";
  f.precision(9);
  for (const auto& p : points)
    f << p.resolution << "," << p.error[0] << "," << p.error[1] << "," << p.error[2] << "," << p.normalized[0] << ","
      << p.normalized[1] << "," << p.normalized[2] << "," << p.mean_normalized << "\n";
}

void write_sensitivity_csv(const SensitivityReport& report, const fs::path& path) {
  std::ofstream f = open_out(path);
  f << "roughness_lo,roughness_hi,count,rmsd,stddev,reported\n";
  f.precision(9);
  for (const auto& b : report.bins)
    f << b.lo << "," << b.hi << "," << b.count << "," << b.rmsd << "," << b.stddev << "," << (b.reported ? 1 : 0) << "\n";
}

void write_correlation_csv(const CorrelationReport& report, const fs::path& path) {
  std::ofstream f = open_out(path);
  f << "measure,L,E,A\n";
  f.precision(9);
  for (int a = 0; a < 3; ++a)
    f << measure_name(a) << "," << report.rho[a][0] << "," << report.rho[a][1] << "," << report.rho[a][2] << "\n";
}

void write_histogram_csv(const Histogram2D& h, const fs::path& path) {
  std::ofstream f = open_out(path);
  f << "x_lo,x_hi,y_lo,y_hi,value\n";
  f.precision(9);
  const double dx = (h.x_hi - h.x_lo) / h.nx;
  const double dy = (h.y_hi - h.y_lo) / h.ny;
  for (int iy = 0; iy < h.ny; ++iy)
    for (int ix = 0; ix < h.nx; ++ix)
      f << h.x_lo + ix * dx << "," << h.x_lo + (ix + 1) * dx << "," << h.y_lo + iy * dy << "," << h.y_lo + (iy + 1) * dy
        << "," << h.at(ix, iy) << "\n";
}

}  // namespace trav
