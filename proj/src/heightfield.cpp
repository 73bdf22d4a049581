#include "trav/heightfield.hpp"

#include <Eigen/Geometry>

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>

#include "trav/binio.hpp"

namespace trav {

Heightfield::Heightfield(double origin_x, double origin_y, double cell_size, int nx, int ny,
                         std::vector<double> heights)
    : origin_x_(origin_x),
      origin_y_(origin_y),
      cell_size_(cell_size),
      inv_cell_(1.0 / cell_size),
      nx_(nx),
      ny_(ny),
      heights_(std::move(heights)) {
  if (nx < 2 || ny < 2) throw ArgumentError("heightfield needs at least 2x2 nodes");
  if (!(cell_size > 0.0) || !std::isfinite(cell_size))
    throw ArgumentError("heightfield cell size must be positive");
  if (!std::isfinite(origin_x) || !std::isfinite(origin_y))
    throw ArgumentError("heightfield origin must be finite");
  if (heights_.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny))
    throw ArgumentError("heightfield expects " + std::to_string(static_cast<std::size_t>(nx) * ny) +
                        " heights, got " + std::to_string(heights_.size()));
  for (std::size_t i = 0; i < heights_.size(); ++i)
    if (!std::isfinite(heights_[i]))
      throw ArgumentError("non-finite height at node " + std::to_string(i));
}

Heightfield Heightfield::constant(double origin_x, double origin_y, double cell_size, int nx,
                                  int ny, double value) {
  return Heightfield(origin_x, origin_y, cell_size, nx, ny,
                     std::vector<double>(static_cast<std::size_t>(nx) * ny, value));
}

void Heightfield::throw_bounds(double x, double y) const {
  std::ostringstream os;
  os << "query (" << x << ", " << y << ") outside raster [" << min_x() << ", " << max_x()
     << "] x [" << min_y() << ", " << max_y() << "]";
  throw BoundsError(os.str());
}

SurfaceQuery Heightfield::surface_query(double x, double y) const {
  if (!contains(x, y, cell_size_)) throw_bounds(x, y);
  const double h = cell_size_;
  const double gx = (sample(x + h, y) - sample(x - h, y)) / (2.0 * h);
  const double gy = (sample(x, y + h) - sample(x, y - h)) / (2.0 * h);
  SurfaceQuery q;
  q.height = sample(x, y);
  q.normal = Eigen::Vector3d(-gx, -gy, 1.0).normalized();
  q.slope = std::atan(std::hypot(gx, gy));
  return q;
}

double Heightfield::mean() const {
  double s = 0.0;
  for (double v : heights_) s += v;
  return s / static_cast<double>(heights_.size());
}

bool Heightfield::operator==(const Heightfield& other) const {
  return nx_ == other.nx_ && ny_ == other.ny_ && origin_x_ == other.origin_x_ &&
         origin_y_ == other.origin_y_ && cell_size_ == other.cell_size_ &&
         heights_ == other.heights_;
}

Heightfield resample(const Heightfield& hf, double new_cell_size) {
  const double cs = hf.cell_size();
  if (!(new_cell_size >= cs))
    throw ArgumentError("resample cell size " + std::to_string(new_cell_size) +
                        " is finer than source " + std::to_string(cs));
  const double factor = new_cell_size / cs;
  if (factor == 1.0) return hf;

  // Source node i belongs to block floor((i + 0.5) / factor).
  const int nx = static_cast<int>(std::floor(hf.nx() / factor + 1e-9));
  const int ny = static_cast<int>(std::floor(hf.ny() / factor + 1e-9));
  if (nx < 2 || ny < 2)
    throw ArgumentError("resampled raster would have fewer than 2x2 nodes");

  auto block_of = [factor](int i) { return static_cast<int>(std::floor((i + 0.5) / factor + 1e-9)); };
  std::vector<double> sum(static_cast<std::size_t>(nx) * ny, 0.0);
  std::vector<int> count(sum.size(), 0);
  for (int iy = 0; iy < hf.ny(); ++iy) {
    const int by = block_of(iy);
    if (by >= ny) break;
    for (int ix = 0; ix < hf.nx(); ++ix) {
      const int bx = block_of(ix);
      if (bx >= nx) break;
      const std::size_t k = static_cast<std::size_t>(by) * nx + bx;
      sum[k] += hf.at(ix, iy);
      ++count[k];
    }
  }
  for (std::size_t k = 0; k < sum.size(); ++k) sum[k] /= count[k];
  const double shift = 0.5 * (new_cell_size - cs);
  return Heightfield(hf.origin_x() + shift, hf.origin_y() + shift, new_cell_size, nx, ny,
                     std::move(sum));
}

namespace {

std::vector<double> gaussian_kernel(double sigma_cells) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma_cells));
  std::vector<double> w(2 * radius + 1);
  for (int k = -radius; k <= radius; ++k)
    w[k + radius] = std::exp(-0.5 * (k * k) / (sigma_cells * sigma_cells));
  return w;
}

}  // namespace

Heightfield gaussian_smooth(const Heightfield& hf, double sigma) {
  if (!(sigma >= 0.0)) throw ArgumentError("gaussian_smooth sigma must be non-negative");
  if (sigma == 0.0) return hf;
  const std::vector<double> w = gaussian_kernel(sigma / hf.cell_size());
  const int radius = static_cast<int>(w.size() / 2);
  const int nx = hf.nx();
  const int ny = hf.ny();

  std::vector<double> tmp(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      double acc = 0.0, norm = 0.0;
      const int lo = std::max(-radius, -ix);
      const int hi = std::min(radius, nx - 1 - ix);
      for (int k = lo; k <= hi; ++k) {
        acc += w[k + radius] * hf.at(ix + k, iy);
        norm += w[k + radius];
      }
      tmp[static_cast<std::size_t>(iy) * nx + ix] = acc / norm;
    }

  std::vector<double> out(tmp.size());
  for (int iy = 0; iy < ny; ++iy) {
    const int lo = std::max(-radius, -iy);
    const int hi = std::min(radius, ny - 1 - iy);
    for (int ix = 0; ix < nx; ++ix) {
      double acc = 0.0, norm = 0.0;
      for (int k = lo; k <= hi; ++k) {
        acc += w[k + radius] * tmp[static_cast<std::size_t>(iy + k) * nx + ix];
        norm += w[k + radius];
      }
      out[static_cast<std::size_t>(iy) * nx + ix] = acc / norm;
    }
  }
  return Heightfield(hf.origin_x(), hf.origin_y(), hf.cell_size(), nx, ny, std::move(out));
}

double roughness(const Heightfield& hf, double x, double y, double radius) {
  if (!(radius > 0.0)) throw ArgumentError("roughness radius must be positive");
  if (!hf.contains(x, y, radius)) {
    std::ostringstream os;
    os << "roughness disc of radius " << radius << " at (" << x << ", " << y
       << ") leaves the raster";
    throw BoundsError(os.str());
  }
  const double cs = hf.cell_size();
  const int ix0 = std::max(0, static_cast<int>(std::floor((x - radius - hf.origin_x()) / cs)) - 1);
  const int iy0 = std::max(0, static_cast<int>(std::floor((y - radius - hf.origin_y()) / cs)) - 1);
  const int ix1 = std::min(hf.nx() - 2, static_cast<int>(std::ceil((x + radius - hf.origin_x()) / cs)) + 1);
  const int iy1 = std::min(hf.ny() - 2, static_cast<int>(std::ceil((y + radius - hf.origin_y()) / cs)) + 1);

  auto tri_area = [](const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
    return 0.5 * (b - a).cross(c - a).norm();
  };

  // The mean cell gradient is removed first, so the flat reference is the
  // horizontal disc and any added plane cancels exactly.
  struct Cell {
    int ix, iy;
  };
  std::vector<Cell> disc;
  double gx = 0.0, gy = 0.0;
  for (int iy = iy0; iy <= iy1; ++iy)
    for (int ix = ix0; ix <= ix1; ++ix) {
      const double cx = hf.origin_x() + (ix + 0.5) * cs - x;
      const double cy = hf.origin_y() + (iy + 0.5) * cs - y;
      if (cx * cx + cy * cy > radius * radius) continue;
      disc.push_back({ix, iy});
      gx += (hf.at(ix + 1, iy) - hf.at(ix, iy) + hf.at(ix + 1, iy + 1) - hf.at(ix, iy + 1)) / (2.0 * cs);
      gy += (hf.at(ix, iy + 1) - hf.at(ix, iy) + hf.at(ix + 1, iy + 1) - hf.at(ix + 1, iy)) / (2.0 * cs);
    }
  if (disc.empty()) throw ArgumentError("roughness radius smaller than one cell");
  gx /= static_cast<double>(disc.size());
  gy /= static_cast<double>(disc.size());

  double area = 0.0;
  for (const Cell& c : disc) {
    auto r = [&](int dx, int dy) { return hf.at(c.ix + dx, c.iy + dy) - cs * (gx * dx + gy * dy); };
    const Eigen::Vector3d p00(0, 0, r(0, 0)), p10(cs, 0, r(1, 0)), p01(0, cs, r(0, 1)), p11(cs, cs, r(1, 1));
    area += tri_area(p00, p10, p11) + tri_area(p00, p11, p01);
  }
  return area / (static_cast<double>(disc.size()) * cs * cs);
}

Heightfield offset_heights(const Heightfield& hf, double offset) {
  std::vector<double> h(hf.heights().begin(), hf.heights().end());
  for (double& v : h) v += offset;
  return Heightfield(hf.origin_x(), hf.origin_y(), hf.cell_size(), hf.nx(), hf.ny(), std::move(h));
}

// ---------------------------------------------------------------------------
// ASCII grid

void write_asc(const Heightfield& hf, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const double half = 0.5 * hf.cell_size();
  os << std::setprecision(17);
  os << "ncols " << hf.nx() << "\n"
     << "nrows " << hf.ny() << "\n"
     << "xllcorner " << hf.origin_x() - half << "\n"
     << "yllcorner " << hf.origin_y() - half << "\n"
     << "cellsize " << hf.cell_size() << "\n"
     << "NODATA_value -9999\n";
  for (int iy = hf.ny() - 1; iy >= 0; --iy) {
    for (int ix = 0; ix < hf.nx(); ++ix) {
      if (ix) os << ' ';
      os << hf.at(ix, iy);
    }
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Heightfield read_asc(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path.string(), 0);

  std::size_t line_no = 0;
  std::string line;
  long ncols = -1, nrows = -1;
  double xll = NAN, yll = NAN, cellsize = NAN;
  bool corner_x = true, corner_y = true;
  std::optional<double> nodata;

  // Header: six key/value lines, order-insensitive.
  int header_lines = 0;
  while (header_lines < 6 && std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) throw ParseError("empty header line", line_no);
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
    std::string value;
    if (!(ls >> value)) throw ParseError("header key '" + key + "' has no value", line_no);
    char* end = nullptr;
    const double v = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || *end != '\0')
      throw ParseError("header value '" + value + "' is not a number", line_no);
    if (key == "ncols") ncols = static_cast<long>(v);
    else if (key == "nrows") nrows = static_cast<long>(v);
    else if (key == "xllcorner") xll = v, corner_x = true;
    else if (key == "xllcenter") xll = v, corner_x = false;
    else if (key == "yllcorner") yll = v, corner_y = true;
    else if (key == "yllcenter") yll = v, corner_y = false;
    else if (key == "cellsize") cellsize = v;
    else if (key == "nodata_value") nodata = v;
    else throw ParseError("unknown header key '" + key + "'", line_no);
    ++header_lines;
  }
  if (ncols < 2 || nrows < 2) throw ParseError("header must give ncols, nrows >= 2", line_no);
  if (!std::isfinite(xll) || !std::isfinite(yll)) throw ParseError("header lacks lower-left corner", line_no);
  if (!(cellsize > 0.0)) throw ParseError("header cellsize must be positive", line_no);

  const double ox = corner_x ? xll + 0.5 * cellsize : xll;
  const double oy = corner_y ? yll + 0.5 * cellsize : yll;
  std::vector<double> h(static_cast<std::size_t>(ncols) * nrows);
  const std::size_t expected = h.size();
  std::size_t got = 0;
  long row = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tok;
    long col = 0;
    bool any = false;
    while (ls >> tok) {
      any = true;
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') throw ParseError("value '" + tok + "' is not a number", line_no);
      if (!std::isfinite(v)) throw ParseError("non-finite height '" + tok + "'", line_no);
      if (nodata && v == *nodata) throw ParseError("nodata values are not supported", line_no);
      if (row >= nrows) throw ParseError("more rows than nrows=" + std::to_string(nrows), line_no);
      if (col >= ncols)
        throw ParseError("row has more than ncols=" + std::to_string(ncols) + " values", line_no);
      const long iy = nrows - 1 - row;
      h[static_cast<std::size_t>(iy) * ncols + col] = v;
      ++col;
      ++got;
    }
    if (!any) continue;
    if (col != ncols)
      throw ParseError("expected " + std::to_string(expected) + " values, got " + std::to_string(got) +
                           " (row " + std::to_string(row + 1) + " has " + std::to_string(col) + " of " +
                           std::to_string(ncols) + ")",
                       line_no);
    ++row;
  }
  if (got != expected)
    throw ParseError("expected " + std::to_string(expected) + " values, got " + std::to_string(got),
                     line_no);
  return Heightfield(ox, oy, cellsize, static_cast<int>(ncols), static_cast<int>(nrows), std::move(h));
}

// ---------------------------------------------------------------------------
// Binary

void write_hfb(const Heightfield& hf, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  binio::put_magic(os, "HFB1");
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(hf.nx()));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(hf.ny()));
  binio::put<double>(os, hf.origin_x());
  binio::put<double>(os, hf.origin_y());
  binio::put<double>(os, hf.cell_size());
  for (double v : hf.heights()) binio::put<float>(os, static_cast<float>(v));
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

Heightfield read_hfb(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open " + path.string(), 0);
  binio::expect_magic(is, "HFB1");
  const auto nx = binio::get<std::uint32_t>(is, "nx");
  const auto ny = binio::get<std::uint32_t>(is, "ny");
  const auto ox = binio::get<double>(is, "origin_x");
  const auto oy = binio::get<double>(is, "origin_y");
  const auto cs = binio::get<double>(is, "cell_size");
  if (nx < 2 || ny < 2 || nx > (1u << 20) || ny > (1u << 20))
    throw ParseError("implausible raster dimensions", 4);
  std::vector<double> h(static_cast<std::size_t>(nx) * ny);
  for (std::size_t i = 0; i < h.size(); ++i) {
    const float v = binio::get<float>(is, "heights");
    if (!std::isfinite(v)) throw ParseError("non-finite height", static_cast<std::size_t>(is.tellg()) - 4);
    h[i] = v;
  }
  if (is.peek() != std::char_traits<char>::eof())
    throw ParseError("trailing bytes after height payload", static_cast<std::size_t>(is.tellg()));
  if (!(cs > 0.0)) throw ParseError("cell size must be positive", 28);
  return Heightfield(ox, oy, cs, static_cast<int>(nx), static_cast<int>(ny), std::move(h));
}

void write_raster(const Heightfield& hf, const std::filesystem::path& path) {
  if (path.extension() == ".asc") return write_asc(hf, path);
  if (path.extension() == ".hfb") return write_hfb(hf, path);
  throw ArgumentError("unknown raster extension '" + path.extension().string() + "'");
}

Heightfield read_raster(const std::filesystem::path& path) {
  if (path.extension() == ".asc") return read_asc(path);
  if (path.extension() == ".hfb") return read_hfb(path);
  throw ArgumentError("unknown raster extension '" + path.extension().string() + "'");
}

}  // namespace trav
