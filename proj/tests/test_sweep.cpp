#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "trav/errors.hpp"
#include "trav/random.hpp"
#include "trav/sweep.hpp"
#include "trav/terraingen.hpp"

using namespace trav;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "trav_test_sweep";
  fs::create_directories(dir);
  return dir / name;
}

// Random weights whose output is exactly invariant to a lateral (row) flip
// and to a constant height offset. The subtracted node sits half a cell off
// the lateral centre, so a flip also shifts the patch by a constant. Kernels
// are mirrored in ky, conv1 kernels sum to zero, and the trunk only reads
// pooled features that never see the padded border.
ModelParamsF symmetric_model(std::uint64_t seed) {
  ModelParamsF p = ModelParamsF::initialize(seed);
  for (const char* name : {"conv1.w", "conv2.w", "conv3.w"}) {
    const TensorInfo& t = tensor_info(name);
    float* w = p.values.data() + t.offset;
    for (int f = 0; f < t.rows; ++f)
      for (int c = 0; c < t.cols / 9; ++c) {
        float* k = w + static_cast<std::size_t>(f) * t.cols + c * 9;
        for (int kx = 0; kx < 3; ++kx) k[6 + kx] = k[kx];
        if (std::string(name) == "conv1.w") {
          float mean = 0.0f;
          for (int q = 0; q < 9; ++q) mean += k[q] / 9.0f;
          for (int q = 0; q < 9; ++q) k[q] -= mean;
          k[4] = -(k[0] + k[1] + k[2] + k[3] + k[5] + k[6] + k[7] + k[8]);
        }
      }
  }
  const TensorInfo& t = tensor_info("trunk.w");
  float* w = p.values.data() + t.offset;
  for (int o = 0; o < t.rows; ++o)
    for (int f = 0; f < kFilters; ++f) {
      float* row = w + static_cast<std::size_t>(o) * t.cols + f * 32;
      for (int c = 0; c < 8; ++c) {
        row[2 * 8 + c] = row[1 * 8 + c];
        row[0 * 8 + c] = row[3 * 8 + c] = 0.0f;
      }
      for (int r = 0; r < 4; ++r) row[r * 8] = row[r * 8 + 7] = 0.0f;
    }
  return p;
}

Heightfield mirror_y(const Heightfield& hf) {
  std::vector<double> h(hf.heights().size());
  for (int iy = 0; iy < hf.ny(); ++iy)
    for (int ix = 0; ix < hf.nx(); ++ix)
      h[static_cast<std::size_t>(iy) * hf.nx() + ix] = hf.at(ix, hf.ny() - 1 - iy);
  return Heightfield(hf.origin_x(), hf.origin_y(), hf.cell_size(), hf.nx(), hf.ny(), std::move(h));
}

const Heightfield& test_terrain() {
  static const Heightfield hf = generate(default_recipe(3, 0.6, 30.0, 0.1));
  return hf;
}

TraversabilityMap random_map(std::uint64_t seed, const std::vector<std::uint8_t>* mask = nullptr) {
  MapGrid g;
  g.nx = 7;
  g.ny = 5;
  TraversabilityMap m;
  m.reset(g, compass_headings(2), 1.0);
  Rng rng(seed);
  for (int h = 0; h < 2; ++h) {
    for (std::size_t c = 0; c < g.cells(); ++c) {
      m.valid[h][c] = mask ? (*mask)[c] : 1;
      for (int k = 0; k < 3; ++k) m.values[h][k][c] = static_cast<float>(rng.uniform());
    }
  }
  return m;
}

double rank_oracle(std::span<const double> x, std::size_t i) {
  double less = 0.0, equal = 0.0;
  for (double v : x) {
    if (v < x[i]) less += 1.0;
    if (v == x[i]) equal += 1.0;
  }
  return less + (equal + 1.0) / 2.0;
}

}  // namespace

TEST_CASE("compass headings") {
  const auto h = compass_headings();
  REQUIRE(h.size() == 8);
  CHECK(h[0] == Eigen::Vector2d(1, 0));
  CHECK(h[2] == Eigen::Vector2d(0, 1));
  CHECK(h[4] == Eigen::Vector2d(-1, 0));
  CHECK(h[6] == Eigen::Vector2d(0, -1));
  for (const auto& v : h) CHECK(v.norm() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(h[1].x() == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("grid covers the raster at the stride") {
  const Heightfield hf = Heightfield::constant(0, 0, 0.1, 301, 201);
  const MapGrid g = MapGrid::covering(hf, 1.0);
  CHECK(g.nx == 30);
  CHECK(g.ny == 20);
  CHECK(g.x(0) == doctest::Approx(0.5));
  CHECK(g.y(19) == doctest::Approx(19.5));
  const MapGrid in = MapGrid::inset(hf, 10, 5.0);
  CHECK(in.stride == doctest::Approx(1.0));
  CHECK(in.x(0) == doctest::Approx(5.5));
}

TEST_CASE("sweep argument errors") {
  const auto p = ModelParamsF::initialize(1);
  const Heightfield small = Heightfield::constant(0, 0, 0.1, 101, 101);
  CHECK_THROWS_AS(sweep_map(p, small, compass_headings(), 1.3, 1.0), ConfigError);
  const Heightfield hf = Heightfield::constant(0, 0, 0.5, 61, 61);
  CHECK_THROWS_AS(sweep_map(p, hf, compass_headings(), 1.3, 0.25), ArgumentError);
  CHECK_THROWS_AS(sweep_map(p, hf, {Eigen::Vector2d(1, 1)}, 1.3, 1.0), ArgumentError);
  CHECK_THROWS_AS(sweep_map(p, hf, compass_headings(), 5.0, 1.0), ArgumentError);
}

TEST_CASE("flat terrain gives uniform maps") {
  const auto p = ModelParamsF::initialize(4);
  const Heightfield hf = Heightfield::constant(0, 0, 0.1, 301, 301, 2.0);
  const TraversabilityMap m = sweep_map(p, hf, compass_headings(), 1.3, 1.0);
  CHECK(m.grid.nx == 30);
  // Every interior cell fits, corner cells do not.
  CHECK(m.is_valid(0, 15, 15));
  CHECK_FALSE(m.is_valid(1, 0, 0));
  CHECK(m.valid_count() > 0);
  for (int h = 0; h < 8; ++h)
    for (int k = 0; k < 3; ++k) {
      double lo = 1.0, hi = 0.0;
      for (std::size_t c = 0; c < m.grid.cells(); ++c)
        if (m.valid[h][c]) {
          lo = std::min<double>(lo, m.values[h][k][c]);
          hi = std::max<double>(hi, m.values[h][k][c]);
          CHECK(m.values[h][k][c] >= 0.0f);
          CHECK(m.values[h][k][c] <= 1.0f);
        }
      CHECK(hi - lo < 1e-6);
    }
}

TEST_CASE("sweep matches single predictions and is independent of jobs") {
  const auto p = ModelParamsF::initialize(5);
  const Heightfield& hf = test_terrain();
  const auto headings = compass_headings();
  const MapGrid g = MapGrid::covering(hf, 1.5);
  const TraversabilityMap a = sweep_map(p, hf, headings, 1.1, g, 1);
  const TraversabilityMap b = sweep_map(p, hf, headings, 1.1, g, 3);
  const TraversabilityMap c = sweep_map(p, hf, headings, 1.1, g, 1);
  CHECK(a.values == b.values);
  CHECK(a.valid == b.valid);
  CHECK(a.values == c.values);
  int checked = 0;
  for (int h = 0; h < 8; h += 3)
    for (int j = 0; j < g.ny; j += 4)
      for (int i = 0; i < g.nx; i += 4) {
        if (!a.is_valid(h, i, j)) continue;
        const auto out = predict(p, extract_patch_f32(hf, g.x(i), g.y(j), headings[h]), 1.1);
        for (int k = 0; k < 3; ++k) CHECK(a.at(h, k, i, j) == doctest::Approx(std::clamp(out[k], 0.0f, 1.0f)).epsilon(1e-5));
        ++checked;
      }
  CHECK(checked > 5);
}

TEST_CASE("mirrored terrain and headings give the mirrored map") {
  const auto p = symmetric_model(11);
  const Heightfield& hf = test_terrain();
  const Heightfield mirrored = mirror_y(hf);
  const auto headings = compass_headings();
  std::vector<Eigen::Vector2d> flipped;
  for (const auto& h : headings) flipped.emplace_back(h.x(), -h.y());
  // Inset symmetrically so cell row j mirrors onto row ny - 1 - j.
  const MapGrid g = MapGrid::inset(hf, 25, 2.45);
  const TraversabilityMap a = sweep_map(p, hf, headings, 1.3, g);
  const TraversabilityMap b = sweep_map(p, mirrored, flipped, 1.3, g);
  double worst = 0.0;
  int interior = 0;
  for (int h = 0; h < 8; ++h)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        REQUIRE(a.is_valid(h, i, j) == b.is_valid(h, i, g.ny - 1 - j));
        if (!a.is_valid(h, i, j)) continue;
        for (int k = 0; k < 3; ++k) {
          const float x = a.at(h, k, i, j);
          worst = std::max(worst, static_cast<double>(std::abs(x - b.at(h, k, i, g.ny - 1 - j))));
          if (x > 0.0f && x < 1.0f) ++interior;
        }
      }
  CHECK(worst < 1e-5);
  CHECK(interior > 100);
}

TEST_CASE("ground truth on flat terrain") {
  const Heightfield hf = Heightfield::constant(0, 0, 0.1, 301, 301);
  MapGrid g;
  g.origin_x = 0.0;
  g.origin_y = 9.0;
  g.stride = 6.0;
  g.nx = 3;
  g.ny = 2;
  const auto headings = compass_headings(4);
  const TraversabilityMap m = ground_truth_map(hf, VehicleConfig{}, headings, 1.3, g, 2);
  // Column 0 sits at x = 3, inside the footprint margin of the edge.
  for (int h = 0; h < 4; ++h)
    for (int j = 0; j < 2; ++j) {
      CHECK_FALSE(m.is_valid(h, 0, j));
      for (int i = 1; i < 3; ++i) {
        REQUIRE(m.is_valid(h, i, j));
        CHECK(m.at(h, kLocomotion, i, j) >= 0.9f);
      }
    }
  const TraversabilityMap again = ground_truth_map(hf, VehicleConfig{}, headings, 1.3, g, 1);
  CHECK(again.values == m.values);
}

TEST_CASE("map error") {
  const TraversabilityMap a = random_map(1);
  CHECK(map_error(a, a).mean == 0.0);
  CHECK(map_error(a, a).cells == 2 * 35);

  TraversabilityMap lo = a, hi = a;
  for (int h = 0; h < 2; ++h)
    for (int k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < 35; ++c) {
        lo.values[h][k][c] = 0.9f * a.values[h][k][c];
        hi.values[h][k][c] = lo.values[h][k][c] + 0.1f;
      }
  const MapError e = map_error(hi, lo);
  for (int k = 0; k < 3; ++k) CHECK(e.measure[k] == doctest::Approx(0.1).epsilon(1e-6));

  std::vector<std::uint8_t> mask(35, 1);
  for (std::size_t c = 0; c < 35; c += 3) mask[c] = 0;
  const TraversabilityMap x = random_map(2, &mask), y = random_map(3, &mask), z = random_map(4, &mask);
  CHECK(map_error(x, y).mean == map_error(y, x).mean);
  CHECK(map_error(x, y).mean > 0.0);
  CHECK(map_error(x, z).mean <= map_error(x, y).mean + map_error(y, z).mean);

  TraversabilityMap none = x;
  for (auto& v : none.valid) std::fill(v.begin(), v.end(), 0);
  CHECK_THROWS_AS(map_error(x, none), ArgumentError);
  TraversabilityMap other = x;
  other.grid.stride = 2.0;
  CHECK_THROWS_AS(map_error(x, other), ArgumentError);
}

TEST_CASE("coarsening") {
  const Heightfield plane = Heightfield::from_function(0, 0, 0.1, 201, 201, [](double x, double y) { return 0.3 * x - 0.1 * y; });
  CHECK(coarsen(plane, 0.1) == plane);
  const Heightfield c = coarsen(plane, 1.0);
  CHECK(c.nx() == 201);
  CHECK(c.sample(10.0, 10.0) == doctest::Approx(plane.sample(10.0, 10.0)).epsilon(1e-9));
  CHECK(c.sample(3.3, 17.1) == doctest::Approx(plane.sample(3.3, 17.1)).epsilon(1e-9));
  const Heightfield flat = coarsen(plane, 50.0);
  CHECK(flat.at(0, 0) == doctest::Approx(plane.mean()));
  CHECK(flat.at(200, 200) == flat.at(0, 0));
}

TEST_CASE("resolution study endpoints") {
  const auto p = ModelParamsF::initialize(8);
  const Heightfield& hf = test_terrain();
  const MapGrid g = MapGrid::inset(hf, 6, 6.0);
  const auto pts = resolution_study(p, hf, {0.1, 0.5, 2.0, 50.0}, compass_headings(4), 1.3, g);
  REQUIRE(pts.size() == 4);
  for (int k = 0; k < 3; ++k) {
    CHECK(pts.front().normalized[k] == 0.0);
    if (pts.back().error[k] > 0.0) CHECK(pts.back().normalized[k] == 1.0);
  }
  CHECK(pts.back().mean_normalized == 1.0);
  CHECK_THROWS_AS(resolution_study(p, hf, {0.5, 0.2}, compass_headings(4), 1.3, g), ArgumentError);
  CHECK_THROWS_AS(resolution_study(p, hf, {0.05, 0.2}, compass_headings(4), 1.3, g), ArgumentError);
}

TEST_CASE("roughness bins") {
  const auto e = roughness_bin_edges(1.045);
  const std::vector<double> want = {1.0, 1.0025, 1.005, 1.0075, 1.01, 1.015, 1.02, 1.03, 1.04, 1.05};
  REQUIRE(e.size() == want.size());
  for (std::size_t k = 0; k < e.size(); ++k) CHECK(e[k] == doctest::Approx(want[k]).epsilon(1e-12));
}

TEST_CASE("equivalent heading keeps the slope component") {
  const Eigen::Vector2d g(0.3, -0.4);
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    const double a = rng.uniform(0.0, 2.0 * M_PI);
    const Eigen::Vector2d t(std::cos(a), std::sin(a));
    const Eigen::Vector2d t2 = equivalent_heading(t, g);
    CHECK(t2.norm() == doctest::Approx(1.0));
    CHECK(t2.dot(g) == doctest::Approx(t.dot(g)).epsilon(1e-12));
    const auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v) { return u.x() * v.y() - u.y() * v.x(); };
    CHECK(cross(t2, g) == doctest::Approx(-cross(t, g)).epsilon(1e-12));
  }
  const Eigen::Vector2d down = -g.normalized();
  CHECK((equivalent_heading(down, g) - down).norm() < 1e-15);
  CHECK_THROWS_AS(equivalent_heading(down, Eigen::Vector2d::Zero()), ArgumentError);
}

TEST_CASE("sensitivity on planes") {
  const auto p = symmetric_model(2);
  const Heightfield tilted = Heightfield::from_function(0, 0, 0.1, 301, 301, [](double x, double y) { return 0.2 * x + 0.1 * y; });
  const SensitivityReport r = feature_sensitivity(p, {&tilted}, 60, 1.3, 7, 2);
  CHECK(r.points == 60);
  CHECK(r.degenerate == 0);
  std::size_t counted = 0;
  for (const auto& b : r.bins) {
    counted += b.count;
    CHECK(b.rmsd < 1e-5);
  }
  CHECK(counted == 60);
  REQUIRE_FALSE(r.bins.empty());
  CHECK(r.bins.front().reported);

  const Heightfield flat = Heightfield::constant(0, 0, 0.1, 301, 301);
  const SensitivityReport f = feature_sensitivity(p, {&flat}, 30, 1.3, 7);
  CHECK(f.degenerate == 30);
}

TEST_CASE("sensitivity is independent of jobs") {
  const auto p = ModelParamsF::initialize(3);
  const Heightfield& hf = test_terrain();
  const SensitivityReport a = feature_sensitivity(p, {&hf}, 100, 1.0, 9, 1, 5);
  const SensitivityReport b = feature_sensitivity(p, {&hf}, 100, 1.0, 9, 3, 5);
  REQUIRE(a.bins.size() == b.bins.size());
  for (std::size_t k = 0; k < a.bins.size(); ++k) {
    CHECK(a.bins[k].count == b.bins[k].count);
    CHECK(a.bins[k].rmsd == b.bins[k].rmsd);
    CHECK(a.bins[k].reported == (a.bins[k].count >= 5));
  }
}

TEST_CASE("average ranks and spearman") {
  const std::vector<double> x = {3, 1, 3, 2, 3};
  const auto r = average_ranks(x);
  CHECK(r == std::vector<double>{4, 1, 4, 2, 4});

  std::vector<double> a(50), b(50), c(50);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    a[i] = rng.uniform(-2.0, 2.0);
    b[i] = a[i];
    c[i] = -a[i] * a[i] * a[i];
  }
  CHECK(spearman(a, b) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman(a, c) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK_THROWS_AS(spearman(a, std::vector<double>(50, 1.0)), ArgumentError);
}

TEST_CASE("spearman matches the rank oracle on all permutations of six") {
  std::vector<double> base = {1, 2, 3, 4, 5, 6};
  std::vector<double> perm = base;
  int n = 0;
  do {
    std::vector<double> rx(6), ry(6);
    for (std::size_t i = 0; i < 6; ++i) {
      rx[i] = rank_oracle(base, i);
      ry[i] = rank_oracle(perm, i);
    }
    CHECK(spearman(base, perm) == pearson(rx, ry));
    double d2 = 0.0;
    for (std::size_t i = 0; i < 6; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
    CHECK(spearman(base, perm) == doctest::Approx(1.0 - 6.0 * d2 / (6.0 * 35.0)).epsilon(1e-12));
    ++n;
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(n == 720);
}

TEST_CASE("histogram column normalization") {
  Histogram2D h(2, 2, 0.0, 1.0, 0.0, 1.0);
  h.add(0.1, 0.1);
  h.add(0.1, 0.9);
  h.add(0.1, 0.9);
  h.add(1.0, 1.0);
  CHECK(h.at(1, 1) == 1.0);
  h.normalize_columns();
  CHECK(h.at(0, 0) == doctest::Approx(1.0 / 3.0));
  CHECK(h.at(0, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(h.at(1, 1) == 1.0);
  CHECK(h.at(1, 0) == 0.0);
}

TEST_CASE("correlation study on a store") {
  std::vector<TraversabilitySample> samples(40);
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    auto& s = samples[i];
    s.L = static_cast<float>(i) / 40.0f;
    s.E = 1.0f - s.L * s.L;
    s.A = static_cast<float>(rng.uniform());
    s.v = 0.5f;
  }
  const fs::path path = scratch("corr.tsamp");
  write_samples(path, samples, 1);
  const CorrelationReport r = correlation_study(path, 10);
  CHECK(r.samples == 40);
  CHECK(r.rho[0][1] == doctest::Approx(-1.0));
  CHECK(r.rho[1][0] == r.rho[0][1]);
  CHECK(std::abs(r.rho[0][2]) < 1.0);
  double col = 0.0;
  for (int iy = 0; iy < 10; ++iy) col += r.velocity[0].at(1, iy);
  CHECK(col == doctest::Approx(1.0));
  write_correlation_csv(r, scratch("corr.csv"));
  write_histogram_csv(r.pairs[0], scratch("hist.csv"));
  CHECK(fs::file_size(scratch("hist.csv")) > 0);
}

TEST_CASE("map files round trip") {
  std::vector<std::uint8_t> mask(35, 1);
  mask[4] = 0;
  TraversabilityMap m = random_map(6, &mask);
  for (int h = 0; h < 2; ++h)
    for (int k = 0; k < 3; ++k) m.values[h][k][4] = 0.0f;
  m.grid.origin_x = 2.5;
  m.grid.stride = 0.75;
  const fs::path dir = scratch("map");
  fs::remove_all(dir);
  write_map(m, dir);
  CHECK(fs::exists(dir / "manifest.txt"));
  CHECK(fs::exists(dir / "h1_A.asc"));
  CHECK(fs::exists(dir / "h0_L.pgm"));
  const TraversabilityMap back = read_map(dir);
  CHECK(back.grid == m.grid);
  CHECK(back.valid == m.valid);
  CHECK(back.values == m.values);
  CHECK(back.headings == m.headings);

  std::ifstream pgm(dir / "h0_L.pgm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  pgm >> magic >> w >> h >> maxv;
  CHECK(magic == "P5");
  CHECK(w == 7);
  CHECK(h == 5);
  CHECK(fs::file_size(dir / "h0_L.pgm") == std::string("P5\n7 5\n255\n").size() + 35);

  std::ofstream(dir / "h1_E.asc") << "ncols 7\nnrows 5\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n1 2\n";
  CHECK_THROWS_AS(read_map(dir), ParseError);
}
