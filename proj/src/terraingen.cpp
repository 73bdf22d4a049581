#include "trav/terraingen.hpp"

#include <cmath>
#include <numeric>

#include "trav/random.hpp"

namespace trav {

namespace {

struct AmplitudeRange {
  double lo, hi;
};

// Base amplitude ranges [m] before difficulty scaling.
constexpr std::array<AmplitudeRange, kFeatureKinds> kAmplitude = {{
    {0.3, 1.8},  // bump
    {0.3, 1.2},  // pit
    {0.2, 0.9},  // barrier
    {0.3, 1.1},  // ditch
    {0.2, 1.0},  // step
    {0.2, 1.0},  // semi-ellipsoid
}};

double gaussian(double d2, double sigma) { return std::exp(-0.5 * d2 / (sigma * sigma)); }

double segment_distance2(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double ex = ax + t * dx - px, ey = ay + t * dy - py;
  return ex * ex + ey * ey;
}

/// Accumulates features onto a node array, restricted to bounding boxes.
class Canvas {
 public:
  Canvas(int n, double cs) : n_(n), cs_(cs), h_(static_cast<std::size_t>(n) * n, 0.0) {}

  template <typename Fn>
  void add(double x0, double y0, double x1, double y1, Fn&& fn) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0 / cs_)));
    const int iy0 = std::max(0, static_cast<int>(std::floor(y0 / cs_)));
    const int ix1 = std::min(n_ - 1, static_cast<int>(std::ceil(x1 / cs_)));
    const int iy1 = std::min(n_ - 1, static_cast<int>(std::ceil(y1 / cs_)));
    for (int iy = iy0; iy <= iy1; ++iy)
      for (int ix = ix0; ix <= ix1; ++ix)
        h_[static_cast<std::size_t>(iy) * n_ + ix] += fn(ix * cs_, iy * cs_);
  }

  std::vector<double>& heights() { return h_; }

 private:
  int n_;
  double cs_;
  std::vector<double> h_;
};

int node_count(const TerrainRecipe& r) { return static_cast<int>(std::lround(r.size / r.cell_size)); }

void add_perlin(const TerrainRecipe& recipe, Canvas& canvas, Rng& rng) {
  const double extent = (node_count(recipe) - 1) * recipe.cell_size;
  for (const auto& oct : recipe.octaves) {
    const PerlinNoise noise(rng.next());
    const double ox = rng.uniform(0.0, 256.0), oy = rng.uniform(0.0, 256.0);
    const double inv = 1.0 / oct.wavelength;
    canvas.add(0.0, 0.0, extent, extent, [&](double x, double y) {
      return oct.amplitude * noise(x * inv + ox, y * inv + oy);
    });
  }
}

void add_features(const TerrainRecipe& recipe, Canvas& canvas, Rng& rng) {
  const double extent = (node_count(recipe) - 1) * recipe.cell_size;
  const double lo = kFeatureMargin, hi = extent - kFeatureMargin;
  auto anchor = [&] { return rng.uniform(lo, hi); };
  auto amplitude = [&](FeatureKind k) {
    const auto& r = kAmplitude[static_cast<std::size_t>(k)];
    return recipe.difficulty * rng.uniform(r.lo, r.hi);
  };

  for (int i = 0; i < recipe.count(FeatureKind::kBump); ++i) {
    const double cx = anchor(), cy = anchor(), a = amplitude(FeatureKind::kBump);
    const double s = rng.uniform(0.8, 3.0), reach = 4.0 * s;
    canvas.add(cx - reach, cy - reach, cx + reach, cy + reach, [=](double x, double y) {
      return a * gaussian((x - cx) * (x - cx) + (y - cy) * (y - cy), s);
    });
  }
  for (int i = 0; i < recipe.count(FeatureKind::kPit); ++i) {
    const double cx = anchor(), cy = anchor(), a = amplitude(FeatureKind::kPit);
    const double s = rng.uniform(0.8, 2.5), reach = 4.0 * s;
    canvas.add(cx - reach, cy - reach, cx + reach, cy + reach, [=](double x, double y) {
      return -a * gaussian((x - cx) * (x - cx) + (y - cy) * (y - cy), s);
    });
  }
  for (int i = 0; i < recipe.count(FeatureKind::kBarrier); ++i) {
    // Gaussian ridge along a straight segment, both endpoints inside the margin.
    const double ax = anchor(), ay = anchor(), a = amplitude(FeatureKind::kBarrier);
    const double len = rng.uniform(3.0, 12.0), dir = rng.uniform(0.0, 2.0 * M_PI);
    const double bx = std::clamp(ax + len * std::cos(dir), lo, hi);
    const double by = std::clamp(ay + len * std::sin(dir), lo, hi);
    const double s = rng.uniform(0.15, 0.4), reach = 4.0 * s;
    canvas.add(std::min(ax, bx) - reach, std::min(ay, by) - reach, std::max(ax, bx) + reach,
               std::max(ay, by) + reach, [=](double x, double y) {
                 return a * gaussian(segment_distance2(x, y, ax, ay, bx, by), s);
               });
  }
  for (int i = 0; i < recipe.count(FeatureKind::kDitch); ++i) {
    // Negative Gaussian ridge along a random three-segment polyline. The
    // profile uses the distance to the nearest segment so joints do not stack.
    const double depth = amplitude(FeatureKind::kDitch), s = rng.uniform(0.3, 0.9);
    std::array<double, 4> px{}, py{};
    px[0] = anchor();
    py[0] = anchor();
    double dir = rng.uniform(0.0, 2.0 * M_PI);
    for (int k = 1; k < 4; ++k) {
      dir += rng.uniform(-0.6, 0.6);
      const double len = rng.uniform(4.0, 10.0);
      px[k] = std::clamp(px[k - 1] + len * std::cos(dir), lo, hi);
      py[k] = std::clamp(py[k - 1] + len * std::sin(dir), lo, hi);
    }
    const double reach = 4.0 * s;
    const double x0 = *std::min_element(px.begin(), px.end()) - reach;
    const double x1 = *std::max_element(px.begin(), px.end()) + reach;
    const double y0 = *std::min_element(py.begin(), py.end()) - reach;
    const double y1 = *std::max_element(py.begin(), py.end()) + reach;
    canvas.add(x0, y0, x1, y1, [=](double x, double y) {
      double d2 = std::numeric_limits<double>::infinity();
      for (int k = 0; k < 3; ++k) d2 = std::min(d2, segment_distance2(x, y, px[k], py[k], px[k + 1], py[k + 1]));
      return -depth * gaussian(d2, s);
    });
  }
  for (int i = 0; i < recipe.count(FeatureKind::kStep); ++i) {
    // Half-plane terrace with a smoothstep face through an interior point.
    const double cx = anchor(), cy = anchor(), a = amplitude(FeatureKind::kStep);
    const double dir = rng.uniform(0.0, 2.0 * M_PI), w = rng.uniform(0.1, 0.6);
    const double nx = std::cos(dir), ny = std::sin(dir);
    canvas.add(0.0, 0.0, extent, extent, [=](double x, double y) {
      const double d = (x - cx) * nx + (y - cy) * ny;
      return a * smoothstep(d / w + 0.5);
    });
  }
  for (int i = 0; i < recipe.count(FeatureKind::kSemiEllipsoid); ++i) {
    const double cx = anchor(), cy = anchor(), c = amplitude(FeatureKind::kSemiEllipsoid);
    const double ea = rng.uniform(0.3, 1.2), eb = rng.uniform(0.3, 1.2);
    const double rot = rng.uniform(0.0, M_PI), cr = std::cos(rot), sr = std::sin(rot);
    const double reach = std::max(ea, eb);
    canvas.add(cx - reach, cy - reach, cx + reach, cy + reach, [=](double x, double y) {
      const double u = ((x - cx) * cr + (y - cy) * sr) / ea;
      const double v = (-(x - cx) * sr + (y - cy) * cr) / eb;
      const double q = 1.0 - u * u - v * v;
      return q > 0.0 ? c * std::sqrt(q) : 0.0;
    });
  }
}

Heightfield finish(const TerrainRecipe& recipe, Canvas& canvas) {
  auto& h = canvas.heights();
  for (double& v : h) v = static_cast<double>(static_cast<float>(v));
  const int n = node_count(recipe);
  return Heightfield(0.0, 0.0, recipe.cell_size, n, n, std::move(h));
}

}  // namespace

const char* feature_name(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::kBump: return "bump";
    case FeatureKind::kPit: return "pit";
    case FeatureKind::kBarrier: return "barrier";
    case FeatureKind::kDitch: return "ditch";
    case FeatureKind::kStep: return "step";
    case FeatureKind::kSemiEllipsoid: return "semi_ellipsoid";
  }
  return "?";
}

void TerrainRecipe::validate() const {
  if (!(size > 0.0)) throw ArgumentError("recipe size must be positive");
  if (!(cell_size > 0.0)) throw ArgumentError("recipe cell_size must be positive");
  if (std::lround(size / cell_size) < 2) throw ArgumentError("recipe yields fewer than 2 nodes per axis");
  if (!(difficulty >= 0.0 && difficulty <= 1.0)) throw ArgumentError("recipe difficulty must lie in [0, 1]");
  for (const auto& o : octaves) {
    if (!(o.wavelength > 2.0 * cell_size))
      throw ArgumentError("octave wavelength must exceed twice the cell size");
    if (!(o.amplitude >= 0.0)) throw ArgumentError("octave amplitude must be non-negative");
  }
  for (int c : feature_counts)
    if (c < 0) throw ArgumentError("feature counts must be non-negative");
  const bool any_features = std::accumulate(feature_counts.begin(), feature_counts.end(), 0) > 0;
  if (any_features && size <= 2.0 * kFeatureMargin)
    throw ArgumentError("recipe too small to honour the feature margin");
}

KeyValueConfig TerrainRecipe::to_config() const {
  KeyValueConfig cfg;
  cfg.set("seed", std::to_string(seed));
  cfg.set("size", size);
  cfg.set("cell_size", cell_size);
  cfg.set("difficulty", difficulty);
  std::vector<double> wl, amp;
  for (const auto& o : octaves) {
    wl.push_back(o.wavelength);
    amp.push_back(o.amplitude);
  }
  cfg.set("perlin_wavelengths", wl);
  cfg.set("perlin_amplitudes", amp);
  for (std::size_t k = 0; k < kFeatureKinds; ++k)
    cfg.set(std::string("count_") + feature_name(static_cast<FeatureKind>(k)),
            static_cast<long long>(feature_counts[k]));
  return cfg;
}

TerrainRecipe TerrainRecipe::from_config(const KeyValueConfig& cfg) {
  TerrainRecipe r;
  r.seed = std::stoull(cfg.get_string("seed", "1"));
  r.size = cfg.get_double("size", r.size);
  r.cell_size = cfg.get_double("cell_size", r.cell_size);
  r.difficulty = cfg.get_double("difficulty", r.difficulty);
  const auto wl = cfg.get_doubles("perlin_wavelengths", {});
  const auto amp = cfg.get_doubles("perlin_amplitudes", {});
  if (wl.size() != amp.size()) throw ConfigError("perlin wavelength and amplitude lists differ in length");
  for (std::size_t i = 0; i < wl.size(); ++i) r.octaves.push_back({wl[i], amp[i]});
  for (std::size_t k = 0; k < kFeatureKinds; ++k)
    r.feature_counts[k] = static_cast<int>(
        cfg.get_int(std::string("count_") + feature_name(static_cast<FeatureKind>(k)), 0));
  r.validate();
  return r;
}

double height_bound(const TerrainRecipe& recipe) {
  double b = 0.0;
  for (const auto& o : recipe.octaves) b += o.amplitude;
  for (std::size_t k = 0; k < kFeatureKinds; ++k)
    b += recipe.feature_counts[k] * recipe.difficulty * kAmplitude[k].hi;
  return b;
}

PerlinNoise::PerlinNoise(std::uint64_t seed) {
  std::array<std::uint8_t, 256> p{};
  std::iota(p.begin(), p.end(), 0);
  Rng rng(seed);
  shuffle(p.begin(), p.end(), rng);
  for (int i = 0; i < 512; ++i) perm_[i] = p[i & 255];
}

double PerlinNoise::operator()(double x, double y) const {
  auto fade = [](double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); };
  // Gradients (+-1, +-1) and axis-aligned unit vectors keep |noise| <= 1.
  auto grad = [](std::uint8_t hash, double dx, double dy) {
    switch (hash & 7) {
      case 0: return dx + dy;
      case 1: return -dx + dy;
      case 2: return dx - dy;
      case 3: return -dx - dy;
      case 4: return dx;
      case 5: return -dx;
      case 6: return dy;
      default: return -dy;
    }
  };
  const double fx = std::floor(x), fy = std::floor(y);
  const int xi = static_cast<int>(static_cast<long long>(fx) & 255);
  const int yi = static_cast<int>(static_cast<long long>(fy) & 255);
  const double dx = x - fx, dy = y - fy;
  const double u = fade(dx), v = fade(dy);
  const int aa = perm_[perm_[xi] + yi], ab = perm_[perm_[xi] + yi + 1];
  const int ba = perm_[perm_[xi + 1] + yi], bb = perm_[perm_[xi + 1] + yi + 1];
  const double x1 = grad(aa, dx, dy) + u * (grad(ba, dx - 1.0, dy) - grad(aa, dx, dy));
  const double x2 = grad(ab, dx, dy - 1.0) + u * (grad(bb, dx - 1.0, dy - 1.0) - grad(ab, dx, dy - 1.0));
  return std::clamp(x1 + v * (x2 - x1), -1.0, 1.0);
}

Heightfield generate(const TerrainRecipe& recipe) {
  recipe.validate();
  Canvas canvas(node_count(recipe), recipe.cell_size);
  Rng rng(recipe.seed);
  Rng perlin_rng(rng.fork());
  Rng feature_rng(rng.fork());
  add_perlin(recipe, canvas, perlin_rng);
  add_features(recipe, canvas, feature_rng);
  return finish(recipe, canvas);
}

Heightfield generate_perlin(const TerrainRecipe& recipe) {
  recipe.validate();
  Canvas canvas(node_count(recipe), recipe.cell_size);
  Rng rng(recipe.seed);
  Rng perlin_rng(rng.fork());
  add_perlin(recipe, canvas, perlin_rng);
  return finish(recipe, canvas);
}

TerrainRecipe default_recipe(std::uint64_t seed, double difficulty, double size, double cell_size) {
  TerrainRecipe r;
  r.seed = seed;
  r.size = size;
  r.cell_size = cell_size;
  r.difficulty = difficulty;
  // Octave amplitudes grow mildly with difficulty; wavelengths stay fixed.
  const double rough = 0.5 + 0.5 * difficulty;
  r.octaves = {{16.0, 1.2 * rough}, {6.0, 0.35 * rough}, {2.0, 0.10 * rough}};
  if (2.0 * cell_size < 0.7) r.octaves.push_back({0.7, 0.03 * rough});
  // Feature density also grows with difficulty; at 1 about half the spawns end stuck.
  const double area_scale = (size * size) / 2500.0 * (0.5 + 2.0 * difficulty);
  auto scaled = [&](double per_2500) { return static_cast<int>(std::lround(per_2500 * area_scale)); };
  r.count(FeatureKind::kBump) = scaled(8);
  r.count(FeatureKind::kPit) = scaled(5);
  r.count(FeatureKind::kBarrier) = scaled(4);
  r.count(FeatureKind::kDitch) = scaled(2);
  r.count(FeatureKind::kStep) = scaled(2);
  r.count(FeatureKind::kSemiEllipsoid) = scaled(20);
  return r;
}

std::vector<TerrainRecipe> default_recipes(std::uint64_t seed, int n_train, int n_validation, double size,
                                           double cell_size) {
  std::vector<TerrainRecipe> out;
  Rng rng(seed);
  const int total = n_train + n_validation;
  for (int i = 0; i < total; ++i) {
    // Stratified difficulties so both splits cover easy and hard terrain.
    const int n_split = i < n_train ? n_train : n_validation;
    const int j = i < n_train ? i : i - n_train;
    const double difficulty = 0.3 + 0.7 * (n_split > 1 ? static_cast<double>(j) / (n_split - 1) : 1.0);
    out.push_back(default_recipe(rng.fork(), difficulty, size, cell_size));
  }
  return out;
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "hill") return SyntheticKind::kHill;
  if (name == "ditch") return SyntheticKind::kDitch;
  if (name == "step") return SyntheticKind::kStep;
  throw ArgumentError("unknown synthetic terrain kind '" + name + "' (expected hill, ditch or step)");
}

SyntheticParams SyntheticParams::defaults(SyntheticKind kind) {
  SyntheticParams p;
  switch (kind) {
    case SyntheticKind::kHill:
      p.height = 2.5;
      p.width = 12.0;
      break;
    case SyntheticKind::kDitch:
      p.height = 1.0;
      p.width = 2.3;
      p.radius = 5.0;
      break;
    case SyntheticKind::kStep:
      p.height = 1.0;
      p.width = 0.5;
      break;
  }
  return p;
}

Heightfield synthetic_test_terrain(SyntheticKind kind, const SyntheticParams& p) {
  if (!(p.size > 0.0 && p.cell_size > 0.0 && p.height > 0.0 && p.width > 0.0))
    throw ArgumentError("synthetic terrain parameters must be positive");
  if (kind == SyntheticKind::kDitch && !(p.radius > 0.0))
    throw ArgumentError("ditch radius must be positive");
  const int n = static_cast<int>(std::lround(p.size / p.cell_size)) + 1;
  const double c = 0.5 * p.size;
  const double fwhm_to_sigma = 1.0 / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  switch (kind) {
    case SyntheticKind::kHill: {
      const double s = p.width * fwhm_to_sigma;
      return Heightfield::from_function(0.0, 0.0, p.cell_size, n, n, [&](double x, double y) {
        return p.height * gaussian((x - c) * (x - c) + (y - c) * (y - c), s);
      });
    }
    case SyntheticKind::kDitch: {
      const double s = p.width * fwhm_to_sigma;
      return Heightfield::from_function(0.0, 0.0, p.cell_size, n, n, [&](double x, double y) {
        const double r = std::hypot(x - c, y - c) - p.radius;
        return -p.height * gaussian(r * r, s);
      });
    }
    case SyntheticKind::kStep:
      return Heightfield::from_function(0.0, 0.0, p.cell_size, n, n, [&](double x, double) {
        return p.height * smoothstep((x - c) / p.width + 0.5);
      });
  }
  throw ArgumentError("unknown synthetic terrain kind");
}

Heightfield synthetic_test_terrain(SyntheticKind kind) {
  return synthetic_test_terrain(kind, SyntheticParams::defaults(kind));
}

}  // namespace trav
