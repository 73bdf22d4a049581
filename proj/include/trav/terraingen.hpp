#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trav/heightfield.hpp"
#include "trav/kvconfig.hpp"

namespace trav {

enum class FeatureKind { kBump = 0, kPit, kBarrier, kDitch, kStep, kSemiEllipsoid };
inline constexpr std::size_t kFeatureKinds = 6;
const char* feature_name(FeatureKind kind);

struct PerlinOctave {
  double wavelength = 8.0;  ///< m
  double amplitude = 0.2;   ///< m
};

/// Everything needed to regenerate one procedural terrain.
struct TerrainRecipe {
  std::uint64_t seed = 1;
  double size = 50.0;       ///< square side [m]
  double cell_size = 0.05;  ///< [m]
  std::vector<PerlinOctave> octaves;
  std::array<int, kFeatureKinds> feature_counts{};
  double difficulty = 0.5;  ///< scales feature amplitudes, in [0, 1]

  int& count(FeatureKind k) { return feature_counts[static_cast<std::size_t>(k)]; }
  int count(FeatureKind k) const { return feature_counts[static_cast<std::size_t>(k)]; }

  /// Throws ArgumentError on invalid fields.
  void validate() const;

  KeyValueConfig to_config() const;
  static TerrainRecipe from_config(const KeyValueConfig& cfg);
};

/// Largest attainable |height| for the recipe: sum of octave amplitudes plus
/// the maximal amplitude of every feature at the recipe difficulty.
double height_bound(const TerrainRecipe& recipe);

/// Minimum distance between any feature anchor and the raster boundary.
inline constexpr double kFeatureMargin = 2.0;

/// Perlin octaves plus placed features. Deterministic in the recipe;
/// heights are rounded to f32 so the binary raster format stores them exactly.
Heightfield generate(const TerrainRecipe& recipe);

/// Only the Perlin component (used for its zero-mean property).
Heightfield generate_perlin(const TerrainRecipe& recipe);

/// Seeded 2-D gradient noise in [-1, 1].
class PerlinNoise {
 public:
  explicit PerlinNoise(std::uint64_t seed);
  double operator()(double x, double y) const;

 private:
  std::array<std::uint8_t, 512> perm_{};
};

/// Default corpus: `n_train` training then `n_validation` validation recipes
/// with difficulty spread over [0.3, 1]; all seeds derive from `seed`.
std::vector<TerrainRecipe> default_recipes(std::uint64_t seed, int n_train = 30, int n_validation = 10,
                                           double size = 50.0, double cell_size = 0.1);

/// A single default recipe of the given difficulty.
TerrainRecipe default_recipe(std::uint64_t seed, double difficulty, double size = 50.0,
                             double cell_size = 0.1);

enum class SyntheticKind { kHill, kDitch, kStep };
SyntheticKind parse_synthetic_kind(const std::string& name);

/// Analytic obstacle test surfaces. Defaults: Gaussian hill 2.5 m high and
/// 12 m FWHM; circular ditch 1 m deep, 2.3 m FWHM, 5 m radius; step 1 m tall
/// with 0.5 m smoothstep blend whose face is perpendicular to +x.
struct SyntheticParams {
  double size = 40.0;
  double cell_size = 0.1;
  double height = 0.0;  ///< hill height, ditch depth or step height [m]
  double width = 0.0;   ///< FWHM (hill, ditch) or blend width (step) [m]
  double radius = 0.0;  ///< ditch ring radius [m]

  static SyntheticParams defaults(SyntheticKind kind);
};

/// Surface centred at (size/2, size/2); the step rises at x = size/2.
Heightfield synthetic_test_terrain(SyntheticKind kind, const SyntheticParams& params);
Heightfield synthetic_test_terrain(SyntheticKind kind);

/// Cubic blend 3t^2 - 2t^3 clamped to [0, 1].
inline double smoothstep(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace trav
