#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "trav/heightfield.hpp"
#include "trav/measures.hpp"
#include "trav/terraingen.hpp"
#include "trav/vehiclesim.hpp"

namespace trav {

/// Heading-aligned local height patch. Rows run across the vehicle (lateral,
/// row 0 on the right), columns along it (column 0 at the rear). Samples sit at
/// long = (j - 31.5) * spacing, lat = (i - 15.5) * spacing around the joint.
struct PatchSpec {
  double length = 10.0;
  double width = 5.0;
  int n_long = 64;
  int n_lat = 32;

  double spacing() const { return length / n_long; }
  int size() const { return n_long * n_lat; }
  /// Node whose height is subtracted: row n_lat / 2, column n_long / 2.
  int mid_row() const { return n_lat / 2; }
  int mid_col() const { return n_long / 2; }
  int mid_index() const { return mid_row() * n_long + mid_col(); }
  /// Distance from the centre to the farthest sample.
  double reach() const;

  void validate() const;
};

inline constexpr int kPatchLong = 64;
inline constexpr int kPatchLat = 32;
inline constexpr int kPatchSize = kPatchLong * kPatchLat;
inline constexpr double kMaxSpeed = 2.69;
inline constexpr double kMinSpeed = 0.07;

using Patch = std::array<float, kPatchSize>;

/// Bilinear samples of `hf` on the rotated grid, row-major (row = lateral).
/// No offset is applied. Throws BoundsError when any sample leaves the raster.
std::vector<double> sample_patch(const Heightfield& hf, double x, double y, const Eigen::Vector2d& heading,
                                 const PatchSpec& spec = {});

/// sample_patch with the midpoint height subtracted, so the midpoint is 0.
std::vector<double> extract_patch(const Heightfield& hf, double x, double y, const Eigen::Vector2d& heading,
                                  const PatchSpec& spec = {});

/// extract_patch for the default spec, rounded to f32. The subtraction is done
/// after rounding so the midpoint stays exactly zero.
Patch extract_patch_f32(const Heightfield& hf, double x, double y, const Eigen::Vector2d& heading);

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1 };
const char* split_name(Split s);
Split parse_split(const std::string& name);

struct SampleMeta {
  std::uint32_t terrain_id = 0;
  std::uint32_t episode = 0;
  float x = 0.0f, y = 0.0f, z = 0.0f;  ///< joint at the window start
  float heading = 0.0f;                ///< [rad]
  float time = 0.0f;                   ///< window start since data collection began [s]
  VehicleStatus status = VehicleStatus::kOk;  ///< status at the window end
  Split split = Split::kTrain;
  /// Window telemetry the label is computed from.
  double d_tau = 0.0;
  double work = 0.0;
  double a_peak = 0.0;

  WindowSummary summary() const { return {d_tau, work, a_peak}; }
};

struct TraversabilitySample {
  Patch patch{};
  float v = 0.0f;
  float L = 0.0f, E = 0.0f, A = 0.0f;
  SampleMeta meta;

  bool operator==(const TraversabilitySample& o) const;
};

/// Label recomputed from the stored telemetry, rounded like the stored one.
std::array<float, 3> recompute_label(const TraversabilitySample& s, const MeasureParams& p = {});

// ---------------------------------------------------------------- .tsamp ---
//
// Header (24 bytes): "TSMP", u32 version, u64 record count, u16 n_lat,
// u16 n_long, u8 split tag (0 train, 1 validation, 255 mixed), 3 zero bytes.
// Records (little-endian, fixed width):
//   f32 patch[n_lat * n_long], f32 v, f32 L, f32 E, f32 A,
//   u32 terrain_id, u32 episode, f32 x, f32 y, f32 z, f32 heading, f32 time,
//   u8 status, u8 split, u16 0, f64 d_tau, f64 work, f64 a_peak.

inline constexpr std::uint32_t kSampleStoreVersion = 1;
inline constexpr std::size_t kSampleHeaderBytes = 24;
inline constexpr std::size_t kSampleRecordBytes = kPatchSize * 4 + 4 * 4 + 4 * 2 + 4 * 5 + 4 + 8 * 3;
inline constexpr std::uint8_t kMixedSplit = 255;

/// Appends records and patches the header count on close().
class SampleWriter {
 public:
  SampleWriter(const std::filesystem::path& path, std::uint8_t split_tag);
  ~SampleWriter();
  SampleWriter(const SampleWriter&) = delete;
  SampleWriter& operator=(const SampleWriter&) = delete;

  void write(const TraversabilitySample& s);
  void close();
  std::uint64_t count() const { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::uint64_t count_ = 0;
  bool open_ = false;
};

/// Random-access reader. The header count must agree with the file length;
/// a short file raises ParseError carrying the first incomplete record index.
class SampleReader {
 public:
  explicit SampleReader(const std::filesystem::path& path);

  std::uint64_t size() const { return count_; }
  std::uint8_t split_tag() const { return split_tag_; }
  TraversabilitySample read(std::uint64_t index);
  /// Record order for one pass; a fixed seed gives a fixed permutation.
  std::vector<std::uint64_t> shuffled_order(std::uint64_t seed) const;

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t count_ = 0;
  std::uint8_t split_tag_ = 0;
};

void write_samples(const std::filesystem::path& path, const std::vector<TraversabilitySample>& samples,
                   std::uint8_t split_tag);
std::vector<TraversabilitySample> read_samples(const std::filesystem::path& path);

/// Concatenates shard files in the given order into one store.
std::uint64_t merge_shards(const std::vector<std::filesystem::path>& shards, const std::filesystem::path& out,
                           std::uint8_t split_tag);

// ------------------------------------------------------------ collection ---

struct CorpusTerrain {
  std::uint32_t id = 0;
  Split split = Split::kTrain;
  TerrainRecipe recipe;
};

struct CollectionSchedule {
  int vehicles_per_terrain = 2;
  double seconds_per_vehicle = 100.0;  ///< data-collection time budget
  double max_episode = 30.0;           ///< longest single episode before a respawn [s]
  double stuck_dwell = 5.0;            ///< recording kept after a stuck vehicle is detected [s]
  double v_min = kMinSpeed;
  double v_max = kMaxSpeed;
  std::uint64_t seed = 1;
  int jobs = 1;

  void validate() const;
  KeyValueConfig to_config() const;
  static CollectionSchedule from_config(const KeyValueConfig& cfg);
};

struct CollectionStats {
  std::uint64_t train_samples = 0;
  std::uint64_t validation_samples = 0;
  std::uint64_t episodes = 0;
  std::uint64_t discarded = 0;
  std::array<std::uint64_t, 4> terminations{};  ///< indexed by VehicleStatus
};

/// Samples produced by one vehicle budget on one terrain. Episodes respawn
/// uniformly inside the patch-safe region with v ~ U[v_min, v_max]; every
/// observation that completes a window yields one sample.
std::vector<TraversabilitySample> collect_terrain(const Heightfield& hf, const CorpusTerrain& terrain,
                                                  const VehicleConfig& vehicle, const CollectionSchedule& schedule,
                                                  CollectionStats* stats = nullptr, const MeasureParams& p = {});

/// Runs every terrain (in parallel over `schedule.jobs` workers), writes one
/// shard per terrain to `dir/shards`, then merges them in terrain order into
/// `dir/train.tsamp` and `dir/validation.tsamp`. The result does not depend
/// on the worker count.
CollectionStats collect_corpus(const std::vector<CorpusTerrain>& terrains, const VehicleConfig& vehicle,
                               const CollectionSchedule& schedule, const std::filesystem::path& dir,
                               const MeasureParams& p = {});

/// Joint must stay this far from the raster edge so the patch and every
/// contact probe remain inside.
double collection_margin(const VehicleConfig& vehicle, const PatchSpec& spec = {});

struct AuditResult {
  std::uint64_t checked = 0;
  std::uint64_t mismatched = 0;
  std::uint64_t bad_midpoint = 0;
};

/// Recomputes labels for a seeded `fraction` of the records.
AuditResult audit_store(const std::filesystem::path& path, double fraction, std::uint64_t seed,
                        const MeasureParams& p = {});

}  // namespace trav
