#include "trav/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "trav/binio.hpp"
#include "trav/errors.hpp"
#include "trav/parallel.hpp"
#include "trav/random.hpp"

namespace trav {

namespace fs = std::filesystem;

double PatchSpec::reach() const {
  const double a = 0.5 * (n_long - 1) * spacing();
  const double b = 0.5 * (n_lat - 1) * spacing();
  return std::hypot(a, b);
}

void PatchSpec::validate() const {
  if (!(length > 0.0 && width > 0.0) || n_long < 2 || n_lat < 2)
    throw ArgumentError("patch dimensions must be positive");
  if (std::abs(n_long / length - n_lat / width) > 1e-12)
    throw ArgumentError("patch sample spacing must be square");
}

std::vector<double> sample_patch(const Heightfield& hf, double x, double y, const Eigen::Vector2d& heading,
                                 const PatchSpec& spec) {
  spec.validate();
  const double n = heading.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw ArgumentError("patch heading must be a non-zero vector");
  const Eigen::Vector2d f = heading / n;
  const Eigen::Vector2d left(-f.y(), f.x());
  const double ds = spec.spacing();
  const double c_long = 0.5 * (spec.n_long - 1), c_lat = 0.5 * (spec.n_lat - 1);

  std::vector<double> out(static_cast<std::size_t>(spec.size()));
  for (int i = 0; i < spec.n_lat; ++i) {
    const double lat = (i - c_lat) * ds;
    for (int j = 0; j < spec.n_long; ++j) {
      const double lon = (j - c_long) * ds;
      const double px = x + lon * f.x() + lat * left.x();
      const double py = y + lon * f.y() + lat * left.y();
      if (!hf.contains(px, py))
        throw BoundsError("patch around (" + std::to_string(x) + ", " + std::to_string(y) +
                          ") leaves the terrain");
      out[static_cast<std::size_t>(i) * spec.n_long + j] = hf.sample(px, py);
    }
  }
  return out;
}

std::vector<double> extract_patch(const Heightfield& hf, double x, double y, const Eigen::Vector2d& heading,
                                  const PatchSpec& spec) {
  std::vector<double> p = sample_patch(hf, x, y, heading, spec);
  const double mid = p[static_cast<std::size_t>(spec.mid_index())];
  for (double& v : p) v -= mid;
  return p;
}

Patch extract_patch_f32(const Heightfield& hf, double x, double y, const Eigen::Vector2d& heading) {
  const std::vector<double> p = extract_patch(hf, x, y, heading);
  Patch out;
  for (int k = 0; k < kPatchSize; ++k) out[k] = static_cast<float>(p[k]);
  return out;
}

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "validation"; }

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "validation") return Split::kValidation;
  throw ArgumentError("unknown split '" + name + "'");
}

bool TraversabilitySample::operator==(const TraversabilitySample& o) const {
  const SampleMeta& a = meta;
  const SampleMeta& b = o.meta;
  return patch == o.patch && v == o.v && L == o.L && E == o.E && A == o.A && a.terrain_id == b.terrain_id &&
         a.episode == b.episode && a.x == b.x && a.y == b.y && a.z == b.z && a.heading == b.heading &&
         a.time == b.time && a.status == b.status && a.split == b.split && a.d_tau == b.d_tau &&
         a.work == b.work && a.a_peak == b.a_peak;
}

std::array<float, 3> recompute_label(const TraversabilitySample& s, const MeasureParams& p) {
  const TraversabilityLabel l = label_from_summary(s.meta.summary(), static_cast<double>(s.v), p);
  return {static_cast<float>(l.L), static_cast<float>(l.E), static_cast<float>(l.A)};
}

// ---------------------------------------------------------------- .tsamp ---

namespace {

class Encoder {
 public:
  explicit Encoder(unsigned char* p) : p_(p) {}
  template <typename T>
  void put(T v) {
    v = binio::to_little(v);
    std::memcpy(p_, &v, sizeof(T));
    p_ += sizeof(T);
  }

 private:
  unsigned char* p_;
};

class Decoder {
 public:
  explicit Decoder(const unsigned char* p) : p_(p) {}
  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return binio::to_little(v);
  }

 private:
  const unsigned char* p_;
};

void encode(const TraversabilitySample& s, unsigned char* buf) {
  Encoder e(buf);
  for (float h : s.patch) e.put(h);
  e.put(s.v);
  e.put(s.L);
  e.put(s.E);
  e.put(s.A);
  const SampleMeta& m = s.meta;
  e.put(m.terrain_id);
  e.put(m.episode);
  e.put(m.x);
  e.put(m.y);
  e.put(m.z);
  e.put(m.heading);
  e.put(m.time);
  e.put(static_cast<std::uint8_t>(m.status));
  e.put(static_cast<std::uint8_t>(m.split));
  e.put(std::uint16_t{0});
  e.put(m.d_tau);
  e.put(m.work);
  e.put(m.a_peak);
}

TraversabilitySample decode(const unsigned char* buf, std::uint64_t index) {
  Decoder d(buf);
  TraversabilitySample s;
  for (float& h : s.patch) h = d.get<float>();
  s.v = d.get<float>();
  s.L = d.get<float>();
  s.E = d.get<float>();
  s.A = d.get<float>();
  SampleMeta& m = s.meta;
  m.terrain_id = d.get<std::uint32_t>();
  m.episode = d.get<std::uint32_t>();
  m.x = d.get<float>();
  m.y = d.get<float>();
  m.z = d.get<float>();
  m.heading = d.get<float>();
  m.time = d.get<float>();
  const auto status = d.get<std::uint8_t>();
  const auto split = d.get<std::uint8_t>();
  d.get<std::uint16_t>();
  if (status > static_cast<std::uint8_t>(VehicleStatus::kOutOfBounds) || split > 1)
    throw ParseError("invalid status or split tag in sample record", static_cast<std::size_t>(index));
  m.status = static_cast<VehicleStatus>(status);
  m.split = static_cast<Split>(split);
  m.d_tau = d.get<double>();
  m.work = d.get<double>();
  m.a_peak = d.get<double>();
  return s;
}

void write_header(std::ostream& os, std::uint64_t count, std::uint8_t split_tag) {
  binio::put_magic(os, "TSMP");
  binio::put(os, kSampleStoreVersion);
  binio::put(os, count);
  binio::put(os, static_cast<std::uint16_t>(kPatchLat));
  binio::put(os, static_cast<std::uint16_t>(kPatchLong));
  binio::put(os, split_tag);
  const char pad[3] = {0, 0, 0};
  os.write(pad, 3);
}

}  // namespace

SampleWriter::SampleWriter(const fs::path& path, std::uint8_t split_tag) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw ArgumentError("cannot open sample store for writing: " + path.string());
  write_header(out_, 0, split_tag);
  open_ = true;
}

SampleWriter::~SampleWriter() {
  try {
    close();
  } catch (...) {
  }
}

void SampleWriter::write(const TraversabilitySample& s) {
  if (!open_) throw ArgumentError("sample store already closed");
  unsigned char buf[kSampleRecordBytes];
  encode(s, buf);
  out_.write(reinterpret_cast<const char*>(buf), kSampleRecordBytes);
  ++count_;
}

void SampleWriter::close() {
  if (!open_) return;
  open_ = false;
  out_.seekp(8);
  binio::put(out_, count_);
  out_.close();
  if (!out_) throw std::runtime_error("failed writing sample store " + path_.string());
}

SampleReader::SampleReader(const fs::path& path) : path_(path) {
  in_.open(path, std::ios::binary);
  if (!in_) throw ArgumentError("cannot open sample store: " + path.string());
  binio::expect_magic(in_, "TSMP");
  const auto version = binio::get<std::uint32_t>(in_, "version");
  if (version != kSampleStoreVersion)
    throw ParseError("unsupported sample store version " + std::to_string(version), 4);
  count_ = binio::get<std::uint64_t>(in_, "record count");
  const auto n_lat = binio::get<std::uint16_t>(in_, "patch rows");
  const auto n_long = binio::get<std::uint16_t>(in_, "patch columns");
  split_tag_ = binio::get<std::uint8_t>(in_, "split tag");
  binio::get<std::uint8_t>(in_, "padding");
  binio::get<std::uint16_t>(in_, "padding");
  if (n_lat != kPatchLat || n_long != kPatchLong)
    throw ParseError("patch dimensions " + std::to_string(n_lat) + "x" + std::to_string(n_long) +
                         " do not match " + std::to_string(kPatchLat) + "x" + std::to_string(kPatchLong),
                     16);
  const auto bytes = fs::file_size(path);
  const std::uint64_t expected = kSampleHeaderBytes + count_ * kSampleRecordBytes;
  if (bytes < expected) {
    const std::uint64_t complete = (bytes - kSampleHeaderBytes) / kSampleRecordBytes;
    throw ParseError("truncated sample store: record " + std::to_string(complete) + " of " +
                         std::to_string(count_) + " is incomplete",
                     static_cast<std::size_t>(complete));
  }
  if (bytes > expected)
    throw ParseError("sample store has " + std::to_string(bytes - expected) + " bytes beyond record " +
                         std::to_string(count_),
                     static_cast<std::size_t>(count_));
}

TraversabilitySample SampleReader::read(std::uint64_t index) {
  if (index >= count_) throw BoundsError("sample index " + std::to_string(index) + " out of range");
  unsigned char buf[kSampleRecordBytes];
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kSampleHeaderBytes + index * kSampleRecordBytes));
  in_.read(reinterpret_cast<char*>(buf), kSampleRecordBytes);
  if (in_.gcount() != static_cast<std::streamsize>(kSampleRecordBytes))
    throw ParseError("truncated sample record", static_cast<std::size_t>(index));
  return decode(buf, index);
}

std::vector<std::uint64_t> SampleReader::shuffled_order(std::uint64_t seed) const {
  std::vector<std::uint64_t> order(count_);
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  Rng rng(seed);
  shuffle(order.begin(), order.end(), rng);
  return order;
}

void write_samples(const fs::path& path, const std::vector<TraversabilitySample>& samples,
                   std::uint8_t split_tag) {
  SampleWriter w(path, split_tag);
  for (const auto& s : samples) w.write(s);
  w.close();
}

std::vector<TraversabilitySample> read_samples(const fs::path& path) {
  SampleReader r(path);
  std::vector<TraversabilitySample> out;
  out.reserve(r.size());
  for (std::uint64_t i = 0; i < r.size(); ++i) out.push_back(r.read(i));
  return out;
}

std::uint64_t merge_shards(const std::vector<fs::path>& shards, const fs::path& out, std::uint8_t split_tag) {
  SampleWriter w(out, split_tag);
  for (const auto& shard : shards) {
    SampleReader r(shard);
    for (std::uint64_t i = 0; i < r.size(); ++i) w.write(r.read(i));
  }
  w.close();
  return w.count();
}

// ------------------------------------------------------------ collection ---

void CollectionSchedule::validate() const {
  if (vehicles_per_terrain < 1) throw ArgumentError("vehicles_per_terrain must be at least 1");
  if (!(seconds_per_vehicle > 0.0) || !(max_episode > 0.0))
    throw ArgumentError("collection durations must be positive");
  if (!(stuck_dwell >= 0.0)) throw ArgumentError("stuck dwell must be non-negative");
  if (!(v_min > 0.0 && v_min <= v_max)) throw ArgumentError("speed range must satisfy 0 < v_min <= v_max");
  if (jobs < 1) throw ArgumentError("jobs must be at least 1");
}

KeyValueConfig CollectionSchedule::to_config() const {
  KeyValueConfig c;
  c.set("collect.vehicles_per_terrain", static_cast<long long>(vehicles_per_terrain));
  c.set("collect.seconds_per_vehicle", seconds_per_vehicle);
  c.set("collect.max_episode", max_episode);
  c.set("collect.stuck_dwell", stuck_dwell);
  c.set("collect.v_min", v_min);
  c.set("collect.v_max", v_max);
  c.set("collect.seed", std::to_string(seed));
  return c;
}

CollectionSchedule CollectionSchedule::from_config(const KeyValueConfig& cfg) {
  CollectionSchedule s;
  s.vehicles_per_terrain = static_cast<int>(cfg.get_int("collect.vehicles_per_terrain", s.vehicles_per_terrain));
  s.seconds_per_vehicle = cfg.get_double("collect.seconds_per_vehicle", s.seconds_per_vehicle);
  s.max_episode = cfg.get_double("collect.max_episode", s.max_episode);
  s.stuck_dwell = cfg.get_double("collect.stuck_dwell", s.stuck_dwell);
  s.v_min = cfg.get_double("collect.v_min", s.v_min);
  s.v_max = cfg.get_double("collect.v_max", s.v_max);
  s.seed = std::stoull(cfg.get_string("collect.seed", std::to_string(s.seed)));
  s.validate();
  return s;
}

double collection_margin(const VehicleConfig& vehicle, const PatchSpec& spec) {
  return std::max(vehicle.footprint_radius() + 1.0, spec.reach() + 0.25);
}

namespace {

void add_samples(const EpisodeResult& r, float v, const Heightfield& hf, const CorpusTerrain& terrain,
                 std::uint32_t episode, const MeasureParams& p, std::vector<TraversabilitySample>& out) {
  const int window = static_cast<int>(std::lround(p.tau * 20.0));
  const auto& obs = r.observations;
  for (int k = window; k < static_cast<int>(obs.size()); ++k) {
    const Observation& start = obs[k - window];
    const std::span<const Observation> w(obs.data() + (k - window), static_cast<std::size_t>(window + 1));
    // An overturn is recorded at the sim tick, off the sample grid.
    if (std::abs(w.back().time - start.time - p.tau) > 1e-6) continue;
    TraversabilitySample s;
    try {
      s.patch = extract_patch_f32(hf, start.position.x(), start.position.y(), start.heading);
    } catch (const BoundsError&) {
      continue;
    }
    const WindowSummary sum = summarize(w, static_cast<double>(v), p);
    s.v = v;
    s.meta.d_tau = sum.d_tau;
    s.meta.work = sum.work;
    s.meta.a_peak = sum.a_peak;
    const auto lab = recompute_label(s, p);
    s.L = lab[0];
    s.E = lab[1];
    s.A = lab[2];
    s.meta.terrain_id = terrain.id;
    s.meta.episode = episode;
    s.meta.x = static_cast<float>(start.position.x());
    s.meta.y = static_cast<float>(start.position.y());
    s.meta.z = static_cast<float>(start.position.z());
    s.meta.heading = static_cast<float>(std::atan2(start.heading.y(), start.heading.x()));
    s.meta.time = static_cast<float>(start.time);
    s.meta.status = obs[k].status;
    s.meta.split = terrain.split;
    out.push_back(s);
  }
}

}  // namespace

std::vector<TraversabilitySample> collect_terrain(const Heightfield& hf, const CorpusTerrain& terrain,
                                                  const VehicleConfig& vehicle, const CollectionSchedule& schedule,
                                                  CollectionStats* stats, const MeasureParams& p) {
  schedule.validate();
  const double margin = collection_margin(vehicle);
  const double spawn_margin = margin + 0.5;
  if (!(hf.width() > 2.0 * spawn_margin && hf.height_extent() > 2.0 * spawn_margin))
    throw ConfigError("terrain " + std::to_string(terrain.id) + " (" + std::to_string(hf.width()) + " x " +
                      std::to_string(hf.height_extent()) + " m) is too small for the vehicle and patch footprint " +
                      std::to_string(2.0 * spawn_margin) + " m");

  CollectionStats local;
  std::vector<TraversabilitySample> out;
  Rng terrain_rng(Rng::mix(schedule.seed ^ Rng::mix(terrain.id)));
  std::uint32_t episode = 0;
  for (int vehicle_index = 0; vehicle_index < schedule.vehicles_per_terrain; ++vehicle_index) {
    Rng rng(terrain_rng.fork());
    double remaining = schedule.seconds_per_vehicle;
    int consecutive_discards = 0;
    while (remaining >= p.tau) {
      EpisodeConfig ep;
      ep.spawn_x = rng.uniform(hf.min_x() + spawn_margin, hf.max_x() - spawn_margin);
      ep.spawn_y = rng.uniform(hf.min_y() + spawn_margin, hf.max_y() - spawn_margin);
      ep.spawn_heading = rng.uniform(0.0, 2.0 * M_PI);
      const float v = static_cast<float>(rng.uniform(schedule.v_min, schedule.v_max));
      ep.target_speed = static_cast<double>(v);
      ep.max_duration = std::floor(std::min(schedule.max_episode, remaining) * ep.sample_rate) / ep.sample_rate;
      ep.boundary_margin = margin;
      ep.stuck_dwell = schedule.stuck_dwell;
      const EpisodeResult r = run_episode(hf, vehicle, ep, p);
      ++local.episodes;
      if (r.discarded) {
        ++local.discarded;
        if (++consecutive_discards >= 50)
          throw ConfigError("terrain " + std::to_string(terrain.id) + ": 50 consecutive spawns discarded (" +
                            r.reason + ")");
        continue;
      }
      consecutive_discards = 0;
      ++local.terminations[static_cast<std::size_t>(r.termination)];
      add_samples(r, v, hf, terrain, episode++, p, out);
      // A spawn that overturns while settling still uses one window of budget.
      remaining -= std::max(r.observations.back().time, p.tau);
    }
  }
  for (const auto& s : out) (s.meta.split == Split::kTrain ? local.train_samples : local.validation_samples)++;
  if (stats) {
    stats->train_samples += local.train_samples;
    stats->validation_samples += local.validation_samples;
    stats->episodes += local.episodes;
    stats->discarded += local.discarded;
    for (std::size_t i = 0; i < local.terminations.size(); ++i) stats->terminations[i] += local.terminations[i];
  }
  return out;
}

CollectionStats collect_corpus(const std::vector<CorpusTerrain>& terrains, const VehicleConfig& vehicle,
                               const CollectionSchedule& schedule, const fs::path& dir, const MeasureParams& p) {
  schedule.validate();
  vehicle.validate();
  if (terrains.empty()) throw ConfigError("no terrains to collect from");
  for (std::size_t i = 0; i < terrains.size(); ++i) {
    terrains[i].recipe.validate();
    for (std::size_t j = 0; j < i; ++j)
      if (terrains[j].id == terrains[i].id)
        throw ConfigError("duplicate terrain id " + std::to_string(terrains[i].id));
    const double side = terrains[i].recipe.size;
    if (!(side > 2.0 * (collection_margin(vehicle) + 0.5)))
      throw ConfigError("terrain " + std::to_string(terrains[i].id) + " is too small for the vehicle and patch footprint");
  }

  const fs::path shard_dir = dir / "shards";
  fs::create_directories(shard_dir);
  std::vector<fs::path> shard_paths(terrains.size());
  std::vector<CollectionStats> per_terrain(terrains.size());
  for (std::size_t i = 0; i < terrains.size(); ++i)
    shard_paths[i] = shard_dir / ("terrain_" + std::to_string(terrains[i].id) + ".tsamp");

  parallel_for(terrains.size(), schedule.jobs, [&](int, std::size_t i) {
    const Heightfield hf = generate(terrains[i].recipe);
    const auto samples = collect_terrain(hf, terrains[i], vehicle, schedule, &per_terrain[i], p);
    write_samples(shard_paths[i], samples, static_cast<std::uint8_t>(terrains[i].split));
  });

  CollectionStats total;
  std::vector<fs::path> train, validation;
  for (std::size_t i = 0; i < terrains.size(); ++i) {
    const CollectionStats& s = per_terrain[i];
    total.train_samples += s.train_samples;
    total.validation_samples += s.validation_samples;
    total.episodes += s.episodes;
    total.discarded += s.discarded;
    for (std::size_t k = 0; k < s.terminations.size(); ++k) total.terminations[k] += s.terminations[k];
    (terrains[i].split == Split::kTrain ? train : validation).push_back(shard_paths[i]);
  }
  merge_shards(train, dir / "train.tsamp", static_cast<std::uint8_t>(Split::kTrain));
  merge_shards(validation, dir / "validation.tsamp", static_cast<std::uint8_t>(Split::kValidation));
  fs::remove_all(shard_dir);
  return total;
}

AuditResult audit_store(const fs::path& path, double fraction, std::uint64_t seed, const MeasureParams& p) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ArgumentError("audit fraction must be in (0, 1]");
  SampleReader r(path);
  AuditResult out;
  Rng rng(seed);
  for (std::uint64_t i = 0; i < r.size(); ++i) {
    if (rng.uniform() >= fraction && !(i + 1 == r.size() && out.checked == 0)) continue;
    const TraversabilitySample s = r.read(i);
    ++out.checked;
    const auto lab = recompute_label(s, p);
    if (lab[0] != s.L || lab[1] != s.E || lab[2] != s.A) ++out.mismatched;
    if (s.patch[PatchSpec{}.mid_index()] != 0.0f) ++out.bad_midpoint;
  }
  return out;
}

}  // namespace trav
