#pragma once

#include <Eigen/Core>
#include <Eigen/StdVector>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "trav/dataset.hpp"
#include "trav/kvconfig.hpp"
#include "trav/random.hpp"

namespace trav {

// Fixed regressor. Input is a 32 x 64 patch (rows lateral) and v / 2.69.
//   3 x [conv 3x3 same, 10 filters, ReLU, maxpool 2x2]   32x64 -> 4x8
//   flatten (channel, row, column) 320 -> FC 256 ReLU, append v -> 257
//   per head L, E, A: [dropout, FC 256 ReLU] x 2 -> FC 1 linear
//
// All parameters live in one flat vector. Tensors are stored in this order,
// weights row-major as (out, in) with conv inputs ordered (channel, ky, kx):
//   conv1.w conv1.b conv2.w conv2.b conv3.w conv3.b trunk.w trunk.b
//   then for L, E, A: fc1.w fc1.b fc2.w fc2.b head.w head.b

enum class Mode { kEval, kTrain };

struct TensorInfo {
  std::string name;
  int rows = 0;  ///< output units / filters
  int cols = 0;  ///< inputs per unit (1 for biases)
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

const std::vector<TensorInfo>& parameter_layout();
const TensorInfo& tensor_info(const std::string& name);

inline constexpr int kFilters = 10;
inline constexpr int kConvLayers = 3;
inline constexpr int kFlat = 320;
inline constexpr int kHidden = 256;
inline constexpr int kHeads = 3;
inline constexpr std::size_t kParameterCount = 480387;

/// Hash of the layout and layer semantics, stored in weight files.
std::uint64_t architecture_fingerprint();

inline double normalize_speed(double v) { return v / kMaxSpeed; }

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

/// Flat parameter or gradient storage. The fixed alignment keeps Eigen's
/// kernels on the same code path, so results do not depend on the allocator.
template <typename T>
using ParamVec = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct ModelParams {
  ParamVec<T> values = ParamVec<T>(kParameterCount, T(0));

  static ModelParams zeros() { return {}; }
  /// He-normal weights (fan-in scaled, linear heads at unit gain), zero biases.
  static ModelParams initialize(std::uint64_t seed);

  T* data(const std::string& tensor) { return values.data() + tensor_info(tensor).offset; }
  const T* data(const std::string& tensor) const { return values.data() + tensor_info(tensor).offset; }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<U>(values[i]);
    return out;
  }

  /// Throws ArgumentError on a wrong size or non-finite entry.
  void validate() const;
  bool operator==(const ModelParams& o) const { return values == o.values; }
};

using ModelParamsF = ModelParams<float>;

/// Forward/backward over a batch. Holds the activations of the last forward
/// pass so backward() can follow it. Not thread-safe; use one per thread.
template <typename T>
class Network {
 public:
  explicit Network(const ModelParams<T>& params, double dropout = 0.1);

  const ModelParams<T>& params() const { return *params_; }
  void rebind(const ModelParams<T>& params) { params_ = &params; }

  /// patches: 2048 x B, one patch per column in row-major (lat, long) order.
  /// Returns 3 x B raw head outputs (L, E, A). Train mode draws dropout masks
  /// from `rng`, which is required then.
  const Mat<T>& forward(const Mat<T>& patches, const RowVec<T>& v_norm, Mode mode, Rng* rng = nullptr);

  /// Accumulates dLoss/dparams into `grad` given dLoss/doutput (3 x B).
  void backward(const Mat<T>& d_out, ParamVec<T>& grad);

  /// Hash of every ReLU sign and pooling choice in the last forward pass.
  std::uint64_t activation_pattern() const;

 private:
  struct ConvCache {
    int c_in = 0, h = 0, w = 0;
    Mat<T> cols, z, pooled;
    std::vector<int> argmax;
  };
  struct BranchCache {
    Mat<T> m1, d1, z1, h1, m2, d2, z2, h2;
  };

  const ModelParams<T>* params_;
  double dropout_;
  int batch_ = 0;
  bool train_ = false;
  std::array<ConvCache, kConvLayers> conv_;
  Mat<T> flat_, zt_, g_;
  std::array<BranchCache, kHeads> branch_;
  Mat<T> out_;
};

/// Mean over batch and heads of |pred - label|.
template <typename T>
T mae_loss(const Mat<T>& pred, const Mat<T>& labels);

/// d mae_loss / d pred; zero where pred == label.
template <typename T>
Mat<T> mae_gradient(const Mat<T>& pred, const Mat<T>& labels);

/// Eval-mode prediction for one patch (raw head outputs).
std::array<float, 3> predict(const ModelParamsF& params, const Patch& patch, double v);

// ---------------------------------------------------------------- samples ---

struct Batch {
  Mat<float> patches;  ///< 2048 x B
  RowVec<float> v_norm;
  Mat<float> labels;  ///< 3 x B
};

/// Indexed access to (patch, v, label) triples.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual void fetch(const std::uint64_t* indices, std::size_t n, Batch& out) = 0;
};

/// Compact in-memory table (8.2 kB per sample).
class MemorySource : public SampleSource {
 public:
  MemorySource() = default;
  explicit MemorySource(const std::vector<TraversabilitySample>& samples);
  static MemorySource load(const std::filesystem::path& path);

  void add(const TraversabilitySample& s);
  std::size_t size() const override { return v_.size(); }
  void fetch(const std::uint64_t* indices, std::size_t n, Batch& out) override;

  const float* patch(std::size_t i) const { return patches_.data() + i * kPatchSize; }
  float v(std::size_t i) const { return v_[i]; }
  float label(std::size_t i, int head) const { return labels_[i * 3 + head]; }

 private:
  std::vector<float> patches_, v_, labels_;
};

/// Reads records on demand, for stores larger than memory.
class StoreSource : public SampleSource {
 public:
  explicit StoreSource(const std::filesystem::path& path) : reader_(path) {}
  std::size_t size() const override { return reader_.size(); }
  void fetch(const std::uint64_t* indices, std::size_t n, Batch& out) override;

 private:
  SampleReader reader_;
};

/// In memory below `memory_limit` bytes, streamed otherwise.
std::unique_ptr<SampleSource> open_samples(const std::filesystem::path& path,
                                           std::size_t memory_limit = std::size_t{2} << 30);

// --------------------------------------------------------------- training ---

struct TrainConfig {
  double learning_rate = 1e-3;
  /// Learning rate is multiplied by this after every epoch.
  double lr_decay = 1.0;
  int batch_size = 256;
  std::uint64_t seed = 1;
  int epochs = 30;
  double dropout = 0.1;
  /// Stop after this many epochs without a new best validation MAE (0: never).
  int patience = 0;

  void validate() const;
  KeyValueConfig to_config() const;
  static TrainConfig from_config(const KeyValueConfig& cfg);
};

/// Overall and per-head MAE.
struct HeadErrors {
  double overall = 0.0;
  std::array<double, 3> head{};
};

struct EpochRecord {
  int epoch = 0;
  HeadErrors train;  ///< running average over the epoch's batches, train mode
  HeadErrors validation;
};

struct TrainResult {
  ModelParamsF best;
  int best_epoch = 0;
  double best_validation = 0.0;
  std::vector<EpochRecord> history;
};

/// Adam on the MAE loss with seeded shuffling and dropout. Returns the
/// parameters of the epoch with the lowest validation MAE. Throws
/// TrainingError on a non-finite loss.
TrainResult train(SampleSource& train_set, SampleSource& validation_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Eval-mode MAE of raw outputs against labels.
HeadErrors evaluate(const ModelParamsF& params, SampleSource& data, int batch_size = 256);

/// MAE of always predicting the training-set label means.
HeadErrors mean_predictor_error(SampleSource& train_set, SampleSource& validation_set);

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

// ---------------------------------------------------------- gradient check ---

struct GradientCheck {
  double max_relative_deviation = 0.0;
  int checked = 0;
  int skipped = 0;  ///< perturbation crossed a ReLU, pooling or loss kink
};

/// Central differences (h = 1e-4, f64) on `n_weights` seeded random
/// parameters of the MAE loss on a batch, compared to backprop.
GradientCheck gradient_check(const ModelParams<double>& params, const Mat<double>& patches,
                             const RowVec<double>& v_norm, const Mat<double>& labels, std::uint64_t seed,
                             int n_weights = 200, double h = 1e-4, Mode mode = Mode::kTrain);

// ----------------------------------------------------------------- .twts ---
//
// "TWTS", u32 version, u64 architecture fingerprint, u64 parameter count,
// then little-endian f32 values in layout order.

void save_weights(const ModelParamsF& params, const std::filesystem::path& path);
ModelParamsF load_weights(const std::filesystem::path& path);

}  // namespace trav
