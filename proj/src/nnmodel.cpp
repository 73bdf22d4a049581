#include "trav/nnmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "trav/binio.hpp"
#include "trav/errors.hpp"

namespace trav {

namespace fs = std::filesystem;

namespace {

const char* const kHeadNames[kHeads] = {"L", "E", "A"};

std::vector<TensorInfo> build_layout() {
  std::vector<TensorInfo> t;
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    t.push_back({std::move(name), rows, cols, offset});
    offset += t.back().size();
  };
  int c_in = 1;
  for (int l = 1; l <= kConvLayers; ++l) {
    add("conv" + std::to_string(l) + ".w", kFilters, c_in * 9);
    add("conv" + std::to_string(l) + ".b", kFilters, 1);
    c_in = kFilters;
  }
  add("trunk.w", kHidden, kFlat);
  add("trunk.b", kHidden, 1);
  for (const char* h : kHeadNames) {
    const std::string p = std::string(h) + ".";
    add(p + "fc1.w", kHidden, kHidden + 1);
    add(p + "fc1.b", kHidden, 1);
    add(p + "fc2.w", kHidden, kHidden);
    add(p + "fc2.b", kHidden, 1);
    add(p + "head.w", 1, kHidden);
    add(p + "head.b", 1, 1);
  }
  if (offset != kParameterCount) throw std::logic_error("parameter layout does not sum to the fixed count");
  return t;
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<const RowMat<T>> weights(const ModelParams<T>& p, const TensorInfo& t) {
  return {p.values.data() + t.offset, t.rows, t.cols};
}

template <typename T>
Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bias(const ModelParams<T>& p, const TensorInfo& t) {
  return {p.values.data() + t.offset, t.rows};
}

template <typename T>
Eigen::Map<RowMat<T>> grad_weights(ParamVec<T>& g, const TensorInfo& t) {
  return {g.data() + t.offset, t.rows, t.cols};
}

template <typename T>
Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> grad_bias(ParamVec<T>& g, const TensorInfo& t) {
  return {g.data() + t.offset, t.rows};
}

struct LayerIds {
  std::array<const TensorInfo*, kConvLayers> conv_w, conv_b;
  const TensorInfo* trunk_w;
  const TensorInfo* trunk_b;
  struct Head {
    const TensorInfo *fc1_w, *fc1_b, *fc2_w, *fc2_b, *head_w, *head_b;
  };
  std::array<Head, kHeads> head;
};

const LayerIds& ids() {
  static const LayerIds l = [] {
    LayerIds out;
    for (int k = 0; k < kConvLayers; ++k) {
      out.conv_w[k] = &tensor_info("conv" + std::to_string(k + 1) + ".w");
      out.conv_b[k] = &tensor_info("conv" + std::to_string(k + 1) + ".b");
    }
    out.trunk_w = &tensor_info("trunk.w");
    out.trunk_b = &tensor_info("trunk.b");
    for (int h = 0; h < kHeads; ++h) {
      const std::string p = std::string(kHeadNames[h]) + ".";
      out.head[h] = {&tensor_info(p + "fc1.w"), &tensor_info(p + "fc1.b"),  &tensor_info(p + "fc2.w"),
                     &tensor_info(p + "fc2.b"), &tensor_info(p + "head.w"), &tensor_info(p + "head.b")};
    }
    return out;
  }();
  return l;
}

/// Column n of `cols` holds the 3x3 neighbourhood of pixel n for every input
/// channel. `x` is (c_in x B*h*w) column-major.
template <typename T>
void im2col(const T* x, int c_in, int h, int w, int batch, Mat<T>& cols) {
  const int hw = h * w;
  cols.resize(c_in * 9, static_cast<Eigen::Index>(batch) * hw);
  for (int b = 0; b < batch; ++b)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const Eigen::Index n = static_cast<Eigen::Index>(b) * hw + y * w + xx;
        T* col = cols.data() + n * cols.rows();
        for (int c = 0; c < c_in; ++c)
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            for (int kx = 0; kx < 3; ++kx) {
              const int sx = xx + kx - 1;
              *col++ = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                           ? x[(static_cast<Eigen::Index>(b) * hw + sy * w + sx) * c_in + c]
                           : T(0);
            }
          }
      }
}

template <typename T>
void col2im(const Mat<T>& dcols, int c_in, int h, int w, int batch, Mat<T>& dx) {
  const int hw = h * w;
  dx.setZero(c_in, static_cast<Eigen::Index>(batch) * hw);
  T* out = dx.data();
  for (int b = 0; b < batch; ++b)
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        const Eigen::Index n = static_cast<Eigen::Index>(b) * hw + y * w + xx;
        const T* col = dcols.data() + n * dcols.rows();
        for (int c = 0; c < c_in; ++c)
          for (int ky = 0; ky < 3; ++ky) {
            const int sy = y + ky - 1;
            for (int kx = 0; kx < 3; ++kx, ++col) {
              const int sx = xx + kx - 1;
              if (sy >= 0 && sy < h && sx >= 0 && sx < w)
                out[(static_cast<Eigen::Index>(b) * hw + sy * w + sx) * c_in + c] += *col;
            }
          }
      }
}

template <typename T>
void dropout_mask(Mat<T>& m, Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  m.resize(rows, cols);
  const T keep = T(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < p ? T(0) : keep;
}

std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return Rng::mix(h ^ (v + 0x9e3779b97f4a7c15ULL)); }

}  // namespace

const std::vector<TensorInfo>& parameter_layout() {
  static const std::vector<TensorInfo> layout = build_layout();
  return layout;
}

const TensorInfo& tensor_info(const std::string& name) {
  for (const auto& t : parameter_layout())
    if (t.name == name) return t;
  throw ArgumentError("unknown tensor '" + name + "'");
}

std::uint64_t architecture_fingerprint() {
  std::ostringstream s;
  s << "in 1x32x64 v/2.69;conv3x3 same relu maxpool2 x3;flatten chw;fc relu;concat v;"
       "heads L,E,A: dropout fc relu dropout fc relu fc linear;";
  for (const auto& t : parameter_layout()) s << t.name << ':' << t.rows << 'x' << t.cols << ';';
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
ModelParams<T> ModelParams<T>::initialize(std::uint64_t seed) {
  ModelParams<T> p;
  Rng rng(seed);
  for (const auto& t : parameter_layout()) {
    if (t.cols == 1 && t.name.back() == 'b') continue;
    const bool linear = t.name.find("head.w") != std::string::npos;
    const double stddev = std::sqrt((linear ? 1.0 : 2.0) / t.cols);
    for (std::size_t i = 0; i < t.size(); ++i) p.values[t.offset + i] = static_cast<T>(stddev * rng.normal());
  }
  return p;
}

template <typename T>
void ModelParams<T>::validate() const {
  if (values.size() != kParameterCount)
    throw ArgumentError("expected " + std::to_string(kParameterCount) + " parameters, got " +
                        std::to_string(values.size()));
  for (std::size_t i = 0; i < values.size(); ++i)
    if (!std::isfinite(static_cast<double>(values[i])))
      throw ArgumentError("non-finite parameter at index " + std::to_string(i));
}

// ---------------------------------------------------------------- network ---

template <typename T>
Network<T>::Network(const ModelParams<T>& params, double dropout) : params_(&params), dropout_(dropout) {
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
  if (params.values.size() != kParameterCount) throw ArgumentError("parameter vector has the wrong size");
}

template <typename T>
const Mat<T>& Network<T>::forward(const Mat<T>& patches, const RowVec<T>& v_norm, Mode mode, Rng* rng) {
  if (patches.rows() != kPatchSize || patches.cols() != v_norm.cols() || patches.cols() == 0)
    throw ArgumentError("forward expects a 2048 x B patch matrix and B speeds");
  train_ = mode == Mode::kTrain && dropout_ > 0.0;
  if (train_ && rng == nullptr) throw ArgumentError("train mode needs a dropout generator");
  const auto& L = ids();
  const ModelParams<T>& P = *params_;
  batch_ = static_cast<int>(patches.cols());

  const T* x = patches.data();
  int c_in = 1, h = kPatchLat, w = kPatchLong;
  for (int k = 0; k < kConvLayers; ++k) {
    ConvCache& c = conv_[k];
    c.c_in = c_in;
    c.h = h;
    c.w = w;
    im2col(x, c_in, h, w, batch_, c.cols);
    c.z.noalias() = weights(P, *L.conv_w[k]) * c.cols;
    c.z.colwise() += bias(P, *L.conv_b[k]);
    const int h2 = h / 2, w2 = w / 2;
    c.pooled.resize(kFilters, static_cast<Eigen::Index>(batch_) * h2 * w2);
    c.argmax.resize(static_cast<std::size_t>(c.pooled.size()));
    for (int b = 0; b < batch_; ++b)
      for (int y = 0; y < h2; ++y)
        for (int xx = 0; xx < w2; ++xx) {
          const Eigen::Index m = static_cast<Eigen::Index>(b) * h2 * w2 + y * w2 + xx;
          const Eigen::Index base = static_cast<Eigen::Index>(b) * h * w + 2 * y * w + 2 * xx;
          const Eigen::Index cand[4] = {base, base + 1, base + w, base + w + 1};
          for (int f = 0; f < kFilters; ++f) {
            Eigen::Index best = cand[0];
            for (int q = 1; q < 4; ++q)
              if (c.z(f, cand[q]) > c.z(f, best)) best = cand[q];
            c.pooled(f, m) = std::max(c.z(f, best), T(0));
            c.argmax[static_cast<std::size_t>(m * kFilters + f)] = static_cast<int>(best);
          }
        }
    x = c.pooled.data();
    c_in = kFilters;
    h = h2;
    w = w2;
  }

  const int spatial = h * w;
  flat_.resize(kFlat, batch_);
  const Mat<T>& p3 = conv_[kConvLayers - 1].pooled;
  for (int b = 0; b < batch_; ++b)
    for (int f = 0; f < kFilters; ++f)
      for (int s = 0; s < spatial; ++s) flat_(f * spatial + s, b) = p3(f, static_cast<Eigen::Index>(b) * spatial + s);

  zt_.noalias() = weights(P, *L.trunk_w) * flat_;
  zt_.colwise() += bias(P, *L.trunk_b);
  g_.resize(kHidden + 1, batch_);
  g_.topRows(kHidden) = zt_.cwiseMax(T(0));
  g_.row(kHidden) = v_norm;

  out_.resize(kHeads, batch_);
  for (int k = 0; k < kHeads; ++k) {
    BranchCache& br = branch_[k];
    const auto& id = L.head[k];
    if (train_) {
      dropout_mask(br.m1, kHidden + 1, batch_, dropout_, *rng);
      br.d1 = g_.cwiseProduct(br.m1);
    } else {
      br.d1 = g_;
    }
    br.z1.noalias() = weights(P, *id.fc1_w) * br.d1;
    br.z1.colwise() += bias(P, *id.fc1_b);
    br.h1 = br.z1.cwiseMax(T(0));
    if (train_) {
      dropout_mask(br.m2, kHidden, batch_, dropout_, *rng);
      br.d2 = br.h1.cwiseProduct(br.m2);
    } else {
      br.d2 = br.h1;
    }
    br.z2.noalias() = weights(P, *id.fc2_w) * br.d2;
    br.z2.colwise() += bias(P, *id.fc2_b);
    br.h2 = br.z2.cwiseMax(T(0));
    out_.row(k).noalias() = weights(P, *id.head_w) * br.h2;
    out_.row(k).array() += P.values[id.head_b->offset];
  }
  return out_;
}

template <typename T>
void Network<T>::backward(const Mat<T>& d_out, ParamVec<T>& grad) {
  if (d_out.rows() != kHeads || d_out.cols() != batch_) throw ArgumentError("output gradient has the wrong shape");
  if (grad.size() != kParameterCount) grad.assign(kParameterCount, T(0));
  const auto& L = ids();
  const ModelParams<T>& P = *params_;

  Mat<T> dg = Mat<T>::Zero(kHidden + 1, batch_);
  for (int k = 0; k < kHeads; ++k) {
    BranchCache& br = branch_[k];
    const auto& id = L.head[k];
    const RowVec<T> dy = d_out.row(k);
    grad_weights(grad, *id.head_w).noalias() += dy * br.h2.transpose();
    grad[id.head_b->offset] += dy.sum();
    Mat<T> dz2 = (weights(P, *id.head_w).transpose() * dy).cwiseProduct((br.z2.array() > T(0)).matrix().template cast<T>());
    grad_weights(grad, *id.fc2_w).noalias() += dz2 * br.d2.transpose();
    grad_bias(grad, *id.fc2_b) += dz2.rowwise().sum();
    Mat<T> dh1 = weights(P, *id.fc2_w).transpose() * dz2;
    if (train_) dh1 = dh1.cwiseProduct(br.m2);
    Mat<T> dz1 = dh1.cwiseProduct((br.z1.array() > T(0)).matrix().template cast<T>());
    grad_weights(grad, *id.fc1_w).noalias() += dz1 * br.d1.transpose();
    grad_bias(grad, *id.fc1_b) += dz1.rowwise().sum();
    Mat<T> dd1 = weights(P, *id.fc1_w).transpose() * dz1;
    if (train_) dd1 = dd1.cwiseProduct(br.m1);
    dg += dd1;
  }

  const Mat<T> dzt = dg.topRows(kHidden).cwiseProduct((zt_.array() > T(0)).matrix().template cast<T>());
  grad_weights(grad, *L.trunk_w).noalias() += dzt * flat_.transpose();
  grad_bias(grad, *L.trunk_b) += dzt.rowwise().sum();
  const Mat<T> dflat = weights(P, *L.trunk_w).transpose() * dzt;

  const ConvCache& last = conv_[kConvLayers - 1];
  const int spatial = (last.h / 2) * (last.w / 2);
  Mat<T> dpooled(kFilters, static_cast<Eigen::Index>(batch_) * spatial);
  for (int b = 0; b < batch_; ++b)
    for (int f = 0; f < kFilters; ++f)
      for (int s = 0; s < spatial; ++s) dpooled(f, static_cast<Eigen::Index>(b) * spatial + s) = dflat(f * spatial + s, b);

  for (int k = kConvLayers - 1; k >= 0; --k) {
    const ConvCache& c = conv_[k];
    Mat<T> dz = Mat<T>::Zero(kFilters, c.z.cols());
    for (Eigen::Index m = 0; m < dpooled.cols(); ++m)
      for (int f = 0; f < kFilters; ++f) {
        const Eigen::Index n = c.argmax[static_cast<std::size_t>(m * kFilters + f)];
        if (c.z(f, n) > T(0)) dz(f, n) += dpooled(f, m);
      }
    grad_weights(grad, *L.conv_w[k]).noalias() += dz * c.cols.transpose();
    grad_bias(grad, *L.conv_b[k]) += dz.rowwise().sum();
    if (k == 0) break;
    const Mat<T> dcols = weights(P, *L.conv_w[k]).transpose() * dz;
    col2im(dcols, c.c_in, c.h, c.w, batch_, dpooled);
  }
}

template <typename T>
std::uint64_t Network<T>::activation_pattern() const {
  std::uint64_t h = 0;
  auto signs = [&](const Mat<T>& m) {
    std::uint64_t word = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      word = (word << 1) | (m.data()[i] > T(0) ? 1u : 0u);
      if ((i & 63) == 63) h = hash_combine(h, word), word = 0;
    }
    h = hash_combine(h, word);
  };
  for (const auto& c : conv_) {
    signs(c.z);
    for (int a : c.argmax) h = hash_combine(h, static_cast<std::uint64_t>(a));
  }
  signs(zt_);
  for (const auto& br : branch_) {
    signs(br.z1);
    signs(br.z2);
  }
  return h;
}

template <typename T>
T mae_loss(const Mat<T>& pred, const Mat<T>& labels) {
  if (pred.rows() != labels.rows() || pred.cols() != labels.cols() || pred.size() == 0)
    throw ArgumentError("prediction and label shapes differ");
  return (pred - labels).cwiseAbs().sum() / static_cast<T>(pred.size());
}

template <typename T>
Mat<T> mae_gradient(const Mat<T>& pred, const Mat<T>& labels) {
  if (pred.rows() != labels.rows() || pred.cols() != labels.cols() || pred.size() == 0)
    throw ArgumentError("prediction and label shapes differ");
  const T scale = T(1) / static_cast<T>(pred.size());
  return (pred - labels).unaryExpr([scale](T d) { return d > T(0) ? scale : (d < T(0) ? -scale : T(0)); });
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template class Network<float>;
template class Network<double>;
template float mae_loss(const Mat<float>&, const Mat<float>&);
template double mae_loss(const Mat<double>&, const Mat<double>&);
template Mat<float> mae_gradient(const Mat<float>&, const Mat<float>&);
template Mat<double> mae_gradient(const Mat<double>&, const Mat<double>&);

std::array<float, 3> predict(const ModelParamsF& params, const Patch& patch, double v) {
  Network<float> net(params, 0.0);
  const Mat<float> x = Eigen::Map<const Mat<float>>(patch.data(), kPatchSize, 1);
  RowVec<float> vn(1);
  vn(0) = static_cast<float>(normalize_speed(v));
  const Mat<float>& y = net.forward(x, vn, Mode::kEval);
  return {y(0, 0), y(1, 0), y(2, 0)};
}

// ---------------------------------------------------------------- samples ---

MemorySource::MemorySource(const std::vector<TraversabilitySample>& samples) {
  patches_.reserve(samples.size() * kPatchSize);
  for (const auto& s : samples) add(s);
}

void MemorySource::add(const TraversabilitySample& s) {
  patches_.insert(patches_.end(), s.patch.begin(), s.patch.end());
  v_.push_back(s.v);
  labels_.insert(labels_.end(), {s.L, s.E, s.A});
}

MemorySource MemorySource::load(const fs::path& path) {
  SampleReader r(path);
  MemorySource m;
  m.patches_.reserve(r.size() * kPatchSize);
  m.v_.reserve(r.size());
  m.labels_.reserve(r.size() * 3);
  for (std::uint64_t i = 0; i < r.size(); ++i) m.add(r.read(i));
  return m;
}

void MemorySource::fetch(const std::uint64_t* indices, std::size_t n, Batch& out) {
  out.patches.resize(kPatchSize, static_cast<Eigen::Index>(n));
  out.v_norm.resize(static_cast<Eigen::Index>(n));
  out.labels.resize(3, static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = indices[k];
    if (i >= size()) throw BoundsError("sample index out of range");
    std::memcpy(out.patches.col(static_cast<Eigen::Index>(k)).data(), patch(i), kPatchSize * sizeof(float));
    out.v_norm(static_cast<Eigen::Index>(k)) = static_cast<float>(normalize_speed(v_[i]));
    for (int h = 0; h < 3; ++h) out.labels(h, static_cast<Eigen::Index>(k)) = labels_[i * 3 + h];
  }
}

void StoreSource::fetch(const std::uint64_t* indices, std::size_t n, Batch& out) {
  out.patches.resize(kPatchSize, static_cast<Eigen::Index>(n));
  out.v_norm.resize(static_cast<Eigen::Index>(n));
  out.labels.resize(3, static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const TraversabilitySample s = reader_.read(indices[k]);
    const auto col = static_cast<Eigen::Index>(k);
    std::memcpy(out.patches.col(col).data(), s.patch.data(), kPatchSize * sizeof(float));
    out.v_norm(col) = static_cast<float>(normalize_speed(s.v));
    out.labels(0, col) = s.L;
    out.labels(1, col) = s.E;
    out.labels(2, col) = s.A;
  }
}

std::unique_ptr<SampleSource> open_samples(const fs::path& path, std::size_t memory_limit) {
  const std::size_t n = SampleReader(path).size();
  if (n * (kPatchSize + 4) * sizeof(float) <= memory_limit)
    return std::make_unique<MemorySource>(MemorySource::load(path));
  return std::make_unique<StoreSource>(path);
}

// --------------------------------------------------------------- training ---

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning rate must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ArgumentError("lr_decay must lie in (0, 1]");
  if (batch_size < 1) throw ArgumentError("batch size must be positive");
  if (epochs < 1) throw ArgumentError("epochs must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
  if (patience < 0) throw ArgumentError("patience must be non-negative");
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig c;
  c.set("train.learning_rate", learning_rate);
  c.set("train.lr_decay", lr_decay);
  c.set("train.batch_size", static_cast<long long>(batch_size));
  c.set("train.seed", std::to_string(seed));
  c.set("train.epochs", static_cast<long long>(epochs));
  c.set("train.dropout", dropout);
  c.set("train.patience", static_cast<long long>(patience));
  return c;
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  TrainConfig t;
  t.learning_rate = cfg.get_double("train.learning_rate", t.learning_rate);
  t.lr_decay = cfg.get_double("train.lr_decay", t.lr_decay);
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size", t.batch_size));
  t.seed = std::stoull(cfg.get_string("train.seed", std::to_string(t.seed)));
  t.epochs = static_cast<int>(cfg.get_int("train.epochs", t.epochs));
  t.dropout = cfg.get_double("train.dropout", t.dropout);
  t.patience = static_cast<int>(cfg.get_int("train.patience", t.patience));
  t.validate();
  return t;
}

namespace {

HeadErrors finish(const std::array<double, 3>& sums, std::size_t n) {
  HeadErrors e;
  for (int h = 0; h < 3; ++h) e.head[h] = sums[h] / static_cast<double>(n);
  e.overall = (e.head[0] + e.head[1] + e.head[2]) / 3.0;
  return e;
}

void accumulate_abs(const Mat<float>& pred, const Mat<float>& labels, std::array<double, 3>& sums) {
  for (Eigen::Index c = 0; c < pred.cols(); ++c)
    for (int h = 0; h < 3; ++h) sums[h] += std::abs(static_cast<double>(pred(h, c)) - labels(h, c));
}

}  // namespace

HeadErrors evaluate(const ModelParamsF& params, SampleSource& data, int batch_size) {
  if (data.size() == 0) throw ArgumentError("cannot evaluate on an empty sample set");
  Network<float> net(params, 0.0);
  Batch batch;
  std::array<double, 3> sums{};
  std::vector<std::uint64_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, data.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    data.fetch(idx.data(), n, batch);
    accumulate_abs(net.forward(batch.patches, batch.v_norm, Mode::kEval), batch.labels, sums);
  }
  return finish(sums, data.size());
}

HeadErrors mean_predictor_error(SampleSource& train_set, SampleSource& validation_set) {
  if (train_set.size() == 0 || validation_set.size() == 0) throw ArgumentError("empty sample set");
  Batch batch;
  std::array<double, 3> mean{};
  std::vector<std::uint64_t> idx;
  for (std::size_t start = 0; start < train_set.size(); start += 1024) {
    const std::size_t n = std::min<std::size_t>(1024, train_set.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    train_set.fetch(idx.data(), n, batch);
    for (int h = 0; h < 3; ++h) mean[h] += batch.labels.row(h).template cast<double>().sum();
  }
  for (double& m : mean) m /= static_cast<double>(train_set.size());
  std::array<double, 3> sums{};
  for (std::size_t start = 0; start < validation_set.size(); start += 1024) {
    const std::size_t n = std::min<std::size_t>(1024, validation_set.size() - start);
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), start);
    validation_set.fetch(idx.data(), n, batch);
    for (Eigen::Index c = 0; c < batch.labels.cols(); ++c)
      for (int h = 0; h < 3; ++h) sums[h] += std::abs(mean[h] - batch.labels(h, c));
  }
  return finish(sums, validation_set.size());
}

TrainResult train(SampleSource& train_set, SampleSource& validation_set, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  config.validate();
  if (train_set.size() == 0 || validation_set.size() == 0)
    throw ArgumentError("training needs non-empty train and validation splits");

  ModelParamsF params = ModelParamsF::initialize(config.seed);
  ParamVec<float> grad(kParameterCount), m(kParameterCount, 0.0f), v(kParameterCount, 0.0f);
  const float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  Network<float> net(params, config.dropout);
  Rng dropout_rng(Rng::mix(config.seed ^ 0x64726f70ULL));
  Batch batch;
  TrainResult result;
  result.best = params;
  result.best_validation = std::numeric_limits<double>::infinity();
  long long step = 0;
  int since_best = 0;
  double base_lr = config.learning_rate;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::uint64_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::uint64_t{0});
    Rng shuffle_rng(Rng::mix(config.seed + static_cast<std::uint64_t>(epoch)));
    shuffle(order.begin(), order.end(), shuffle_rng);

    std::array<double, 3> sums{};
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min<std::size_t>(config.batch_size, order.size() - start);
      train_set.fetch(order.data() + start, n, batch);
      const Mat<float>& out = net.forward(batch.patches, batch.v_norm, Mode::kTrain, &dropout_rng);
      const float loss = mae_loss(out, batch.labels);
      if (!std::isfinite(loss)) throw TrainingError("non-finite training loss", epoch);
      accumulate_abs(out, batch.labels, sums);
      std::fill(grad.begin(), grad.end(), 0.0f);
      net.backward(mae_gradient(out, batch.labels), grad);

      ++step;
      const float lr = static_cast<float>(base_lr * std::sqrt(1.0 - std::pow(0.999, step)) /
                                          (1.0 - std::pow(0.9, step)));
      float* p = params.values.data();
      for (std::size_t i = 0; i < kParameterCount; ++i) {
        m[i] = beta1 * m[i] + (1.0f - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0f - beta2) * grad[i] * grad[i];
        p[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
      }
    }

    base_lr *= config.lr_decay;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = finish(sums, order.size());
    rec.validation = evaluate(params, validation_set, config.batch_size);
    if (!std::isfinite(rec.validation.overall)) throw TrainingError("non-finite validation loss", epoch);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (rec.validation.overall < result.best_validation) {
      result.best_validation = rec.validation.overall;
      result.best_epoch = epoch;
      result.best = params;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot write " + path.string());
  out << "epoch,train_mae,train_L,train_E,train_A,val_mae,val_L,val_E,val_A\n";
  out << std::setprecision(9);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train.overall;
    for (double e : r.train.head) out << ',' << e;
    out << ',' << r.validation.overall;
    for (double e : r.validation.head) out << ',' << e;
    out << '\n';
  }
}

// ---------------------------------------------------------- gradient check ---

GradientCheck gradient_check(const ModelParams<double>& params, const Mat<double>& patches,
                             const RowVec<double>& v_norm, const Mat<double>& labels, std::uint64_t seed,
                             int n_weights, double h, Mode mode) {
  const std::uint64_t mask_seed = Rng::mix(seed);
  auto run = [&](const ModelParams<double>& p, ParamVec<double>* grad, std::uint64_t* pattern) {
    Network<double> net(p, 0.1);
    Rng rng(mask_seed);
    const Mat<double>& out = net.forward(patches, v_norm, mode, &rng);
    const double loss = mae_loss(out, labels);
    std::uint64_t pat = net.activation_pattern();
    for (Eigen::Index i = 0; i < out.size(); ++i)
      pat = hash_combine(pat, out.data()[i] > labels.data()[i] ? 1 : (out.data()[i] < labels.data()[i] ? 2 : 3));
    if (pattern) *pattern = pat;
    if (grad) net.backward(mae_gradient(out, labels), *grad);
    return loss;
  };

  ParamVec<double> grad(kParameterCount, 0.0);
  std::uint64_t base_pattern = 0;
  run(params, &grad, &base_pattern);

  GradientCheck result;
  Rng pick(seed);
  ModelParams<double> probe = params;
  for (int k = 0; k < n_weights; ++k) {
    const std::size_t i = pick.below(kParameterCount);
    const double w0 = probe.values[i];
    std::uint64_t pat_plus = 0, pat_minus = 0;
    probe.values[i] = w0 + h;
    const double lp = run(probe, nullptr, &pat_plus);
    probe.values[i] = w0 - h;
    const double lm = run(probe, nullptr, &pat_minus);
    probe.values[i] = w0;
    if (pat_plus != base_pattern || pat_minus != base_pattern) {
      ++result.skipped;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * h);
    const double analytic = grad[i];
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    result.max_relative_deviation = std::max(result.max_relative_deviation, std::abs(numeric - analytic) / scale);
    ++result.checked;
  }
  return result;
}

// ----------------------------------------------------------------- .twts ---

void save_weights(const ModelParamsF& params, const fs::path& path) {
  params.validate();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write " + path.string());
  binio::put_magic(out, "TWTS");
  binio::put(out, std::uint32_t{1});
  binio::put(out, architecture_fingerprint());
  binio::put(out, static_cast<std::uint64_t>(kParameterCount));
  for (float v : params.values) binio::put(out, v);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

ModelParamsF load_weights(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open weight file " + path.string());
  binio::expect_magic(in, "TWTS");
  const auto version = binio::get<std::uint32_t>(in, "version");
  if (version != 1) throw ParseError("unsupported weight file version " + std::to_string(version), 4);
  const auto fingerprint = binio::get<std::uint64_t>(in, "architecture fingerprint");
  if (fingerprint != architecture_fingerprint())
    throw ConfigError("weight file " + path.string() + " was written for a different architecture");
  const auto count = binio::get<std::uint64_t>(in, "parameter count");
  if (count != kParameterCount)
    throw ParseError("weight file holds " + std::to_string(count) + " parameters, expected " +
                         std::to_string(kParameterCount),
                     16);
  ModelParamsF p;
  std::vector<char> raw(kParameterCount * sizeof(float));
  in.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw ParseError("truncated weight file", static_cast<std::size_t>(24 + in.gcount()));
  for (std::size_t i = 0; i < kParameterCount; ++i) {
    float v;
    std::memcpy(&v, raw.data() + i * sizeof(float), sizeof(float));
    p.values[i] = binio::to_little(v);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after weights", 24 + raw.size());
  p.validate();
  return p;
}

}  // namespace trav
