#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "fsd/parallel.hpp"
#include "fsd/types.hpp"

namespace fsd {

enum class OutputActivation : std::uint8_t { None = 0, Tanh = 1 };

/// Fully connected layer in the canonical (file) precision.
/// `weight` is row-major rows x cols.
struct DenseLayer {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> weight;
  std::vector<float> bias;

  float at(std::uint32_t r, std::uint32_t c) const { return weight[std::size_t(r) * cols + c]; }
  bool operator==(const DenseLayer&) const = default;
};

/// Shape code conditioning a decoder. Entries are finite.
class LatentCode {
 public:
  LatentCode() = default;
  explicit LatentCode(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_)
      if (!std::isfinite(v)) throw InvalidArgument("latent code entries must be finite");
  }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  bool operator==(const LatentCode&) const = default;

 private:
  std::vector<double> values_;
};

struct DecoderShape {
  std::uint32_t latent_dim = 64;
  std::uint32_t hidden_dim = 512;
  std::uint32_t depth = 8;
  OutputActivation output_activation = OutputActivation::Tanh;
};

namespace detail {

inline void validate_layers(const DecoderShape& shape, const std::vector<DenseLayer>& layers) {
  if (shape.depth < 1) throw FormatError("depth", "must be at least 1");
  if (shape.latent_dim < 1) throw FormatError("latent_dim", "must be at least 1");
  if (shape.hidden_dim < 1) throw FormatError("hidden_dim", "must be at least 1");
  if (layers.size() != shape.depth)
    throw FormatError("layers", "expected " + std::to_string(shape.depth) + " layers, got " +
                                    std::to_string(layers.size()));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    const std::string name = "layers[" + std::to_string(l) + "]";
    const std::uint32_t want_cols = l == 0 ? shape.latent_dim + 3 : shape.hidden_dim;
    const std::uint32_t want_rows = l + 1 == layers.size() ? 1 : shape.hidden_dim;
    if (layer.cols != want_cols)
      throw FormatError(name + ".cols", "expected " + std::to_string(want_cols) + ", got " +
                                            std::to_string(layer.cols));
    if (layer.rows != want_rows)
      throw FormatError(name + ".rows", "expected " + std::to_string(want_rows) + ", got " +
                                            std::to_string(layer.rows));
    if (layer.weight.size() != std::size_t(layer.rows) * layer.cols)
      throw FormatError(name + ".weights", "size does not match rows x cols");
    if (layer.bias.size() != layer.rows)
      throw FormatError(name + ".biases", "size does not match rows");
    for (float w : layer.weight)
      if (!std::isfinite(w)) throw FormatError(name + ".weights", "non-finite value");
    for (float b : layer.bias)
      if (!std::isfinite(b)) throw FormatError(name + ".biases", "non-finite value");
  }
}

// Row-blocked copy of a matrix: block b, column k, row-in-block r at
// [(b * cols + k) * R + r]. Rows are zero-padded to a multiple of R.
template <class T, int R>
struct PackedMatrix {
  int rows = 0;
  int rows_padded = 0;
  int cols = 0;
  std::vector<T> data;
  std::vector<T> bias;  // rows_padded, zero-padded; empty for transposed copies

  template <class Get>
  static PackedMatrix pack(int rows, int cols, Get&& get) {
    PackedMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.rows_padded = (rows + R - 1) / R * R;
    m.data.assign(std::size_t(m.rows_padded) * cols, T(0));
    for (int i = 0; i < rows; ++i)
      for (int k = 0; k < cols; ++k)
        m.data[(std::size_t(i / R) * cols + k) * R + i % R] = static_cast<T>(get(i, k));
    return m;
  }
};

template <class T>
struct Lanes {
  typedef T type __attribute__((vector_size(64)));
  static constexpr int width = 64 / int(sizeof(T));
};

// out[i][p] = bias[i] + sum_k W[i][k] * in[k][p], k ascending. Every output
// element is accumulated in the same order no matter which points share the
// tile, which is what makes batched and per-object evaluation bit-identical.
// A tile is exactly one 64-byte lane group of points.
template <class T, int R>
inline void tile_product(const PackedMatrix<T, R>& m, const T* in, T* out) {
  using vec = typename Lanes<T>::type;
  constexpr int P = Lanes<T>::width;
  const int blocks = m.rows_padded / R;
  const int cols = m.cols;
  for (int b = 0; b < blocks; ++b) {
    vec acc[R];
    for (int r = 0; r < R; ++r) acc[r] = vec{} + (m.bias.empty() ? T(0) : m.bias[b * R + r]);
    const T* w = m.data.data() + std::size_t(b) * cols * R;
    for (int k = 0; k < cols; ++k) {
      vec x;
      std::memcpy(&x, in + std::size_t(k) * P, sizeof(vec));
      const T* wk = w + std::size_t(k) * R;
      for (int r = 0; r < R; ++r) acc[r] += wk[r] * x;
    }
    for (int r = 0; r < R; ++r) std::memcpy(out + (std::size_t(b) * R + r) * P, &acc[r], sizeof(vec));
  }
}

}  // namespace detail

/// Latent-conditioned SDF decoder f(q; z): a plain MLP whose input is the
/// latent code followed by the query point, rectifier hidden activations and
/// an optional tanh on the scalar output. Weights are held in the f32 file
/// precision; evaluation runs in `T`.
template <class T>
class BasicMlpDecoder {
 public:
  static constexpr int kRowBlock = 8;
  static constexpr int kTile = detail::Lanes<T>::width;

  BasicMlpDecoder(DecoderShape shape, std::vector<DenseLayer> layers)
      : shape_(shape), layers_(std::move(layers)) {
    detail::validate_layers(shape_, layers_);
    forward_.reserve(layers_.size());
    backward_.reserve(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& layer = layers_[l];
      auto fwd = Packed::pack(int(layer.rows), int(layer.cols),
                              [&](int i, int k) { return layer.at(i, k); });
      fwd.bias.assign(fwd.rows_padded, T(0));
      for (std::uint32_t i = 0; i < layer.rows; ++i) fwd.bias[i] = static_cast<T>(layer.bias[i]);
      forward_.push_back(std::move(fwd));
      if (l == 0) {
        // Only the query-point columns are needed on the way back.
        const int offset = int(shape_.latent_dim);
        backward_.push_back(Packed::pack(3, int(layer.rows),
                                         [&](int i, int k) { return layer.at(k, offset + i); }));
      } else {
        backward_.push_back(Packed::pack(int(layer.cols), int(layer.rows),
                                         [&](int i, int k) { return layer.at(k, i); }));
      }
    }
    max_width_ = int(shape_.latent_dim) + 3;
    for (const auto& m : forward_) max_width_ = std::max(max_width_, m.rows_padded);
    for (const auto& m : backward_) max_width_ = std::max(max_width_, m.rows_padded);
  }

  /// Converting constructor, e.g. a float evaluator from a double one.
  template <class U>
  explicit BasicMlpDecoder(const BasicMlpDecoder<U>& other)
      : BasicMlpDecoder(other.shape(), other.layers()) {}

  const DecoderShape& shape() const { return shape_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::uint32_t latent_dim() const { return shape_.latent_dim; }
  std::uint32_t depth() const { return shape_.depth; }
  std::uint32_t hidden_dim() const { return shape_.hidden_dim; }
  OutputActivation output_activation() const { return shape_.output_activation; }

  bool structurally_equal(const BasicMlpDecoder& o) const {
    return shape_.latent_dim == o.shape_.latent_dim && shape_.hidden_dim == o.shape_.hidden_dim &&
           shape_.depth == o.shape_.depth &&
           shape_.output_activation == o.shape_.output_activation && layers_ == o.layers_;
  }

  void check_latent(const LatentCode& z) const {
    if (z.size() != shape_.latent_dim)
      throw InvalidArgument("latent length " + std::to_string(z.size()) +
                            " does not match decoder latent_dim " +
                            std::to_string(shape_.latent_dim));
  }

  std::vector<T> convert_latent(const LatentCode& z) const {
    check_latent(z);
    std::vector<T> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = static_cast<T>(z[i]);
    return out;
  }

  /// Low-level batch entry point. `latents[i]` points at the converted latent
  /// of point i. `gradients` may be empty; otherwise it receives df/dq.
  void evaluate_batch(std::span<const Vec3> points, std::span<const T* const> latents,
                      std::span<double> values, std::span<Vec3> gradients) const {
    const bool want_grad = !gradients.empty();
    Workspace& ws = workspace();
    for (std::size_t begin = 0; begin < points.size(); begin += kTile) {
      const int n = int(std::min<std::size_t>(kTile, points.size() - begin));
      run_tile(ws, points.subspan(begin, n), latents.subspan(begin, n),
               values.subspan(begin, n), want_grad ? gradients.subspan(begin, n) : gradients);
    }
  }

  std::vector<double> values(const LatentCode& z, std::span<const Vec3> points,
                             unsigned threads = 1) const {
    std::vector<double> out(points.size());
    evaluate(z, points, out, {}, threads);
    return out;
  }

  std::vector<Vec3> gradients(const LatentCode& z, std::span<const Vec3> points,
                              unsigned threads = 1) const {
    std::vector<double> v(points.size());
    std::vector<Vec3> g(points.size());
    evaluate(z, points, v, g, threads);
    return g;
  }

  double value(const LatentCode& z, const Vec3& q) const {
    return values(z, std::span<const Vec3>(&q, 1))[0];
  }

  void evaluate(const LatentCode& z, std::span<const Vec3> points, std::span<double> values,
                std::span<Vec3> gradients, unsigned threads = 1) const {
    const std::vector<T> latent = convert_latent(z);
    for (const auto& p : points)
      if (!p.allFinite()) throw InvalidArgument("query points must be finite");
    const std::vector<const T*> ptrs(points.size(), latent.data());
    parallel_chunks(points.size(), 256, threads, [&](std::size_t b, std::size_t e) {
      evaluate_batch(points.subspan(b, e - b), std::span(ptrs).subspan(b, e - b),
                     values.subspan(b, e - b),
                     gradients.empty() ? gradients : gradients.subspan(b, e - b));
    });
  }

 private:
  using Packed = detail::PackedMatrix<T, kRowBlock>;

  struct Workspace {
    std::vector<T> input;
    std::vector<std::vector<T>> pre;
    std::vector<std::vector<T>> act;
    std::vector<T> grad_a;
    std::vector<T> grad_b;
  };

  Workspace& workspace() const {
    thread_local Workspace ws;
    const std::size_t width = std::size_t(max_width_) * kTile;
    ws.input.resize(std::size_t(shape_.latent_dim + 3) * kTile);
    ws.pre.resize(forward_.size());
    ws.act.resize(forward_.size());
    for (std::size_t l = 0; l < forward_.size(); ++l) {
      ws.pre[l].resize(std::size_t(forward_[l].rows_padded) * kTile);
      ws.act[l].resize(std::size_t(forward_[l].rows_padded) * kTile);
    }
    ws.grad_a.resize(width);
    ws.grad_b.resize(width);
    return ws;
  }

  void run_tile(Workspace& ws, std::span<const Vec3> points, std::span<const T* const> latents,
                std::span<double> values, std::span<Vec3> gradients) const {
    constexpr int P = kTile;
    const int n = int(points.size());
    const int ld = int(shape_.latent_dim);
    // Padding lanes evaluate the origin with the first latent; their outputs
    // are discarded and cannot affect real lanes.
    for (int p = 0; p < P; ++p) {
      const int src = p < n ? p : 0;
      const T* z = latents[src];
      for (int k = 0; k < ld; ++k) ws.input[std::size_t(k) * P + p] = z[k];
      for (int j = 0; j < 3; ++j)
        ws.input[std::size_t(ld + j) * P + p] = p < n ? static_cast<T>(points[p][j]) : T(0);
    }

    const std::size_t depth = forward_.size();
    const T* in = ws.input.data();
    for (std::size_t l = 0; l < depth; ++l) {
      detail::tile_product<T, kRowBlock>(forward_[l], in, ws.pre[l].data());
      if (l + 1 < depth) {
        const std::size_t count = std::size_t(forward_[l].rows_padded) * P;
        const T* pre = ws.pre[l].data();
        T* act = ws.act[l].data();
        for (std::size_t i = 0; i < count; ++i) act[i] = pre[i] > T(0) ? pre[i] : T(0);
        in = act;
      }
    }

    const T* out = ws.pre[depth - 1].data();
    const bool tanh_out = shape_.output_activation == OutputActivation::Tanh;
    for (int p = 0; p < n; ++p) {
      const T raw = out[p];
      values[p] = static_cast<double>(tanh_out ? std::tanh(raw) : raw);
    }
    if (gradients.empty()) return;

    T* g = ws.grad_a.data();
    T* g_next = ws.grad_b.data();
    std::fill(g, g + std::size_t(forward_[depth - 1].rows_padded) * P, T(0));
    for (int p = 0; p < P; ++p) {
      if (tanh_out) {
        const T t = std::tanh(out[p]);
        g[p] = T(1) - t * t;
      } else {
        g[p] = T(1);
      }
    }
    for (std::size_t l = depth - 1; l >= 1; --l) {
      detail::tile_product<T, kRowBlock>(backward_[l], g, g_next);
      const T* pre = ws.pre[l - 1].data();
      const std::size_t count = std::size_t(backward_[l].rows) * P;
      for (std::size_t i = 0; i < count; ++i)
        if (!(pre[i] > T(0))) g_next[i] = T(0);
      std::swap(g, g_next);
    }
    detail::tile_product<T, kRowBlock>(backward_[0], g, g_next);
    for (int p = 0; p < n; ++p)
      gradients[p] = Vec3(double(g_next[p]), double(g_next[P + p]), double(g_next[2 * P + p]));
  }

  DecoderShape shape_;
  std::vector<DenseLayer> layers_;
  std::vector<Packed> forward_;
  std::vector<Packed> backward_;
  int max_width_ = 0;
};

using MlpSdfDecoder = BasicMlpDecoder<double>;
using MlpSdfDecoderF = BasicMlpDecoder<float>;

/// Deterministic decoder with every weight and bias drawn uniformly from
/// [-1/sqrt(fan_in), 1/sqrt(fan_in)] (splitmix64 stream, then rounded to f32).
inline MlpSdfDecoder gen_random_decoder(std::uint64_t seed, std::uint32_t latent_dim = 64,
                                        std::uint32_t hidden_dim = 512, std::uint32_t depth = 8,
                                        OutputActivation act = OutputActivation::Tanh) {
  if (latent_dim < 1 || hidden_dim < 1 || depth < 1)
    throw InvalidArgument("decoder dimensions must be at least 1");
  SplitMix64 rng(seed);

  std::vector<DenseLayer> layers;
  for (std::uint32_t l = 0; l < depth; ++l) {
    DenseLayer layer;
    layer.cols = l == 0 ? latent_dim + 3 : hidden_dim;
    layer.rows = l + 1 == depth ? 1 : hidden_dim;
    const double bound = 1.0 / std::sqrt(double(layer.cols));
    layer.weight.resize(std::size_t(layer.rows) * layer.cols);
    for (auto& w : layer.weight) w = static_cast<float>(uniform(rng, -bound, bound));
    layer.bias.resize(layer.rows);
    for (auto& b : layer.bias) b = static_cast<float>(uniform(rng, -bound, bound));
    layers.push_back(std::move(layer));
  }
  return MlpSdfDecoder(DecoderShape{latent_dim, hidden_dim, depth, act}, std::move(layers));
}

/// Deterministic latent code with entries uniform in [-scale, scale].
inline LatentCode gen_random_latent(std::uint64_t seed, std::uint32_t dim = 64,
                                    double scale = 1.0) {
  SplitMix64 rng(mix_seed(seed ^ 0x6c6174656e74ULL));
  std::vector<double> v(dim);
  for (auto& x : v) x = uniform(rng, -scale, scale);
  return LatentCode(std::move(v));
}

}  // namespace fsd
