#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "fsd/mlp_decoder.hpp"
#include "fsd/types.hpp"

namespace fsd {

/// p' = scale * rotation * p + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static SimilarityTransform identity() { return {}; }

  void validate(double tol = 1e-6) const {
    if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("scale must be positive");
    if (!rotation.allFinite() || !translation.allFinite())
      throw InvalidArgument("transform entries must be finite");
    if ((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > tol ||
        std::abs(rotation.determinant() - 1.0) > tol)
      throw InvalidArgument("rotation is not in SO(3)");
  }

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }

  /// (this * other)(p) = this(other(p)).
  SimilarityTransform compose(const SimilarityTransform& other) const {
    return {scale * other.scale, rotation * other.rotation,
            scale * (rotation * other.translation) + translation};
  }

  SimilarityTransform inverse() const {
    const Mat3 rt = rotation.transpose();
    return {1.0 / scale, rt, -(rt * translation) / scale};
  }
};

/// Nearest rotation in the Frobenius sense: M = U S V^T,
/// R = U diag(1, 1, det(U V^T)) V^T.
inline Mat3 svd_orthogonalize(const Mat3& m) {
  if (!m.allFinite()) throw InvalidArgument("matrix entries must be finite");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  if (!(sv[1] > 1e-12))
    throw DegenerateInput("matrix has rank < 2; nearest rotation is not unique");
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 d(1.0, 1.0, (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  return u * d.asDiagonal() * v.transpose();
}

using PoseVector = std::array<double, 13>;

/// Pose-map channel layout: [0, 9) rotation row-major (orthogonalized on
/// decode), [9, 12) translation in meters, [12] log scale.
inline SimilarityTransform decode_pose_vector(std::span<const double, 13> v) {
  for (double x : v)
    if (!std::isfinite(x)) throw InvalidArgument("pose vector entries must be finite");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v[r * 3 + c];
  SimilarityTransform t;
  t.rotation = svd_orthogonalize(m);
  t.translation = Vec3(v[9], v[10], v[11]);
  t.scale = std::exp(v[12]);
  return t;
}

inline PoseVector encode_pose_vector(const SimilarityTransform& t) {
  PoseVector v{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[r * 3 + c] = t.rotation(r, c);
  for (int i = 0; i < 3; ++i) v[9 + i] = t.translation[i];
  v[12] = std::log(t.scale);
  return v;
}

inline std::vector<Vec3> apply_transform(const SimilarityTransform& t,
                                         std::span<const Vec3> points) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!p.allFinite()) throw InvalidArgument("points must be finite");
    out.push_back(t.apply(p));
  }
  return out;
}

/// Rotation by `angle` radians about unit axis `axis`.
inline Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
    if (!std::isfinite(cx) || !std::isfinite(cy))
      throw InvalidArgument("principal point must be finite");
  }

  /// Pinhole forward model: pixel (u, v) of a camera-frame point.
  Eigen::Vector2d project(const Vec3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
};

/// Row-major height x width image.
template <class V>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<V> values;

  Image() = default;
  Image(int w, int h, V fill = V{}) : width(w), height(h), values(std::size_t(w) * h, fill) {
    if (w < 0 || h < 0) throw InvalidArgument("image dimensions must be non-negative");
  }
  V& at(int x, int y) { return values[std::size_t(y) * width + x]; }
  const V& at(int x, int y) const { return values[std::size_t(y) * width + x]; }
  bool same_shape(int w, int h) const { return width == w && height == h; }
};

/// Depth in meters; 0 marks an invalid pixel.
struct DepthMap : Image<double> {
  using Image<double>::Image;

  void validate() const {
    for (double v : values)
      if (!(v >= 0.0) || !std::isfinite(v))
        throw InvalidArgument("depth values must be finite and >= 0");
  }
};

using BinaryMask = Image<std::uint8_t>;

/// Lifts valid (depth > 0, mask set) pixels to camera-frame points in
/// row-major pixel order: ((u - cx) z / fx, (v - cy) z / fy, z).
inline std::vector<Vec3> backproject_depth(const DepthMap& depth, const CameraIntrinsics& k,
                                           const BinaryMask* mask = nullptr) {
  k.validate();
  if (mask && !mask->same_shape(depth.width, depth.height))
    throw InvalidArgument("mask dimensions do not match depth map");
  std::vector<Vec3> out;
  for (int v = 0; v < depth.height; ++v)
    for (int u = 0; u < depth.width; ++u) {
      const double z = depth.at(u, v);
      if (!(z > 0.0)) continue;
      if (mask && !mask->at(u, v)) continue;
      out.emplace_back((double(u) - k.cx) * z / k.fx, (double(v) - k.cy) * z / k.fy, z);
    }
  return out;
}

/// Object-center heatmap with values in [0, 1].
struct Heatmap : Image<double> {
  using Image<double>::Image;
};

/// H(p) = max_c exp(-|p - c|^2 / (2 sigma_c^2)).
inline Heatmap render_heatmap(std::span<const Eigen::Vector2d> centers,
                              std::span<const double> sigmas, int width, int height) {
  if (centers.size() != sigmas.size())
    throw InvalidArgument("one sigma per center is required");
  for (double s : sigmas)
    if (!(s > 0.0)) throw InvalidArgument("sigmas must be positive");
  Heatmap h(width, height, 0.0);
  for (std::size_t c = 0; c < centers.size(); ++c) {
    const double inv = 1.0 / (2.0 * sigmas[c] * sigmas[c]);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dx = double(x) - centers[c].x();
        const double dy = double(y) - centers[c].y();
        h.at(x, y) = std::max(h.at(x, y), std::exp(-(dx * dx + dy * dy) * inv));
      }
  }
  return h;
}

/// Default Gaussian width for an object whose projected box diagonal spans
/// `diagonal` grid cells.
inline double heatmap_sigma(double diagonal) { return std::max(1.0, diagonal / 6.0); }

struct Peak {
  int x = 0;
  int y = 0;
  double score = 0.0;
  bool operator==(const Peak&) const = default;
};

/// Local maxima above `threshold`. A pixel is a peak when it is >= every
/// pixel of its window x window neighborhood and no equal-valued neighbor
/// precedes it in (y, x) order. Sorted by descending score, then (y, x).
inline std::vector<Peak> extract_peaks(const Heatmap& h, double threshold, int window = 3) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidArgument("peak threshold must lie in (0, 1)");
  if (window < 1 || window % 2 == 0) throw InvalidArgument("peak window must be odd");
  const int r = window / 2;
  std::vector<Peak> peaks;
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x) {
      const double v = h.at(x, y);
      if (!(v > threshold)) continue;
      bool is_peak = true;
      for (int dy = -r; dy <= r && is_peak; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= h.width || ny >= h.height) continue;
          const double n = h.at(nx, ny);
          if (n > v || (n == v && (ny < y || (ny == y && nx < x)))) {
            is_peak = false;
            break;
          }
        }
      if (is_peak) peaks.push_back({x, y, v});
    }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.score > b.score; });
  return peaks;
}

/// Dense per-pixel embeddings (13 channels for the pose map, the latent
/// dimension for the shape map), stored [y][x][c].
struct DenseEmbeddingMap {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> values;

  DenseEmbeddingMap() = default;
  DenseEmbeddingMap(int w, int h, int c)
      : width(w), height(h), channels(c), values(std::size_t(w) * h * c, 0.0) {
    if (w < 0 || h < 0 || c < 1) throw InvalidArgument("invalid embedding map dimensions");
  }
  double& at(int x, int y, int c) { return values[(std::size_t(y) * width + x) * channels + c]; }
  double at(int x, int y, int c) const {
    return values[(std::size_t(y) * width + x) * channels + c];
  }
};

/// Channel vector at column x, row y.
inline std::vector<double> query_map(const DenseEmbeddingMap& map, int x, int y) {
  if (x < 0 || y < 0 || x >= map.width || y >= map.height)
    throw InvalidArgument("query (" + std::to_string(x) + ", " + std::to_string(y) +
                          ") outside map");
  const auto begin = map.values.begin() + std::ptrdiff_t((std::size_t(y) * map.width + x) *
                                                         map.channels);
  return std::vector<double>(begin, begin + map.channels);
}

struct DetectedInstance {
  int x = 0;
  int y = 0;
  double score = 0.0;
  PoseVector pose_vector{};
  LatentCode latent;

  SimilarityTransform transform() const { return decode_pose_vector(pose_vector); }
};

/// Peaks of the heatmap with their pose and shape embeddings attached.
inline std::vector<DetectedInstance> detect_instances(const Heatmap& heatmap,
                                                      const DenseEmbeddingMap& pose_map,
                                                      const DenseEmbeddingMap& shape_map,
                                                      double threshold, int window = 3) {
  if (pose_map.channels != 13) throw InvalidArgument("pose map must have 13 channels");
  if (pose_map.width != heatmap.width || pose_map.height != heatmap.height ||
      shape_map.width != heatmap.width || shape_map.height != heatmap.height)
    throw InvalidArgument("map dimensions differ from the heatmap");
  std::vector<DetectedInstance> out;
  for (const auto& p : extract_peaks(heatmap, threshold, window)) {
    DetectedInstance d;
    d.x = p.x;
    d.y = p.y;
    d.score = p.score;
    const auto pv = query_map(pose_map, p.x, p.y);
    std::copy(pv.begin(), pv.end(), d.pose_vector.begin());
    d.latent = LatentCode(query_map(shape_map, p.x, p.y));
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace fsd
