#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsd/parallel.hpp"
#include "fsd/pose_geometry.hpp"
#include "fsd/types.hpp"

namespace fsd {

// ---------------------------------------------------------------------------
// Thresholded Chamfer distance

enum class ChamferMode {
  /// Mean nearest-neighbor distance over pairs closer than epsilon.
  ClampedInlier,
  /// Mean of max(0, epsilon - d) over pairs closer than epsilon. This is the
  /// literal hinge form; it rewards distances approaching epsilon and gives
  /// 2 * epsilon for identical clouds.
  Hinge,
};

struct ChamferConfig {
  double epsilon = 0.2;
  ChamferMode mode = ChamferMode::ClampedInlier;
  unsigned threads = 1;
};

struct ChamferResult {
  double value = 0.0;
  double term_ab = 0.0;  // A -> B direction
  double term_ba = 0.0;
  std::size_t inliers_ab = 0;
  std::size_t inliers_ba = 0;
};

/// Exact nearest-neighbor distance from every point of `from` into `to`
/// (brute force).
inline std::vector<double> nearest_distances(std::span<const Vec3> from, std::span<const Vec3> to,
                                             unsigned threads = 1) {
  std::vector<double> out(from.size());
  parallel_chunks(from.size(), 64, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (from[i] - q).squaredNorm());
      out[i] = std::sqrt(best);
    }
  });
  return out;
}

namespace detail {

inline void chamfer_direction(std::span<const Vec3> from, std::span<const Vec3> to,
                              const ChamferConfig& cfg, double& term, std::size_t& inliers) {
  const auto d = nearest_distances(from, to, cfg.threads);
  CompensatedSum sum;
  inliers = 0;
  for (double x : d) {
    if (!(x < cfg.epsilon)) continue;
    ++inliers;
    sum.add(cfg.mode == ChamferMode::ClampedInlier ? x : cfg.epsilon - x);
  }
  term = inliers ? sum.value() / double(inliers) : 0.0;
}

}  // namespace detail

/// Bidirectional Chamfer loss restricted to nearest-neighbor pairs closer than
/// epsilon, normalized per direction by that direction's inlier count.
inline ChamferResult chamfer_thresholded(std::span<const Vec3> a, std::span<const Vec3> b,
                                         const ChamferConfig& cfg = {}) {
  if (a.empty() || b.empty()) throw InvalidArgument("chamfer needs two non-empty clouds");
  if (!(cfg.epsilon > 0.0)) throw InvalidArgument("chamfer epsilon must be positive");
  ChamferResult r;
  detail::chamfer_direction(a, b, cfg, r.term_ab, r.inliers_ab);
  detail::chamfer_direction(b, a, cfg, r.term_ba, r.inliers_ba);
  r.value = r.term_ab + r.term_ba;
  return r;
}

// ---------------------------------------------------------------------------
// 2D supervision

/// Sum (not mean) of squared differences.
inline double heatmap_l2(const Heatmap& pred, const Heatmap& gt) {
  if (!pred.same_shape(gt.width, gt.height))
    throw InvalidArgument("heatmap dimensions differ");
  CompensatedSum sum;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double d = pred.values[i] - gt.values[i];
    sum.add(d * d);
  }
  return sum.value();
}

/// sum_xy w(x,y) |pred(x,y,:) - gt(x,y,:)|_1 / sum_xy w(x,y); 0 when the
/// weights sum to zero.
inline double weighted_l1(const DenseEmbeddingMap& pred, const DenseEmbeddingMap& gt,
                          const Heatmap& weight) {
  if (pred.width != gt.width || pred.height != gt.height || pred.channels != gt.channels)
    throw InvalidArgument("embedding map dimensions differ");
  if (!weight.same_shape(pred.width, pred.height))
    throw InvalidArgument("weight map dimensions differ from embedding maps");
  CompensatedSum num, den;
  for (int y = 0; y < pred.height; ++y)
    for (int x = 0; x < pred.width; ++x) {
      const double w = weight.at(x, y);
      double l1 = 0.0;
      for (int c = 0; c < pred.channels; ++c) l1 += std::abs(pred.at(x, y, c) - gt.at(x, y, c));
      num.add(w * l1);
      den.add(w);
    }
  const double d = den.value();
  return d == 0.0 ? 0.0 : num.value() / d;
}

// ---------------------------------------------------------------------------
// Stage-wise loss composition

enum class TrainingStage { Pretrain, Mixed, Finetune };
enum class SampleDomain { Synthetic, Real };

inline constexpr std::array<const char*, 6> kLossTerms{"seg",  "depth", "heatmap",
                                                       "pose", "shape", "chamfer"};

struct LossWeights {
  double seg = 1.0;
  double depth = 1.0;
  double heatmap = 100.0;
  double pose = 0.1;
  double shape = 0.1;
  double chamfer = 10.0;

  std::array<double, 6> as_array() const { return {seg, depth, heatmap, pose, shape, chamfer}; }
};

struct StageLossSpec {
  TrainingStage stage = TrainingStage::Pretrain;
  LossWeights weights;
  int synthetic_ratio = 5;  // synthetic samples per real sample in mixed batches

  void validate() const {
    for (double w : weights.as_array())
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidArgument("loss weights must be >= 0");
    if (synthetic_ratio < 0) throw InvalidArgument("synthetic_ratio must be >= 0");
  }
};

/// Unweighted per-sample loss values. The 3D terms are optional so that a
/// caller can state which supervision a sample actually carries.
struct LossComponents {
  double seg = 0.0;
  double depth = 0.0;
  double heatmap = 0.0;
  std::optional<double> pose;
  std::optional<double> shape;
  std::optional<double> chamfer;
};

struct StageLossBreakdown {
  double total = 0.0;
  std::array<double, 6> terms{};  // weighted, in kLossTerms order
  std::vector<std::string> warnings;

  double term(std::string_view name) const {
    for (std::size_t i = 0; i < kLossTerms.size(); ++i)
      if (name == kLossTerms[i]) return terms[i];
    throw InvalidArgument("unknown loss term " + std::string(name));
  }
};

/// Domain flags for a mixed batch: `ratio` synthetic samples followed by one
/// real sample, repeated.
inline std::vector<SampleDomain> mixed_batch_domains(std::size_t batch_size, int ratio) {
  std::vector<SampleDomain> out(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i)
    out[i] = (i % std::size_t(ratio + 1)) == std::size_t(ratio) ? SampleDomain::Real
                                                                 : SampleDomain::Synthetic;
  return out;
}

/// Weighted stage objective summed over the batch. Indicators:
///   pretrain  every sample counts as synthetic; chamfer is off
///   mixed     pose/shape only for synthetic samples, chamfer only for real
///   finetune  every sample counts as real; pose/shape are off
inline StageLossBreakdown stage_loss(const StageLossSpec& spec,
                                     std::span<const LossComponents> samples,
                                     std::span<const SampleDomain> domains) {
  spec.validate();
  if (samples.size() != domains.size())
    throw InvalidArgument("one domain flag per sample is required");
  const auto w = spec.weights.as_array();
  StageLossBreakdown out;
  std::array<CompensatedSum, 6> per_term;
  CompensatedSum total;

  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto& s = samples[b];
    const std::string tag = "sample " + std::to_string(b) + ": ";
    std::array<std::optional<double>, 6> v{s.seg, s.depth, s.heatmap, s.pose, s.shape, s.chamfer};
    for (const auto& x : v)
      if (x && !std::isfinite(*x)) throw InvalidArgument(tag + "loss components must be finite");

    bool synthetic = domains[b] == SampleDomain::Synthetic;
    switch (spec.stage) {
      case TrainingStage::Pretrain:
        if (!synthetic) out.warnings.push_back(tag + "real sample treated as synthetic in pretrain");
        synthetic = true;
        if (s.chamfer) out.warnings.push_back(tag + "chamfer ignored in pretrain");
        break;
      case TrainingStage::Finetune:
        if (synthetic) out.warnings.push_back(tag + "synthetic sample treated as real in finetune");
        synthetic = false;
        if (s.pose || s.shape)
          out.warnings.push_back(tag + "pose/shape supervision ignored in finetune");
        break;
      case TrainingStage::Mixed:
        break;
    }
    const bool use_3d_labels = synthetic && spec.stage != TrainingStage::Finetune;
    const bool use_chamfer = !synthetic && spec.stage != TrainingStage::Pretrain;
    const std::array<bool, 6> active{true, true, true, use_3d_labels, use_3d_labels, use_chamfer};

    for (std::size_t t = 0; t < 6; ++t) {
      if (!active[t] || !v[t]) continue;
      const double contribution = w[t] * *v[t];
      per_term[t].add(contribution);
      total.add(contribution);
    }
  }
  for (std::size_t t = 0; t < 6; ++t) out.terms[t] = per_term[t].value();
  out.total = total.value();
  return out;
}

inline nlohmann::ordered_json breakdown_to_json(const StageLossBreakdown& b) {
  nlohmann::ordered_json j;
  j["total"] = b.total;
  nlohmann::ordered_json terms;
  for (std::size_t t = 0; t < kLossTerms.size(); ++t) terms[kLossTerms[t]] = b.terms[t];
  j["terms"] = std::move(terms);
  j["warnings"] = b.warnings;
  return j;
}

// ---------------------------------------------------------------------------
// Depth augmentation

struct DepthNoiseParams {
  double hole_rate = 0.0;
  double gaussian_sigma_m = 0.0;
  std::uint64_t seed = 0;
};

/// Drops each valid pixel with probability hole_rate and jitters the rest by
/// zero-mean Gaussian noise (meters), clamped at 0. Pixels are visited in
/// row-major order; each valid pixel draws one uniform, and one normal
/// (Box-Muller) if it survives.
inline DepthMap depth_noise(const DepthMap& depth, const DepthNoiseParams& p) {
  if (!(p.hole_rate >= 0.0 && p.hole_rate < 1.0))
    throw InvalidArgument("hole_rate must lie in [0, 1)");
  if (!(p.gaussian_sigma_m >= 0.0)) throw InvalidArgument("sigma must be >= 0");
  SplitMix64 rng(mix_seed(p.seed));
  DepthMap out = depth;
  for (auto& v : out.values) {
    if (!(v > 0.0)) continue;
    if (uniform01(rng) < p.hole_rate) {
      v = 0.0;
      continue;
    }
    if (p.gaussian_sigma_m > 0.0) {
      const double u1 = 1.0 - uniform01(rng);  // (0, 1]
      const double u2 = uniform01(rng);
      const double n = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
      v = std::max(0.0, v + p.gaussian_sigma_m * n);
    }
  }
  return out;
}

}  // namespace fsd
