#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsd/parallel.hpp"
#include "fsd/pose_geometry.hpp"
#include "fsd/types.hpp"

namespace fsd {

inline constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Box [-he, he] in its canonical frame, placed by `transform`.
struct OrientedBox3 {
  SimilarityTransform transform;
  Vec3 half_extents = Vec3::Ones();

  double volume() const {
    const double s = transform.scale;
    return 8.0 * s * s * s * half_extents.prod();
  }

  bool contains(const Vec3& p) const {
    const Vec3 local = transform.rotation.transpose() * (p - transform.translation) /
                       transform.scale;
    return (local.cwiseAbs().array() <= half_extents.array()).all();
  }

  bool axis_aligned() const { return transform.rotation == Mat3::Identity(); }
};

struct PoseRecord {
  std::string category;
  double score = 1.0;
  SimilarityTransform transform;
  OrientedBox3 box;
};

// ---------------------------------------------------------------------------
// Pose errors

/// Geodesic angle between two rotations, in degrees. With a symmetry axis
/// the ground truth is additionally rotated about that axis in 1 degree steps
/// (360 samples) and the smallest error is returned.
inline double rotation_error_deg(const Mat3& r_pred, const Mat3& r_gt,
                                 std::optional<Vec3> symmetry_axis = std::nullopt) {
  auto check = [](const Mat3& r) {
    if (!r.allFinite() || (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-4 ||
        std::abs(r.determinant() - 1.0) > 1e-4)
      throw InvalidArgument("rotation_error_deg expects rotations in SO(3)");
  };
  check(r_pred);
  check(r_gt);
  auto angle = [&](const Mat3& gt) {
    const double c = std::clamp(((gt.transpose() * r_pred).trace() - 1.0) / 2.0, -1.0, 1.0);
    return std::acos(c) * kRadToDeg;
  };
  if (!symmetry_axis) return angle(r_gt);
  if (!(symmetry_axis->norm() > 0.0)) throw InvalidArgument("symmetry axis must be non-zero");
  double best = angle(r_gt);
  for (int k = 1; k < 360; ++k)
    best = std::min(best, angle(r_gt * axis_angle(*symmetry_axis, k * std::numbers::pi / 180.0)));
  return best;
}

inline double translation_error_cm(const Vec3& t_pred, const Vec3& t_gt) {
  return 100.0 * (t_pred - t_gt).norm();
}

// ---------------------------------------------------------------------------
// 3D IoU

namespace detail {

inline std::uint64_t hash_box(const OrientedBox3& b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](double v) { h = mix_seed(h ^ std::bit_cast<std::uint64_t>(v)); };
  mix(b.transform.scale);
  for (int i = 0; i < 9; ++i) mix(b.transform.rotation(i / 3, i % 3));
  for (int i = 0; i < 3; ++i) mix(b.transform.translation[i]);
  for (int i = 0; i < 3; ++i) mix(b.half_extents[i]);
  return h;
}

// Fraction of `samples` uniform points of `from` that fall inside `other`.
// The stream depends only on (seed, from), so both argument orders of the
// IoU reuse the same samples.
inline double inside_fraction(const OrientedBox3& from, const OrientedBox3& other,
                              std::size_t samples, std::uint64_t seed, unsigned threads) {
  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (samples + kChunk - 1) / kChunk;
  std::vector<std::size_t> hits(chunks, 0);
  const std::uint64_t base = mix_seed(seed ^ hash_box(from));
  parallel_chunks(chunks, 1, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      SplitMix64 rng(mix_seed(base + c));
      const std::size_t n = std::min(kChunk, samples - c * kChunk);
      std::size_t h = 0;
      for (std::size_t i = 0; i < n; ++i) {
        Vec3 u;
        for (int k = 0; k < 3; ++k) u[k] = uniform(rng, -1.0, 1.0) * from.half_extents[k];
        if (other.contains(from.transform.apply(u))) ++h;
      }
      hits[c] = h;
    }
  });
  std::size_t total = 0;
  for (auto h : hits) total += h;
  return double(total) / double(samples);
}

}  // namespace detail

/// Closed-form IoU of two boxes whose rotations are the identity.
inline double iou3d_axis_aligned(const OrientedBox3& a, const OrientedBox3& b) {
  double inter = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double ea = a.transform.scale * a.half_extents[k];
    const double eb = b.transform.scale * b.half_extents[k];
    const double lo = std::max(a.transform.translation[k] - ea, b.transform.translation[k] - eb);
    const double hi = std::min(a.transform.translation[k] + ea, b.transform.translation[k] + eb);
    inter *= std::max(0.0, hi - lo);
  }
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

/// Monte-Carlo IoU: `samples` uniform points in each box are tested against
/// the other box and the two intersection-volume estimates are averaged.
inline double iou3d_monte_carlo(const OrientedBox3& a, const OrientedBox3& b,
                                std::size_t samples, std::uint64_t seed, unsigned threads = 1) {
  if (samples < 1) throw InvalidArgument("iou3d needs at least one sample");
  const double va = a.volume();
  const double vb = b.volume();
  const double fa = detail::inside_fraction(a, b, samples, seed, threads);
  const double fb = detail::inside_fraction(b, a, samples, seed, threads);
  const double inter = 0.5 * (va * fa + vb * fb);
  const double uni = va + vb - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// IoU of two oriented boxes: exact when both are axis-aligned, Monte Carlo
/// otherwise.
inline double iou3d(const OrientedBox3& a, const OrientedBox3& b, std::size_t samples = 100000,
                    std::uint64_t seed = 0, unsigned threads = 1) {
  if (samples < 10000) throw InvalidArgument("iou3d needs at least 1e4 samples");
  for (const auto* box : {&a, &b}) {
    box->transform.validate(1e-6);
    if (!(box->half_extents.array() > 0.0).all())
      throw InvalidArgument("box half extents must be positive");
  }
  if (a.axis_aligned() && b.axis_aligned()) return iou3d_axis_aligned(a, b);
  return iou3d_monte_carlo(a, b, samples, seed, threads);
}

// ---------------------------------------------------------------------------
// Average precision

/// Match affinity of a prediction against a ground truth; nullopt if the
/// pair does not match. Higher affinity wins during greedy assignment.
using MatchFn = std::function<std::optional<double>(const PoseRecord&, const PoseRecord&)>;

/// All-point interpolated area under a precision/recall curve given the
/// hit flags of score-sorted predictions.
inline double interpolated_ap(std::span<const std::uint8_t> hits, std::size_t num_gt) {
  if (num_gt == 0 || hits.empty()) return 0.0;
  std::vector<double> precision(hits.size()), recall(hits.size());
  std::size_t tp = 0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    tp += hits[i];
    precision[i] = double(tp) / double(i + 1);
    recall[i] = double(tp) / double(num_gt);
  }
  for (std::size_t i = hits.size() - 1; i > 0; --i)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < hits.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

/// Per-category greedy matching in descending score order, then the mean of
/// the per-category APs over categories that have ground truth.
inline double average_precision(std::span<const PoseRecord> preds,
                                std::span<const PoseRecord> gts, const MatchFn& match) {
  std::set<std::string> categories;
  for (const auto& g : gts) categories.insert(g.category);
  if (categories.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& cat : categories) {
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < preds.size(); ++i)
      if (preds[i].category == cat) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return preds[a].score > preds[b].score;
    });
    std::vector<std::size_t> gt_idx;
    for (std::size_t i = 0; i < gts.size(); ++i)
      if (gts[i].category == cat) gt_idx.push_back(i);
    std::vector<std::uint8_t> used(gt_idx.size(), 0);
    std::vector<std::uint8_t> hits;
    for (std::size_t p : order) {
      std::optional<std::size_t> best;
      double best_aff = -std::numeric_limits<double>::infinity();
      for (std::size_t g = 0; g < gt_idx.size(); ++g) {
        if (used[g]) continue;
        const auto aff = match(preds[p], gts[gt_idx[g]]);
        if (aff && *aff > best_aff) {
          best_aff = *aff;
          best = g;
        }
      }
      if (best) used[*best] = 1;
      hits.push_back(best ? 1 : 0);
    }
    sum += interpolated_ap(hits, gt_idx.size());
  }
  return sum / double(categories.size());
}

// ---------------------------------------------------------------------------
// Evaluation suite

struct PoseThreshold {
  double degrees;
  double centimeters;
};

struct SuiteConfig {
  std::vector<double> iou{0.25, 0.5};
  std::vector<PoseThreshold> pose{{5, 5}, {5, 10}, {10, 5}, {10, 10}};
  std::size_t iou_samples = 20000;
  std::uint64_t seed = 0;
  std::map<std::string, Vec3> symmetry_axes;  // per category, optional
  unsigned threads = 1;
};

struct SuiteReport {
  std::vector<std::pair<std::string, double>> entries;  // in threshold order
  bool degenerate = false;  // no ground truth: every entry is 0

  double at(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    throw InvalidArgument("unknown metric " + std::string(key));
  }
};

inline std::string iou_key(double tau) {
  return "iou" + std::to_string(static_cast<int>(std::lround(tau * 100.0)));
}

inline std::string pose_key(const PoseThreshold& t) {
  auto fmt = [](double v) {
    const long r = std::lround(v);
    if (std::abs(v - double(r)) < 1e-9) return std::to_string(r);
    std::string s = std::to_string(v);
    s.erase(s.find_last_not_of('0') + 1);
    return s;
  };
  return "deg" + fmt(t.degrees) + "cm" + fmt(t.centimeters);
}

inline SuiteReport evaluate_suite(std::span<const PoseRecord> preds,
                                  std::span<const PoseRecord> gts, const SuiteConfig& cfg = {}) {
  SuiteReport report;
  report.degenerate = gts.empty();

  for (double tau : cfg.iou) {
    MatchFn m = [&](const PoseRecord& p, const PoseRecord& g) -> std::optional<double> {
      const double v = iou3d(p.box, g.box, std::max<std::size_t>(cfg.iou_samples, 10000),
                             cfg.seed, cfg.threads);
      if (v >= tau) return v;
      return std::nullopt;
    };
    report.entries.emplace_back(iou_key(tau), average_precision(preds, gts, m));
  }
  for (const auto& th : cfg.pose) {
    MatchFn m = [&](const PoseRecord& p, const PoseRecord& g) -> std::optional<double> {
      std::optional<Vec3> axis;
      if (auto it = cfg.symmetry_axes.find(g.category); it != cfg.symmetry_axes.end())
        axis = it->second;
      const double rot = rotation_error_deg(p.transform.rotation, g.transform.rotation, axis);
      const double tr = translation_error_cm(p.transform.translation, g.transform.translation);
      if (rot < th.degrees && tr < th.centimeters) return -(rot / th.degrees + tr / th.centimeters);
      return std::nullopt;
    };
    report.entries.emplace_back(pose_key(th), average_precision(preds, gts, m));
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::ordered_json transform_to_json(const SimilarityTransform& t) {
  nlohmann::ordered_json j;
  j["scale"] = t.scale;
  j["rotation"] = nlohmann::json::array();
  for (int r = 0; r < 3; ++r)
    j["rotation"].push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  j["translation"] = {t.translation.x(), t.translation.y(), t.translation.z()};
  return j;
}

inline Vec3 vec3_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw FormatError(field, "expected 3 numbers");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Mat3 mat3_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw FormatError(field, "expected 3 rows");
  Mat3 m;
  for (int r = 0; r < 3; ++r) m.row(r) = vec3_from_json(j[r], field).transpose();
  return m;
}

inline SimilarityTransform transform_from_json(const nlohmann::json& j) {
  try {
    SimilarityTransform t;
    t.scale = j.value("scale", 1.0);
    if (j.contains("rotation")) t.rotation = mat3_from_json(j.at("rotation"), "rotation");
    if (j.contains("translation"))
      t.translation = vec3_from_json(j.at("translation"), "translation");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("transform", e.what());
  }
}

/// One JSON-lines record:
/// {"category":..,"score":..,"transform":{..},"half_extents":[..]}
inline PoseRecord record_from_json(const nlohmann::json& j) {
  try {
    PoseRecord r;
    if (!j.contains("category")) throw FormatError("category", "missing");
    r.category = j.at("category").get<std::string>();
    r.score = j.value("score", 1.0);
    if (!(r.score >= 0.0 && r.score <= 1.0)) throw FormatError("score", "must lie in [0, 1]");
    if (!j.contains("transform")) throw FormatError("transform", "missing");
    r.transform = transform_from_json(j.at("transform"));
    r.box.transform = r.transform;
    r.box.half_extents = j.contains("half_extents")
                             ? vec3_from_json(j.at("half_extents"), "half_extents")
                             : Vec3::Ones();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("record", e.what());
  }
}

inline nlohmann::ordered_json record_to_json(const PoseRecord& r) {
  nlohmann::ordered_json j;
  j["category"] = r.category;
  j["score"] = r.score;
  j["transform"] = transform_to_json(r.transform);
  j["half_extents"] = {r.box.half_extents.x(), r.box.half_extents.y(), r.box.half_extents.z()};
  return j;
}

inline nlohmann::ordered_json report_to_json(const SuiteReport& r) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : r.entries) j[k] = v;
  if (r.degenerate) j["degenerate"] = true;
  return j;
}

}  // namespace fsd
