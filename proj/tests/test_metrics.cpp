#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fsd/io.hpp"
#include "fsd/metrics.hpp"

using namespace fsd;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

OrientedBox3 aabb(const Vec3& center, const Vec3& half) {
  OrientedBox3 b;
  b.transform.translation = center;
  b.half_extents = half;
  return b;
}

PoseRecord record(const std::string& cat, double score, const Vec3& t,
                  const Mat3& r = Mat3::Identity()) {
  PoseRecord p;
  p.category = cat;
  p.score = score;
  p.transform.rotation = r;
  p.transform.translation = t;
  p.box.transform = p.transform;
  p.box.half_extents = Vec3(0.1, 0.1, 0.1);
  return p;
}

MatchFn near_match(double cm) {
  return [cm](const PoseRecord& p, const PoseRecord& g) -> std::optional<double> {
    const double e = translation_error_cm(p.transform.translation, g.transform.translation);
    if (e < cm) return -e;
    return std::nullopt;
  };
}

}  // namespace

TEST(RotationError, Examples) {
  const Mat3 r = axis_angle(Vec3(1, 2, 3), 0.7);
  EXPECT_NEAR(rotation_error_deg(r, r), 0.0, 1e-6);
  EXPECT_NEAR(rotation_error_deg(axis_angle(Vec3::UnitZ(), 90 * kDeg), Mat3::Identity()), 90.0,
              1e-9);
  const Mat3 gt = axis_angle(Vec3(0.3, -1, 0.2), 1.1);
  const Mat3 pred = gt * axis_angle(Vec3::UnitY(), 137 * kDeg);
  EXPECT_NEAR(rotation_error_deg(pred, gt), 137.0, 1e-9);
  EXPECT_LT(rotation_error_deg(pred, gt, Vec3::UnitY()), 0.5);
}

TEST(RotationError, SymmetricAndValidated) {
  SplitMix64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Mat3 a = axis_angle(Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), 0.5), uniform(rng, 0, 3));
    const Mat3 b = axis_angle(Vec3(0.2, uniform(rng, -1, 1), uniform(rng, -1, 1)), uniform(rng, 0, 3));
    EXPECT_NEAR(rotation_error_deg(a, b), rotation_error_deg(b, a), 1e-9);
  }
  EXPECT_THROW(rotation_error_deg(2.0 * Mat3::Identity(), Mat3::Identity()), InvalidArgument);
  EXPECT_THROW(rotation_error_deg(Mat3::Identity(), Mat3(Eigen::Vector3d(1, 1, -1).asDiagonal())),
               InvalidArgument);
}

TEST(TranslationError, Examples) {
  EXPECT_EQ(translation_error_cm(Vec3(1, 2, 3), Vec3(1, 2, 3)), 0.0);
  EXPECT_NEAR(translation_error_cm(Vec3(0.05, 0, 0), Vec3::Zero()), 5.0, 1e-12);
  const Vec3 a(0.3, -0.2, 1.1), b(0.1, 0.4, 0.9);
  EXPECT_NEAR(translation_error_cm(a, b), 100 * std::sqrt(0.04 + 0.36 + 0.04), 1e-12);
}

TEST(Iou3d, TrivialCases) {
  const auto a = aabb(Vec3::Zero(), Vec3(0.5, 0.5, 0.5));
  EXPECT_EQ(iou3d(a, a), 1.0);
  EXPECT_EQ(iou3d(aabb(Vec3::Zero(), Vec3::Constant(0.1)), aabb(Vec3(10, 0, 0), Vec3::Constant(0.1))),
            0.0);
  OrientedBox3 rotated = a;
  rotated.transform.rotation = axis_angle(Vec3(1, 1, 0), 0.3);
  EXPECT_NEAR(iou3d(rotated, rotated), 1.0, 1e-3);
  OrientedBox3 far = rotated;
  far.transform.translation = Vec3(10, 0, 0);
  EXPECT_EQ(iou3d(rotated, far), 0.0);
}

TEST(Iou3d, HalfOverlapMatchesClosedForm) {
  const auto a = aabb(Vec3::Zero(), Vec3::Constant(0.5));
  const auto b = aabb(Vec3(0.5, 0, 0), Vec3::Constant(0.5));
  EXPECT_NEAR(iou3d(a, b), 1.0 / 3.0, 1e-15);
  const double mc = iou3d_monte_carlo(a, b, 100000, 7);
  EXPECT_NEAR(mc, 1.0 / 3.0, 0.01);
  EXPECT_NEAR(mc, 1.0 / 3.0, 3.0 / std::sqrt(100000.0));
}

TEST(Iou3d, RotatedSquareOctagonOracle) {
  // A unit cube against itself turned 45 degrees about z: the cross-section is
  // a regular octagon of area 2(sqrt2 - 1).
  const auto a = aabb(Vec3::Zero(), Vec3::Constant(0.5));
  OrientedBox3 b = a;
  b.transform.rotation = axis_angle(Vec3::UnitZ(), 45 * kDeg);
  const double inter = 2.0 * (std::sqrt(2.0) - 1.0);
  const double exact = inter / (2.0 - inter);
  EXPECT_NEAR(iou3d(a, b, 100000, 3), exact, 0.01);
  // a quarter turn maps the cube onto itself
  b.transform.rotation = axis_angle(Vec3::UnitZ(), 90 * kDeg);
  EXPECT_NEAR(iou3d(a, b, 20000, 3), 1.0, 1e-3);
}

TEST(Iou3d, SymmetricDeterministicAndThreadIndependent) {
  OrientedBox3 a = aabb(Vec3(0.1, 0, 0), Vec3(0.3, 0.2, 0.4));
  a.transform.rotation = axis_angle(Vec3(1, 0, 1), 0.4);
  OrientedBox3 b = aabb(Vec3(0, 0.1, 0.05), Vec3(0.25, 0.35, 0.2));
  b.transform.rotation = axis_angle(Vec3(0, 1, 1), -0.7);
  b.transform.scale = 1.2;
  const double ab = iou3d(a, b, 50000, 11);
  EXPECT_EQ(ab, iou3d(b, a, 50000, 11));
  EXPECT_EQ(ab, iou3d(a, b, 50000, 11, 4));
  EXPECT_GT(ab, 0.0);
  EXPECT_LT(ab, 1.0);
  EXPECT_THROW(iou3d(a, b, 100), InvalidArgument);
  OrientedBox3 flat = a;
  flat.half_extents.z() = 0;
  EXPECT_THROW(iou3d(flat, b), InvalidArgument);
}

TEST(AveragePrecision, Examples) {
  const std::vector<PoseRecord> gts{record("a", 1, Vec3(0, 0, 0)), record("a", 1, Vec3(1, 0, 0))};
  EXPECT_EQ(average_precision(gts, gts, near_match(5)), 1.0);
  EXPECT_EQ(average_precision({}, gts, near_match(5)), 0.0);
  const std::vector<PoseRecord> preds{record("a", 0.9, Vec3(0, 0, 0)), record("a", 0.8, Vec3(5, 5, 5)),
                                      record("a", 0.7, Vec3(1, 0, 0))};
  // PR points (1, .5) (.5, .5) (.667, 1); envelope gives .5 * 1 + .5 * 2/3
  EXPECT_NEAR(average_precision(preds, gts, near_match(5)), 5.0 / 6.0, 1e-9);
}

TEST(AveragePrecision, OneToOneAndPerCategory) {
  const std::vector<PoseRecord> gts{record("a", 1, Vec3::Zero()), record("b", 1, Vec3::Zero())};
  // duplicate detection of the same object counts once
  const std::vector<PoseRecord> dup{record("a", 0.9, Vec3::Zero()), record("a", 0.8, Vec3::Zero())};
  EXPECT_NEAR(average_precision(dup, gts, near_match(5)), 0.5, 1e-12);
  // a prediction in the wrong category never matches
  const std::vector<PoseRecord> wrong{record("b", 0.9, Vec3::Zero()), record("c", 0.9, Vec3::Zero())};
  EXPECT_NEAR(average_precision(wrong, gts, near_match(5)), 0.5, 1e-12);
}

TEST(AveragePrecision, MissToHitIsMonotone) {
  SplitMix64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 8;
    std::vector<std::uint8_t> hits(n);
    for (auto& h : hits) h = uniform01(rng) < 0.5;
    const std::size_t gt = n + 2;
    const double ap = interpolated_ap(hits, gt);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
    for (int i = 0; i < n; ++i) {
      if (hits[i]) continue;
      auto better = hits;
      better[i] = 1;
      EXPECT_GE(interpolated_ap(better, gt), ap - 1e-15);
    }
  }
}

TEST(Suite, PerfectPredictions) {
  std::vector<PoseRecord> gts;
  SplitMix64 rng(2);
  for (int i = 0; i < 6; ++i)
    gts.push_back(record(i % 2 ? "mug" : "can", 1.0,
                         Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, 0.5, 2)),
                         axis_angle(Vec3(1, uniform(rng, -1, 1), 0), uniform(rng, 0, 3))));
  const auto rep = evaluate_suite(gts, gts);
  ASSERT_EQ(rep.entries.size(), 6u);
  for (const auto& [k, v] : rep.entries) EXPECT_EQ(v, 1.0) << k;
  EXPECT_FALSE(rep.degenerate);
}

TEST(Suite, SevenDegreePerturbation) {
  std::vector<PoseRecord> gts, preds;
  for (int i = 0; i < 4; ++i) {
    const Mat3 r = axis_angle(Vec3(0.2 * i, 1, 0.3), 0.4 * i);
    gts.push_back(record("box", 1.0, Vec3(0.3 * i, 0, 1), r));
    preds.push_back(record("box", 0.9 - 0.1 * i, Vec3(0.3 * i, 0, 1),
                           r * axis_angle(Vec3(1, -1, 2), 7 * kDeg)));
  }
  const auto rep = evaluate_suite(preds, gts);
  EXPECT_EQ(rep.at("deg5cm5"), 0.0);
  EXPECT_EQ(rep.at("deg5cm10"), 0.0);
  EXPECT_EQ(rep.at("deg10cm5"), 1.0);
  EXPECT_EQ(rep.at("deg10cm10"), 1.0);
}

TEST(Suite, EmptyInputsAreFlagged) {
  const auto rep = evaluate_suite({}, {});
  EXPECT_TRUE(rep.degenerate);
  for (const auto& [k, v] : rep.entries) EXPECT_EQ(v, 0.0);
  const auto j = report_to_json(rep);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"iou25", "iou50", "deg5cm5", "deg5cm10", "deg10cm5",
                                            "deg10cm10", "degenerate"}));
}

TEST(Suite, SymmetryAxisConfig) {
  const Mat3 r = axis_angle(Vec3::UnitX(), 0.3);
  const std::vector<PoseRecord> gts{record("bottle", 1, Vec3::Zero(), r)};
  const std::vector<PoseRecord> preds{
      record("bottle", 0.9, Vec3::Zero(), r * axis_angle(Vec3::UnitY(), 60 * kDeg))};
  EXPECT_EQ(evaluate_suite(preds, gts).at("deg10cm10"), 0.0);
  SuiteConfig cfg;
  cfg.symmetry_axes["bottle"] = Vec3::UnitY();
  EXPECT_EQ(evaluate_suite(preds, gts, cfg).at("deg10cm10"), 1.0);
}

TEST(Records, JsonLinesRoundTripAndErrors) {
  const auto r = record("mug", 0.75, Vec3(0.1, 0.2, 0.3), axis_angle(Vec3::UnitZ(), 0.5));
  const std::string line = record_to_json(r).dump();
  const auto back = read_records_jsonl(line + "\n\n" + line + "\n");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].category, "mug");
  EXPECT_EQ(back[0].score, 0.75);
  EXPECT_EQ(back[0].transform.rotation, r.transform.rotation);
  EXPECT_EQ(back[0].box.half_extents, r.box.half_extents);
  EXPECT_THROW(read_records_jsonl(R"({"score": 0.5, "transform": {}})"), FormatError);
  EXPECT_THROW(read_records_jsonl(R"({"category": "a", "score": 1.5, "transform": {}})"), FormatError);
  EXPECT_THROW(read_records_jsonl("{not json"), FormatError);
}
