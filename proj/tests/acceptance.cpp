// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "fsd/fsd.hpp"
#include "naive_mlp.hpp"

using namespace fsd;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome no_miss() {
  const auto t0 = Clock::now();
  ExtractionConfig cfg;
  cfg.lod_end = 6;
  cfg.prune_factor = std::sqrt(3.0) / 2.0;
  const std::vector<std::pair<const char*, AnalyticField>> shapes{
      {"sphere", AnalyticField::sphere(0.5)},
      {"box", AnalyticField::box(Vec3(0.4, 0.3, 0.2))},
      {"torus", AnalyticField::torus(0.5, 0.15)}};
  std::size_t missed = 0;
  std::string detail;
  for (const auto& [name, shape] : shapes) {
    const std::vector<Field<double>> fields{shape};
    const auto oct = extract_batched(fields, cfg)[0].voxel_codes;
    const auto dense = dense_grid_extract(Field<double>(shape), 64, cfg);
    const auto dense_codes = dense_indices_to_morton(dense.kept_indices, 64);
    std::vector<std::uint64_t> sorted = oct;
    std::sort(sorted.begin(), sorted.end());
    std::size_t m = 0;
    for (auto c : dense_codes)
      if (!std::binary_search(sorted.begin(), sorted.end(), c)) ++m;
    missed += m;
    detail += fmt("%s %zu/%zu ", name, dense_codes.size() - m, dense_codes.size());
  }
  const double secs = seconds_since(t0);
  detail += fmt("cells found, %zu missed, %.2f s", missed, secs);
  return {missed == 0 && secs < 30.0, detail};
}

Outcome batched_equals_sequential() {
  ExtractionConfig cfg;
  cfg.lod_end = 6;
  const MlpSdfDecoder random_dec = gen_random_decoder(3, 16, 64, 3);
  const MlpSdfDecoder poly_dec = make_polytope_decoder(2024, DecoderShape{64, 128, 8});
  bool ok = true;
  std::string detail;
  for (int b : {2, 4, 8}) {
    for (const auto* dec : {&random_dec, &poly_dec}) {
      std::vector<Field<double>> fields;
      for (int i = 0; i < b; ++i)
        fields.emplace_back(LatentField<double>{
            dec, gen_random_latent(mix_seed(std::uint64_t(100 * b + i)), dec->latent_dim())});
      const auto bat = extract_batched(fields, cfg);
      const auto seq = extract_sequential(fields, cfg);
      std::size_t points = 0;
      for (int i = 0; i < b; ++i) {
        ok = ok && bat[i] == seq[i];
        points += bat[i].cloud.size();
      }
      ok = ok && points > 0;
      detail += fmt("B=%d %s %zu pts; ", b, dec == &random_dec ? "random" : "polytope", points);
    }
  }
  detail += ok ? "all bit-identical" : "MISMATCH";
  return {ok, detail};
}

Outcome projection_exact() {
  ExtractionConfig cfg;
  cfg.lod_end = 6;
  const std::vector<AnalyticField> shapes{AnalyticField::sphere(0.5),
                                          AnalyticField::box(Vec3(0.4, 0.3, 0.2)),
                                          AnalyticField::torus(0.5, 0.15)};
  double worst = 0.0;
  std::size_t n = 0, flagged = 0;
  for (const auto& s : shapes) {
    const auto surf = extract_batched(std::vector<Field<double>>{s}, cfg)[0];
    for (std::size_t i = 0; i < surf.cloud.size(); ++i) {
      worst = std::max(worst, std::abs(s.value(surf.cloud.points[i])));
      flagged += surf.flagged[i];
    }
    n += surf.cloud.size();
  }
  return {n > 0 && flagged == 0 && worst < 1e-6,
          fmt("%zu points, max |f(p)| = %.3g, %zu flagged", n, worst, flagged)};
}

// Kink-free: no hidden unit changes sign anywhere on the central-difference
// stencil, so the network is affine on the stencil and the difference is exact
// up to rounding.
Outcome gradient_check() {
  const MlpSdfDecoder dec = gen_random_decoder(7);
  const LatentCode z = gen_random_latent(8);
  SplitMix64 rng(9);
  const double h = 1e-4;
  int accepted = 0, tried = 0;
  double worst = 0.0;
  std::vector<double> base, other;
  while (accepted < 500 && tried < 5000) {
    ++tried;
    const Vec3 q(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    testing::naive_forward(dec, z, q, &base);
    bool stable = true;
    Vec3 fd;
    for (int k = 0; k < 3 && stable; ++k) {
      double f[2];
      for (int s = 0; s < 2 && stable; ++s) {
        Vec3 p = q;
        p[k] += s ? h : -h;
        f[s] = testing::naive_forward(dec, z, p, &other);
        for (std::size_t i = 0; i < base.size(); ++i)
          if ((base[i] > 0.0) != (other[i] > 0.0)) {
            stable = false;
            break;
          }
      }
      if (stable) fd[k] = (f[1] - f[0]) / (2.0 * h);
    }
    if (!stable) continue;
    ++accepted;
    const Vec3 g = dec.gradients(z, std::span<const Vec3>(&q, 1))[0];
    worst = std::max(worst, (g - fd).norm() / std::max(fd.norm(), 1e-300));
  }
  return {accepted == 500 && worst <= 1e-3,
          fmt("%d kink-free points of %d drawn on a %ux%u decoder, max relative error %.3g",
              accepted, tried, dec.depth(), dec.hidden_dim(), worst)};
}

Outcome speedup() {
  BenchConfig cfg;
  cfg.num_objects = 8;
  cfg.lod_end = 6;
  cfg.dense_resolution = 64;
  cfg.field_source = FieldSource::SeededDecoder;
  cfg.seed = 5;
  cfg.hidden_dim = 128;
  cfg.depth = 8;
  cfg.repetitions = 3;
  cfg.warmup = 1;
  cfg.threads = std::max(4u, resolve_threads(0));
  const auto t0 = Clock::now();
  BenchmarkReport r;
  try {
    r = run_benchmark(cfg);
  } catch (const std::exception& e) {
    return {false, std::string("benchmark aborted: ") + e.what()};
  }
  const double secs = seconds_since(t0);
  const double dense = r.method("dense").median_s;
  const double seq = r.method("octree_sequential").median_s;
  const double bat = r.method("octree_batched").median_s;
  const bool ok = bat <= dense / 3.0 && bat <= 2.0 * seq / 3.0 && secs < 300.0 && r.threads >= 4;
  return {ok, fmt("medians dense %.4f s, sequential %.4f s, batched %.4f s; batched/dense %.3f "
                  "(need <= 0.333), batched/sequential %.3f (need <= 0.667); %s; %.1f s total",
                  dense, seq, bat, bat / dense, bat / seq, r.note.c_str(), secs)};
}

Outcome chamfer_battery() {
  SplitMix64 rng(11);
  auto cloud = [&](int n) {
    std::vector<Vec3> c;
    for (int i = 0; i < n; ++i)
      c.emplace_back(uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5));
    return c;
  };
  bool ok = true;
  const auto a = cloud(200);
  ok = ok && chamfer_thresholded(a, a).value == 0.0;
  ChamferConfig c;
  c.epsilon = 0.2;
  const std::vector<Vec3> p{Vec3::Zero()}, q{Vec3(0.1, 0, 0)};
  double single[2];
  int k = 0;
  for (auto mode : {ChamferMode::ClampedInlier, ChamferMode::Hinge}) {
    c.mode = mode;
    single[k++] = chamfer_thresholded(p, q, c).value;
  }
  ok = ok && std::abs(single[0] - 0.2) < 1e-12 && std::abs(single[1] - 0.2) < 1e-12;
  double asym = 0.0;
  int invariant = 0;
  for (int t = 0; t < 100; ++t) {
    const auto x = cloud(40);
    auto y = cloud(40);
    for (auto mode : {ChamferMode::ClampedInlier, ChamferMode::Hinge}) {
      c.mode = mode;
      asym = std::max(asym, std::abs(chamfer_thresholded(x, y, c).value -
                                     chamfer_thresholded(y, x, c).value));
    }
    c.mode = ChamferMode::ClampedInlier;
    const auto before = chamfer_thresholded(x, y, c);
    y.emplace_back(3.0 + uniform01(rng), uniform(rng, -1, 1), uniform(rng, -1, 1));
    const auto after = chamfer_thresholded(x, y, c);
    invariant += after.term_ab == before.term_ab && after.term_ba == before.term_ba &&
                 after.inliers_ba == before.inliers_ba;
  }
  ok = ok && asym <= 1e-12 && invariant == 100;
  return {ok, fmt("single pair clamped %.17g hinge %.17g; outlier-invariant %d/100; max asymmetry %.3g",
                  single[0], single[1], invariant, asym)};
}

Outcome svd_battery() {
  SplitMix64 rng(13);
  auto random_matrix = [&] {
    Mat3 m;
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = uniform(rng, -1, 1);
    return m;
  };
  double so3 = 0.0, scale = 0.0;
  int n = 0;
  while (n < 10000) {
    const Mat3 m = random_matrix();
    Mat3 r;
    try {
      r = svd_orthogonalize(m);
    } catch (const DegenerateInput&) {
      continue;
    }
    ++n;
    so3 = std::max({so3, (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(),
                    std::abs(r.determinant() - 1.0)});
    const double s = std::exp(uniform(rng, -3, 3));
    scale = std::max(scale, (svd_orthogonalize(s * m) - r).cwiseAbs().maxCoeff());
  }
  double recovery = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Mat3 r0 = svd_orthogonalize(random_matrix());
    Mat3 noise = random_matrix();
    noise *= 1e-3 / noise.norm();
    recovery = std::max(recovery, (svd_orthogonalize(r0 + noise) - r0).norm());
  }
  return {so3 <= 1e-6 && scale <= 1e-9 && recovery < 1e-2,
          fmt("%d matrices, SO(3) deviation %.3g, scale deviation %.3g, noisy recovery %.3g",
              n, so3, scale, recovery)};
}

Outcome stage_losses() {
  StageLossSpec spec;
  const std::vector<LossComponents> unit{{1, 1, 1, 1.0, 1.0, std::nullopt}};
  const double total = stage_loss(spec, unit, std::vector{SampleDomain::Synthetic}).total;
  bool ok = total == 102.2;
  spec.stage = TrainingStage::Mixed;
  const auto& w = spec.weights;
  const std::vector<LossComponents> s{{1, 2, 3, 4.0, 5.0, 7.0}, {0.5, 0.25, 0.125, 8.0, 16.0, 32.0}};
  int combos = 0;
  for (auto d0 : {SampleDomain::Synthetic, SampleDomain::Real})
    for (auto d1 : {SampleDomain::Synthetic, SampleDomain::Real}) {
      const std::vector<SampleDomain> d{d0, d1};
      double want = 0.0;
      for (int b = 0; b < 2; ++b) {
        const double syn = d[b] == SampleDomain::Synthetic ? 1.0 : 0.0;
        want += w.seg * s[b].seg + w.depth * s[b].depth + w.heatmap * s[b].heatmap +
                syn * (w.pose * *s[b].pose + w.shape * *s[b].shape) +
                (1.0 - syn) * w.chamfer * *s[b].chamfer;
      }
      combos += std::abs(stage_loss(spec, s, d).total - want) <= 1e-12;
    }
  ok = ok && combos == 4;
  return {ok, fmt("pretrain total %.17g, mixed masking correct for %d/4 domain pairs", total, combos)};
}

Outcome metrics_battery() {
  const double deg = std::numbers::pi / 180.0;
  OrientedBox3 a, b;
  a.half_extents = b.half_extents = Vec3::Constant(0.5);
  b.transform.translation = Vec3(0.5, 0, 0);
  const double iou = iou3d_monte_carlo(a, b, 100000, 0);

  std::vector<PoseRecord> gts, preds;
  for (int i = 0; i < 4; ++i) {
    PoseRecord g;
    g.category = "obj";
    g.transform.rotation = axis_angle(Vec3(0.3, 1, 0.2 * i), 0.5 * i);
    g.transform.translation = Vec3(0.2 * i, -0.1, 1.0);
    g.box.transform = g.transform;
    gts.push_back(g);
    PoseRecord p = g;
    p.score = 0.9 - 0.1 * i;
    p.transform.rotation = g.transform.rotation * axis_angle(Vec3(1, 2, -1), 7 * deg);
    p.box.transform = p.transform;
    preds.push_back(p);
  }
  const auto rep = evaluate_suite(preds, gts);
  const bool suite = rep.at("deg5cm5") == 0.0 && rep.at("deg5cm10") == 0.0 &&
                     rep.at("deg10cm5") == 1.0 && rep.at("deg10cm10") == 1.0;

  PoseRecord g0, g1;
  g0.category = g1.category = "a";
  g1.transform.translation = Vec3(1, 0, 0);
  std::vector<PoseRecord> hand{g0, g0, g1};
  hand[0].score = 0.9;
  hand[1].score = 0.8;
  hand[1].transform.translation = Vec3(5, 5, 5);
  hand[2].score = 0.7;
  const MatchFn near = [](const PoseRecord& p, const PoseRecord& g) -> std::optional<double> {
    const double e = translation_error_cm(p.transform.translation, g.transform.translation);
    if (e < 5.0) return -e;
    return std::nullopt;
  };
  const double ap = average_precision(hand, std::vector{g0, g1}, near);
  const bool ok = std::abs(iou - 1.0 / 3.0) <= 0.01 && suite && std::abs(ap - 5.0 / 6.0) <= 1e-9;
  return {ok, fmt("half-overlap IoU %.5f, 7 degree suite %s, hand AP %.12f (want %.12f)", iou,
                  suite ? "5deg=0 10deg=1" : "WRONG", ap, 5.0 / 6.0)};
}

Outcome non_reproducible() {
  return {true,
          "trained-network mAP and inference-time figures are not targets; the metrics battery "
          "(criterion 9) stands in for the evaluation protocol"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"octree no-miss against dense 64^3", no_miss},
      {"batched equals sequential bit-for-bit", batched_equals_sequential},
      {"projection exactness on analytic primitives", projection_exact},
      {"decoder gradient against central differences", gradient_check},
      {"batched octree speedup", speedup},
      {"thresholded Chamfer battery", chamfer_battery},
      {"SVD orthogonalization battery", svd_battery},
      {"stage-loss arithmetic", stage_losses},
      {"metrics battery", metrics_battery},
      {"trained-model figures out of scope", non_reproducible},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s criterion %zu: %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
