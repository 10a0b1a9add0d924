#pragma once

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsd/fsd.hpp"

namespace fsd::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kCompute = 3 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  unsigned threads = 0;
  std::uint64_t seed = 0;
  std::string output;
  std::string format;
};

/// Parses sphere:R, box:HX,HY,HZ or torus:R,r.
inline AnalyticField parse_shape(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw UsageError("shape must look like kind:params");
  const std::string kind = spec.substr(0, colon);
  std::vector<double> p;
  std::stringstream ss(spec.substr(colon + 1));
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      p.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("bad number '" + tok + "' in shape " + spec);
    }
  }
  try {
    if (kind == "sphere" && p.size() == 1) return AnalyticField::sphere(p[0]);
    if (kind == "box" && p.size() == 3) return AnalyticField::box(Vec3(p[0], p[1], p[2]));
    if (kind == "torus" && p.size() == 2) return AnalyticField::torus(p[0], p[1]);
  } catch (const InvalidArgument& e) {
    throw UsageError(spec + ": " + e.what());
  }
  throw UsageError("unknown shape " + spec);
}

namespace detail {

inline void emit(const GlobalOptions& g, std::ostream& out, const std::string& text) {
  if (g.output.empty())
    out << text;
  else
    write_file_bytes(g.output, text);
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

/// Runs the command line `args` (without the program name). Primary output
/// goes to `--output` when given, otherwise to `out`.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Batched octree SDF extraction, pose geometry, losses and metrics"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--threads", g.threads, "worker threads (0 = FSD_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--output", g.output, "output file (default: standard output)");
  app.add_option("--format", g.format, "output format")
      ->check(CLI::IsMember({"ply", "json", "csv"}));

  // extract
  auto* extract = app.add_subcommand("extract", "extract surface points with the batched octree");
  std::string weights_path;
  std::vector<std::string> shapes, latent_paths;
  int lod = 6;
  double prune_k = 1.0;
  std::string extract_out;
  auto* weights_opt = extract->add_option("--weights", weights_path, "decoder weights (FSDW or JSON)");
  auto* shape_opt = extract->add_option("--shape", shapes, "sphere:R | box:HX,HY,HZ | torus:R,r");
  weights_opt->excludes(shape_opt);
  extract->add_option("--latent", latent_paths, "latent code JSON, one per object");
  extract->add_option("--lod", lod, "final level of detail")->check(CLI::Range(1, 12));
  extract->add_option("--prune-k", prune_k, "pruning factor k in |f| <= k * edge");
  extract->add_option("--out", extract_out, "PLY output path");

  // chamfer
  auto* chamfer = app.add_subcommand("chamfer", "thresholded Chamfer distance of two PLY clouds");
  std::string ply_a, ply_b, chamfer_mode = "clamped";
  double epsilon = 0.2;
  chamfer->add_option("a", ply_a, "first PLY")->required();
  chamfer->add_option("b", ply_b, "second PLY")->required();
  chamfer->add_option("--epsilon", epsilon, "inlier threshold");
  chamfer->add_option("--mode", chamfer_mode, "clamped | hinge")
      ->check(CLI::IsMember({"clamped", "hinge"}));

  // backproject
  auto* backproject = app.add_subcommand("backproject", "lift a depth map to a point cloud");
  std::string depth_path, intrinsics_path, mask_path;
  backproject->add_option("depth", depth_path, "16-bit PGM depth")->required();
  backproject->add_option("intrinsics", intrinsics_path, "intrinsics JSON")->required();
  backproject->add_option("mask", mask_path, "optional PGM mask");

  // orthogonalize
  auto* ortho = app.add_subcommand("orthogonalize", "nearest rotation of a 3x3 matrix");
  std::string matrix_path;
  ortho->add_option("matrix", matrix_path, "matrix JSON")->required();

  // metrics
  auto* metrics = app.add_subcommand("metrics", "IoU and degree-cm average precision");
  std::string preds_path, gts_path, metrics_cfg_path;
  metrics->add_option("preds", preds_path, "predictions, JSON lines")->required();
  metrics->add_option("gts", gts_path, "ground truth, JSON lines")->required();
  metrics->add_option("config", metrics_cfg_path, "thresholds JSON");

  // bench
  auto* bench = app.add_subcommand("bench", "time dense, per-object and batched extraction");
  std::string bench_cfg_path;
  bench->add_option("config", bench_cfg_path, "benchmark config JSON");

  // gen-weights
  auto* gen_weights = app.add_subcommand("gen-weights", "write a seeded decoder weight file");
  std::string gw_out, gw_kind = "random";
  std::uint32_t gw_latent = 64, gw_hidden = 512, gw_depth = 8;
  bool gw_json = false;
  gen_weights->add_option("--out", gw_out, "output path");
  gen_weights->add_option("--kind", gw_kind, "random | polytope")
      ->check(CLI::IsMember({"random", "polytope"}));
  gen_weights->add_option("--latent-dim", gw_latent)->check(CLI::PositiveNumber);
  gen_weights->add_option("--hidden-dim", gw_hidden)->check(CLI::PositiveNumber);
  gen_weights->add_option("--depth", gw_depth)->check(CLI::Range(1u, 64u));
  gen_weights->add_flag("--json", gw_json, "write the JSON form");

  // gen-latent
  auto* gen_latent = app.add_subcommand("gen-latent", "write a seeded latent code");
  std::string gl_out;
  std::uint32_t gl_dim = 64;
  double gl_scale = 1.0;
  gen_latent->add_option("--out", gl_out, "output path");
  gen_latent->add_option("--dim", gl_dim)->check(CLI::PositiveNumber);
  gen_latent->add_option("--scale", gl_scale);

  std::vector<const char*> argv{"fsd"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (extract->parsed()) {
      if (weights_path.empty() == shapes.empty())
        throw UsageError("extract needs either --weights or --shape");
      if (!weights_path.empty() && latent_paths.empty())
        throw UsageError("--weights needs one --latent per object");
      if (weights_path.empty() && !latent_paths.empty())
        throw UsageError("--latent is only valid with --weights");
      if (!(prune_k > 0.0)) throw UsageError("--prune-k must be positive");
      if (!g.format.empty() && g.format != "ply") throw UsageError("extract writes PLY");

      std::optional<MlpSdfDecoder> decoder;
      std::vector<Field<double>> fields;
      if (!weights_path.empty()) {
        decoder = load_weights_file(weights_path);
        for (const auto& p : latent_paths)
          fields.emplace_back(LatentField<double>{
              &*decoder, latent_from_json(parse_json(read_file_bytes(p), p))});
      } else {
        for (const auto& s : shapes) fields.emplace_back(parse_shape(s));
      }
      ExtractionConfig cfg;
      cfg.lod_end = lod;
      cfg.prune_factor = prune_k;
      cfg.threads = g.threads;
      const auto surfaces = extract_batched(fields, cfg);
      std::vector<PointCloud> clouds;
      std::ostringstream summary;
      for (std::size_t o = 0; o < surfaces.size(); ++o) {
        const auto& s = surfaces[o];
        double max_r = 0.0;
        CompensatedSum sum;
        for (double r : s.cloud.residuals) {
          max_r = std::max(max_r, std::abs(r));
          sum.add(std::abs(r));
        }
        const double mean_r = s.cloud.empty() ? 0.0 : sum.value() / double(s.cloud.size());
        summary << "object " << o << ": points=" << s.cloud.size() << " mean_abs_residual=" << mean_r
            << " max_abs_residual=" << max_r << "\n";
        clouds.push_back(s.cloud);
      }
      const std::string path = !extract_out.empty() ? extract_out : g.output;
      const std::string ply = write_ply(clouds);
      if (path.empty()) {
        out << ply;
        err << summary.str();
      } else {
        write_file_bytes(path, ply);
        out << summary.str();
      }
      return kOk;
    }

    if (chamfer->parsed()) {
      if (!(epsilon > 0.0)) throw UsageError("--epsilon must be positive");
      const auto a = read_ply_merged(read_file_bytes(ply_a));
      const auto b = read_ply_merged(read_file_bytes(ply_b));
      ChamferConfig cfg;
      cfg.epsilon = epsilon;
      cfg.mode = chamfer_mode == "hinge" ? ChamferMode::Hinge : ChamferMode::ClampedInlier;
      cfg.threads = g.threads;
      const auto r = chamfer_thresholded(a.points, b.points, cfg);
      nlohmann::ordered_json j;
      j["value"] = r.value;
      j["term_ab"] = r.term_ab;
      j["term_ba"] = r.term_ba;
      j["inliers_ab"] = r.inliers_ab;
      j["inliers_ba"] = r.inliers_ba;
      j["epsilon"] = epsilon;
      j["mode"] = chamfer_mode;
      detail::emit(g, out, detail::dump(j));
      return kOk;
    }

    if (backproject->parsed()) {
      const DepthMap depth = depth_from_pgm(read_pgm(read_file_bytes(depth_path)));
      const auto k = intrinsics_from_json(parse_json(read_file_bytes(intrinsics_path), "intrinsics"));
      std::optional<BinaryMask> mask;
      if (!mask_path.empty()) mask = mask_from_pgm(read_pgm(read_file_bytes(mask_path)));
      PointCloud cloud;
      cloud.points = backproject_depth(depth, k, mask ? &*mask : nullptr);
      detail::emit(g, out, write_ply(cloud));
      return kOk;
    }

    if (ortho->parsed()) {
      const auto j = parse_json(read_file_bytes(matrix_path), "matrix");
      const Mat3 m = mat3_from_json(j.is_object() && j.contains("matrix") ? j.at("matrix") : j,
                                    "matrix");
      const Mat3 r = svd_orthogonalize(m);
      nlohmann::ordered_json o;
      o["rotation"] = nlohmann::json::array();
      for (int i = 0; i < 3; ++i) o["rotation"].push_back({r(i, 0), r(i, 1), r(i, 2)});
      detail::emit(g, out, detail::dump(o));
      return kOk;
    }

    if (metrics->parsed()) {
      const auto preds = read_records_jsonl(read_file_bytes(preds_path));
      const auto gts = read_records_jsonl(read_file_bytes(gts_path));
      SuiteConfig cfg;
      cfg.seed = g.seed;
      cfg.threads = g.threads;
      if (!metrics_cfg_path.empty()) {
        const auto j = parse_json(read_file_bytes(metrics_cfg_path), "config");
        try {
          if (j.contains("iou")) cfg.iou = j.at("iou").get<std::vector<double>>();
          if (j.contains("pose")) {
            cfg.pose.clear();
            for (const auto& p : j.at("pose"))
              cfg.pose.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
          }
          if (j.contains("iou_samples")) cfg.iou_samples = j.at("iou_samples").get<std::size_t>();
          if (j.contains("symmetry_axes"))
            for (const auto& [cat, axis] : j.at("symmetry_axes").items())
              cfg.symmetry_axes[cat] = vec3_from_json(axis, "symmetry_axes." + cat);
        } catch (const nlohmann::json::exception& e) {
          throw FormatError("config", e.what());
        }
      }
      detail::emit(g, out, detail::dump(report_to_json(evaluate_suite(preds, gts, cfg))));
      return kOk;
    }

    if (bench->parsed()) {
      BenchConfig cfg;
      if (!bench_cfg_path.empty())
        cfg = bench_config_from_json(parse_json(read_file_bytes(bench_cfg_path), "config"));
      if (g.threads) cfg.threads = g.threads;
      const auto report = run_benchmark(cfg);
      detail::emit(g, out,
                   g.format == "csv" ? report_to_csv(report) : detail::dump(report_to_json(report)));
      return kOk;
    }

    if (gen_weights->parsed()) {
      const std::string path = !gw_out.empty() ? gw_out : g.output;
      if (path.empty()) throw UsageError("gen-weights needs --out");
      DecoderShape shape{gw_latent, gw_hidden, gw_depth, OutputActivation::Tanh};
      const MlpSdfDecoder dec = gw_kind == "polytope"
                                    ? make_polytope_decoder(g.seed, shape)
                                    : gen_random_decoder(g.seed, gw_latent, gw_hidden, gw_depth);
      write_file_bytes(path, gw_json ? weights_to_json(dec).dump() + "\n" : save_weights(dec));
      return kOk;
    }

    if (gen_latent->parsed()) {
      const auto z = gen_random_latent(g.seed, gl_dim, gl_scale);
      const std::string text = detail::dump(latent_to_json(z));
      if (!gl_out.empty())
        write_file_bytes(gl_out, text);
      else
        detail::emit(g, out, text);
      return kOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const std::ios_base::failure& e) {
    err << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCompute;
  }
  return kUsage;
}

}  // namespace fsd::cli
