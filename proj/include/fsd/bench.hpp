#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "fsd/analytic_field.hpp"
#include "fsd/field.hpp"
#include "fsd/mlp_decoder.hpp"
#include "fsd/parallel.hpp"
#include "fsd/polytope_decoder.hpp"
#include "fsd/surface_extract.hpp"

namespace fsd {

/// Raised when the extraction methods disagree before timing starts.
class ConsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FieldSource { AnalyticMix, SeededDecoder };
enum class Precision { Float, Double };

struct BenchConfig {
  int num_objects = 8;
  int lod_end = 6;
  int dense_resolution = 64;
  int repetitions = 20;
  int warmup = 3;
  FieldSource field_source = FieldSource::AnalyticMix;
  std::uint64_t seed = 0;
  // decoder shape for SeededDecoder
  std::uint32_t latent_dim = 64;
  std::uint32_t hidden_dim = 512;
  std::uint32_t depth = 8;
  Precision precision = Precision::Float;
  double prune_factor = 1.0;
  unsigned threads = 0;

  void validate() const {
    if (num_objects < 1) throw InvalidArgument("num_objects must be >= 1");
    if (repetitions < 3) throw InvalidArgument("repetitions must be >= 3");
    if (warmup < 0) throw InvalidArgument("warmup must be >= 0");
    if (lod_end < 1 || lod_end > 10) throw InvalidArgument("lod_end must lie in [1, 10]");
    if (dense_resolution < 2) throw InvalidArgument("dense_resolution must be >= 2");
    if (!(prune_factor > 0.0)) throw InvalidArgument("prune_factor must be positive");
  }
};

struct MethodTiming {
  std::string method;
  double median_s = 0.0;
  double min_s = 0.0;
  double max_s = 0.0;
  std::size_t evals = 0;
  std::size_t batches = 0;
  std::size_t points = 0;

  bool operator==(const MethodTiming&) const = default;
};

struct BenchmarkReport {
  std::vector<MethodTiming> methods;  // dense, octree_sequential, octree_batched
  double speedup_batched_vs_dense = 0.0;
  double speedup_batched_vs_sequential = 0.0;
  double speedup_sequential_vs_dense = 0.0;
  unsigned threads = 1;
  int num_objects = 0;
  std::string field_source;
  std::string note;

  const MethodTiming& method(std::string_view name) const {
    for (const auto& m : methods)
      if (m.method == name) return m;
    throw InvalidArgument("report has no method " + std::string(name));
  }

  bool operator==(const BenchmarkReport&) const = default;
};

/// Deterministic set of analytic shapes cycling through spheres, boxes and
/// tori of varying size.
inline std::vector<AnalyticField> analytic_mix(int count) {
  std::vector<AnalyticField> out;
  for (int i = 0; i < count; ++i) {
    const double t = double(i / 3) * 0.07;
    switch (i % 3) {
      case 0:
        out.push_back(AnalyticField::sphere(0.5 - t));
        break;
      case 1:
        out.push_back(AnalyticField::box(Vec3(0.4 - t, 0.3, 0.2 + t)));
        break;
      default:
        out.push_back(AnalyticField::torus(0.5 - t, 0.15 + 0.5 * t));
        break;
    }
  }
  return out;
}

namespace detail {

inline double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline MethodTiming time_method(std::string name, int warmup, int reps,
                                const std::function<void()>& body) {
  for (int i = 0; i < warmup; ++i) body();
  std::vector<double> secs;
  for (int i = 0; i < reps; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    secs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  MethodTiming m;
  m.method = std::move(name);
  m.median_s = median_of(secs);
  m.min_s = *std::min_element(secs.begin(), secs.end());
  m.max_s = *std::max_element(secs.begin(), secs.end());
  return m;
}

template <class T>
BenchmarkReport run_benchmark_on(const BenchConfig& cfg, const std::vector<Field<T>>& fields,
                                 bool exact_fields) {
  ExtractionConfig ecfg;
  ecfg.lod_end = cfg.lod_end;
  ecfg.prune_factor = cfg.prune_factor;
  ecfg.threads = resolve_threads(cfg.threads);
  ecfg.validate();

  // Correctness gate, outside the timed region.
  ExtractionStats seq_stats, bat_stats;
  EvalStats dense_stats;
  const auto seq = extract_sequential(fields, ecfg, &seq_stats);
  const auto bat = extract_batched(fields, ecfg, &bat_stats);
  std::size_t seq_points = 0, bat_points = 0, dense_points = 0;
  for (std::size_t o = 0; o < fields.size(); ++o) {
    if (!(seq[o] == bat[o]))
      throw ConsistencyError("batched and sequential outputs differ for object " +
                            std::to_string(o));
    seq_points += seq[o].cloud.size();
    bat_points += bat[o].cloud.size();
    const auto dense = dense_grid_extract(fields[o], cfg.dense_resolution, ecfg, &dense_stats);
    dense_points += dense.projected.points.size();
    if (cfg.dense_resolution == (1 << cfg.lod_end)) {
      const auto dense_codes = dense_indices_to_morton(dense.kept_indices, cfg.dense_resolution);
      const auto& oct = bat[o].voxel_codes;
      if (!std::includes(dense_codes.begin(), dense_codes.end(), oct.begin(), oct.end()))
        throw ConsistencyError("octree cell outside the dense set for object " +
                              std::to_string(o));
      if (exact_fields && cfg.prune_factor >= std::sqrt(3.0) / 2.0 && dense_codes != oct)
        throw ConsistencyError("octree missed dense cells for object " +
                              std::to_string(o));
    }
  }

  BenchmarkReport r;
  r.threads = ecfg.threads;
  r.num_objects = int(fields.size());
  auto dense_body = [&] {
    for (const auto& f : fields) (void)dense_grid_extract(f, cfg.dense_resolution, ecfg);
  };
  auto seq_body = [&] { (void)extract_sequential(fields, ecfg); };
  auto bat_body = [&] { (void)extract_batched(fields, ecfg); };

  auto dense = time_method("dense", cfg.warmup, cfg.repetitions, dense_body);
  dense.evals = dense_stats.value_evals;
  dense.batches = dense_stats.batches;
  dense.points = dense_points;
  auto sq = time_method("octree_sequential", cfg.warmup, cfg.repetitions, seq_body);
  sq.evals = seq_stats.evals.value_evals;
  sq.batches = seq_stats.evals.batches;
  sq.points = seq_points;
  auto bt = time_method("octree_batched", cfg.warmup, cfg.repetitions, bat_body);
  bt.evals = bat_stats.evals.value_evals;
  bt.batches = bat_stats.evals.batches;
  bt.points = bat_points;

  r.speedup_batched_vs_dense = dense.median_s / bt.median_s;
  r.speedup_batched_vs_sequential = sq.median_s / bt.median_s;
  r.speedup_sequential_vs_dense = dense.median_s / sq.median_s;
  r.methods = {std::move(dense), std::move(sq), std::move(bt)};
  return r;
}

}  // namespace detail

/// Times dense-grid, per-object octree and batched octree extraction of the
/// same fields. The three outputs are cross-checked before any timing and a
/// mismatch aborts with ConsistencyError.
inline BenchmarkReport run_benchmark(const BenchConfig& cfg) {
  cfg.validate();
  BenchmarkReport r;
  if (cfg.field_source == FieldSource::AnalyticMix) {
    std::vector<Field<double>> fields;
    for (auto& f : analytic_mix(cfg.num_objects)) fields.emplace_back(f);
    r = detail::run_benchmark_on<double>(cfg, fields, true);
    r.field_source = "analytic_mix";
  } else {
    DecoderShape shape;
    shape.latent_dim = cfg.latent_dim;
    shape.hidden_dim = cfg.hidden_dim;
    shape.depth = cfg.depth;
    const MlpSdfDecoder decoder = make_polytope_decoder(cfg.seed, shape);
    std::vector<LatentCode> latents;
    for (int i = 0; i < cfg.num_objects; ++i)
      latents.push_back(gen_random_latent(mix_seed(cfg.seed + 1 + std::uint64_t(i)), cfg.latent_dim));
    auto run = [&]<class T>(const BasicMlpDecoder<T>& dec) {
      std::vector<Field<T>> fields;
      for (const auto& z : latents) fields.emplace_back(LatentField<T>{&dec, z});
      return detail::run_benchmark_on<T>(cfg, fields, false);
    };
    if (cfg.precision == Precision::Float)
      r = run(MlpSdfDecoderF(decoder));
    else
      r = run(decoder);
    r.field_source = "seeded_decoder";
  }
  std::ostringstream note;
  note << r.threads << " worker thread(s), " << std::thread::hardware_concurrency()
       << " hardware thread(s)";
  r.note = note.str();
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::ordered_json report_to_json(const BenchmarkReport& r) {
  if (r.methods.empty()) throw InvalidArgument("benchmark report has no methods");
  nlohmann::ordered_json j;
  j["field_source"] = r.field_source;
  j["num_objects"] = r.num_objects;
  j["threads"] = r.threads;
  j["note"] = r.note;
  j["methods"] = nlohmann::ordered_json::array();
  for (const auto& m : r.methods) {
    if (m.median_s < m.min_s || m.max_s < m.median_s)
      throw InvalidArgument("timing distribution of " + m.method + " is inconsistent");
    nlohmann::ordered_json e;
    e["method"] = m.method;
    e["median_s"] = m.median_s;
    e["min_s"] = m.min_s;
    e["max_s"] = m.max_s;
    e["evals"] = m.evals;
    e["batches"] = m.batches;
    e["points"] = m.points;
    j["methods"].push_back(std::move(e));
  }
  j["speedups"] = {{"batched_vs_dense", r.speedup_batched_vs_dense},
                   {"batched_vs_sequential", r.speedup_batched_vs_sequential},
                   {"sequential_vs_dense", r.speedup_sequential_vs_dense}};
  return j;
}

inline BenchmarkReport report_from_json(const nlohmann::json& j) {
  try {
    BenchmarkReport r;
    r.field_source = j.at("field_source").get<std::string>();
    r.num_objects = j.at("num_objects").get<int>();
    r.threads = j.at("threads").get<unsigned>();
    r.note = j.at("note").get<std::string>();
    for (const auto& e : j.at("methods")) {
      MethodTiming m;
      m.method = e.at("method").get<std::string>();
      m.median_s = e.at("median_s").get<double>();
      m.min_s = e.at("min_s").get<double>();
      m.max_s = e.at("max_s").get<double>();
      m.evals = e.at("evals").get<std::size_t>();
      m.batches = e.at("batches").get<std::size_t>();
      m.points = e.at("points").get<std::size_t>();
      r.methods.push_back(std::move(m));
    }
    if (r.methods.empty()) throw FormatError("methods", "empty");
    const auto& s = j.at("speedups");
    r.speedup_batched_vs_dense = s.at("batched_vs_dense").get<double>();
    r.speedup_batched_vs_sequential = s.at("batched_vs_sequential").get<double>();
    r.speedup_sequential_vs_dense = s.at("sequential_vs_dense").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report", e.what());
  }
}

inline std::string report_to_csv(const BenchmarkReport& r) {
  if (r.methods.empty()) throw InvalidArgument("benchmark report has no methods");
  std::ostringstream out;
  out.precision(17);
  out << "method,median_s,min_s,max_s,evals,points\n";
  for (const auto& m : r.methods)
    out << m.method << ',' << m.median_s << ',' << m.min_s << ',' << m.max_s << ',' << m.evals
        << ',' << m.points << '\n';
  return out.str();
}

/// Reads a config document. Unknown keys are rejected.
inline BenchConfig bench_config_from_json(const nlohmann::json& j) {
  BenchConfig c;
  if (!j.is_object()) throw FormatError("config", "expected an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "num_objects") c.num_objects = v.get<int>();
      else if (key == "lod_end") c.lod_end = v.get<int>();
      else if (key == "dense_resolution") c.dense_resolution = v.get<int>();
      else if (key == "repetitions") c.repetitions = v.get<int>();
      else if (key == "warmup") c.warmup = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "latent_dim") c.latent_dim = v.get<std::uint32_t>();
      else if (key == "hidden_dim") c.hidden_dim = v.get<std::uint32_t>();
      else if (key == "depth") c.depth = v.get<std::uint32_t>();
      else if (key == "prune_factor") c.prune_factor = v.get<double>();
      else if (key == "threads") c.threads = v.get<unsigned>();
      else if (key == "precision") {
        const auto s = v.get<std::string>();
        if (s == "float") c.precision = Precision::Float;
        else if (s == "double") c.precision = Precision::Double;
        else throw FormatError("precision", "expected float or double");
      } else if (key == "field_source") {
        if (v.is_string() && v.get<std::string>() == "analytic_mix") {
          c.field_source = FieldSource::AnalyticMix;
        } else if (v.is_string() && v.get<std::string>() == "seeded_decoder") {
          c.field_source = FieldSource::SeededDecoder;
        } else if (v.is_object() && v.contains("seeded_decoder")) {
          c.field_source = FieldSource::SeededDecoder;
          const auto& sd = v.at("seeded_decoder");
          if (sd.is_object() && sd.contains("seed")) c.seed = sd.at("seed").get<std::uint64_t>();
        } else {
          throw FormatError("field_source", "expected analytic_mix or {\"seeded_decoder\":{..}}");
        }
      } else {
        throw FormatError(key, "unknown config key");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("config", e.what());
  }
  return c;
}

}  // namespace fsd
