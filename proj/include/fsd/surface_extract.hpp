#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsd/field.hpp"
#include "fsd/types.hpp"

namespace fsd {

/// Octree level-of-detail extraction settings. Level L splits the canonical
/// cube [-1,1]^3 into (2^L)^3 voxels of edge 2 / 2^L; a voxel survives while
/// |f(center)| <= prune_factor * edge.
struct ExtractionConfig {
  int lod_start = 1;
  int lod_end = 6;
  double prune_factor = 1.0;
  int projection_steps = 1;
  bool normalize_gradient = true;
  double gradient_floor = 1e-8;
  unsigned threads = 0;  // 0: FSD_THREADS or hardware concurrency

  void validate() const {
    if (lod_start < 1 || lod_start > lod_end || lod_end > 12)
      throw InvalidArgument("LoD range must satisfy 1 <= lod_start <= lod_end <= 12");
    if (!(prune_factor > 0.0)) throw InvalidArgument("prune_factor must be positive");
    if (projection_steps < 0) throw InvalidArgument("projection_steps must be >= 0");
    if (!(gradient_floor >= 0.0)) throw InvalidArgument("gradient_floor must be >= 0");
  }
};

inline double voxel_edge(int level) { return 2.0 / double(std::uint64_t(1) << level); }

/// Morton (z-order) code of grid cell (ix, iy, iz): bits interleaved x, y, z
/// from most to least significant. Children of cell c are c * 8 + [0, 8), so
/// subdividing a sorted frontier in order keeps it sorted.
inline std::uint64_t morton_encode(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) {
  std::uint64_t code = 0;
  for (int b = 20; b >= 0; --b) {
    code = (code << 3) | (std::uint64_t((ix >> b) & 1u) << 2) |
           (std::uint64_t((iy >> b) & 1u) << 1) | std::uint64_t((iz >> b) & 1u);
  }
  return code;
}

inline void morton_decode(std::uint64_t code, std::uint32_t& ix, std::uint32_t& iy,
                          std::uint32_t& iz) {
  ix = iy = iz = 0;
  for (int b = 0; b <= 20; ++b) {
    iz |= std::uint32_t((code >> (3 * b)) & 1u) << b;
    iy |= std::uint32_t((code >> (3 * b + 1)) & 1u) << b;
    ix |= std::uint32_t((code >> (3 * b + 2)) & 1u) << b;
  }
}

/// Center of grid cell i along one axis at a given edge length.
inline double cell_center(std::uint32_t i, double edge) { return -1.0 + edge * (double(i) + 0.5); }

struct VoxelEntry {
  std::uint32_t object_index;
  Vec3 center;
  double edge;
};

/// Live voxels of all objects at one octree level, sorted by
/// (object_index, Morton code) without duplicates.
class VoxelFrontier {
 public:
  VoxelFrontier() = default;
  VoxelFrontier(int level, std::vector<std::uint32_t> objects, std::vector<std::uint64_t> codes)
      : level_(level), objects_(std::move(objects)), codes_(std::move(codes)) {
    if (objects_.size() != codes_.size())
      throw InvalidArgument("frontier object and code arrays differ in length");
  }

  int level() const { return level_; }
  double edge() const { return voxel_edge(level_); }
  std::size_t size() const { return codes_.size(); }
  bool empty() const { return codes_.empty(); }
  std::span<const std::uint32_t> objects() const { return objects_; }
  std::span<const std::uint64_t> codes() const { return codes_; }

  Vec3 center(std::size_t i) const {
    std::uint32_t ix, iy, iz;
    morton_decode(codes_[i], ix, iy, iz);
    const double e = edge();
    return Vec3(cell_center(ix, e), cell_center(iy, e), cell_center(iz, e));
  }

  VoxelEntry entry(std::size_t i) const { return {objects_[i], center(i), edge()}; }

  std::vector<Vec3> centers() const {
    std::vector<Vec3> out(size());
    for (std::size_t i = 0; i < size(); ++i) out[i] = center(i);
    return out;
  }

  /// Offsets [begin, end) of each object's entries; objects absent from the
  /// frontier get empty ranges.
  std::vector<std::pair<std::size_t, std::size_t>> object_ranges(std::size_t num_objects) const {
    std::vector<std::pair<std::size_t, std::size_t>> ranges(num_objects, {0, 0});
    std::size_t i = 0;
    for (std::size_t o = 0; o < num_objects; ++o) {
      const std::size_t begin = i;
      while (i < objects_.size() && objects_[i] == o) ++i;
      ranges[o] = {begin, i};
    }
    return ranges;
  }

 private:
  int level_ = 0;
  std::vector<std::uint32_t> objects_;
  std::vector<std::uint64_t> codes_;
};

inline VoxelFrontier init_frontier(std::size_t num_objects, int lod_start) {
  if (num_objects < 1) throw InvalidArgument("init_frontier needs at least one object");
  if (lod_start < 0 || lod_start > 12) throw InvalidArgument("lod_start out of range");
  const std::uint64_t cells = std::uint64_t(1) << (3 * lod_start);
  std::vector<std::uint32_t> objects;
  std::vector<std::uint64_t> codes;
  objects.reserve(num_objects * cells);
  codes.reserve(num_objects * cells);
  for (std::uint32_t o = 0; o < num_objects; ++o)
    for (std::uint64_t c = 0; c < cells; ++c) {
      objects.push_back(o);
      codes.push_back(c);
    }
  return VoxelFrontier(lod_start, std::move(objects), std::move(codes));
}

/// Keeps entries with |f(center)| <= prune_factor * edge. All entries are
/// evaluated in one concatenated batch.
template <class T>
VoxelFrontier prune_frontier(const VoxelFrontier& frontier, const FieldSet<T>& fields,
                             const ExtractionConfig& config, EvalStats* stats = nullptr) {
  const std::vector<Vec3> centers = frontier.centers();
  std::vector<double> values(centers.size());
  fields.evaluate(frontier.objects(), centers, values, {}, config.threads, stats);
  const double tau = config.prune_factor * frontier.edge();
  std::vector<std::uint32_t> objects;
  std::vector<std::uint64_t> codes;
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (std::abs(values[i]) <= tau) {
      objects.push_back(frontier.objects()[i]);
      codes.push_back(frontier.codes()[i]);
    }
  }
  return VoxelFrontier(frontier.level(), std::move(objects), std::move(codes));
}

/// Prunes at the current level and splits every survivor into its 8
/// children at level + 1.
template <class T>
VoxelFrontier refine_frontier(const VoxelFrontier& frontier, const FieldSet<T>& fields,
                              const ExtractionConfig& config, EvalStats* stats = nullptr) {
  if (frontier.level() >= config.lod_end)
    throw InvalidArgument("refine_frontier: frontier already at lod_end");
  const VoxelFrontier kept = prune_frontier(frontier, fields, config, stats);
  std::vector<std::uint32_t> objects;
  std::vector<std::uint64_t> codes;
  objects.reserve(kept.size() * 8);
  codes.reserve(kept.size() * 8);
  for (std::size_t i = 0; i < kept.size(); ++i)
    for (std::uint64_t c = 0; c < 8; ++c) {
      objects.push_back(kept.objects()[i]);
      codes.push_back(kept.codes()[i] * 8 + c);
    }
  return VoxelFrontier(frontier.level() + 1, std::move(objects), std::move(codes));
}

struct ProjectionResult {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;       // unit length, zero where flagged
  std::vector<double> residuals;   // |f(p_final)|
  std::vector<std::uint8_t> flagged;  // gradient fell below the floor
};

/// Moves each point along the SDF gradient by its signed distance:
/// p <- p - g * f(p), `projection_steps` times, with g normalized unless the
/// raw-gradient mode is selected. Points whose gradient norm is below
/// `gradient_floor` stay put and are flagged.
template <class T>
ProjectionResult project_to_surface(const FieldSet<T>& fields,
                                    std::span<const std::uint32_t> objects,
                                    std::span<const Vec3> points, const ExtractionConfig& config,
                                    EvalStats* stats = nullptr) {
  for (const auto& p : points)
    if (!p.allFinite()) throw InvalidArgument("projection points must be finite");
  ProjectionResult r;
  r.points.assign(points.begin(), points.end());
  r.flagged.assign(points.size(), 0);
  std::vector<double> values(points.size());
  std::vector<Vec3> grads(points.size());
  for (int step = 0; step <= config.projection_steps; ++step) {
    fields.evaluate(objects, r.points, values, grads, config.threads, stats);
    if (step == config.projection_steps) break;
    for (std::size_t i = 0; i < r.points.size(); ++i) {
      const double norm = grads[i].norm();
      if (!(norm >= config.gradient_floor) || norm == 0.0) {
        r.flagged[i] = 1;
        continue;
      }
      const Vec3 dir = config.normalize_gradient ? Vec3(grads[i] / norm) : grads[i];
      r.points[i] -= dir * values[i];
    }
  }
  r.normals.resize(points.size());
  r.residuals.resize(points.size());
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    const double norm = grads[i].norm();
    if (!(norm >= config.gradient_floor) || norm == 0.0) {
      r.flagged[i] = 1;
      r.normals[i] = Vec3::Zero();
    } else {
      r.normals[i] = grads[i] / norm;
    }
    r.residuals[i] = std::abs(values[i]);
  }
  return r;
}

/// Single-field convenience overload.
template <class T>
ProjectionResult project_to_surface(const Field<T>& field, std::span<const Vec3> points,
                                    const ExtractionConfig& config, EvalStats* stats = nullptr) {
  FieldSet<T> set({field});
  const std::vector<std::uint32_t> objects(points.size(), 0);
  return project_to_surface(set, objects, points, config, stats);
}

/// Extraction output of one object, in the canonical frame.
struct ExtractedSurface {
  PointCloud cloud;                    // projected points, normals, residuals
  std::vector<Vec3> voxel_centers;     // surviving lod_end centers, pre-projection
  std::vector<std::uint64_t> voxel_codes;
  std::vector<std::uint8_t> flagged;

  bool operator==(const ExtractedSurface& o) const {
    return cloud.points == o.cloud.points && cloud.normals == o.cloud.normals &&
           cloud.residuals == o.cloud.residuals && voxel_codes == o.voxel_codes &&
           flagged == o.flagged;
  }
};

struct ExtractionStats {
  EvalStats evals;
  std::vector<std::size_t> survivors_per_level;  // index 0 is lod_start
};

/// Recursive octree extraction over all objects at once: one shared frontier,
/// one evaluation batch per level, per-object outputs split at the
/// object-index boundaries of the final frontier.
template <class T>
std::vector<ExtractedSurface> extract_batched(const FieldSet<T>& fields,
                                              const ExtractionConfig& config,
                                              ExtractionStats* stats = nullptr) {
  config.validate();
  if (fields.size() == 0) throw InvalidArgument("extract_batched needs at least one field");
  EvalStats* ev = stats ? &stats->evals : nullptr;

  VoxelFrontier frontier = init_frontier(fields.size(), config.lod_start);
  while (frontier.level() < config.lod_end) {
    frontier = refine_frontier(frontier, fields, config, ev);
    if (stats) stats->survivors_per_level.push_back(frontier.size() / 8);
  }
  frontier = prune_frontier(frontier, fields, config, ev);
  if (stats) stats->survivors_per_level.push_back(frontier.size());

  const std::vector<Vec3> centers = frontier.centers();
  ProjectionResult proj = project_to_surface(fields, frontier.objects(), centers, config, ev);

  std::vector<ExtractedSurface> out(fields.size());
  const auto ranges = frontier.object_ranges(fields.size());
  for (std::size_t o = 0; o < fields.size(); ++o) {
    const auto [b, e] = ranges[o];
    auto& s = out[o];
    s.cloud.points.assign(proj.points.begin() + b, proj.points.begin() + e);
    s.cloud.normals.assign(proj.normals.begin() + b, proj.normals.begin() + e);
    s.cloud.residuals.assign(proj.residuals.begin() + b, proj.residuals.begin() + e);
    s.voxel_centers.assign(centers.begin() + b, centers.begin() + e);
    s.voxel_codes.assign(frontier.codes().begin() + b, frontier.codes().begin() + e);
    s.flagged.assign(proj.flagged.begin() + b, proj.flagged.begin() + e);
  }
  return out;
}

template <class T>
std::vector<ExtractedSurface> extract_batched(std::vector<Field<T>> fields,
                                              const ExtractionConfig& config,
                                              ExtractionStats* stats = nullptr) {
  return extract_batched(FieldSet<T>(std::move(fields)), config, stats);
}

/// Per-object baseline: the same pipeline run once per field.
template <class T>
std::vector<ExtractedSurface> extract_sequential(const std::vector<Field<T>>& fields,
                                                 const ExtractionConfig& config,
                                                 ExtractionStats* stats = nullptr) {
  std::vector<ExtractedSurface> out;
  out.reserve(fields.size());
  for (const auto& f : fields) {
    ExtractionStats local;
    auto single = extract_batched(FieldSet<T>({f}), config, stats ? &local : nullptr);
    out.push_back(std::move(single[0]));
    if (stats) {
      stats->evals += local.evals;
      if (stats->survivors_per_level.size() < local.survivors_per_level.size())
        stats->survivors_per_level.resize(local.survivors_per_level.size(), 0);
      for (std::size_t i = 0; i < local.survivors_per_level.size(); ++i)
        stats->survivors_per_level[i] += local.survivors_per_level[i];
    }
  }
  return out;
}

struct DenseExtraction {
  int resolution = 0;
  std::vector<Vec3> kept_centers;           // x-major, then y, then z
  std::vector<std::uint64_t> kept_indices;  // (ix * res + iy) * res + iz
  ProjectionResult projected;
};

/// Brute-force baseline: evaluates every cell center of a resolution^3 grid,
/// keeps |f| <= prune_factor * edge and projects the kept centers.
template <class T>
DenseExtraction dense_grid_extract(const Field<T>& field, int resolution,
                                   const ExtractionConfig& config, EvalStats* stats = nullptr) {
  if (resolution < 2) throw InvalidArgument("dense resolution must be >= 2");
  const FieldSet<T> set({field});
  const std::size_t res = std::size_t(resolution);
  const double edge = 2.0 / double(resolution);
  const std::size_t n = res * res * res;
  std::vector<Vec3> centers(n);
  for (std::size_t ix = 0; ix < res; ++ix)
    for (std::size_t iy = 0; iy < res; ++iy)
      for (std::size_t iz = 0; iz < res; ++iz)
        centers[(ix * res + iy) * res + iz] =
            Vec3(cell_center(std::uint32_t(ix), edge), cell_center(std::uint32_t(iy), edge),
                 cell_center(std::uint32_t(iz), edge));
  const std::vector<std::uint32_t> objects(n, 0);
  std::vector<double> values(n);
  set.evaluate(objects, centers, values, {}, config.threads, stats);

  DenseExtraction out;
  out.resolution = resolution;
  const double tau = config.prune_factor * edge;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(values[i]) <= tau) {
      out.kept_centers.push_back(centers[i]);
      out.kept_indices.push_back(i);
    }
  }
  const std::vector<std::uint32_t> kept_objects(out.kept_centers.size(), 0);
  out.projected = project_to_surface(set, kept_objects, out.kept_centers, config, stats);
  return out;
}

/// Morton codes of dense-grid indices; valid when resolution is a power of two.
inline std::vector<std::uint64_t> dense_indices_to_morton(std::span<const std::uint64_t> indices,
                                                          int resolution) {
  std::vector<std::uint64_t> out;
  out.reserve(indices.size());
  const std::uint64_t res = std::uint64_t(resolution);
  for (std::uint64_t i : indices) {
    const auto iz = std::uint32_t(i % res);
    const auto iy = std::uint32_t((i / res) % res);
    const auto ix = std::uint32_t(i / (res * res));
    out.push_back(morton_encode(ix, iy, iz));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace fsd
