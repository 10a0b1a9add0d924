#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsd/metrics.hpp"
#include "fsd/pose_geometry.hpp"
#include "fsd/types.hpp"
#include "fsd/weights_io.hpp"

namespace fsd {

// ---------------------------------------------------------------------------
// ASCII PLY

inline std::string format_double(double v) {
  char buf[32];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf, std::size_t(n));
}

/// Writes all clouds into one vertex element. With more than one cloud a
/// `comment object_index=<i> vertex_count=<n>` line records each object's
/// slice. Normals are written when every cloud has them.
inline std::string write_ply(std::span<const PointCloud> clouds) {
  std::size_t total = 0;
  bool normals = true;
  for (const auto& c : clouds) {
    total += c.size();
    normals = normals && c.normals.size() == c.size();
  }
  std::ostringstream out;
  out << "ply\nformat ascii 1.0\n";
  if (clouds.size() > 1)
    for (std::size_t i = 0; i < clouds.size(); ++i)
      out << "comment object_index=" << i << " vertex_count=" << clouds[i].size() << "\n";
  out << "element vertex " << total << "\n";
  for (const char* p : {"x", "y", "z"}) out << "property double " << p << "\n";
  if (normals)
    for (const char* p : {"nx", "ny", "nz"}) out << "property double " << p << "\n";
  out << "end_header\n";
  for (const auto& c : clouds)
    for (std::size_t i = 0; i < c.size(); ++i) {
      const auto& p = c.points[i];
      out << format_double(p.x()) << ' ' << format_double(p.y()) << ' ' << format_double(p.z());
      if (normals) {
        const auto& n = c.normals[i];
        out << ' ' << format_double(n.x()) << ' ' << format_double(n.y()) << ' '
            << format_double(n.z());
      }
      out << '\n';
    }
  return out.str();
}

inline std::string write_ply(const PointCloud& cloud) {
  return write_ply(std::span<const PointCloud>(&cloud, 1));
}

/// Parses an ASCII PLY with double/float x y z [nx ny nz] vertices. Object
/// comments split the result into one cloud per object.
inline std::vector<PointCloud> read_ply(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  auto next = [&](const char* field) {
    if (!std::getline(in, line)) throw FormatError(field, "unexpected end of file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next("magic");
  if (line != "ply") throw FormatError("magic", "expected ply");
  next("format");
  if (line != "format ascii 1.0") throw FormatError("format", "only ascii 1.0 is supported");

  std::size_t count = 0;
  bool have_vertex = false;
  std::vector<std::string> props;
  std::vector<std::size_t> slices;
  for (;;) {
    next("header");
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "comment") {
      std::string tok;
      std::size_t obj = 0, n = 0;
      bool has_obj = false, has_n = false;
      while (ls >> tok) {
        if (tok.rfind("object_index=", 0) == 0) {
          obj = std::stoull(tok.substr(13));
          has_obj = true;
        } else if (tok.rfind("vertex_count=", 0) == 0) {
          n = std::stoull(tok.substr(13));
          has_n = true;
        }
      }
      if (has_obj) {
        if (!has_n) throw FormatError("comment", "object_index without vertex_count");
        if (obj != slices.size()) throw FormatError("comment", "object indices out of order");
        slices.push_back(n);
      }
    } else if (kw == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex" || !ls) throw FormatError("element", "expected a vertex element");
      have_vertex = true;
    } else if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "double" && type != "float")
        throw FormatError("property", "unsupported type " + type);
      props.push_back(name);
    } else if (kw != "obj_info") {
      throw FormatError("header", "unexpected line '" + line + "'");
    }
  }
  if (!have_vertex) throw FormatError("element", "missing vertex element");
  const std::vector<std::string> xyz{"x", "y", "z"};
  const std::vector<std::string> xyzn{"x", "y", "z", "nx", "ny", "nz"};
  if (props != xyz && props != xyzn) throw FormatError("property", "expected x y z [nx ny nz]");
  const bool normals = props.size() == 6;

  std::size_t sum = 0;
  for (auto n : slices) sum += n;
  if (slices.empty()) slices.push_back(count);
  else if (sum != count) throw FormatError("comment", "vertex counts do not add up");

  std::vector<PointCloud> clouds(slices.size());
  std::size_t obj = 0, in_obj = 0;
  for (std::size_t i = 0; i < count; ++i) {
    next("vertex");
    double v[6];
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (std::size_t k = 0; k < props.size(); ++k) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      auto [q, ec] = std::from_chars(p, end, v[k]);
      if (ec != std::errc()) throw FormatError("vertex", "bad number on vertex " + std::to_string(i));
      p = q;
    }
    while (obj < slices.size() && in_obj == slices[obj]) {
      ++obj;
      in_obj = 0;
    }
    clouds[obj].points.emplace_back(v[0], v[1], v[2]);
    if (normals) clouds[obj].normals.emplace_back(v[3], v[4], v[5]);
    ++in_obj;
  }
  return clouds;
}

/// All objects of a PLY file as one cloud.
inline PointCloud read_ply_merged(std::string_view text) {
  PointCloud out;
  for (auto& c : read_ply(text)) {
    out.points.insert(out.points.end(), c.points.begin(), c.points.end());
    out.normals.insert(out.normals.end(), c.normals.begin(), c.normals.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// 16-bit PGM depth

struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 0;
  double scale_mm_per_unit = 1.0;
  std::vector<std::uint16_t> values;
};

inline PgmImage read_pgm(std::string_view data) {
  std::size_t pos = 0;
  PgmImage img;
  auto skip_space = [&] {
    for (;;) {
      while (pos < data.size() && std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
      if (pos < data.size() && data[pos] == '#') {
        const std::size_t eol = data.find('\n', pos);
        const std::string_view comment =
            data.substr(pos, eol == std::string_view::npos ? data.size() - pos : eol - pos);
        if (auto k = comment.find("scale_mm_per_unit="); k != std::string_view::npos) {
          const auto v = comment.substr(k + 18);
          auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), img.scale_mm_per_unit);
          if (ec != std::errc() || !(img.scale_mm_per_unit > 0.0))
            throw FormatError("scale_mm_per_unit", "must be a positive number");
        }
        pos = eol == std::string_view::npos ? data.size() : eol + 1;
        continue;
      }
      break;
    }
  };
  auto read_int = [&](const char* field) {
    skip_space();
    int v = 0;
    auto [p, ec] = std::from_chars(data.data() + pos, data.data() + data.size(), v);
    if (ec != std::errc()) throw FormatError(field, "expected an integer");
    pos = std::size_t(p - data.data());
    return v;
  };
  if (data.substr(0, 2) != "P5") throw FormatError("magic", "expected P5");
  pos = 2;
  img.width = read_int("width");
  img.height = read_int("height");
  img.maxval = read_int("maxval");
  if (img.width < 0 || img.height < 0) throw FormatError("width", "negative dimension");
  if (img.maxval < 1 || img.maxval > 65535) throw FormatError("maxval", "out of range");
  if (pos >= data.size() || !std::isspace(static_cast<unsigned char>(data[pos])))
    throw FormatError("header", "missing separator before raster");
  ++pos;
  const std::size_t bpp = img.maxval > 255 ? 2 : 1;
  const std::size_t n = std::size_t(img.width) * std::size_t(img.height);
  if (data.size() - pos < n * bpp) throw FormatError("raster", "truncated stream");
  img.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* b = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bpp);
    img.values[i] = bpp == 2 ? std::uint16_t((b[0] << 8) | b[1]) : b[0];
  }
  return img;
}

inline std::string write_pgm(const PgmImage& img) {
  std::string out = "P5\n# scale_mm_per_unit=" + format_double(img.scale_mm_per_unit) + "\n" +
                    std::to_string(img.width) + " " + std::to_string(img.height) + "\n" +
                    std::to_string(img.maxval) + "\n";
  const bool wide = img.maxval > 255;
  for (auto v : img.values) {
    if (wide) out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

/// Depth in meters from a PGM whose values times scale_mm_per_unit are mm.
inline DepthMap depth_from_pgm(const PgmImage& img) {
  DepthMap d(img.width, img.height, 0.0);
  for (std::size_t i = 0; i < img.values.size(); ++i)
    d.values[i] = double(img.values[i]) * img.scale_mm_per_unit / 1000.0;
  return d;
}

inline PgmImage depth_to_pgm(const DepthMap& depth, double scale_mm_per_unit = 1.0) {
  if (!(scale_mm_per_unit > 0.0)) throw InvalidArgument("scale must be positive");
  depth.validate();
  PgmImage img{depth.width, depth.height, 65535, scale_mm_per_unit, {}};
  img.values.reserve(depth.values.size());
  for (double m : depth.values) {
    const double units = std::round(m * 1000.0 / scale_mm_per_unit);
    if (units > 65535.0) throw InvalidArgument("depth exceeds the 16-bit range at this scale");
    img.values.push_back(std::uint16_t(units));
  }
  return img;
}

inline BinaryMask mask_from_pgm(const PgmImage& img) {
  BinaryMask m(img.width, img.height, 0);
  for (std::size_t i = 0; i < img.values.size(); ++i) m.values[i] = img.values[i] != 0;
  return m;
}

// ---------------------------------------------------------------------------
// Small JSON documents

inline nlohmann::json parse_json(std::string_view text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what, e.what());
  }
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics k;
  for (const char* key : {"fx", "fy", "cx", "cy"})
    if (!j.contains(key) || !j.at(key).is_number()) throw FormatError(key, "missing number");
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  return k;
}

/// Accepts a bare array or {"latent": [...]}.
inline LatentCode latent_from_json(const nlohmann::json& j) {
  const nlohmann::json& arr = j.is_object() && j.contains("latent") ? j.at("latent") : j;
  if (!arr.is_array()) throw FormatError("latent", "expected an array of numbers");
  std::vector<double> v;
  for (const auto& x : arr) {
    if (!x.is_number()) throw FormatError("latent", "expected numbers");
    v.push_back(x.get<double>());
  }
  try {
    return LatentCode(std::move(v));
  } catch (const InvalidArgument& e) {
    throw FormatError("latent", e.what());
  }
}

inline nlohmann::ordered_json latent_to_json(const LatentCode& z) {
  nlohmann::ordered_json j;
  j["latent"] = std::vector<double>(z.values().begin(), z.values().end());
  return j;
}

inline std::vector<PoseRecord> read_records_jsonl(std::string_view text) {
  std::vector<PoseRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("line " + std::to_string(n), e.what());
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(n) + " " + e.field(), e.what());
    }
  }
  return out;
}

}  // namespace fsd
