#pragma once

// FSDW decoder weight files.
//
// Binary layout (little-endian):
//   "FSDW" | u32 version=1 | u32 depth | u32 latent_dim | u32 hidden_dim |
//   u8 output_activation (0 none, 1 tanh) |
//   per layer: u32 rows | u32 cols | rows*cols f32 (row-major) | rows f32 bias
//
// The JSON form carries the same fields with nested arrays:
//   {"depth":2,"latent_dim":1,"hidden_dim":2,"output_activation":1,
//    "layers":[{"weights":[[..],[..]],"biases":[..]}, ...]}

#include <array>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsd/mlp_decoder.hpp"

namespace fsd {

inline constexpr std::array<char, 4> kWeightsMagic{'F', 'S', 'D', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint8_t u8(const std::string& field) {
    need(1, field);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= std::uint32_t(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  void f32s(std::vector<float>& out, std::size_t n, const std::string& field) {
    need(n * 4, field);
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t v = 0;
      for (int b = 0; b < 4; ++b)
        v |= std::uint32_t(static_cast<std::uint8_t>(data_[pos_ + b])) << (8 * b);
      out[i] = std::bit_cast<float>(v);
      pos_ += 4;
    }
  }
  std::string_view bytes(std::size_t n, const std::string& field) {
    need(n, field);
    auto v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n, const std::string& field) const {
    if (data_.size() - pos_ < n) throw FormatError(field, "truncated stream");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline OutputActivation parse_activation(std::uint32_t code) {
  if (code == 0) return OutputActivation::None;
  if (code == 1) return OutputActivation::Tanh;
  throw FormatError("output_activation", "unknown code " + std::to_string(code));
}

}  // namespace detail

template <class T>
std::string save_weights(const BasicMlpDecoder<T>& decoder) {
  detail::ByteWriter w;
  w.raw(kWeightsMagic.data(), kWeightsMagic.size());
  w.u32(kWeightsVersion);
  w.u32(decoder.depth());
  w.u32(decoder.latent_dim());
  w.u32(decoder.hidden_dim());
  w.u8(static_cast<std::uint8_t>(decoder.output_activation()));
  for (const auto& layer : decoder.layers()) {
    w.u32(layer.rows);
    w.u32(layer.cols);
    for (float v : layer.weight) w.f32(v);
    for (float v : layer.bias) w.f32(v);
  }
  return w.take();
}

inline MlpSdfDecoder load_weights_binary(std::string_view data) {
  detail::ByteReader r(data);
  const auto magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kWeightsMagic.data(), 4) != 0)
    throw FormatError("magic", "expected FSDW");
  const std::uint32_t version = r.u32("version");
  if (version != kWeightsVersion)
    throw FormatError("version", "unsupported version " + std::to_string(version));
  DecoderShape shape;
  shape.depth = r.u32("depth");
  shape.latent_dim = r.u32("latent_dim");
  shape.hidden_dim = r.u32("hidden_dim");
  shape.output_activation = detail::parse_activation(r.u8("output_activation"));
  if (shape.depth < 1 || shape.depth > 4096) throw FormatError("depth", "out of range");

  std::vector<DenseLayer> layers(shape.depth);
  for (std::uint32_t l = 0; l < shape.depth; ++l) {
    const std::string name = "layers[" + std::to_string(l) + "]";
    auto& layer = layers[l];
    layer.rows = r.u32(name + ".rows");
    layer.cols = r.u32(name + ".cols");
    const std::uint32_t want_cols = l == 0 ? shape.latent_dim + 3 : shape.hidden_dim;
    const std::uint32_t want_rows = l + 1 == shape.depth ? 1 : shape.hidden_dim;
    if (layer.rows != want_rows)
      throw FormatError(name + ".rows", "expected " + std::to_string(want_rows) + ", got " +
                                            std::to_string(layer.rows));
    if (layer.cols != want_cols)
      throw FormatError(name + ".cols", "expected " + std::to_string(want_cols) + ", got " +
                                            std::to_string(layer.cols));
    r.f32s(layer.weight, std::size_t(layer.rows) * layer.cols, name + ".weights");
    r.f32s(layer.bias, layer.rows, name + ".biases");
  }
  if (!r.at_end()) throw FormatError("trailer", "unexpected bytes after last layer");
  return MlpSdfDecoder(shape, std::move(layers));
}

inline MlpSdfDecoder load_weights_json(const nlohmann::json& j) {
  auto field = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw FormatError(key, "missing");
    return j.at(key);
  };
  try {
    DecoderShape shape;
    shape.depth = field("depth").get<std::uint32_t>();
    shape.latent_dim = field("latent_dim").get<std::uint32_t>();
    shape.hidden_dim = field("hidden_dim").get<std::uint32_t>();
    const auto& act = field("output_activation");
    if (act.is_string()) {
      const auto s = act.get<std::string>();
      if (s == "none")
        shape.output_activation = OutputActivation::None;
      else if (s == "tanh")
        shape.output_activation = OutputActivation::Tanh;
      else
        throw FormatError("output_activation", "unknown value " + s);
    } else {
      shape.output_activation = detail::parse_activation(act.get<std::uint32_t>());
    }
    std::vector<DenseLayer> layers;
    const auto& jl = field("layers");
    for (std::size_t l = 0; l < jl.size(); ++l) {
      const std::string name = "layers[" + std::to_string(l) + "]";
      const auto& entry = jl.at(l);
      if (!entry.contains("weights")) throw FormatError(name + ".weights", "missing");
      if (!entry.contains("biases")) throw FormatError(name + ".biases", "missing");
      DenseLayer layer;
      const auto& rows = entry.at("weights");
      layer.rows = static_cast<std::uint32_t>(rows.size());
      layer.cols = rows.empty() ? 0 : static_cast<std::uint32_t>(rows.at(0).size());
      for (const auto& row : rows) {
        if (row.size() != layer.cols) throw FormatError(name + ".weights", "ragged rows");
        for (const auto& v : row) layer.weight.push_back(v.get<float>());
      }
      for (const auto& v : entry.at("biases")) layer.bias.push_back(v.get<float>());
      layers.push_back(std::move(layer));
    }
    return MlpSdfDecoder(shape, std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("json", e.what());
  }
}

template <class T>
nlohmann::json weights_to_json(const BasicMlpDecoder<T>& decoder) {
  nlohmann::json j;
  j["depth"] = decoder.depth();
  j["latent_dim"] = decoder.latent_dim();
  j["hidden_dim"] = decoder.hidden_dim();
  j["output_activation"] = static_cast<int>(decoder.output_activation());
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : decoder.layers()) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::uint32_t r = 0; r < layer.rows; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (std::uint32_t c = 0; c < layer.cols; ++c) row.push_back(layer.at(r, c));
      rows.push_back(std::move(row));
    }
    j["layers"].push_back({{"weights", std::move(rows)}, {"biases", layer.bias}});
  }
  return j;
}

/// Accepts either the binary or the JSON form.
inline MlpSdfDecoder load_weights(std::string_view data) {
  std::size_t i = 0;
  while (i < data.size() && std::isspace(static_cast<unsigned char>(data[i]))) ++i;
  if (i < data.size() && data[i] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(data);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("json", e.what());
    }
    return load_weights_json(j);
  }
  return load_weights_binary(data);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::ios_base::failure("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::ios_base::failure("cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw std::ios_base::failure("write failed for " + path);
}

inline MlpSdfDecoder load_weights_file(const std::string& path) {
  return load_weights(read_file_bytes(path));
}

template <class T>
void save_weights_file(const BasicMlpDecoder<T>& decoder, const std::string& path) {
  write_file_bytes(path, save_weights(decoder));
}

}  // namespace fsd
