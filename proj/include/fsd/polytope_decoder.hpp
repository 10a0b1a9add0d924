#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "fsd/mlp_decoder.hpp"

namespace fsd {

struct PolytopeDecoderOptions {
  double base_offset = 0.45;     // mean plane distance from the origin
  double offset_jitter = 0.05;   // seeded per-face perturbation of the offset
  double latent_gain = 0.03;     // per-entry bound of the latent -> offset map
};

/// Builds a decoder with the standard architecture (rectifier hidden layers,
/// tanh output) whose weights are constructed rather than random, so that
///
///   f(q; z) = tanh( max_i ( n_i . q - h_i(z) ) ),   h_i(z) = c_i + a_i . z
///
/// i.e. a latent-controlled convex polytope with K unit face normals. The
/// maximum is evaluated as a tournament, one halving per hidden layer, using
/// max(a, b) = relu(b) - relu(-b) + relu(a - b). The field is 1-Lipschitz,
/// negative inside and has a genuine zero level set, which random weights do
/// not provide. K is the largest power of two with K <= 2^(depth-1) and
/// 3K/2 <= hidden_dim; unused hidden units carry zero weights.
inline MlpSdfDecoder make_polytope_decoder(std::uint64_t seed, DecoderShape shape = {},
                                           PolytopeDecoderOptions opt = {}) {
  if (shape.latent_dim < 1 || shape.depth < 1) throw InvalidArgument("invalid decoder shape");
  if (shape.depth > 1 && shape.hidden_dim < 3)
    throw InvalidArgument("polytope decoder needs hidden_dim >= 3");

  std::size_t faces = 1;
  while (shape.depth > 1 && faces * 2 <= (std::size_t(1) << std::min<std::uint32_t>(shape.depth - 1, 20)) &&
         3 * faces <= shape.hidden_dim)
    faces *= 2;

  SplitMix64 rng(mix_seed(seed ^ 0x706f6c79ULL));
  const std::size_t in_dim = shape.latent_dim + 3;
  const double latent_bound = opt.latent_gain * std::sqrt(64.0 / shape.latent_dim);

  // A value is a linear functional over the current layer inputs.
  struct Linear {
    std::vector<double> coef;
    double bias = 0.0;
  };
  std::vector<Linear> values;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < faces; ++i) {
    Vec3 n(0, 0, 1);
    if (faces > 1) {
      const double y = 1.0 - 2.0 * (double(i) + 0.5) / double(faces);
      const double r = std::sqrt(1.0 - y * y);
      n = Vec3(r * std::cos(golden * double(i)), y, r * std::sin(golden * double(i)));
    }
    Linear v;
    v.coef.assign(in_dim, 0.0);
    for (std::uint32_t k = 0; k < shape.latent_dim; ++k)
      v.coef[k] = -uniform(rng, -latent_bound, latent_bound);
    for (int j = 0; j < 3; ++j) v.coef[shape.latent_dim + j] = n[j];
    v.bias = -(opt.base_offset + uniform(rng, -opt.offset_jitter, opt.offset_jitter));
    values.push_back(std::move(v));
  }

  std::vector<DenseLayer> layers;
  std::size_t width = in_dim;
  for (std::uint32_t l = 0; l + 1 < shape.depth; ++l) {
    DenseLayer layer;
    layer.rows = shape.hidden_dim;
    layer.cols = static_cast<std::uint32_t>(width);
    layer.weight.assign(std::size_t(layer.rows) * layer.cols, 0.0f);
    layer.bias.assign(layer.rows, 0.0f);
    std::uint32_t unit = 0;
    auto emit = [&](const Linear& a, double sign_a, const Linear* b, double sign_b) {
      for (std::size_t k = 0; k < width; ++k) {
        double w = sign_a * a.coef[k];
        if (b) w += sign_b * b->coef[k];
        layer.weight[std::size_t(unit) * width + k] = static_cast<float>(w);
      }
      double bias = sign_a * a.bias;
      if (b) bias += sign_b * b->bias;
      layer.bias[unit] = static_cast<float>(bias);
      return unit++;
    };
    std::vector<Linear> next;
    for (std::size_t i = 0; i < values.size(); i += 2) {
      Linear out;
      out.coef.assign(shape.hidden_dim, 0.0);
      if (i + 1 < values.size()) {
        const auto& a = values[i];
        const auto& b = values[i + 1];
        out.coef[emit(a, 1.0, &b, -1.0)] = 1.0;
        out.coef[emit(b, 1.0, nullptr, 0.0)] = 1.0;
        out.coef[emit(b, -1.0, nullptr, 0.0)] = -1.0;
      } else {
        out.coef[emit(values[i], 1.0, nullptr, 0.0)] = 1.0;
        out.coef[emit(values[i], -1.0, nullptr, 0.0)] = -1.0;
      }
      next.push_back(std::move(out));
    }
    values = std::move(next);
    width = shape.hidden_dim;
    layers.push_back(std::move(layer));
  }

  DenseLayer out;
  out.rows = 1;
  out.cols = static_cast<std::uint32_t>(width);
  out.weight.resize(width);
  for (std::size_t k = 0; k < width; ++k) out.weight[k] = static_cast<float>(values[0].coef[k]);
  out.bias = {static_cast<float>(values[0].bias)};
  layers.push_back(std::move(out));
  return MlpSdfDecoder(shape, std::move(layers));
}

}  // namespace fsd
