#pragma once

// Straightforward layer-by-layer reference forward pass, used as a test oracle
// for the packed decoder kernel.

#include <cmath>
#include <vector>

#include "fsd/mlp_decoder.hpp"

namespace fsd::testing {

/// Forward pass in double. `pre`, when given, receives every hidden
/// pre-activation in layer order.
inline double naive_forward(const MlpSdfDecoder& dec, const LatentCode& z, const Vec3& q,
                            std::vector<double>* pre = nullptr) {
  std::vector<double> x(z.values().begin(), z.values().end());
  x.push_back(q.x());
  x.push_back(q.y());
  x.push_back(q.z());
  if (pre) pre->clear();
  const auto& layers = dec.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    std::vector<double> y(L.rows);
    for (std::uint32_t r = 0; r < L.rows; ++r) {
      double acc = L.bias[r];
      for (std::uint32_t c = 0; c < L.cols; ++c) acc += double(L.at(r, c)) * x[c];
      y[r] = acc;
    }
    if (l + 1 < layers.size()) {
      if (pre) pre->insert(pre->end(), y.begin(), y.end());
      for (auto& v : y) v = v > 0.0 ? v : 0.0;
    }
    x = std::move(y);
  }
  return dec.output_activation() == OutputActivation::Tanh ? std::tanh(x[0]) : x[0];
}

inline Vec3 central_difference(const MlpSdfDecoder& dec, const LatentCode& z, const Vec3& q,
                               double h = 1e-4) {
  Vec3 g;
  for (int k = 0; k < 3; ++k) {
    Vec3 a = q, b = q;
    a[k] += h;
    b[k] -= h;
    g[k] = (naive_forward(dec, z, a) - naive_forward(dec, z, b)) / (2.0 * h);
  }
  return g;
}

inline double min_abs(const std::vector<double>& v) {
  double m = INFINITY;
  for (double x : v) m = std::min(m, std::abs(x));
  return m;
}

/// True when no hidden unit changes sign anywhere on the central-difference
/// stencil around q.
inline bool stencil_sign_stable(const MlpSdfDecoder& dec, const LatentCode& z, const Vec3& q,
                                double h = 1e-4) {
  std::vector<double> base, other;
  naive_forward(dec, z, q, &base);
  for (int k = 0; k < 3; ++k)
    for (double s : {-h, h}) {
      Vec3 p = q;
      p[k] += s;
      naive_forward(dec, z, p, &other);
      for (std::size_t i = 0; i < base.size(); ++i)
        if ((base[i] > 0.0) != (other[i] > 0.0)) return false;
    }
  return true;
}

}  // namespace fsd::testing
