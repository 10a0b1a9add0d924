#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fsd/analytic_field.hpp"
#include "fsd/mlp_decoder.hpp"
#include "fsd/parallel.hpp"

namespace fsd {

/// A decoder paired with one object's latent code. The decoder is not owned
/// and must outlive every use of the binding.
template <class T = double>
struct LatentField {
  const BasicMlpDecoder<T>* decoder = nullptr;
  LatentCode latent;
};

template <class T = double>
using Field = std::variant<AnalyticField, LatentField<T>>;

/// Evaluation counters, accumulated across calls.
struct EvalStats {
  std::size_t value_evals = 0;     // points evaluated (with or without gradient)
  std::size_t gradient_evals = 0;  // points that also produced df/dq
  std::size_t batches = 0;         // calls into the batch evaluator

  EvalStats& operator+=(const EvalStats& o) {
    value_evals += o.value_evals;
    gradient_evals += o.gradient_evals;
    batches += o.batches;
    return *this;
  }
};

/// One field per object, evaluated together as a single concatenated batch.
/// Points are tagged with their object index; consecutive points that share a
/// decoder go through the MLP kernel together regardless of object.
template <class T = double>
class FieldSet {
 public:
  static constexpr std::size_t kChunk = 256;

  explicit FieldSet(std::vector<Field<T>> fields) : fields_(std::move(fields)) {
    latents_.resize(fields_.size());
    for (std::size_t i = 0; i < fields_.size(); ++i) {
      if (auto* lf = std::get_if<LatentField<T>>(&fields_[i])) {
        if (!lf->decoder) throw InvalidArgument("field " + std::to_string(i) + " has no decoder");
        latents_[i] = lf->decoder->convert_latent(lf->latent);
      }
    }
  }

  std::size_t size() const { return fields_.size(); }
  const Field<T>& operator[](std::size_t i) const { return fields_[i]; }

  /// `gradients` may be empty when only values are wanted.
  void evaluate(std::span<const std::uint32_t> objects, std::span<const Vec3> points,
                std::span<double> values, std::span<Vec3> gradients, unsigned threads,
                EvalStats* stats = nullptr) const {
    if (objects.size() != points.size() || values.size() != points.size() ||
        (!gradients.empty() && gradients.size() != points.size()))
      throw InvalidArgument("batch spans have mismatched lengths");
    for (std::uint32_t o : objects)
      if (o >= fields_.size())
        throw InvalidArgument("object_index " + std::to_string(o) +
                              " has no corresponding field");

    parallel_chunks(points.size(), kChunk, threads, [&](std::size_t b, std::size_t e) {
      evaluate_range(objects, points, values, gradients, b, e);
    });
    if (stats) {
      stats->value_evals += points.size();
      if (!gradients.empty()) stats->gradient_evals += points.size();
      ++stats->batches;
    }
  }

 private:
  const BasicMlpDecoder<T>* decoder_of(std::uint32_t o) const {
    if (auto* lf = std::get_if<LatentField<T>>(&fields_[o])) return lf->decoder;
    return nullptr;
  }

  void evaluate_range(std::span<const std::uint32_t> objects, std::span<const Vec3> points,
                      std::span<double> values, std::span<Vec3> gradients, std::size_t begin,
                      std::size_t end) const {
    const bool want_grad = !gradients.empty();
    std::vector<const T*> latent_ptrs;
    std::size_t i = begin;
    while (i < end) {
      const auto* decoder = decoder_of(objects[i]);
      if (!decoder) {
        const auto& field = std::get<AnalyticField>(fields_[objects[i]]);
        values[i] = field.value(points[i]);
        if (want_grad) gradients[i] = field.gradient(points[i]);
        ++i;
        continue;
      }
      std::size_t j = i;
      while (j < end && decoder_of(objects[j]) == decoder) ++j;
      latent_ptrs.resize(j - i);
      for (std::size_t k = i; k < j; ++k) latent_ptrs[k - i] = latents_[objects[k]].data();
      decoder->evaluate_batch(points.subspan(i, j - i), latent_ptrs, values.subspan(i, j - i),
                              want_grad ? gradients.subspan(i, j - i) : gradients);
      i = j;
    }
  }

  std::vector<Field<T>> fields_;
  std::vector<std::vector<T>> latents_;
};

}  // namespace fsd
