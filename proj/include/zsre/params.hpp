#pragma once

#include <span>
#include <string>
#include <vector>

#include "zsre/encoding.hpp"
#include "zsre/model_head.hpp"

namespace zsre {

// Everything the optimizer updates. `encoder` is empty (zero-row embedding)
// when hidden states are precomputed.
struct ModelParams {
  EncoderParams encoder;
  HeadParams head;

  ModelParams zeros_like() const { return {encoder.zeros_like(), head.zeros_like()}; }
  bool operator==(const ModelParams&) const = default;
};

struct TensorView {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::span<double> values;
};

struct ConstTensorView {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  std::span<const double> values;
};

// Named tensors in a fixed order. Encoder tensors are listed only when
// `include_encoder` is set and the encoder has a table.
std::vector<TensorView> tensors(ModelParams& params, bool include_encoder);
std::vector<ConstTensorView> tensors(const ModelParams& params, bool include_encoder);

}  // namespace zsre
