#include "zsre/params.hpp"

namespace zsre {

namespace {

template <typename View, typename P>
std::vector<View> collect(P& p, bool include_encoder) {
  std::vector<View> out;
  auto mat = [&](const char* name, auto& m) { out.push_back({name, m.rows, m.cols, {m.data.data(), m.data.size()}}); };
  auto vec = [&](const char* name, auto& v) { out.push_back({name, v.size(), 1, {v.data(), v.size()}}); };
  if (include_encoder && p.encoder.embedding.rows > 0) {
    mat("encoder.embedding", p.encoder.embedding);
    if (p.encoder.mixing) {
      mat("encoder.mix_weight", p.encoder.mix_weight);
      vec("encoder.mix_bias", p.encoder.mix_bias);
    }
  }
  mat("head.w0", p.head.w0);
  vec("head.b0", p.head.b0);
  mat("head.we", p.head.we);
  vec("head.be", p.head.be);
  mat("head.w1", p.head.w1);
  vec("head.b1", p.head.b1);
  mat("head.wstar", p.head.wstar);
  vec("head.bstar", p.head.bstar);
  return out;
}

}  // namespace

std::vector<TensorView> tensors(ModelParams& params, bool include_encoder) {
  return collect<TensorView>(params, include_encoder);
}

std::vector<ConstTensorView> tensors(const ModelParams& params, bool include_encoder) {
  return collect<ConstTensorView>(params, include_encoder);
}

}  // namespace zsre
