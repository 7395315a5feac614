#pragma once

#include <optional>
#include <span>
#include <vector>

#include "zsre/model_head.hpp"
#include "zsre/params.hpp"

namespace zsre {

struct Batch {
  std::vector<EncodedSentence> encoded;
  std::vector<ForwardTrace> traces;
  Matrix attrs;                     // B x d_attr, row i = attribute of instance i's relation
  std::vector<std::size_t> labels;  // seen-class index per instance

  std::size_t size() const { return labels.size(); }
};

struct MarginResult {
  double value = 0.0;
  Vector per_instance;
  std::vector<std::optional<std::size_t>> argmax_negative;
};

struct LossReport {
  double margin_term = 0.0;
  double ce_term = 0.0;
  double total = 0.0;
  Vector per_instance_margin;
  std::vector<std::optional<std::size_t>> argmax_negative;
};

// Hinge on the written orientation: attribute of i against the embeddings
// of in-batch instances j whose label differs from i's. Instances without
// such a j contribute zero. Argmax ties go to the lowest j.
MarginResult margin_ranking_loss(const Matrix& attrs, std::span<const Vector> a_hats,
                                 std::span<const std::size_t> labels, double gamma);
MarginResult margin_ranking_loss(const Batch& batch, double gamma);

inline constexpr double kProbClamp = 1e-12;

double cross_entropy(std::span<const double> probs, std::size_t label);

LossReport joint_loss(const Batch& batch, double gamma, double alpha);

// Exact (sub)gradient of joint_loss w.r.t. every parameter. Attribute
// vectors receive nothing. Encoder gradients are filled only when
// `encoder_trainable` is set and the batch came from the token encoder.
ModelParams backward(const Batch& batch, const ModelParams& params, double gamma, double alpha,
                     bool encoder_trainable);

}  // namespace zsre
