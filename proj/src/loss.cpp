#include "zsre/loss.hpp"

#include <cmath>
#include <string>

#include "zsre/error.hpp"

namespace zsre {

MarginResult margin_ranking_loss(const Matrix& attrs, std::span<const Vector> a_hats,
                                 std::span<const std::size_t> labels, double gamma) {
  if (!(gamma > 0.0)) fail(ErrorCode::InvalidArgument, "margin gamma must be > 0");
  const std::size_t b = labels.size();
  require_size(a_hats.size(), b, "batch embeddings");
  require_size(attrs.rows, b, "batch attributes");
  MarginResult out;
  out.per_instance.assign(b, 0.0);
  out.argmax_negative.assign(b, std::nullopt);
  for (std::size_t i = 0; i < b; ++i) {
    const auto a_i = attrs.row(i);
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t j = 0; j < b; ++j) {
      if (labels[j] == labels[i]) continue;
      const double s = dot(a_i, a_hats[j]);
      if (!best || s > best_score) {
        best = j;
        best_score = s;
      }
    }
    out.argmax_negative[i] = best;
    if (!best) continue;
    const double term = gamma - dot(a_i, a_hats[i]) + best_score;
    out.per_instance[i] = term > 0.0 ? term : 0.0;
    out.value += out.per_instance[i];
  }
  return out;
}

namespace {

std::vector<Vector> batch_embeddings(const Batch& batch) {
  std::vector<Vector> a_hats;
  a_hats.reserve(batch.traces.size());
  for (const auto& tr : batch.traces) a_hats.push_back(tr.a_hat);
  return a_hats;
}

void check_batch(const Batch& batch) {
  if (batch.size() == 0) fail(ErrorCode::InvalidArgument, "empty batch");
  if (batch.traces.size() != batch.size()) fail(ErrorCode::InvalidArgument, "batch is missing forward traces");
}

}  // namespace

MarginResult margin_ranking_loss(const Batch& batch, double gamma) {
  check_batch(batch);
  const auto a_hats = batch_embeddings(batch);
  return margin_ranking_loss(batch.attrs, a_hats, batch.labels, gamma);
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    fail(ErrorCode::InvalidArgument, "label " + std::to_string(label) + " out of range for " +
                                         std::to_string(probs.size()) + " classes");
  }
  return -std::log(std::max(probs[label], kProbClamp));
}

LossReport joint_loss(const Batch& batch, double gamma, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(ErrorCode::InvalidArgument, "alpha must lie in [0, 1]");
  MarginResult margin = margin_ranking_loss(batch, gamma);
  LossReport r;
  r.margin_term = margin.value;
  for (std::size_t i = 0; i < batch.size(); ++i) r.ce_term += cross_entropy(batch.traces[i].probs, batch.labels[i]);
  r.total = (1.0 - alpha) * r.margin_term + alpha * r.ce_term;
  r.per_instance_margin = std::move(margin.per_instance);
  r.argmax_negative = std::move(margin.argmax_negative);
  return r;
}

ModelParams backward(const Batch& batch, const ModelParams& params, double gamma, double alpha,
                     bool encoder_trainable) {
  check_batch(batch);
  if (batch.encoded.size() != batch.size()) fail(ErrorCode::InvalidArgument, "batch is missing encoded sentences");
  const std::size_t b = batch.size();
  const std::size_t d = params.head.attr_dim();
  const MarginResult margin = margin_ranking_loss(batch, gamma);

  std::vector<Vector> d_a_hat(b, Vector(d, 0.0));
  for (std::size_t i = 0; i < b; ++i) {
    if (!(margin.per_instance[i] > 0.0)) continue;
    const auto a_i = batch.attrs.row(i);
    add_into(d_a_hat[i], a_i, -(1.0 - alpha));
    add_into(d_a_hat[*margin.argmax_negative[i]], a_i, 1.0 - alpha);
  }

  ModelParams grads = params.zeros_like();
  const bool do_encoder = encoder_trainable && params.encoder.embedding.rows > 0;
  Matrix d_hidden;
  for (std::size_t i = 0; i < b; ++i) {
    const auto& tr = batch.traces[i];
    Vector d_logits(tr.probs.size(), 0.0);
    if (tr.probs[batch.labels[i]] >= kProbClamp) {
      for (std::size_t k = 0; k < d_logits.size(); ++k) {
        d_logits[k] = alpha * (tr.probs[k] - (k == batch.labels[i] ? 1.0 : 0.0));
      }
    }
    const bool encoder_here = do_encoder && !batch.encoded[i].token_ids.empty();
    head_backward(tr, batch.encoded[i], params.head, d_a_hat[i], d_logits, grads.head,
                  encoder_here ? &d_hidden : nullptr);
    if (encoder_here) encode_tokens_backward(batch.encoded[i], d_hidden, params.encoder, grads.encoder);
  }
  return grads;
}

}  // namespace zsre
