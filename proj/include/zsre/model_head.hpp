#pragma once

#include <cstdint>
#include <span>

#include "zsre/dataset.hpp"
#include "zsre/encoding.hpp"
#include "zsre/tensor.hpp"

namespace zsre {

// Learnable parameters of the sentence head and the seen-relation classifier.
struct HeadParams {
  Matrix w0;  // h x h, CLS projection
  Vector b0;
  Matrix we;  // h x h, shared by both entity slots
  Vector be;
  Matrix w1;  // d_attr x 3h
  Vector b1;
  Matrix wstar;  // n x d_attr
  Vector bstar;

  std::size_t hidden_dim() const { return w0.rows; }
  std::size_t attr_dim() const { return w1.rows; }
  std::size_t num_classes() const { return wstar.rows; }

  // Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
  static HeadParams init(std::size_t hidden_dim, std::size_t attr_dim, std::size_t num_classes, std::uint64_t seed);
  static HeadParams zeros(std::size_t hidden_dim, std::size_t attr_dim, std::size_t num_classes);
  HeadParams zeros_like() const { return zeros(hidden_dim(), attr_dim(), num_classes()); }
  bool operator==(const HeadParams&) const = default;
};

struct ForwardTrace {
  Span head;
  Span tail;
  Vector cls_act;    // tanh(H0)
  Vector h0p;        // H'0
  Vector head_act;   // tanh(mean of head rows)
  Vector tail_act;
  Vector he1;
  Vector he2;
  Vector concat_act;  // tanh([H'0, He1, He2])
  Vector a_hat;
  Vector a_hat_act;  // tanh(a_hat)
  Vector logits;
  Vector probs;
};

Vector cls_projection(std::span<const double> h0, const HeadParams& params);
// Rows q..r of the token block (row index offset by one for CLS).
Vector entity_pool(const Matrix& hidden, Span span, const HeadParams& params);
Vector sentence_embedding(std::span<const double> h0p, std::span<const double> he1, std::span<const double> he2,
                          const HeadParams& params);
Vector softmax(std::span<const double> logits);
Vector classify_seen(std::span<const double> a_hat, const HeadParams& params);

ForwardTrace forward(const Instance& instance, const EncodedSentence& encoded, const HeadParams& params);

// Backpropagates upstream gradients on a_hat and on the logits through one
// trace. Head gradients accumulate into `grads`; when `d_hidden` is non-null
// it receives the gradient w.r.t. the encoded hidden rows.
void head_backward(const ForwardTrace& trace, const EncodedSentence& encoded, const HeadParams& params,
                   std::span<const double> d_a_hat, std::span<const double> d_logits, HeadParams& grads,
                   Matrix* d_hidden);

}  // namespace zsre
