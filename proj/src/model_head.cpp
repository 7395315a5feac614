#include "zsre/model_head.hpp"

#include <algorithm>
#include <cmath>

#include "zsre/error.hpp"
#include "zsre/random.hpp"

namespace zsre {

namespace {

Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  Matrix m(rows, cols);
  for (double& x : m.data) x = rng.uniform(-bound, bound);
  return m;
}

Vector span_mean(const Matrix& hidden, Span span) {
  if (span.first > span.last || span.last + 2 >= hidden.rows) {
    fail(ErrorCode::InvalidArgument, "entity span exceeds hidden rows");
  }
  Vector mean(hidden.cols, 0.0);
  const double scale = 1.0 / static_cast<double>(span.length());
  for (std::size_t t = span.first; t <= span.last; ++t) add_into(mean, hidden.row(t + 1), scale);
  return mean;
}

Vector concat3(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  Vector out;
  out.reserve(a.size() + b.size() + c.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

}  // namespace

HeadParams HeadParams::init(std::size_t h, std::size_t d, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  HeadParams p = zeros(h, d, n);
  p.w0 = uniform_matrix(rng, h, h);
  p.we = uniform_matrix(rng, h, h);
  p.w1 = uniform_matrix(rng, d, 3 * h);
  p.wstar = uniform_matrix(rng, n, d);
  return p;
}

HeadParams HeadParams::zeros(std::size_t h, std::size_t d, std::size_t n) {
  HeadParams p;
  p.w0 = Matrix(h, h);
  p.b0 = Vector(h, 0.0);
  p.we = Matrix(h, h);
  p.be = Vector(h, 0.0);
  p.w1 = Matrix(d, 3 * h);
  p.b1 = Vector(d, 0.0);
  p.wstar = Matrix(n, d);
  p.bstar = Vector(n, 0.0);
  return p;
}

Vector cls_projection(std::span<const double> h0, const HeadParams& params) {
  require_size(h0.size(), params.hidden_dim(), "CLS hidden state");
  return affine(params.w0, tanh_of(h0), params.b0);
}

Vector entity_pool(const Matrix& hidden, Span span, const HeadParams& params) {
  require_size(hidden.cols, params.hidden_dim(), "token hidden states");
  return affine(params.we, tanh_of(span_mean(hidden, span)), params.be);
}

Vector sentence_embedding(std::span<const double> h0p, std::span<const double> he1, std::span<const double> he2,
                          const HeadParams& params) {
  const std::size_t h = params.hidden_dim();
  require_size(h0p.size(), h, "H'0");
  require_size(he1.size(), h, "head entity vector");
  require_size(he2.size(), h, "tail entity vector");
  return affine(params.w1, tanh_of(concat3(h0p, he1, he2)), params.b1);
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double peak = *std::max_element(logits.begin(), logits.end());
  Vector p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - peak);
    total += p[i];
  }
  for (double& x : p) x /= total;
  return p;
}

Vector classify_seen(std::span<const double> a_hat, const HeadParams& params) {
  require_size(a_hat.size(), params.attr_dim(), "sentence embedding");
  return softmax(affine(params.wstar, tanh_of(a_hat), params.bstar));
}

ForwardTrace forward(const Instance& instance, const EncodedSentence& encoded, const HeadParams& params) {
  require_size(encoded.hidden.rows, instance.tokens.size() + 2, "encoded rows (L+2)");
  require_size(encoded.hidden.cols, params.hidden_dim(), "encoded hidden width");
  ForwardTrace tr;
  tr.head = instance.head;
  tr.tail = instance.tail;
  tr.cls_act = tanh_of(encoded.hidden.row(0));
  tr.h0p = affine(params.w0, tr.cls_act, params.b0);
  tr.head_act = tanh_of(span_mean(encoded.hidden, instance.head));
  tr.tail_act = tanh_of(span_mean(encoded.hidden, instance.tail));
  tr.he1 = affine(params.we, tr.head_act, params.be);
  tr.he2 = affine(params.we, tr.tail_act, params.be);
  tr.concat_act = tanh_of(concat3(tr.h0p, tr.he1, tr.he2));
  tr.a_hat = affine(params.w1, tr.concat_act, params.b1);
  tr.a_hat_act = tanh_of(tr.a_hat);
  tr.logits = affine(params.wstar, tr.a_hat_act, params.bstar);
  tr.probs = softmax(tr.logits);
  return tr;
}

void head_backward(const ForwardTrace& tr, const EncodedSentence& encoded, const HeadParams& params,
                   std::span<const double> d_a_hat, std::span<const double> d_logits, HeadParams& grads,
                   Matrix* d_hidden) {
  const std::size_t h = params.hidden_dim();
  require_size(d_a_hat.size(), params.attr_dim(), "a_hat gradient");
  require_size(d_logits.size(), params.num_classes(), "logit gradient");

  // Classifier: logits = W* tanh(a_hat) + b*.
  add_outer(grads.wstar, d_logits, tr.a_hat_act);
  add_into(grads.bstar, d_logits);
  Vector d_a(d_a_hat.begin(), d_a_hat.end());
  add_into(d_a, tanh_backward(tr.a_hat_act, transposed_times(params.wstar, d_logits)));

  // a_hat = W1 tanh(c) + b1.
  add_outer(grads.w1, d_a, tr.concat_act);
  add_into(grads.b1, d_a);
  const Vector d_c = tanh_backward(tr.concat_act, transposed_times(params.w1, d_a));
  const std::span<const double> d_h0p(d_c.data(), h);
  const std::span<const double> d_he1(d_c.data() + h, h);
  const std::span<const double> d_he2(d_c.data() + 2 * h, h);

  add_outer(grads.w0, d_h0p, tr.cls_act);
  add_into(grads.b0, d_h0p);
  add_outer(grads.we, d_he1, tr.head_act);
  add_outer(grads.we, d_he2, tr.tail_act);
  add_into(grads.be, d_he1);
  add_into(grads.be, d_he2);

  if (d_hidden == nullptr) return;
  *d_hidden = Matrix(encoded.hidden.rows, encoded.hidden.cols);
  const Vector d_cls = tanh_backward(tr.cls_act, transposed_times(params.w0, d_h0p));
  add_into(d_hidden->row(0), d_cls);
  auto scatter = [&](Span span, std::span<const double> act, std::span<const double> d_out) {
    Vector d_mean = tanh_backward(act, transposed_times(params.we, d_out));
    const double scale = 1.0 / static_cast<double>(span.length());
    for (std::size_t t = span.first; t <= span.last; ++t) add_into(d_hidden->row(t + 1), d_mean, scale);
  };
  scatter(tr.head, tr.head_act, d_he1);
  scatter(tr.tail, tr.tail_act, d_he2);
}

}  // namespace zsre
