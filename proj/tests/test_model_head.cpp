#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "zsre/model_head.hpp"

using namespace zsre;

namespace {

HeadParams identity_head(std::size_t h, std::size_t d, std::size_t n) {
  auto p = HeadParams::zeros(h, d, n);
  p.w0 = Matrix::identity(h);
  p.we = Matrix::identity(h);
  return p;
}

HeadParams random_head(std::size_t h, std::size_t d, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  auto p = HeadParams::init(h, d, n, seed);
  for (Vector* b : {&p.b0, &p.be, &p.b1, &p.bstar}) *b = test::random_vector(rng, b->size(), 0.3);
  return p;
}

// Reference affine map written out independently of the library.
Vector ref_affine(const Matrix& w, const Vector& x, const Vector& b) {
  Vector y(w.rows);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double s = b[r];
    for (std::size_t c = 0; c < w.cols; ++c) s += w.data[r * w.cols + c] * x[c];
    y[r] = s;
  }
  return y;
}

Vector ref_tanh(Vector v) {
  for (double& x : v) x = std::tanh(x);
  return v;
}

}  // namespace

TEST_CASE("cls_projection") {
  auto p = identity_head(2, 3, 2);
  auto zero = cls_projection(Vector{0.0, 0.0}, p);
  CHECK(zero == Vector{0.0, 0.0});
  auto y = cls_projection(Vector{1.0, -1.0}, p);
  CHECK(y[0] == doctest::Approx(0.76159).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(-0.76159).epsilon(1e-5));
  p.b0 = {5.0, -2.0};
  auto shifted = cls_projection(Vector{1.0, -1.0}, p);
  CHECK(shifted[0] - std::tanh(1.0) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(shifted[1] + std::tanh(1.0) == doctest::Approx(-2.0).epsilon(1e-15));
  CHECK_THROWS_AS(cls_projection(Vector{1.0}, p), Error);
}

TEST_CASE("entity_pool") {
  auto p = identity_head(2, 3, 2);
  Matrix hidden(4, 2);  // CLS, H1, H2, SEP
  hidden(1, 0) = 0.2;
  hidden(1, 1) = 0.4;
  hidden(2, 0) = 0.6;
  hidden(2, 1) = 0.0;
  auto single = entity_pool(hidden, {0, 0}, p);
  CHECK(single[0] == doctest::Approx(0.19738).epsilon(1e-5));
  CHECK(single[1] == doctest::Approx(0.37995).epsilon(1e-5));
  auto pair = entity_pool(hidden, {0, 1}, p);
  CHECK(pair[0] == doctest::Approx(0.37995).epsilon(1e-5));
  CHECK(pair[1] == doctest::Approx(0.19738).epsilon(1e-5));
  CHECK_THROWS_AS(entity_pool(hidden, {1, 2}, p), Error);
}

TEST_CASE("sentence_embedding") {
  auto p = HeadParams::zeros(1, 3, 2);
  p.w1 = Matrix::identity(3);
  CHECK(sentence_embedding(Vector{0.0}, Vector{0.0}, Vector{0.0}, p) == Vector{0.0, 0.0, 0.0});
  auto y = sentence_embedding(Vector{1.0}, Vector{0.0}, Vector{-1.0}, p);
  CHECK(y[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(y[1] == 0.0);
  CHECK(y[2] == doctest::Approx(-std::tanh(1.0)).epsilon(1e-15));
  auto swapped = sentence_embedding(Vector{1.0}, Vector{-1.0}, Vector{0.0}, p);
  CHECK(swapped != y);
  CHECK(sentence_embedding(Vector{0.3}, Vector{0.5}, Vector{0.5}, p) ==
        sentence_embedding(Vector{0.3}, Vector{0.5}, Vector{0.5}, p));
}

TEST_CASE("classify_seen") {
  auto p = HeadParams::zeros(2, 3, 4);
  auto probs = classify_seen(Vector{0.3, -0.1, 2.0}, p);
  for (double x : probs) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
  auto big = softmax(Vector{1000.0, 0.0});
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] >= 0.0);
  CHECK(std::isfinite(big[1]));

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = test::random_vector(rng, 6, 20.0);
    auto s = softmax(logits);
    CHECK(std::accumulate(s.begin(), s.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    for (double x : s) CHECK((x > 0.0 && x < 1.0));
    auto shifted = logits;
    for (double& x : shifted) x += 123.25;
    auto s2 = softmax(shifted);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s2[i] == doctest::Approx(s[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward composes the sub-operations") {
  const std::size_t h = 3, d = 5, n = 4;
  auto p = random_head(h, d, n, 11);
  Rng rng(4);
  Instance inst{{"a", "b", "c", "d"}, {0, 1}, {3, 3}, "R"};
  EncodedSentence enc{test::random_matrix(rng, 6, h), {}, {}};
  auto tr = forward(inst, enc, p);

  // Independent recomposition straight from the formulas.
  Vector cls(enc.hidden.row(0).begin(), enc.hidden.row(0).end());
  Vector h0p = ref_affine(p.w0, ref_tanh(cls), p.b0);
  Vector head_mean(h), tail_mean(h);
  for (std::size_t c = 0; c < h; ++c) {
    head_mean[c] = (enc.hidden(1, c) + enc.hidden(2, c)) / 2.0;
    tail_mean[c] = enc.hidden(4, c);
  }
  Vector he1 = ref_affine(p.we, ref_tanh(head_mean), p.be);
  Vector he2 = ref_affine(p.we, ref_tanh(tail_mean), p.be);
  Vector cat = h0p;
  cat.insert(cat.end(), he1.begin(), he1.end());
  cat.insert(cat.end(), he2.begin(), he2.end());
  Vector a_hat = ref_affine(p.w1, ref_tanh(cat), p.b1);
  for (std::size_t i = 0; i < d; ++i) CHECK(tr.a_hat[i] == doctest::Approx(a_hat[i]).epsilon(1e-13));
  Vector logits = ref_affine(p.wstar, ref_tanh(a_hat), p.bstar);
  double z = 0.0;
  for (double x : logits) z += std::exp(x);
  for (std::size_t i = 0; i < n; ++i) CHECK(tr.probs[i] == doctest::Approx(std::exp(logits[i]) / z).epsilon(1e-13));

  // Same path through the public sub-operations.
  auto via_ops = sentence_embedding(cls_projection(enc.hidden.row(0), p), entity_pool(enc.hidden, inst.head, p),
                                    entity_pool(enc.hidden, inst.tail, p), p);
  CHECK(via_ops == tr.a_hat);
  CHECK(classify_seen(tr.a_hat, p) == tr.probs);

  auto again = forward(inst, enc, p);
  CHECK(again.a_hat == tr.a_hat);
  CHECK(again.probs == tr.probs);
}

TEST_CASE("entity slots share parameters") {
  auto p = random_head(3, 4, 2, 6);
  Rng rng(1);
  EncodedSentence enc{test::random_matrix(rng, 5, 3), {}, {}};
  Instance same{{"a", "b", "c"}, {1, 2}, {1, 2}, "R"};
  auto tr = forward(same, enc, p);
  CHECK(tr.he1 == tr.he2);
  CHECK(tr.he1 == entity_pool(enc.hidden, {1, 2}, p));
}

TEST_CASE("all-zero params give b1-only embedding and uniform probabilities") {
  auto p = HeadParams::zeros(2, 3, 5);
  p.b1 = {0.5, -0.5, 1.0};
  Rng rng(2);
  Instance inst{{"a", "b"}, {0, 0}, {1, 1}, "R"};
  EncodedSentence enc{test::random_matrix(rng, 4, 2), {}, {}};
  auto tr = forward(inst, enc, p);
  CHECK(tr.a_hat == p.b1);
  for (double x : tr.probs) CHECK(x == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("a_hat is continuous in every weight") {
  auto p = random_head(3, 4, 3, 21);
  Rng rng(9);
  Instance inst{{"a", "b", "c"}, {0, 0}, {1, 2}, "R"};
  EncodedSentence enc{test::random_matrix(rng, 5, 3), {}, {}};
  const auto base = forward(inst, enc, p).a_hat;
  const double eps = 1e-6;
  for (Matrix* m : {&p.w0, &p.we, &p.w1}) {
    for (std::size_t i = 0; i < m->data.size(); ++i) {
      const double keep = m->data[i];
      m->data[i] = keep + eps;
      const auto moved = forward(inst, enc, p).a_hat;
      m->data[i] = keep;
      double diff = 0.0;
      for (std::size_t k = 0; k < base.size(); ++k) diff = std::max(diff, std::abs(moved[k] - base[k]));
      CHECK(diff <= 10.0 * eps);
    }
  }
}

TEST_CASE("init draws within fan-in bounds and zero biases") {
  auto p = HeadParams::init(4, 6, 3, 5);
  for (double x : p.w0.data) CHECK(std::abs(x) <= 1.0 / std::sqrt(4.0));
  for (double x : p.w1.data) CHECK(std::abs(x) <= 1.0 / std::sqrt(12.0));
  for (double x : p.wstar.data) CHECK(std::abs(x) <= 1.0 / std::sqrt(6.0));
  for (double x : p.b1) CHECK(x == 0.0);
  CHECK(HeadParams::init(4, 6, 3, 5) == p);
  CHECK(p.num_classes() == 3);
}
