#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "doctest.h"
#include "helpers.hpp"
#include "zsre/optim.hpp"

using namespace zsre;

namespace {

struct Small {
  SyntheticCorpus corpus;
  SplitSpec split;
  TrainConfig config;
};

Small small_problem(std::size_t epochs, std::uint64_t seed = 3) {
  Small s;
  s.corpus = generate_synthetic({.n_relations = 6, .instances_per_relation = 20, .vocab_size = 60, .d_attr = 16,
                                 .hidden_dim = 8, .seed = seed});
  s.split = make_zero_shot_split(s.corpus.instances, s.corpus.relations, 2, seed);
  s.config.encoder_mode = EncoderMode::TokenTable;
  s.config.encoder_trainable = false;
  s.config.hidden_dim = 8;
  s.config.attr_dim = 16;
  s.config.epochs = epochs;
  s.config.seed = seed;
  return s;
}

TrainResult run(const Small& s) {
  return train(s.corpus.instances, s.corpus.relations, s.split, s.config, {&s.corpus.token_table, nullptr});
}

}  // namespace

TEST_CASE("adam first step") {
  Vector theta{0.0};
  Vector grad{1.0};
  std::vector<TensorView> p{{"x", 1, 1, theta}};
  std::vector<ConstTensorView> g{{"x", 1, 1, grad}};
  AdamState st;
  adam_step(p, g, st, 0.1);
  CHECK(theta[0] == doctest::Approx(-0.1 / (1.0 + 1e-8)).epsilon(1e-15));
  CHECK(st.t == 1);

  Vector still{2.5};
  Vector zero{0.0};
  std::vector<TensorView> p2{{"y", 1, 1, still}};
  std::vector<ConstTensorView> g2{{"y", 1, 1, zero}};
  AdamState fresh;
  adam_step(p2, g2, fresh, 0.1);
  CHECK(still[0] == 2.5);
}

TEST_CASE("adam fresh step opposes the gradient sign and matches a reference") {
  Rng rng(4);
  Vector theta = test::random_vector(rng, 20);
  AdamState st;
  // Reference Adam over three steps.
  Vector ref = theta, m(20, 0.0), v(20, 0.0);
  for (int step = 1; step <= 3; ++step) {
    Vector grad = test::random_vector(rng, 20);
    Vector before = theta;
    std::vector<TensorView> p{{"t", 20, 1, theta}};
    std::vector<ConstTensorView> g{{"t", 20, 1, grad}};
    adam_step(p, g, st, 0.01);
    for (std::size_t i = 0; i < 20; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grad[i];
      v[i] = 0.999 * v[i] + 0.001 * grad[i] * grad[i];
      const double mh = m[i] / (1.0 - std::pow(0.9, step));
      const double vh = v[i] / (1.0 - std::pow(0.999, step));
      ref[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
      CHECK(theta[i] == doctest::Approx(ref[i]).epsilon(1e-14));
      if (step == 1 && grad[i] != 0.0) CHECK((theta[i] - before[i]) * grad[i] < 0.0);
    }
  }
}

TEST_CASE("adam shape mismatch") {
  Vector a{1.0, 2.0}, b{1.0};
  std::vector<TensorView> p{{"a", 2, 1, a}};
  std::vector<ConstTensorView> g{{"a", 1, 1, b}};
  AdamState st;
  CHECK_THROWS_AS(adam_step(p, g, st, 0.1), Error);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.validate();
  c.alpha = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.gamma = 2.0;
  c.dist = DistKind::Cosine;
  CHECK(train_config_from_json(to_json(c)) == c);
}

TEST_CASE("zero epochs returns the initialization") {
  auto s = small_problem(0);
  auto r = run(s);
  CHECK(r.history.epochs.empty());
  auto init = initialize_model(s.corpus.instances, s.corpus.relations, s.split, s.config,
                               {&s.corpus.token_table, nullptr});
  CHECK(r.model.params == init.params);
}

TEST_CASE("training is deterministic and decreases loss on separable data") {
  auto s = small_problem(10);
  auto a = run(s);
  auto b = run(s);
  CHECK(a.model.params == b.model.params);
  REQUIRE(a.history.epochs.size() == 10);
  CHECK(a.history.epochs[9].total < a.history.epochs[0].total);
  for (const auto& e : a.history.epochs) {
    CHECK(std::abs(e.total - (0.6 * e.margin_term + 0.4 * e.ce_term)) <= 1e-9);
  }
  auto log = history_jsonl(a.history);
  CHECK(std::count(log.begin(), log.end(), '\n') == 10);
  CHECK(log.find("\"margin_term\"") != std::string::npos);
}

TEST_CASE("smoothed training loss is non-increasing over 5-epoch windows") {
  auto s = small_problem(30);
  auto r = run(s);
  std::vector<double> windows;
  for (std::size_t w = 0; w + 5 <= r.history.epochs.size(); w += 5) {
    double sum = 0.0;
    for (std::size_t e = w; e < w + 5; ++e) sum += r.history.epochs[e].total;
    windows.push_back(sum / 5.0);
  }
  for (std::size_t i = 1; i < windows.size(); ++i) CHECK(windows[i] <= windows[i - 1]);
}

TEST_CASE("attribute vectors are untouched by training") {
  auto s = small_problem(3);
  std::vector<Vector> before;
  for (const auto& r : s.corpus.relations.rows()) before.push_back(*r.attribute);
  auto r = run(s);
  for (std::size_t k = 0; k < before.size(); ++k) {
    const auto& after = *s.corpus.relations.rows()[k].attribute;
    CHECK(std::memcmp(before[k].data(), after.data(), before[k].size() * sizeof(double)) == 0);
  }
  for (std::size_t k = 0; k < r.model.labels.size(); ++k) {
    const auto& a = *s.corpus.relations.at(r.model.labels[k]).attribute;
    CHECK(std::memcmp(a.data(), r.label_attrs.row(k).data(), a.size() * sizeof(double)) == 0);
  }
}

TEST_CASE("toy trainable encoder with mixing trains and updates the embedding") {
  auto s = small_problem(2);
  s.config.encoder_mode = EncoderMode::Toy;
  s.config.encoder_trainable = true;
  s.config.encoder_mixing = true;
  auto init = initialize_model(s.corpus.instances, s.corpus.relations, s.split, s.config, {});
  auto r = train(s.corpus.instances, s.corpus.relations, s.split, s.config);
  CHECK(r.model.params.encoder.embedding != init.params.encoder.embedding);
  CHECK(r.model.params.encoder.mix_weight != init.params.encoder.mix_weight);
}

TEST_CASE("frozen token-table encoder stays fixed") {
  auto s = small_problem(2);
  auto init = initialize_model(s.corpus.instances, s.corpus.relations, s.split, s.config,
                               {&s.corpus.token_table, nullptr});
  auto r = run(s);
  CHECK(r.model.params.encoder == init.params.encoder);
  CHECK(r.model.params.head != init.params.head);
}

TEST_CASE("non-finite loss aborts naming the batch") {
  auto s = small_problem(1);
  s.config.learning_rate = 1e308;
  s.config.epochs = 3;
  auto msg = test::error_of([&] { run(s); });
  CHECK(msg.find("non-finite loss at epoch") != std::string::npos);
  CHECK(msg.find("batch") != std::string::npos);
}

TEST_CASE("grad_check probes") {
  CHECK(relative_error(2.0, central_difference([](double x) { return x * x; }, 1.0, 1e-5)) < 1e-8);
  CHECK(relative_error(0.0, 0.0) == 0.0);
  CHECK(relative_error(1.0, 1.1) == doctest::Approx(0.1 / 1.1));
}

TEST_CASE("grad_check on the full model with a random batch") {
  auto s = small_problem(0);
  auto model = initialize_model(s.corpus.instances, s.corpus.relations, s.split, s.config,
                                {&s.corpus.token_table, nullptr});
  BatchInput in;
  in.attrs = Matrix(4, 16);
  std::map<std::string, std::size_t> label;
  for (std::size_t k = 0; k < model.labels.size(); ++k) label[model.labels[k]] = k;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& inst = s.corpus.instances[s.split.train_idx[i * 17]];
    in.instances.push_back(inst);
    in.file_indices.push_back(s.split.train_idx[i * 17]);
    in.labels.push_back(label.at(inst.relation_id));
    const auto& a = *s.corpus.relations.at(inst.relation_id).attribute;
    std::copy(a.begin(), a.end(), in.attrs.row(i).begin());
  }
  GradCheckOptions opt;
  opt.encoder_trainable = false;
  auto report = grad_check(model.params, in, model.vocab, nullptr, opt);
  INFO(gradcheck_table(report));
  CHECK(report.passed);
  CHECK(report.tensors.size() == 8);
  const auto views = tensors(std::as_const(model.params), false);
  for (std::size_t k = 0; k < report.tensors.size(); ++k) {
    CHECK(report.tensors[k].checked + report.tensors[k].skipped.size() ==
          std::min<std::size_t>(32, views[k].values.size()));
  }
  CHECK(gradcheck_table(report).find("head.w1") != std::string::npos);
}

TEST_CASE("grad_check skips and reports coordinates straddling a hinge boundary") {
  Instance i0{{"a", "b", "c"}, {0, 0}, {2, 2}, "R"};
  Instance i1{{"c", "a", "d"}, {0, 1}, {2, 2}, "R"};
  auto vocab = build_vocab({i0, i1});
  ModelParams params;
  params.encoder = EncoderParams::init(vocab.size(), 3, false, 5);
  params.head = HeadParams::init(3, 4, 2, 6);
  BatchInput in;
  in.instances = {i0, i1};
  in.labels = {0, 1};
  in.attrs = Matrix(2, 4);
  auto probe = build_batch(in, params, vocab, nullptr);
  const Vector& h0 = probe.traces[0].a_hat;
  const Vector& h1 = probe.traces[1].a_hat;
  // a0 = c (h0 - h1) with c |h0 - h1|^2 = gamma puts instance 0 exactly on its hinge.
  const double gamma = 0.5;
  Vector diff(4);
  for (std::size_t c = 0; c < 4; ++c) diff[c] = h0[c] - h1[c];
  const double scale = gamma / dot(diff, diff);
  for (std::size_t c = 0; c < 4; ++c) in.attrs(0, c) = scale * diff[c];
  for (std::size_t c = 0; c < 4; ++c) in.attrs(1, c) = -50.0 * diff[c];
  GradCheckOptions opt;
  opt.gamma = gamma;
  opt.alpha = 0.0;
  opt.encoder_trainable = true;
  auto report = grad_check(params, in, vocab, nullptr, opt);
  std::size_t skipped = 0;
  for (const auto& t : report.tensors) skipped += t.skipped.size();
  INFO(gradcheck_table(report));
  CHECK(skipped > 0);
  CHECK(report.passed);
  CHECK_THROWS_AS(
      [&] {
        GradCheckOptions bad;
        bad.step = 0.0;
        grad_check(params, in, vocab, nullptr, bad);
      }(),
      Error);
}

TEST_CASE("checkpoint round trip") {
  auto s = small_problem(2);
  auto r = run(s);
  auto dir = test::temp_dir("ckpt");
  save_checkpoint(r.model, dir / "m.bin");
  auto back = load_checkpoint(dir / "m.bin");
  CHECK(back.params == r.model.params);
  CHECK(back.vocab == r.model.vocab);
  CHECK(back.labels == r.model.labels);
  CHECK(back.config == r.model.config);
  CHECK(back.config.seed == s.config.seed);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& inst = s.corpus.instances[i];
    CHECK(back.embed(inst, i) == r.model.embed(inst, i));
  }

  SUBCASE("version 0 rejected") {
    auto bytes = test::read_bytes(dir / "m.bin");
    bytes[8] = 0;
    test::write_text(dir / "v0.bin", bytes);
    CHECK(test::code_of([&] { load_checkpoint(dir / "v0.bin"); }) == ErrorCode::Version);
  }
  SUBCASE("corrupt files rejected") {
    auto bytes = test::read_bytes(dir / "m.bin");
    test::write_text(dir / "short.bin", bytes.substr(0, bytes.size() / 2));
    CHECK(test::code_of([&] { load_checkpoint(dir / "short.bin"); }) == ErrorCode::Parse);
    test::write_text(dir / "junk.bin", "hello");
    CHECK(test::code_of([&] { load_checkpoint(dir / "junk.bin"); }) == ErrorCode::Parse);
    CHECK(test::code_of([&] { load_checkpoint(dir / "absent.bin"); }) == ErrorCode::Io);
  }
}

TEST_CASE("hidden-state encoder mode trains from a precomputed store") {
  auto s = small_problem(2);
  // Precompute the frozen token-table states and train from them instead.
  auto model = initialize_model(s.corpus.instances, s.corpus.relations, s.split, s.config,
                                {&s.corpus.token_table, nullptr});
  HiddenStateStore store;
  for (std::size_t i = 0; i < s.corpus.instances.size(); ++i) {
    store.put(i, encode_tokens(s.corpus.instances[i], model.vocab, model.params.encoder).hidden);
  }
  auto cfg = s.config;
  cfg.encoder_mode = EncoderMode::HiddenStates;
  auto from_store = train(s.corpus.instances, s.corpus.relations, s.split, cfg, {nullptr, &store});
  auto from_table = run(s);
  CHECK(from_store.model.params.head == from_table.model.params.head);
  CHECK_THROWS_AS(train(s.corpus.instances, s.corpus.relations, s.split, cfg, {}), Error);
}
