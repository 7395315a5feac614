#include "zsre/optim.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <utility>

#include "zsre/error.hpp"
#include "zsre/random.hpp"

namespace zsre {

using nlohmann::json;

void adam_step(std::span<const TensorView> params, std::span<const ConstTensorView> grads, AdamState& state,
               double lr) {
  require_size(grads.size(), params.size(), "gradient tensor count");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.values.size(), 0.0);
      state.v.emplace_back(p.values.size(), 0.0);
    }
  }
  require_size(state.m.size(), params.size(), "Adam state tensor count");
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto theta = params[k].values;
    auto g = grads[k].values;
    auto& m = state.m[k];
    auto& v = state.v[k];
    require_size(g.size(), theta.size(), "gradient of " + params[k].name);
    require_size(m.size(), theta.size(), "Adam moments of " + params[k].name);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::Validation, what); };
  if (!(learning_rate > 0.0)) bad("learning_rate must be > 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(gamma > 0.0)) bad("gamma must be > 0");
  if (!(alpha >= 0.0 && alpha <= 1.0)) bad("alpha must lie in [0, 1], got " + std::to_string(alpha));
  if (hidden_dim < 1) bad("hidden_dim must be >= 1");
  if (attr_dim < 1) bad("attr_dim must be >= 1");
  if (!(grad_clip >= 0.0)) bad("grad_clip must be >= 0");
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"gamma", c.gamma},
          {"alpha", c.alpha},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"dist", to_string(c.dist)},
          {"encoder_mode", to_string(c.encoder_mode)},
          {"encoder_trainable", c.encoder_trainable},
          {"encoder_mixing", c.encoder_mixing},
          {"description_mode", to_string(c.description_mode)},
          {"hidden_dim", c.hidden_dim},
          {"attr_dim", c.attr_dim},
          {"grad_clip", c.grad_clip}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("gamma")) c.gamma = j["gamma"].get<double>();
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("dist")) c.dist = parse_dist_kind(j["dist"].get<std::string>());
    if (j.contains("encoder_mode")) c.encoder_mode = parse_encoder_mode(j["encoder_mode"].get<std::string>());
    if (j.contains("encoder_trainable")) c.encoder_trainable = j["encoder_trainable"].get<bool>();
    if (j.contains("encoder_mixing")) c.encoder_mixing = j["encoder_mixing"].get<bool>();
    if (j.contains("description_mode")) {
      c.description_mode = parse_description_mode(j["description_mode"].get<std::string>());
    }
    if (j.contains("hidden_dim")) c.hidden_dim = j["hidden_dim"].get<std::size_t>();
    if (j.contains("attr_dim")) c.attr_dim = j["attr_dim"].get<std::size_t>();
    if (j.contains("grad_clip")) c.grad_clip = j["grad_clip"].get<double>();
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad training config: ") + e.what());
  }
  return c;
}

std::string history_jsonl(const TrainHistory& history) {
  std::string out;
  for (const auto& e : history.epochs) {
    json j = {{"epoch", e.epoch},
              {"margin_term", e.margin_term},
              {"ce_term", e.ce_term},
              {"total", e.total},
              {"seconds", e.seconds}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

SentenceEncoder TrainedModel::sentence_encoder(const HiddenStateStore* store) const {
  if (config.encoder_mode == EncoderMode::HiddenStates) {
    if (store == nullptr) fail(ErrorCode::InvalidArgument, "model expects precomputed hidden states");
    return SentenceEncoder(*store);
  }
  return SentenceEncoder(vocab, params.encoder);
}

Vector TrainedModel::embed(const Instance& instance, std::size_t index, const HiddenStateStore* store) const {
  return forward(instance, sentence_encoder(store).encode(instance, index), params.head).a_hat;
}

std::vector<std::string> training_labels(const std::vector<Instance>& instances, const RelationTable& relations,
                                         const SplitSpec& split) {
  std::vector<bool> used(relations.size(), false);
  for (std::size_t i : split.train_idx) used[relations.position(instances.at(i).relation_id)] = true;
  std::vector<std::string> labels;
  for (std::size_t p = 0; p < relations.size(); ++p) {
    if (used[p]) labels.push_back(relations.rows()[p].id);
  }
  return labels;
}

TrainedModel initialize_model(const std::vector<Instance>& instances, const RelationTable& relations,
                              const SplitSpec& split, const TrainConfig& config, const EncoderInputs& inputs) {
  config.validate();
  check_relations_known(instances, relations);
  TrainedModel model;
  model.config = config;
  model.labels = training_labels(instances, relations, split);
  if (model.labels.empty()) fail(ErrorCode::Validation, "split has no training instances");

  std::vector<Instance> train_set;
  for (std::size_t i : split.train_idx) train_set.push_back(instances.at(i));
  const std::uint64_t encoder_seed = derive_seed(config.seed ^ 0x5a5a5a5aULL, SeedStream::Init);
  switch (config.encoder_mode) {
    case EncoderMode::Toy:
      model.vocab = build_vocab(train_set);
      model.params.encoder =
          EncoderParams::init(model.vocab.size(), config.hidden_dim, config.encoder_mixing, encoder_seed);
      break;
    case EncoderMode::TokenTable:
      if (inputs.token_table == nullptr) fail(ErrorCode::InvalidArgument, "token_table encoder mode needs a token table");
      if (inputs.token_table->dim() != config.hidden_dim) {
        fail(ErrorCode::Validation, "token table width " + std::to_string(inputs.token_table->dim()) +
                                        " differs from hidden_dim " + std::to_string(config.hidden_dim));
      }
      model.vocab = build_vocab(train_set, *inputs.token_table);
      model.params.encoder =
          EncoderParams::from_token_table(model.vocab, *inputs.token_table, config.encoder_mixing, encoder_seed);
      break;
    case EncoderMode::HiddenStates:
      if (inputs.hidden_states == nullptr) {
        fail(ErrorCode::InvalidArgument, "hidden_states encoder mode needs precomputed hidden states");
      }
      if (inputs.hidden_states->hidden_dim() != config.hidden_dim) {
        fail(ErrorCode::Validation, "precomputed hidden width " + std::to_string(inputs.hidden_states->hidden_dim()) +
                                        " differs from hidden_dim " + std::to_string(config.hidden_dim));
      }
      model.params.encoder.embedding = Matrix(0, config.hidden_dim);
      model.config.encoder_mixing = false;
      model.config.encoder_trainable = false;
      break;
  }
  model.params.head = HeadParams::init(config.hidden_dim, config.attr_dim, model.labels.size(),
                                       derive_seed(config.seed, SeedStream::Init));
  return model;
}

Batch build_batch(const BatchInput& input, const ModelParams& params, const Vocab& vocab,
                  const HiddenStateStore* store) {
  Batch batch;
  batch.attrs = input.attrs;
  batch.labels = input.labels;
  for (std::size_t i = 0; i < input.instances.size(); ++i) {
    const Instance& inst = input.instances[i];
    batch.encoded.push_back(store ? encode_precomputed(inst, store->at(input.file_indices.at(i)))
                                  : encode_tokens(inst, vocab, params.encoder));
    batch.traces.push_back(forward(inst, batch.encoded.back(), params.head));
  }
  return batch;
}

namespace {

void clip_gradients(ModelParams& grads, bool include_encoder, double max_norm) {
  double sq = 0.0;
  for (const auto& t : tensors(grads, include_encoder)) {
    for (double g : t.values) sq += g * g;
  }
  const double n = std::sqrt(sq);
  if (n <= max_norm) return;
  const double scale = max_norm / n;
  for (auto& t : tensors(grads, include_encoder)) {
    for (double& g : t.values) g *= scale;
  }
}

}  // namespace

TrainResult train(const std::vector<Instance>& instances, const RelationTable& relations, const SplitSpec& split,
                  const TrainConfig& config, const EncoderInputs& inputs) {
  TrainResult result;
  result.model = initialize_model(instances, relations, split, config, inputs);
  TrainedModel& model = result.model;
  const TrainConfig& cfg = model.config;
  const bool update_encoder = cfg.encoder_trainable && cfg.encoder_mode != EncoderMode::HiddenStates;

  // Targets are encoded once and never touched by the optimizer.
  std::map<std::string, std::size_t> label_of;
  result.label_attrs = Matrix(model.labels.size(), cfg.attr_dim);
  for (std::size_t k = 0; k < model.labels.size(); ++k) {
    label_of[model.labels[k]] = k;
    const Vector a = encode_description(relations.at(model.labels[k]), cfg.description_mode, cfg.attr_dim);
    std::copy(a.begin(), a.end(), result.label_attrs.row(k).begin());
  }

  const HiddenStateStore* store = cfg.encoder_mode == EncoderMode::HiddenStates ? inputs.hidden_states : nullptr;
  AdamState adam;
  Rng shuffler(derive_seed(cfg.seed, SeedStream::Shuffle));
  std::vector<std::size_t> order = split.train_idx;
  const double n_train = static_cast<double>(order.size());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    shuffler.shuffle(order);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    for (std::size_t start = 0, b = 0; start < order.size(); start += cfg.batch_size, ++b) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      Batch batch;
      batch.attrs = Matrix(stop - start, cfg.attr_dim);
      for (std::size_t p = start; p < stop; ++p) {
        const std::size_t idx = order[p];
        const Instance& inst = instances[idx];
        const std::size_t label = label_of.at(inst.relation_id);
        batch.labels.push_back(label);
        const auto src = result.label_attrs.row(label);
        std::copy(src.begin(), src.end(), batch.attrs.row(p - start).begin());
        batch.encoded.push_back(store ? encode_precomputed(inst, store->at(idx))
                                      : encode_tokens(inst, model.vocab, model.params.encoder));
        batch.traces.push_back(forward(inst, batch.encoded.back(), model.params.head));
      }
      const LossReport report = joint_loss(batch, cfg.gamma, cfg.alpha);
      if (!std::isfinite(report.total)) {
        fail(ErrorCode::Numeric, "non-finite loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                                     std::to_string(b) + " (margin " + std::to_string(report.margin_term) +
                                     ", ce " + std::to_string(report.ce_term) + ")");
      }
      ModelParams grads = backward(batch, model.params, cfg.gamma, cfg.alpha, update_encoder);
      if (cfg.grad_clip > 0.0) clip_gradients(grads, update_encoder, cfg.grad_clip);
      const auto param_views = tensors(model.params, update_encoder);
      const auto grad_views = tensors(std::as_const(grads), update_encoder);
      adam_step(param_views, grad_views, adam, cfg.learning_rate);
      rec.margin_term += report.margin_term;
      rec.ce_term += report.ce_term;
      rec.total += report.total;
    }
    rec.margin_term /= n_train;
    rec.ce_term /= n_train;
    rec.total /= n_train;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.epochs.push_back(rec);
  }
  return result;
}

double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

// Which branch every non-smooth piece of the loss is on.
std::vector<long long> kink_signature(const Batch& batch, const LossReport& report) {
  std::vector<long long> sig;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sig.push_back(report.per_instance_margin[i] > 0.0 ? 1 : 0);
    sig.push_back(report.argmax_negative[i] ? static_cast<long long>(*report.argmax_negative[i]) : -1);
    sig.push_back(batch.traces[i].probs[batch.labels[i]] >= kProbClamp ? 1 : 0);
  }
  return sig;
}

}  // namespace

GradCheckReport grad_check(const ModelParams& params, const BatchInput& input, const Vocab& vocab,
                           const HiddenStateStore* store, const GradCheckOptions& opt) {
  if (!(opt.step > 0.0)) fail(ErrorCode::InvalidArgument, "finite-difference step must be > 0");
  ModelParams work = params;
  const Batch base = build_batch(input, work, vocab, store);
  const LossReport base_report = joint_loss(base, opt.gamma, opt.alpha);
  const auto base_sig = kink_signature(base, base_report);
  const ModelParams analytic = backward(base, work, opt.gamma, opt.alpha, opt.encoder_trainable);

  auto evaluate = [&]() {
    const Batch b = build_batch(input, work, vocab, store);
    const LossReport r = joint_loss(b, opt.gamma, opt.alpha);
    return std::make_pair(r.total, kink_signature(b, r));
  };

  const bool with_encoder = opt.encoder_trainable && store == nullptr;
  auto views = tensors(work, with_encoder);
  const auto grad_views = tensors(analytic, with_encoder);
  Rng rng(derive_seed(opt.seed, SeedStream::GradCheck));
  GradCheckReport report;
  for (std::size_t k = 0; k < views.size(); ++k) {
    auto values = views[k].values;
    std::vector<std::size_t> coords;
    if (values.size() <= opt.coords_per_tensor) {
      for (std::size_t c = 0; c < values.size(); ++c) coords.push_back(c);
    } else {
      coords = sample_without_replacement(rng, values.size(), opt.coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    TensorCheck check;
    check.name = views[k].name;
    for (std::size_t c : coords) {
      const double original = values[c];
      values[c] = original + opt.step;
      const auto [plus, plus_sig] = evaluate();
      values[c] = original - opt.step;
      const auto [minus, minus_sig] = evaluate();
      values[c] = original;
      if (plus_sig != base_sig || minus_sig != base_sig) {
        check.skipped.push_back(c);
        continue;
      }
      const double numeric = (plus - minus) / (2.0 * opt.step);
      check.max_rel_error = std::max(check.max_rel_error, relative_error(grad_views[k].values[c], numeric));
      ++check.checked;
    }
    check.passed = check.max_rel_error <= opt.tol;
    report.passed = report.passed && check.passed;
    report.tensors.push_back(std::move(check));
  }
  return report;
}

std::string gradcheck_table(const GradCheckReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "tensor" << std::right << std::setw(9) << "checked" << std::setw(9)
     << "skipped" << std::setw(15) << "max_rel_err" << "  status\n";
  for (const auto& t : report.tensors) {
    os << std::left << std::setw(22) << t.name << std::right << std::setw(9) << t.checked << std::setw(9)
       << t.skipped.size() << std::setw(15) << std::scientific << std::setprecision(3) << t.max_rel_error
       << std::defaultfloat << "  " << (t.passed ? "ok" : "FAIL") << '\n';
  }
  return os.str();
}

namespace {

constexpr char kCheckpointMagic[8] = {'Z', 'S', 'R', 'E', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t read_le(std::istream& in, int bytes, const std::string& path) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = in.get();
    if (c == EOF) fail(ErrorCode::Parse, "truncated checkpoint " + path);
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

void assign_tensor(ModelParams& p, const std::string& name, std::size_t rows, std::size_t cols, Vector data) {
  auto mat = [&](Matrix& m) {
    m.rows = rows;
    m.cols = cols;
    m.data = std::move(data);
  };
  auto vec = [&](Vector& v) {
    if (cols != 1) fail(ErrorCode::Parse, "tensor " + name + " must be a column vector");
    v = std::move(data);
  };
  if (name == "encoder.embedding") mat(p.encoder.embedding);
  else if (name == "encoder.mix_weight") mat(p.encoder.mix_weight);
  else if (name == "encoder.mix_bias") vec(p.encoder.mix_bias);
  else if (name == "head.w0") mat(p.head.w0);
  else if (name == "head.b0") vec(p.head.b0);
  else if (name == "head.we") mat(p.head.we);
  else if (name == "head.be") vec(p.head.be);
  else if (name == "head.w1") mat(p.head.w1);
  else if (name == "head.b1") vec(p.head.b1);
  else if (name == "head.wstar") mat(p.head.wstar);
  else if (name == "head.bstar") vec(p.head.bstar);
  else fail(ErrorCode::Parse, "unknown checkpoint tensor " + name);
}

void check_shapes(const TrainedModel& m) {
  const auto& hp = m.params.head;
  const std::size_t h = m.config.hidden_dim;
  const std::size_t d = m.config.attr_dim;
  const std::size_t n = m.labels.size();
  auto expect = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::Parse, std::string("checkpoint tensor shape mismatch: ") + what);
  };
  expect(hp.w0.rows == h && hp.w0.cols == h && hp.b0.size() == h, "w0/b0");
  expect(hp.we.rows == h && hp.we.cols == h && hp.be.size() == h, "we/be");
  expect(hp.w1.rows == d && hp.w1.cols == 3 * h && hp.b1.size() == d, "w1/b1");
  expect(hp.wstar.rows == n && hp.wstar.cols == d && hp.bstar.size() == n, "wstar/bstar");
  if (m.config.encoder_mode != EncoderMode::HiddenStates) {
    const auto& e = m.params.encoder;
    expect(e.embedding.rows == m.vocab.size() && e.embedding.cols == h, "encoder.embedding");
    if (e.mixing) expect(e.mix_weight.rows == h && e.mix_weight.cols == h && e.mix_bias.size() == h, "encoder mixing");
  }
}

}  // namespace

void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path) {
  const auto views = tensors(model.params, true);
  json header = {{"format", "zsre-checkpoint"},
                 {"version", kCheckpointVersion},
                 {"config", to_json(model.config)},
                 {"seed", model.config.seed},
                 {"vocab", model.vocab.tokens()},
                 {"labels", model.labels},
                 {"tensors", json::array()}};
  for (const auto& v : views) header["tensors"].push_back({{"name", v.name}, {"rows", v.rows}, {"cols", v.cols}});
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  write_u32(out, kCheckpointVersion);
  write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& v : views) {
    for (double x : v.values) write_u64(out, std::bit_cast<std::uint64_t>(x));
  }
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

TrainedModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    fail(ErrorCode::Parse, path.string() + " is not a checkpoint file");
  }
  const auto version = static_cast<std::uint32_t>(read_le(in, 4, path.string()));
  if (version != kCheckpointVersion) {
    fail(ErrorCode::Version, "checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  const auto header_len = read_le(in, 8, path.string());
  if (header_len > (1ULL << 32)) fail(ErrorCode::Parse, "corrupt checkpoint header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) fail(ErrorCode::Parse, "truncated checkpoint header");

  TrainedModel model;
  try {
    const json header = json::parse(text);
    if (header.at("version").get<std::uint32_t>() != kCheckpointVersion) {
      fail(ErrorCode::Version, "checkpoint header version mismatch");
    }
    model.config = train_config_from_json(header.at("config"));
    model.vocab = Vocab::from_tokens(header.at("vocab").get<std::vector<std::string>>());
    model.labels = header.at("labels").get<std::vector<std::string>>();
    model.params.encoder.mixing = model.config.encoder_mixing;
    if (model.config.encoder_mode == EncoderMode::HiddenStates) {
      model.params.encoder.embedding = Matrix(0, model.config.hidden_dim);
    }
    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto rows = t.at("rows").get<std::size_t>();
      const auto cols = t.at("cols").get<std::size_t>();
      Vector data(rows * cols);
      for (double& x : data) x = std::bit_cast<double>(read_le(in, 8, path.string()));
      assign_tensor(model.params, name, rows, cols, std::move(data));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, "corrupt checkpoint header: " + std::string(e.what()));
  }
  check_shapes(model);
  return model;
}

}  // namespace zsre
