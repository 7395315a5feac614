#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsre/dataset.hpp"
#include "zsre/encoding.hpp"
#include "zsre/inference.hpp"
#include "zsre/loss.hpp"
#include "zsre/params.hpp"

namespace zsre {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Vector> m;
  std::vector<Vector> v;
};

// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), bias-corrected. The
// state's moment buffers are sized on first use and must match afterwards.
void adam_step(std::span<const TensorView> params, std::span<const ConstTensorView> grads, AdamState& state,
               double lr);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 4;
  double gamma = 7.5;
  double alpha = 0.4;
  std::size_t epochs = 50;
  std::uint64_t seed = 1;
  DistKind dist = DistKind::NegInnerProduct;
  EncoderMode encoder_mode = EncoderMode::Toy;
  bool encoder_trainable = true;
  bool encoder_mixing = false;
  DescriptionMode description_mode = DescriptionMode::Identity;
  std::size_t hidden_dim = 32;
  std::size_t attr_dim = 64;
  // Global gradient-norm cap; 0 disables clipping.
  double grad_clip = 0.0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
// Reads the keys present in `j` over `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochRecord {
  std::size_t epoch = 0;
  // Means per training instance.
  double margin_term = 0.0;
  double ce_term = 0.0;
  double total = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

// One JSON object per line: epoch, margin_term, ce_term, total, seconds.
std::string history_jsonl(const TrainHistory& history);

struct TrainedModel {
  TrainConfig config;
  Vocab vocab;
  std::vector<std::string> labels;  // classifier rows, relation ids
  ModelParams params;

  SentenceEncoder sentence_encoder(const HiddenStateStore* store = nullptr) const;
  Vector embed(const Instance& instance, std::size_t index, const HiddenStateStore* store = nullptr) const;
};

// Optional encoder inputs; which one is required depends on the encoder mode.
struct EncoderInputs {
  const TokenTable* token_table = nullptr;
  const HiddenStateStore* hidden_states = nullptr;
};

struct TrainResult {
  TrainedModel model;
  TrainHistory history;
  Matrix label_attrs;  // attribute vectors used as training targets, one row per label
};

// Relation ids present in the split's training side, in relation-table order.
std::vector<std::string> training_labels(const std::vector<Instance>& instances, const RelationTable& relations,
                                         const SplitSpec& split);

// Vocabulary and initial parameters exactly as train() starts from them.
TrainedModel initialize_model(const std::vector<Instance>& instances, const RelationTable& relations,
                              const SplitSpec& split, const TrainConfig& config, const EncoderInputs& inputs);

TrainResult train(const std::vector<Instance>& instances, const RelationTable& relations, const SplitSpec& split,
                  const TrainConfig& config, const EncoderInputs& inputs = {});

// What a batch needs besides parameters; forward is rerun from this each time.
struct BatchInput {
  std::vector<Instance> instances;
  std::vector<std::size_t> file_indices;  // for precomputed hidden-state lookup
  Matrix attrs;
  std::vector<std::size_t> labels;
};

Batch build_batch(const BatchInput& input, const ModelParams& params, const Vocab& vocab,
                  const HiddenStateStore* store);

double central_difference(const std::function<double(double)>& f, double x, double h);
inline constexpr double kRelativeErrorFloor = 1e-4;
// |a - f| / max(|a|, |f|, floor); gradients below the floor get an absolute test.
double relative_error(double analytic, double numeric);

struct TensorCheck {
  std::string name;
  std::size_t checked = 0;
  std::vector<std::size_t> skipped;  // coordinates straddling a hinge/argmax/clamp switch
  double max_rel_error = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<TensorCheck> tensors;
  bool passed = true;
};

struct GradCheckOptions {
  double gamma = 7.5;
  double alpha = 0.4;
  bool encoder_trainable = true;
  double step = 1e-5;
  double tol = 1e-4;
  std::size_t coords_per_tensor = 32;
  std::uint64_t seed = 1;
};

GradCheckReport grad_check(const ModelParams& params, const BatchInput& input, const Vocab& vocab,
                           const HiddenStateStore* store, const GradCheckOptions& options);

std::string gradcheck_table(const GradCheckReport& report);

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (little-endian): "ZSRECKPT", u32 version, u64 header length, UTF-8
// JSON header (config, vocab, labels, tensor names and shapes), then every
// tensor's f64 values in header order.
void save_checkpoint(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_checkpoint(const std::filesystem::path& path);

}  // namespace zsre
