#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsre/dataset.hpp"
#include "zsre/encoding.hpp"
#include "zsre/optim.hpp"

namespace zsre {

struct RelationScore {
  std::string id;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t support = 0;  // gold count
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct Metrics {
  std::vector<RelationScore> per_relation;  // one per unseen id, in the given order
  // Unweighted means over relations with support > 0.
  double macro_p = 0.0;
  double macro_r = 0.0;
  double macro_f1 = 0.0;
  double micro_p = 0.0;
  double micro_r = 0.0;
  double micro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t n = 0;
};

Metrics compute_metrics(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                        const std::vector<std::string>& unseen_ids);

nlohmann::json to_json(const Metrics& metrics);

struct Corpus {
  std::vector<Instance> instances;
  RelationTable relations;
  std::optional<TokenTable> token_table;
  std::optional<HiddenStateStore> hidden_states;

  EncoderInputs inputs() const {
    return {token_table ? &*token_table : nullptr, hidden_states ? &*hidden_states : nullptr};
  }
};

struct Protocol {
  TrainConfig train;
  std::size_t m = 3;
  std::size_t repeats = 5;
  std::size_t jobs = 1;
};

struct RepeatOutcome {
  std::uint64_t seed = 0;
  Metrics metrics;
  double final_loss = 0.0;
};

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
};

struct ExperimentReport {
  Protocol protocol;
  std::vector<RepeatOutcome> repeats;
  Summary macro_p;
  Summary macro_r;
  Summary macro_f1;
  Summary micro_f1;
};

nlohmann::json to_json(const ExperimentReport& report);

// Train on `split` and score its test side against the unseen relations.
RepeatOutcome evaluate_split(const Corpus& corpus, const SplitSpec& split, const TrainConfig& config);

// Repeat r uses seed base + r for both the split and training.
ExperimentReport run_experiment(const Corpus& corpus, const Protocol& protocol);

struct CurvePoint {
  std::string value;
  Summary macro_f1;
};

// Fraction 0 evaluates the plain zero-shot split.
std::vector<CurvePoint> run_fewshot_curve(const Corpus& corpus, const Protocol& protocol,
                                          const std::vector<double>& fractions);

enum class SweepAxis { Gamma, Alpha, Dist };
SweepAxis parse_sweep_axis(const std::string& name);

std::vector<CurvePoint> run_sweep(const Corpus& corpus, const Protocol& protocol, SweepAxis axis,
                                  const std::vector<std::string>& values);

// value,mean_macro_F1,std_macro_F1
std::string curve_csv(const std::vector<CurvePoint>& points);

// One line per instance: {"index", "relation", "embedding"}.
void dump_embeddings(const TrainedModel& model, const std::vector<Instance>& instances,
                     const HiddenStateStore* store, const std::filesystem::path& path);

}  // namespace zsre
