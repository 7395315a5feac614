#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "zsre/evaluation.hpp"
#include "zsre/optim.hpp"

namespace zsre {

// Fully described run: data paths, training hyperparameters, and protocol.
// Precedence: preset defaults < config file < command-line overrides.
struct RunConfig {
  std::string preset = "desk";
  std::string instances;
  std::string relations;
  std::string token_embeddings;
  std::string hidden_states;
  std::string split;
  std::string out = "out";

  TrainConfig train;
  // "auto" picks token_table / hidden_states / toy from which paths are set.
  std::string encoder_mode = "auto";
  // Unset: trainable for the toy encoder, frozen otherwise.
  std::optional<bool> encoder_trainable;

  std::size_t m = 3;
  std::size_t repeats = 5;
  std::vector<double> fractions = {0.0, 0.05, 0.1};
  std::string sweep_axis = "alpha";
  std::vector<std::string> sweep_values = {"0.0", "0.2", "0.4", "0.6", "0.8", "1.0"};
  std::size_t jobs = 1;

  double gradcheck_tol = 1e-4;
  double gradcheck_step = 1e-5;
  std::size_t gradcheck_batch = 4;
  std::size_t gradcheck_coords = 32;

  Protocol protocol() const { return {train, m, repeats, jobs}; }
};

// "desk" or "paper".
RunConfig preset_config(const std::string& name);

// Applies every key of `j`; unknown keys are rejected by name.
void apply_json(RunConfig& config, const nlohmann::json& j);

// Builds from preset, optional file, and overrides, then resolves and
// validates. `preset` in the overrides wins over one in the file.
RunConfig build_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides,
                       bool check_paths = true);

RunConfig load_config(const std::filesystem::path& path);

// Fixes encoder_mode and encoder_trainable from "auto"/unset.
void resolve(RunConfig& config);
void validate(const RunConfig& config, bool check_paths);

nlohmann::json to_json(const RunConfig& config);

Corpus load_corpus(const RunConfig& config);

}  // namespace zsre

namespace zsre {

// The split named by `config.split`, else a fresh zero-shot split (m, seed).
SplitSpec split_for(const RunConfig& config, const Corpus& corpus);

// Gradient check of a freshly initialized model on one seeded batch of the
// training side of split_for().
GradCheckReport gradcheck_for(const RunConfig& config, const Corpus& corpus);

}  // namespace zsre
