#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "zsre/tensor.hpp"

namespace zsre {

// Inclusive token span [first, last].
struct Span {
  std::size_t first = 0;
  std::size_t last = 0;

  std::size_t length() const { return last - first + 1; }
  bool contains(std::size_t i) const { return i >= first && i <= last; }
  bool operator==(const Span&) const = default;
};

struct Instance {
  std::vector<std::string> tokens;
  Span head;
  Span tail;
  std::string relation_id;

  bool operator==(const Instance&) const = default;
};

struct RelationMeta {
  std::string id;
  std::string name;
  std::string description;
  std::optional<Vector> attribute;
};

// Relations in file order with id lookup.
class RelationTable {
 public:
  void add(RelationMeta rel);
  std::size_t size() const { return rows_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const RelationMeta& at(const std::string& id) const;
  // Position of `id` in file order.
  std::size_t position(const std::string& id) const;
  const std::vector<RelationMeta>& rows() const { return rows_; }

 private:
  std::vector<RelationMeta> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SplitSpec {
  std::string prng;
  std::uint64_t seed = 0;
  std::size_t m = 0;
  // Both in relation-table order.
  std::vector<std::string> seen_ids;
  std::vector<std::string> unseen_ids;
  // Ascending instance indices.
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
  double fewshot_fraction = 0.0;

  bool operator==(const SplitSpec&) const = default;
};

struct SyntheticConfig {
  std::size_t n_relations = 12;
  std::size_t instances_per_relation = 50;
  std::size_t vocab_size = 240;
  std::size_t d_attr = 64;
  // Width of the emitted token embedding table.
  std::size_t hidden_dim = 32;
  // Rank of the subspace the attribute vectors are drawn from; 0 picks
  // max(2, ceil(n_relations / 2)).
  std::size_t latent_dim = 0;
  double noise_scale = 0.1;
  std::uint64_t seed = 1;
};

// Token -> fixed feature vector, the stand-in for a pretrained encoder's
// input layer.
struct TokenTable {
  std::vector<std::string> tokens;
  Matrix vectors;  // tokens.size() x dim

  std::size_t dim() const { return vectors.cols; }
  bool operator==(const TokenTable&) const = default;
};

struct SyntheticCorpus {
  std::vector<Instance> instances;
  RelationTable relations;
  TokenTable token_table;
};

// Parsing. `source` names the stream in error messages.
std::vector<Instance> read_instances(std::istream& in, const std::string& source = "<stream>");
std::vector<Instance> load_instances(const std::filesystem::path& path);
RelationTable read_relations(std::istream& in, std::optional<std::size_t> d_attr = std::nullopt,
                             const std::string& source = "<stream>");
RelationTable load_relations(const std::filesystem::path& path,
                             std::optional<std::size_t> d_attr = std::nullopt);
TokenTable load_token_table(const std::filesystem::path& path);

void save_instances(const std::vector<Instance>& instances, const std::filesystem::path& path);
void save_relations(const RelationTable& relations, const std::filesystem::path& path);
void save_token_table(const TokenTable& table, const std::filesystem::path& path);

// Every instance's relation must be in the table.
void check_relations_known(const std::vector<Instance>& instances, const RelationTable& relations);

SplitSpec make_zero_shot_split(const std::vector<Instance>& instances, const RelationTable& relations,
                               std::size_t m, std::uint64_t seed);
SplitSpec make_few_shot_split(const SplitSpec& split, const std::vector<Instance>& instances,
                              double fraction, std::uint64_t seed);
// Number of instances moved for one unseen relation with `test_count` test instances.
std::size_t fewshot_move_count(double fraction, std::size_t test_count);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(const std::string& text);
void save_split(const SplitSpec& split, const std::filesystem::path& path);
SplitSpec load_split(const std::filesystem::path& path);

SyntheticCorpus generate_synthetic(const SyntheticConfig& config);

}  // namespace zsre
