#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "zsre/dataset.hpp"
#include "zsre/tensor.hpp"

namespace zsre {

class Vocab {
 public:
  static constexpr std::size_t kCls = 0;
  static constexpr std::size_t kSep = 1;
  static constexpr std::size_t kUnk = 2;
  static constexpr std::size_t kPad = 3;

  Vocab();
  // Appends `token` if absent; returns its index.
  std::size_t add(const std::string& token);
  // Unknown tokens map to kUnk.
  std::size_t index_of(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }
  const std::string& token(std::size_t i) const { return tokens_.at(i); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  std::size_t size() const { return tokens_.size(); }

  static Vocab from_tokens(const std::vector<std::string>& tokens);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Reserved tokens, then every distinct token in first-occurrence order.
Vocab build_vocab(const std::vector<Instance>& instances);
// Reserved tokens, then the table's tokens, then remaining instance tokens.
Vocab build_vocab(const std::vector<Instance>& instances, const TokenTable& table);

struct EncodedSentence {
  Matrix hidden;                        // (L+2) x h; row 0 = CLS, row L+1 = SEP
  std::vector<int> entity_marker;       // length L+2; 1 = head, 2 = tail, 0 elsewhere
  std::vector<std::size_t> token_ids;   // length L; empty for precomputed states
};

struct EncoderParams {
  Matrix embedding;  // |V| x h
  bool mixing = false;
  Matrix mix_weight;  // h x h when mixing
  Vector mix_bias;    // h when mixing

  std::size_t hidden_dim() const { return embedding.cols; }

  static EncoderParams init(std::size_t vocab_size, std::size_t hidden_dim, bool mixing, std::uint64_t seed);
  // Rows for the table's tokens are copied; UNK is zero; other rows follow init().
  static EncoderParams from_token_table(const Vocab& vocab, const TokenTable& table, bool mixing,
                                        std::uint64_t seed);
  EncoderParams zeros_like() const;
  bool operator==(const EncoderParams&) const = default;
};

EncodedSentence encode_tokens(const Instance& instance, const Vocab& vocab, const EncoderParams& params);

// Accumulates into `grads` the gradient of a loss whose gradient w.r.t. the
// hidden rows of `encoded` is `d_hidden`.
void encode_tokens_backward(const EncodedSentence& encoded, const Matrix& d_hidden, const EncoderParams& params,
                            EncoderParams& grads);

// Precomputed per-instance hidden states, keyed by instance index within
// their instances file.
class HiddenStateStore {
 public:
  void put(std::size_t index, Matrix hidden);
  bool contains(std::size_t index) const { return states_.count(index) != 0; }
  const Matrix& at(std::size_t index) const;
  std::size_t size() const { return states_.size(); }
  std::size_t hidden_dim() const { return dim_; }
  const std::map<std::size_t, Matrix>& states() const { return states_; }

 private:
  std::map<std::size_t, Matrix> states_;
  std::size_t dim_ = 0;
};

// Binary layout (little-endian): "ZSHS", u32 version=1, u64 count, u64 h,
// then per record u64 index, u64 rows, rows*h f64. Paths ending in .jsonl
// use {"index": i, "hidden": [[...], ...]} lines instead.
HiddenStateStore load_hidden_states(const std::filesystem::path& path);
void save_hidden_states(const HiddenStateStore& store, const std::filesystem::path& path);

EncodedSentence encode_precomputed(const Instance& instance, const Matrix& hidden);

enum class DescriptionMode { Precomputed, Hashed, Identity };

DescriptionMode parse_description_mode(const std::string& name);
std::string to_string(DescriptionMode mode);

Vector encode_description(const RelationMeta& rel, DescriptionMode mode, std::size_t d_attr);

enum class EncoderMode { Toy, TokenTable, HiddenStates };

EncoderMode parse_encoder_mode(const std::string& name);
std::string to_string(EncoderMode mode);

// Produces the hidden states for instance `index` of a file, from either the
// token encoder or a precomputed store.
class SentenceEncoder {
 public:
  SentenceEncoder(const Vocab& vocab, const EncoderParams& params) : vocab_(&vocab), params_(&params) {}
  explicit SentenceEncoder(const HiddenStateStore& store) : store_(&store) {}

  EncodedSentence encode(const Instance& instance, std::size_t index) const;
  bool uses_token_encoder() const { return store_ == nullptr; }

 private:
  const Vocab* vocab_ = nullptr;
  const EncoderParams* params_ = nullptr;
  const HiddenStateStore* store_ = nullptr;
};

}  // namespace zsre
