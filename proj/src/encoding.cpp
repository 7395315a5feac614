#include "zsre/encoding.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "zsre/error.hpp"
#include "zsre/random.hpp"

namespace zsre {

namespace {
constexpr std::array<const char*, 4> kReserved = {"[CLS]", "[SEP]", "[UNK]", "[PAD]"};
}

Vocab::Vocab() {
  for (const char* t : kReserved) add(t);
}

std::size_t Vocab::add(const std::string& token) {
  auto [it, inserted] = index_.emplace(token, tokens_.size());
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::size_t Vocab::index_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kReserved.size()) fail(ErrorCode::Validation, "vocabulary is missing reserved tokens");
  for (std::size_t i = 0; i < kReserved.size(); ++i) {
    if (tokens[i] != kReserved[i]) fail(ErrorCode::Validation, "vocabulary reserved token mismatch at " + std::to_string(i));
  }
  Vocab v;
  for (const auto& t : tokens) {
    if (v.contains(t) && v.index_of(t) >= kReserved.size()) fail(ErrorCode::Validation, "duplicate vocabulary token " + t);
    v.add(t);
  }
  if (v.size() != tokens.size()) fail(ErrorCode::Validation, "vocabulary has duplicate tokens");
  return v;
}

Vocab build_vocab(const std::vector<Instance>& instances) {
  if (instances.empty()) fail(ErrorCode::InvalidArgument, "cannot build a vocabulary from zero instances");
  Vocab v;
  for (const auto& inst : instances) {
    for (const auto& t : inst.tokens) v.add(t);
  }
  return v;
}

Vocab build_vocab(const std::vector<Instance>& instances, const TokenTable& table) {
  Vocab v;
  for (const auto& t : table.tokens) v.add(t);
  for (const auto& inst : instances) {
    for (const auto& t : inst.tokens) v.add(t);
  }
  return v;
}

EncoderParams EncoderParams::init(std::size_t vocab_size, std::size_t hidden_dim, bool mixing, std::uint64_t seed) {
  Rng rng(seed);
  EncoderParams p;
  // A one-hot lookup has fan-in 1.
  p.embedding = Matrix(vocab_size, hidden_dim);
  for (double& x : p.embedding.data) x = rng.uniform(-1.0, 1.0);
  p.mixing = mixing;
  if (mixing) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    p.mix_weight = Matrix(hidden_dim, hidden_dim);
    for (double& x : p.mix_weight.data) x = rng.uniform(-bound, bound);
    p.mix_bias = Vector(hidden_dim, 0.0);
  }
  return p;
}

EncoderParams EncoderParams::from_token_table(const Vocab& vocab, const TokenTable& table, bool mixing,
                                              std::uint64_t seed) {
  EncoderParams p = init(vocab.size(), table.dim(), mixing, seed);
  auto unk = p.embedding.row(Vocab::kUnk);
  std::fill(unk.begin(), unk.end(), 0.0);
  for (std::size_t i = 0; i < table.tokens.size(); ++i) {
    const auto src = table.vectors.row(i);
    std::copy(src.begin(), src.end(), p.embedding.row(vocab.index_of(table.tokens[i])).begin());
  }
  return p;
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams g;
  g.embedding = Matrix(embedding.rows, embedding.cols);
  g.mixing = mixing;
  g.mix_weight = Matrix(mix_weight.rows, mix_weight.cols);
  g.mix_bias = Vector(mix_bias.size(), 0.0);
  return g;
}

namespace {

Vector token_row(const EncoderParams& params, std::size_t id) {
  const auto e = params.embedding.row(id);
  if (!params.mixing) return Vector(e.begin(), e.end());
  return tanh_of(affine(params.mix_weight, e, params.mix_bias));
}

std::vector<int> build_marker(const Instance& instance) {
  std::vector<int> marker(instance.tokens.size() + 2, 0);
  for (std::size_t t = instance.head.first; t <= instance.head.last; ++t) marker[t + 1] = 1;
  for (std::size_t t = instance.tail.first; t <= instance.tail.last; ++t) marker[t + 1] = 2;
  return marker;
}

void check_spans(const Instance& instance) {
  const std::size_t n = instance.tokens.size();
  for (const Span& s : {instance.head, instance.tail}) {
    if (s.first > s.last || s.last >= n) fail(ErrorCode::Validation, "entity span out of range");
  }
}

}  // namespace

EncodedSentence encode_tokens(const Instance& instance, const Vocab& vocab, const EncoderParams& params) {
  if (params.embedding.rows != vocab.size()) {
    fail(ErrorCode::InvalidArgument, "embedding table has " + std::to_string(params.embedding.rows) +
                                         " rows but vocabulary has " + std::to_string(vocab.size()));
  }
  check_spans(instance);
  const std::size_t len = instance.tokens.size();
  const std::size_t h = params.hidden_dim();
  EncodedSentence out;
  out.hidden = Matrix(len + 2, h);
  out.token_ids.reserve(len);
  auto cls = out.hidden.row(0);
  for (std::size_t t = 0; t < len; ++t) {
    const std::size_t id = vocab.index_of(instance.tokens[t]);
    out.token_ids.push_back(id);
    const Vector row = token_row(params, id);
    std::copy(row.begin(), row.end(), out.hidden.row(t + 1).begin());
    add_into(cls, row);
  }
  for (double& x : cls) x /= static_cast<double>(len);
  const Vector sep = token_row(params, Vocab::kSep);
  std::copy(sep.begin(), sep.end(), out.hidden.row(len + 1).begin());
  out.entity_marker = build_marker(instance);
  return out;
}

void encode_tokens_backward(const EncodedSentence& encoded, const Matrix& d_hidden, const EncoderParams& params,
                            EncoderParams& grads) {
  const std::size_t len = encoded.token_ids.size();
  if (len == 0) fail(ErrorCode::InvalidArgument, "sentence was not produced by the token encoder");
  const auto d_cls = d_hidden.row(0);
  for (std::size_t t = 0; t < len; ++t) {
    Vector d_row(d_hidden.row(t + 1).begin(), d_hidden.row(t + 1).end());
    add_into(d_row, d_cls, 1.0 / static_cast<double>(len));
    const std::size_t id = encoded.token_ids[t];
    auto d_emb = grads.embedding.row(id);
    if (!params.mixing) {
      add_into(d_emb, d_row);
      continue;
    }
    const Vector d_pre = tanh_backward(encoded.hidden.row(t + 1), d_row);
    add_outer(grads.mix_weight, d_pre, params.embedding.row(id));
    add_into(grads.mix_bias, d_pre);
    add_into(d_emb, transposed_times(params.mix_weight, d_pre));
  }
}

void HiddenStateStore::put(std::size_t index, Matrix hidden) {
  if (hidden.rows < 3) fail(ErrorCode::Validation, "hidden state needs at least CLS, one token, and SEP rows");
  if (dim_ == 0) dim_ = hidden.cols;
  if (hidden.cols != dim_) fail(ErrorCode::Validation, "inconsistent hidden width for instance " + std::to_string(index));
  for (double x : hidden.data) {
    if (!std::isfinite(x)) fail(ErrorCode::Validation, "non-finite hidden state for instance " + std::to_string(index));
  }
  states_[index] = std::move(hidden);
}

const Matrix& HiddenStateStore::at(std::size_t index) const {
  auto it = states_.find(index);
  if (it == states_.end()) fail(ErrorCode::Validation, "no precomputed hidden state for instance " + std::to_string(index));
  return it->second;
}

namespace {

constexpr char kHiddenMagic[4] = {'Z', 'S', 'H', 'S'};
constexpr std::uint32_t kHiddenVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::istream& in) {
  T value = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) fail(ErrorCode::Parse, "truncated hidden-state file");
    value |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return value;
}

bool is_jsonl(const std::filesystem::path& path) { return path.extension() == ".jsonl"; }

}  // namespace

HiddenStateStore load_hidden_states(const std::filesystem::path& path) {
  HiddenStateStore store;
  if (is_jsonl(path)) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        const auto rows = j.at("hidden").get<std::vector<Vector>>();
        if (rows.empty() || rows.front().empty()) fail(ErrorCode::Validation, "empty hidden state");
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
          require_size(rows[r].size(), m.cols, "hidden-state row");
          std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
        }
        store.put(j.at("index").get<std::size_t>(), std::move(m));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Parse, path.string() + " line " + std::to_string(lineno) + ": " + e.what());
      } catch (const Error& e) {
        throw Error(e.code(), path.string() + " line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return store;
  }

  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kHiddenMagic, 4) != 0) {
    fail(ErrorCode::Parse, path.string() + " is not a hidden-state file");
  }
  const auto version = get_le<std::uint32_t>(in);
  if (version != kHiddenVersion) fail(ErrorCode::Version, "unsupported hidden-state version " + std::to_string(version));
  const auto count = get_le<std::uint64_t>(in);
  const auto h = get_le<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto index = get_le<std::uint64_t>(in);
    const auto rows = get_le<std::uint64_t>(in);
    Matrix m(rows, h);
    for (double& x : m.data) x = std::bit_cast<double>(get_le<std::uint64_t>(in));
    store.put(index, std::move(m));
  }
  return store;
}

void save_hidden_states(const HiddenStateStore& store, const std::filesystem::path& path) {
  if (is_jsonl(path)) {
    std::ofstream out(path);
    if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
    for (const auto& [index, m] : store.states()) {
      std::vector<Vector> rows;
      for (std::size_t r = 0; r < m.rows; ++r) rows.emplace_back(m.row(r).begin(), m.row(r).end());
      out << nlohmann::json{{"index", index}, {"hidden", rows}}.dump() << '\n';
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out.write(kHiddenMagic, 4);
  put_le<std::uint32_t>(out, kHiddenVersion);
  put_le<std::uint64_t>(out, store.size());
  put_le<std::uint64_t>(out, store.hidden_dim());
  for (const auto& [index, m] : store.states()) {
    put_le<std::uint64_t>(out, index);
    put_le<std::uint64_t>(out, m.rows);
    for (double x : m.data) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
}

EncodedSentence encode_precomputed(const Instance& instance, const Matrix& hidden) {
  check_spans(instance);
  require_size(hidden.rows, instance.tokens.size() + 2, "precomputed hidden rows (L+2)");
  EncodedSentence out;
  out.hidden = hidden;
  out.entity_marker = build_marker(instance);
  return out;
}

DescriptionMode parse_description_mode(const std::string& name) {
  if (name == "precomputed") return DescriptionMode::Precomputed;
  if (name == "hashed") return DescriptionMode::Hashed;
  if (name == "identity") return DescriptionMode::Identity;
  fail(ErrorCode::InvalidArgument, "unknown description mode '" + name + "'");
}

std::string to_string(DescriptionMode mode) {
  switch (mode) {
    case DescriptionMode::Precomputed: return "precomputed";
    case DescriptionMode::Hashed: return "hashed";
    case DescriptionMode::Identity: return "identity";
  }
  return "?";
}

Vector encode_description(const RelationMeta& rel, DescriptionMode mode, std::size_t d_attr) {
  if (mode == DescriptionMode::Hashed) {
    Rng rng(derive_seed(fnv1a(rel.description), SeedStream::Hash));
    Vector v(d_attr);
    double sq = 0.0;
    while (sq == 0.0) {
      for (double& x : v) x = rng.normal();
      sq = dot(v, v);
    }
    const double n = std::sqrt(sq);
    for (double& x : v) x /= n;
    return v;
  }
  if (!rel.attribute) {
    fail(ErrorCode::Validation, "relation " + rel.id + " has no attribute vector (" + to_string(mode) + " mode)");
  }
  require_size(rel.attribute->size(), d_attr, "attribute of relation " + rel.id);
  return *rel.attribute;
}

EncoderMode parse_encoder_mode(const std::string& name) {
  if (name == "toy") return EncoderMode::Toy;
  if (name == "token_table") return EncoderMode::TokenTable;
  if (name == "hidden_states") return EncoderMode::HiddenStates;
  fail(ErrorCode::InvalidArgument, "unknown encoder mode '" + name + "'");
}

std::string to_string(EncoderMode mode) {
  switch (mode) {
    case EncoderMode::Toy: return "toy";
    case EncoderMode::TokenTable: return "token_table";
    case EncoderMode::HiddenStates: return "hidden_states";
  }
  return "?";
}

EncodedSentence SentenceEncoder::encode(const Instance& instance, std::size_t index) const {
  if (store_) return encode_precomputed(instance, store_->at(index));
  return encode_tokens(instance, *vocab_, *params_);
}

}  // namespace zsre
