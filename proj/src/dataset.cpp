#include "zsre/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "json.hpp"
#include "zsre/error.hpp"
#include "zsre/random.hpp"

namespace zsre {

using nlohmann::json;

void RelationTable::add(RelationMeta rel) {
  if (index_.count(rel.id) != 0) fail(ErrorCode::Validation, "duplicate relation id " + rel.id);
  index_.emplace(rel.id, rows_.size());
  rows_.push_back(std::move(rel));
}

const RelationMeta& RelationTable::at(const std::string& id) const { return rows_[position(id)]; }

std::size_t RelationTable::position(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorCode::Validation, "unknown relation id " + id);
  return it->second;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::string where(const std::string& source, std::size_t line) {
  return source + " line " + std::to_string(line);
}

Span parse_span(const json& j, std::size_t n_tokens, const std::string& key, const std::string& at) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    fail(ErrorCode::Parse, "field '" + key + "' must be [q, r] integers, " + at);
  }
  const auto q = j[0].get<long long>();
  const auto r = j[1].get<long long>();
  if (q < 0 || r < 0) fail(ErrorCode::Validation, "span out of range (" + key + "), " + at);
  if (q > r) fail(ErrorCode::Validation, "span start exceeds end (" + key + "), " + at);
  if (static_cast<std::size_t>(r) >= n_tokens) {
    fail(ErrorCode::Validation, "span out of range (" + key + "), " + at);
  }
  return {static_cast<std::size_t>(q), static_cast<std::size_t>(r)};
}

template <typename Fn>
void for_each_record(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::Parse, "parse error at " + where(source, lineno) + ": " + e.what());
    }
    if (!j.is_object()) fail(ErrorCode::Parse, "record is not an object, " + where(source, lineno));
    fn(j, where(source, lineno));
  }
}

json vector_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

}  // namespace

std::vector<Instance> read_instances(std::istream& in, const std::string& source) {
  std::vector<Instance> out;
  for_each_record(in, source, [&](const json& j, const std::string& at) {
    Instance inst;
    try {
      inst.tokens = j.at("tokens").get<std::vector<std::string>>();
      inst.relation_id = j.at("relation").get<std::string>();
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, std::string("bad instance record, ") + at + ": " + e.what());
    }
    if (inst.tokens.empty()) fail(ErrorCode::Validation, "empty token list, " + at);
    if (!j.contains("head") || !j.contains("tail")) fail(ErrorCode::Parse, "missing head/tail span, " + at);
    inst.head = parse_span(j["head"], inst.tokens.size(), "head", at);
    inst.tail = parse_span(j["tail"], inst.tokens.size(), "tail", at);
    out.push_back(std::move(inst));
  });
  return out;
}

std::vector<Instance> load_instances(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_instances(in, path.string());
}

RelationTable read_relations(std::istream& in, std::optional<std::size_t> d_attr, const std::string& source) {
  RelationTable table;
  for_each_record(in, source, [&](const json& j, const std::string& at) {
    RelationMeta rel;
    try {
      rel.id = j.at("id").get<std::string>();
      rel.name = j.value("name", rel.id);
      rel.description = j.at("description").get<std::string>();
      if (j.contains("attribute") && !j["attribute"].is_null()) {
        rel.attribute = j["attribute"].get<Vector>();
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, std::string("bad relation record, ") + at + ": " + e.what());
    }
    if (rel.description.empty()) fail(ErrorCode::Validation, "empty description for relation " + rel.id + ", " + at);
    if (rel.attribute) {
      for (double x : *rel.attribute) {
        if (!std::isfinite(x)) fail(ErrorCode::Validation, "non-finite attribute for relation " + rel.id);
      }
      if (d_attr && rel.attribute->size() != *d_attr) {
        fail(ErrorCode::Validation, "attribute of relation " + rel.id + " has length " +
                                        std::to_string(rel.attribute->size()) + ", expected " +
                                        std::to_string(*d_attr));
      }
    }
    table.add(std::move(rel));
  });
  return table;
}

RelationTable load_relations(const std::filesystem::path& path, std::optional<std::size_t> d_attr) {
  auto in = open_input(path);
  return read_relations(in, d_attr, path.string());
}

TokenTable load_token_table(const std::filesystem::path& path) {
  auto in = open_input(path);
  TokenTable table;
  std::vector<Vector> rows;
  for_each_record(in, path.string(), [&](const json& j, const std::string& at) {
    try {
      table.tokens.push_back(j.at("token").get<std::string>());
      rows.push_back(j.at("vector").get<Vector>());
    } catch (const json::exception& e) {
      fail(ErrorCode::Parse, std::string("bad token record, ") + at + ": " + e.what());
    }
    if (rows.back().size() != rows.front().size() || rows.back().empty()) {
      fail(ErrorCode::Validation, "inconsistent token vector width, " + at);
    }
  });
  if (rows.empty()) fail(ErrorCode::Validation, "empty token table " + path.string());
  table.vectors = Matrix(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), table.vectors.row(i).begin());
  return table;
}

void save_instances(const std::vector<Instance>& instances, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& inst : instances) {
    json j = {{"tokens", inst.tokens},
              {"head", {inst.head.first, inst.head.last}},
              {"tail", {inst.tail.first, inst.tail.last}},
              {"relation", inst.relation_id}};
    out << j.dump() << '\n';
  }
}

void save_relations(const RelationTable& relations, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& rel : relations.rows()) {
    json j = {{"id", rel.id}, {"name", rel.name}, {"description", rel.description}};
    if (rel.attribute) j["attribute"] = *rel.attribute;
    out << j.dump() << '\n';
  }
}

void save_token_table(const TokenTable& table, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (std::size_t i = 0; i < table.tokens.size(); ++i) {
    json j = {{"token", table.tokens[i]}, {"vector", vector_json(table.vectors.row(i))}};
    out << j.dump() << '\n';
  }
}

void check_relations_known(const std::vector<Instance>& instances, const RelationTable& relations) {
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!relations.contains(instances[i].relation_id)) {
      fail(ErrorCode::Validation, "instance " + std::to_string(i) + " has relation " +
                                      instances[i].relation_id + " missing from the relation table");
    }
  }
}

SplitSpec make_zero_shot_split(const std::vector<Instance>& instances, const RelationTable& relations,
                               std::size_t m, std::uint64_t seed) {
  check_relations_known(instances, relations);
  std::vector<bool> present(relations.size(), false);
  for (const auto& inst : instances) present[relations.position(inst.relation_id)] = true;
  std::vector<std::string> candidates;
  for (std::size_t p = 0; p < relations.size(); ++p) {
    if (present[p]) candidates.push_back(relations.rows()[p].id);
  }
  if (m == 0 || m >= candidates.size()) {
    fail(ErrorCode::InvalidArgument, "m must satisfy 1 <= m < " + std::to_string(candidates.size()) +
                                         " (relations with instances), got " + std::to_string(m));
  }

  Rng rng(derive_seed(seed, SeedStream::Split));
  auto picked = sample_without_replacement(rng, candidates.size(), m);
  std::sort(picked.begin(), picked.end());
  std::set<std::string> unseen;
  for (std::size_t p : picked) unseen.insert(candidates[p]);

  SplitSpec split;
  split.prng = std::string(kPrngName);
  split.seed = seed;
  split.m = m;
  for (const auto& id : candidates) (unseen.count(id) ? split.unseen_ids : split.seen_ids).push_back(id);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    (unseen.count(instances[i].relation_id) ? split.test_idx : split.train_idx).push_back(i);
  }
  return split;
}

std::size_t fewshot_move_count(double fraction, std::size_t test_count) {
  // The epsilon keeps products like 0.02 * 100 from rounding up to 3.
  const double raw = fraction * static_cast<double>(test_count);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::min(k, test_count);
}

SplitSpec make_few_shot_split(const SplitSpec& split, const std::vector<Instance>& instances,
                              double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "few-shot fraction must lie in (0, 1), got " + std::to_string(fraction));
  }
  Rng rng(derive_seed(seed, SeedStream::FewShot));
  std::set<std::size_t> moved;
  for (const auto& id : split.unseen_ids) {
    std::vector<std::size_t> members;
    for (std::size_t i : split.test_idx) {
      if (instances.at(i).relation_id == id) members.push_back(i);
    }
    const std::size_t k = fewshot_move_count(fraction, members.size());
    for (std::size_t p : sample_without_replacement(rng, members.size(), k)) moved.insert(members[p]);
  }

  SplitSpec out = split;
  out.fewshot_fraction = fraction;
  out.test_idx.clear();
  for (std::size_t i : split.test_idx) {
    if (!moved.count(i)) out.test_idx.push_back(i);
  }
  out.train_idx.insert(out.train_idx.end(), moved.begin(), moved.end());
  std::sort(out.train_idx.begin(), out.train_idx.end());
  return out;
}

std::string split_to_json(const SplitSpec& split) {
  json j = {{"prng", split.prng},
            {"seed", split.seed},
            {"m", split.m},
            {"seen_ids", split.seen_ids},
            {"unseen_ids", split.unseen_ids},
            {"train_idx", split.train_idx},
            {"test_idx", split.test_idx},
            {"fewshot_fraction", split.fewshot_fraction}};
  return j.dump(2);
}

SplitSpec split_from_json(const std::string& text) {
  SplitSpec split;
  try {
    const json j = json::parse(text);
    split.prng = j.at("prng").get<std::string>();
    split.seed = j.at("seed").get<std::uint64_t>();
    split.m = j.at("m").get<std::size_t>();
    split.seen_ids = j.at("seen_ids").get<std::vector<std::string>>();
    split.unseen_ids = j.at("unseen_ids").get<std::vector<std::string>>();
    split.train_idx = j.at("train_idx").get<std::vector<std::size_t>>();
    split.test_idx = j.at("test_idx").get<std::vector<std::size_t>>();
    split.fewshot_fraction = j.value("fewshot_fraction", 0.0);
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("bad split file: ") + e.what());
  }
  if (split.prng != kPrngName) {
    fail(ErrorCode::Version, "split was drawn with PRNG '" + split.prng + "', this build uses '" +
                                 std::string(kPrngName) + "'");
  }
  std::set<std::string> seen(split.seen_ids.begin(), split.seen_ids.end());
  for (const auto& id : split.unseen_ids) {
    if (seen.count(id)) fail(ErrorCode::Validation, "relation " + id + " is both seen and unseen");
  }
  std::set<std::size_t> train(split.train_idx.begin(), split.train_idx.end());
  for (std::size_t i : split.test_idx) {
    if (train.count(i)) fail(ErrorCode::Validation, "instance " + std::to_string(i) + " is in train and test");
  }
  return split;
}

void save_split(const SplitSpec& split, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << split_to_json(split) << '\n';
}

SplitSpec load_split(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return split_from_json(ss.str());
}

namespace {

std::string padded(const std::string& prefix, std::size_t i, std::size_t n) {
  std::ostringstream os;
  os << prefix << std::setw(static_cast<int>(std::to_string(n).size())) << std::setfill('0') << i;
  return os.str();
}

constexpr int kAttributeDraws = 64;

void normalize(std::span<double> v) {
  const double n = norm(v);
  for (double& x : v) x /= n;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_relations < 1 || cfg.instances_per_relation < 1 || cfg.vocab_size < 1 || cfg.d_attr < 1 ||
      cfg.hidden_dim < 1) {
    fail(ErrorCode::InvalidArgument, "synthetic config counts must all be >= 1");
  }
  if (!(cfg.noise_scale >= 0.0 && cfg.noise_scale <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "noise_scale must lie in [0, 1]");
  }
  if (cfg.vocab_size < 2 * cfg.n_relations) {
    fail(ErrorCode::InvalidArgument, "vocab_size must be at least 2 x n_relations");
  }
  Rng rng(derive_seed(cfg.seed, SeedStream::Synthetic));
  const std::size_t n = cfg.n_relations;
  const std::size_t d = cfg.d_attr;
  const std::size_t h = cfg.hidden_dim;
  const std::size_t latent =
      std::min(d, cfg.latent_dim ? cfg.latent_dim : std::max<std::size_t>(2, (n + 1) / 2));

  // Orthonormal basis of the attribute subspace (Gram-Schmidt over Gaussian columns).
  std::vector<Vector> basis;
  while (basis.size() < latent) {
    Vector v(d);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) add_into(v, b, -dot(v, b));
    if (norm(v) < 1e-6) continue;
    normalize(v);
    basis.push_back(std::move(v));
  }

  // Each attribute is the best of several draws, keeping relations apart.
  Matrix attrs(n, d);
  for (std::size_t k = 0; k < n; ++k) {
    double best_overlap = 2.0;
    for (int attempt = 0; attempt < kAttributeDraws; ++attempt) {
      Vector cand(d, 0.0);
      for (std::size_t c = 0; c < latent; ++c) add_into(cand, basis[c], rng.normal());
      normalize(cand);
      double overlap = -1.0;
      for (std::size_t j = 0; j < k; ++j) overlap = std::max(overlap, dot(cand, attrs.row(j)));
      if (overlap < best_overlap) {
        best_overlap = overlap;
        std::copy(cand.begin(), cand.end(), attrs.row(k).begin());
      }
    }
  }

  // Fixed projection from attribute space to token features.
  Matrix proj(h, d);
  for (double& x : proj.data) x = 0.5 * rng.normal();

  const std::size_t cluster = cfg.vocab_size / n;
  SyntheticCorpus out;
  out.token_table.vectors = Matrix(cfg.vocab_size, h);
  for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
    out.token_table.tokens.push_back(padded("tok", t, cfg.vocab_size));
    for (double& x : out.token_table.vectors.row(t)) x = 0.1 * rng.normal();
  }
  for (std::size_t k = 0; k < n; ++k) {
    // Each cluster's embedding centroid is exactly proj * a_k.
    const Vector centre = affine(proj, attrs.row(k), Vector(h, 0.0));
    Vector mean(h, 0.0);
    for (std::size_t t = k * cluster; t < (k + 1) * cluster; ++t) add_into(mean, out.token_table.vectors.row(t), 1.0 / cluster);
    for (std::size_t t = k * cluster; t < (k + 1) * cluster; ++t) {
      auto row = out.token_table.vectors.row(t);
      add_into(row, mean, -1.0);
      add_into(row, centre);
    }
  }

  for (std::size_t k = 0; k < n; ++k) {
    RelationMeta rel;
    rel.id = padded("R", k, n);
    rel.name = "synthetic_relation_" + std::to_string(k);
    rel.description = "synthetic relation " + std::to_string(k) + " expressed by tokens " +
                      out.token_table.tokens[k * cluster] + " through " +
                      out.token_table.tokens[(k + 1) * cluster - 1];
    rel.attribute = Vector(attrs.row(k).begin(), attrs.row(k).end());
    out.relations.add(std::move(rel));
  }

  auto cluster_token = [&](std::size_t k) { return k * cluster + rng.uniform_index(cluster); };
  for (std::size_t k = 0; k < n; ++k) {
    const std::string& id = out.relations.rows()[k].id;
    for (std::size_t s = 0; s < cfg.instances_per_relation; ++s) {
      const std::size_t len = 6 + rng.uniform_index(7);
      const std::size_t head_len = 1 + rng.uniform_index(2);
      const std::size_t tail_len = 1 + rng.uniform_index(2);
      const std::size_t half = len / 2;
      Instance inst;
      inst.head.first = rng.uniform_index(half - head_len + 1);
      inst.head.last = inst.head.first + head_len - 1;
      inst.tail.first = half + rng.uniform_index(len - half - tail_len + 1);
      inst.tail.last = inst.tail.first + tail_len - 1;
      inst.relation_id = id;
      for (std::size_t p = 0; p < len; ++p) {
        std::size_t tok;
        if (inst.head.contains(p) || inst.tail.contains(p)) {
          tok = cluster_token(k);
        } else if (cfg.noise_scale > 0.0 && rng.uniform01() < cfg.noise_scale) {
          tok = rng.uniform_index(cfg.vocab_size);
        } else {
          tok = cluster_token(k);
        }
        inst.tokens.push_back(out.token_table.tokens[tok]);
      }
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace zsre
