#include "zsre/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "zsre/error.hpp"

namespace zsre {

DistKind parse_dist_kind(const std::string& name) {
  if (name == "nip" || name == "neg_inner_product") return DistKind::NegInnerProduct;
  if (name == "euclid" || name == "euclidean") return DistKind::Euclidean;
  if (name == "cosine") return DistKind::Cosine;
  fail(ErrorCode::InvalidArgument, "unknown distance kind '" + name + "'");
}

std::string to_string(DistKind kind) {
  switch (kind) {
    case DistKind::NegInnerProduct: return "nip";
    case DistKind::Euclidean: return "euclid";
    case DistKind::Cosine: return "cosine";
  }
  return "?";
}

double distance(std::span<const double> u, std::span<const double> v, DistKind kind) {
  require_size(v.size(), u.size(), "distance operands");
  switch (kind) {
    case DistKind::NegInnerProduct:
      return -dot(u, v);
    case DistKind::Euclidean: {
      double acc = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) acc += (u[i] - v[i]) * (u[i] - v[i]);
      return std::sqrt(acc);
    }
    case DistKind::Cosine: {
      const double nu = norm(u);
      const double nv = norm(v);
      if (nu == 0.0 || nv == 0.0) return 1.0;
      return 1.0 - dot(u, v) / (nu * nv);
    }
  }
  return 0.0;
}

void RelationIndex::add(std::string id, Vector attribute) {
  if (std::find(ids_.begin(), ids_.end(), id) != ids_.end()) {
    fail(ErrorCode::Validation, "relation " + id + " already in index");
  }
  if (!vectors_.empty()) require_size(attribute.size(), vectors_.front().size(), "index vector for " + id);
  ids_.push_back(std::move(id));
  vectors_.push_back(std::move(attribute));
}

RelationIndex build_index(const RelationTable& relations, const std::vector<std::string>& ids, DescriptionMode mode,
                          std::size_t d_attr, DistKind kind) {
  RelationIndex index(kind);
  for (const auto& id : ids) index.add(id, encode_description(relations.at(id), mode, d_attr));
  return index;
}

Prediction predict(std::span<const double> a_hat, const RelationIndex& index) {
  if (index.empty()) fail(ErrorCode::InvalidArgument, "cannot predict against an empty relation index");
  std::vector<double> dist(index.size());
  for (std::size_t k = 0; k < index.size(); ++k) dist[k] = distance(a_hat, index.vectors()[k], index.kind());
  std::vector<std::size_t> order(index.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  Prediction p;
  for (std::size_t k : order) p.ranking.push_back({index.ids()[k], dist[k]});
  p.relation_id = p.ranking.front().id;
  p.score = p.ranking.front().distance;
  return p;
}

Vector embed_new_sentence(const Instance& instance, const Vocab& vocab, const EncoderParams& encoder,
                          const HeadParams& head) {
  return forward(instance, encode_tokens(instance, vocab, encoder), head).a_hat;
}

}  // namespace zsre
