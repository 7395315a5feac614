#pragma once

#include <span>
#include <string>
#include <vector>

#include "zsre/dataset.hpp"
#include "zsre/encoding.hpp"
#include "zsre/model_head.hpp"

namespace zsre {

enum class DistKind { NegInnerProduct, Euclidean, Cosine };

// Accepts "nip"/"neg_inner_product", "euclid"/"euclidean", "cosine".
DistKind parse_dist_kind(const std::string& name);
std::string to_string(DistKind kind);

// neg_inner_product: -<u,v>; euclidean: |u-v|; cosine: 1 - cos(u,v), and 1
// when either vector is zero.
double distance(std::span<const double> u, std::span<const double> v, DistKind kind);

class RelationIndex {
 public:
  explicit RelationIndex(DistKind kind = DistKind::NegInnerProduct) : kind_(kind) {}

  void add(std::string id, Vector attribute);
  DistKind kind() const { return kind_; }
  std::size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Vector>& vectors() const { return vectors_; }

 private:
  DistKind kind_;
  std::vector<std::string> ids_;
  std::vector<Vector> vectors_;
};

// Index over `ids` (in the given order) using their description encodings.
RelationIndex build_index(const RelationTable& relations, const std::vector<std::string>& ids, DescriptionMode mode,
                          std::size_t d_attr, DistKind kind);

struct RankedRelation {
  std::string id;
  double distance;
};

struct Prediction {
  std::string relation_id;
  double score = 0.0;
  std::vector<RankedRelation> ranking;  // ascending distance, ties in index order
};

Prediction predict(std::span<const double> a_hat, const RelationIndex& index);

Vector embed_new_sentence(const Instance& instance, const Vocab& vocab, const EncoderParams& encoder,
                          const HeadParams& head);

}  // namespace zsre
