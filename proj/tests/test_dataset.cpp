#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "zsre/dataset.hpp"

using namespace zsre;
using zsre::test::error_of;

namespace {

std::string instance_line(const std::string& tokens, const std::string& head, const std::string& tail,
                          const std::string& rel) {
  return "{\"tokens\":" + tokens + ",\"head\":" + head + ",\"tail\":" + tail + ",\"relation\":\"" + rel + "\"}\n";
}

// n relations R0..R{n-1} with `per` instances each, interleaved.
std::pair<std::vector<Instance>, RelationTable> toy_corpus(std::size_t n, std::size_t per) {
  RelationTable rels;
  for (std::size_t k = 0; k < n; ++k) rels.add({"R" + std::to_string(k), "r", "desc " + std::to_string(k), {}});
  std::vector<Instance> inst;
  for (std::size_t s = 0; s < per; ++s) {
    for (std::size_t k = 0; k < n; ++k) inst.push_back({{"a", "b", "c"}, {0, 0}, {2, 2}, "R" + std::to_string(k)});
  }
  return {inst, rels};
}

}  // namespace

TEST_CASE("load_instances keeps file order and ignores unknown fields") {
  std::istringstream in(instance_line("[\"a\",\"b\",\"c\"]", "[0,0]", "[2,2]", "P1") +
                        instance_line("[\"d\",\"e\"]", "[0,1]", "[1,1]", "P2") +
                        "{\"tokens\":[\"x\"],\"head\":[0,0],\"tail\":[0,0],\"relation\":\"P3\",\"extra\":7}\n");
  auto v = read_instances(in);
  REQUIRE(v.size() == 3);
  CHECK(v[0].relation_id == "P1");
  CHECK(v[1].head == Span{0, 1});
  CHECK(v[2].tokens == std::vector<std::string>{"x"});
}

TEST_CASE("load_instances rejects inverted and out-of-range spans with line numbers") {
  std::istringstream inverted(instance_line("[\"a\",\"b\",\"c\",\"d\",\"e\",\"f\"]", "[0,0]", "[1,1]", "P") +
                              instance_line("[\"a\",\"b\",\"c\",\"d\",\"e\",\"f\"]", "[5,4]", "[1,1]", "P"));
  auto msg = error_of([&] { read_instances(inverted); });
  CHECK(msg.find("span start exceeds end") != std::string::npos);
  CHECK(msg.find("line 2") != std::string::npos);

  std::istringstream past(instance_line("[\"a\",\"b\"]", "[0,0]", "[1,2]", "P"));
  CHECK(error_of([&] { read_instances(past); }).find("span out of range") != std::string::npos);

  std::istringstream garbage("{not json\n");
  CHECK(test::code_of([&] { read_instances(garbage); }) == ErrorCode::Parse);
}

TEST_CASE("overlapping spans are allowed") {
  std::istringstream in(instance_line("[\"a\",\"b\"]", "[0,1]", "[1,1]", "P"));
  CHECK(read_instances(in).size() == 1);
}

TEST_CASE("load_relations") {
  SUBCASE("two ids") {
    std::istringstream in(
        "{\"id\":\"P123\",\"name\":\"a\",\"description\":\"x\"}\n{\"id\":\"P456\",\"name\":\"b\",\"description\":\"y\"}\n");
    auto t = read_relations(in);
    CHECK(t.size() == 2);
    CHECK(t.at("P456").description == "y");
    CHECK(t.position("P456") == 1);
  }
  SUBCASE("duplicate id named") {
    std::istringstream in(
        "{\"id\":\"P123\",\"name\":\"a\",\"description\":\"x\"}\n{\"id\":\"P123\",\"name\":\"b\",\"description\":\"y\"}\n");
    CHECK(error_of([&] { read_relations(in); }).find("P123") != std::string::npos);
  }
  SUBCASE("empty description") {
    std::istringstream in("{\"id\":\"P1\",\"name\":\"a\",\"description\":\"\"}\n");
    CHECK(error_of([&] { read_relations(in); }).find("empty description") != std::string::npos);
  }
  SUBCASE("attribute of configured length accepted, other length rejected") {
    std::string rec = "{\"id\":\"P1\",\"name\":\"a\",\"description\":\"x\",\"attribute\":[1,2,3,4,5,6,7,8]}\n";
    std::istringstream ok(rec);
    auto t = read_relations(ok, 8);
    CHECK(t.at("P1").attribute->size() == 8);
    std::istringstream bad(rec);
    CHECK_THROWS_AS(read_relations(bad, 4), Error);
  }
}

TEST_CASE("instances with relations missing from the table are a hard error") {
  auto [inst, rels] = toy_corpus(2, 1);
  inst.push_back({{"a"}, {0, 0}, {0, 0}, "missing"});
  CHECK(error_of([&] { check_relations_known(inst, rels); }).find("missing") != std::string::npos);
}

TEST_CASE("make_zero_shot_split protocol invariants") {
  auto [inst, rels] = toy_corpus(10, 4);
  auto split = make_zero_shot_split(inst, rels, 3, 7);
  CHECK(split.unseen_ids.size() == 3);
  CHECK(split.seen_ids.size() == 7);
  CHECK(split.prng == kPrngName);
  std::set<std::string> unseen(split.unseen_ids.begin(), split.unseen_ids.end());
  for (auto i : split.train_idx) CHECK(unseen.count(inst[i].relation_id) == 0);
  for (auto i : split.test_idx) CHECK(unseen.count(inst[i].relation_id) == 1);
  CHECK(split.train_idx.size() + split.test_idx.size() == inst.size());
  CHECK(make_zero_shot_split(inst, rels, 3, 7) == split);
  CHECK(make_zero_shot_split(inst, rels, 3, 8) != split);  // different seed, different draw here
  CHECK_THROWS_AS(make_zero_shot_split(inst, rels, 10, 7), Error);
  CHECK_THROWS_AS(make_zero_shot_split(inst, rels, 0, 7), Error);
}

TEST_CASE("zero-shot split property over many seeds") {
  auto [inst, rels] = toy_corpus(8, 3);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const std::size_t m = 1 + seed % 7;
    auto split = make_zero_shot_split(inst, rels, m, seed);
    std::set<std::string> seen(split.seen_ids.begin(), split.seen_ids.end());
    for (const auto& u : split.unseen_ids) CHECK(seen.count(u) == 0);
    std::set<std::size_t> train(split.train_idx.begin(), split.train_idx.end());
    for (auto i : split.test_idx) CHECK(train.count(i) == 0);
    CHECK(split.unseen_ids.size() == m);
  }
}

TEST_CASE("fewshot ceil rule") {
  // Independent ceiling oracle on exact rationals.
  for (std::size_t count : {1u, 7u, 10u, 49u, 100u}) {
    for (int pct : {1, 2, 5, 10, 33, 50, 99}) {
      const std::size_t want = (pct * count + 99) / 100;
      CHECK(fewshot_move_count(pct / 100.0, count) == want);
    }
  }
  CHECK(fewshot_move_count(0.02, 100) == 2);
  CHECK(fewshot_move_count(0.02, 10) == 1);
}

TEST_CASE("make_few_shot_split moves ceil(fraction x count) per unseen relation") {
  auto [inst, rels] = toy_corpus(4, 100);
  auto zs = make_zero_shot_split(inst, rels, 1, 3);
  auto fs = make_few_shot_split(zs, inst, 0.02, 11);
  CHECK(fs.unseen_ids == zs.unseen_ids);
  CHECK(fs.train_idx.size() == zs.train_idx.size() + 2);
  CHECK(fs.test_idx.size() == zs.test_idx.size() - 2);
  CHECK(fs.fewshot_fraction == 0.02);
  std::set<std::size_t> test(fs.test_idx.begin(), fs.test_idx.end());
  for (auto i : fs.train_idx) CHECK(test.count(i) == 0);
  CHECK(make_few_shot_split(zs, inst, 0.02, 11) == fs);

  CHECK_THROWS_AS(make_few_shot_split(zs, inst, 0.0, 1), Error);
  CHECK_THROWS_AS(make_few_shot_split(zs, inst, 1.0, 1), Error);
  CHECK_THROWS_AS(make_few_shot_split(zs, inst, -0.5, 1), Error);
}

TEST_CASE("few-shot preserves total instance count for several relations") {
  auto [inst, rels] = toy_corpus(6, 13);
  auto zs = make_zero_shot_split(inst, rels, 3, 5);
  auto fs = make_few_shot_split(zs, inst, 0.1, 5);
  CHECK(fs.train_idx.size() + fs.test_idx.size() == inst.size());
  CHECK(fs.train_idx.size() - zs.train_idx.size() == 3 * fewshot_move_count(0.1, 13));
}

TEST_CASE("split json round trip and validation") {
  auto [inst, rels] = toy_corpus(5, 2);
  auto split = make_zero_shot_split(inst, rels, 2, 9);
  CHECK(split_from_json(split_to_json(split)) == split);

  auto j = split_to_json(split);
  auto bad_prng = j;
  bad_prng.replace(bad_prng.find("lemire-v1"), 9, "lemire-v0");
  CHECK(test::code_of([&] { split_from_json(bad_prng); }) == ErrorCode::Version);
  CHECK(test::code_of([&] { split_from_json("[1,2"); }) == ErrorCode::Parse);

  auto dir = test::temp_dir("split_io");
  save_split(split, dir / "s.json");
  CHECK(load_split(dir / "s.json") == split);
}

TEST_CASE("generate_synthetic") {
  SyntheticConfig cfg;
  auto c = generate_synthetic(cfg);
  CHECK(c.instances.size() == 600);
  CHECK(c.relations.size() == 12);
  CHECK(c.token_table.vectors.rows == cfg.vocab_size);
  CHECK(c.token_table.dim() == cfg.hidden_dim);

  SUBCASE("bit-identical across runs") {
    auto again = generate_synthetic(cfg);
    CHECK(again.instances == c.instances);
    CHECK(again.token_table == c.token_table);
    for (std::size_t k = 0; k < 12; ++k) CHECK(*again.relations.rows()[k].attribute == *c.relations.rows()[k].attribute);
  }
  SUBCASE("unit attributes") {
    for (const auto& r : c.relations.rows()) CHECK(norm(*r.attribute) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("clusters are disjoint and entity tokens are in-cluster") {
    std::map<std::string, std::size_t> row_of;
    for (std::size_t t = 0; t < c.token_table.tokens.size(); ++t) row_of[c.token_table.tokens[t]] = t;
    const std::size_t cluster = cfg.vocab_size / cfg.n_relations;
    std::map<std::string, std::set<std::string>> entity_tokens;
    for (const auto& inst : c.instances) {
      const std::size_t k = c.relations.position(inst.relation_id);
      for (std::size_t p = 0; p < inst.tokens.size(); ++p) {
        if (inst.head.contains(p) || inst.tail.contains(p)) {
          CHECK(row_of.at(inst.tokens[p]) / cluster == k);
          entity_tokens[inst.relation_id].insert(inst.tokens[p]);
        }
      }
    }
    for (const auto& [a, ta] : entity_tokens) {
      for (const auto& [b, tb] : entity_tokens) {
        if (a == b) continue;
        for (const auto& t : ta) CHECK(tb.count(t) == 0);
      }
    }
  }
  SUBCASE("noise 0 keeps every token in the relation's cluster") {
    SyntheticConfig quiet = cfg;
    quiet.noise_scale = 0.0;
    auto q = generate_synthetic(quiet);
    std::map<std::string, std::size_t> row_of;
    for (std::size_t t = 0; t < q.token_table.tokens.size(); ++t) row_of[q.token_table.tokens[t]] = t;
    const std::size_t cluster = cfg.vocab_size / cfg.n_relations;
    for (const auto& inst : q.instances) {
      for (const auto& tok : inst.tokens) CHECK(row_of.at(tok) / cluster == q.relations.position(inst.relation_id));
    }
  }
  SUBCASE("cluster centroid is one linear image of the attribute") {
    const std::size_t cluster = cfg.vocab_size / cfg.n_relations;
    std::vector<Vector> centroid(12, Vector(cfg.hidden_dim, 0.0));
    for (std::size_t k = 0; k < 12; ++k) {
      for (std::size_t t = k * cluster; t < (k + 1) * cluster; ++t) {
        add_into(centroid[k], c.token_table.vectors.row(t), 1.0 / cluster);
      }
    }
    // Attributes span a rank-6 subspace: write each a_k in terms of a_0..a_5 by
    // least squares and require the centroids to obey the same combination.
    const std::size_t r = 6;
    std::vector<Vector> base;
    for (std::size_t j = 0; j < r; ++j) base.push_back(*c.relations.rows()[j].attribute);
    for (std::size_t k = r; k < 12; ++k) {
      const Vector& a = *c.relations.rows()[k].attribute;
      std::vector<Vector> g(r, Vector(r + 1));
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < r; ++j) g[i][j] = dot(base[i], base[j]);
        g[i][r] = dot(base[i], a);
      }
      for (std::size_t i = 0; i < r; ++i) {
        std::size_t piv = i;
        for (std::size_t q = i + 1; q < r; ++q) if (std::abs(g[q][i]) > std::abs(g[piv][i])) piv = q;
        std::swap(g[i], g[piv]);
        for (std::size_t q = 0; q < r; ++q) {
          if (q == i) continue;
          const double f = g[q][i] / g[i][i];
          for (std::size_t j = i; j <= r; ++j) g[q][j] -= f * g[i][j];
        }
      }
      Vector recon(a.size(), 0.0), cmix(cfg.hidden_dim, 0.0);
      for (std::size_t j = 0; j < r; ++j) {
        add_into(recon, base[j], g[j][r] / g[j][j]);
        add_into(cmix, centroid[j], g[j][r] / g[j][j]);
      }
      for (std::size_t i = 0; i < a.size(); ++i) CHECK(recon[i] == doctest::Approx(a[i]).epsilon(1e-9));
      for (std::size_t i = 0; i < cmix.size(); ++i) CHECK(cmix[i] == doctest::Approx(centroid[k][i]).epsilon(1e-8));
    }
  }
  SUBCASE("invalid configs") {
    SyntheticConfig bad = cfg;
    bad.vocab_size = 20;
    CHECK_THROWS_AS(generate_synthetic(bad), Error);
    bad = cfg;
    bad.noise_scale = -0.1;
    CHECK_THROWS_AS(generate_synthetic(bad), Error);
    bad = cfg;
    bad.n_relations = 0;
    CHECK_THROWS_AS(generate_synthetic(bad), Error);
  }
}

TEST_CASE("file round trips") {
  auto c = generate_synthetic({.n_relations = 3, .instances_per_relation = 4, .vocab_size = 12, .d_attr = 5,
                               .hidden_dim = 4, .seed = 2});
  auto dir = test::temp_dir("dataset_io");
  save_instances(c.instances, dir / "i.jsonl");
  save_relations(c.relations, dir / "r.jsonl");
  save_token_table(c.token_table, dir / "t.jsonl");
  CHECK(load_instances(dir / "i.jsonl") == c.instances);
  auto rels = load_relations(dir / "r.jsonl", 5);
  for (std::size_t k = 0; k < 3; ++k) CHECK(*rels.rows()[k].attribute == *c.relations.rows()[k].attribute);
  CHECK(load_token_table(dir / "t.jsonl") == c.token_table);
  CHECK(test::code_of([&] { load_instances(dir / "absent.jsonl"); }) == ErrorCode::Io);
}
