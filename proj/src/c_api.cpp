#include "zsre/zsre.h"

#include <cstdlib>
#include <cstring>
#include <optional>
#include <sstream>
#include <fstream>
#include <string>

#include "json.hpp"
#include "zsre/config.hpp"
#include "zsre/error.hpp"
#include "zsre/evaluation.hpp"
#include "zsre/inference.hpp"
#include "zsre/logging.hpp"

struct zsre_config {
  zsre::RunConfig value;
};
struct zsre_corpus {
  zsre::Corpus value;
};
struct zsre_split {
  zsre::SplitSpec value;
};
struct zsre_model {
  zsre::TrainedModel value;
};

namespace {

thread_local std::string g_last_error;

zsre_status to_status(zsre::ErrorCode code) {
  switch (code) {
    case zsre::ErrorCode::InvalidArgument: return ZSRE_ERR_INVALID_ARGUMENT;
    case zsre::ErrorCode::Io: return ZSRE_ERR_IO;
    case zsre::ErrorCode::Parse: return ZSRE_ERR_PARSE;
    case zsre::ErrorCode::Validation: return ZSRE_ERR_VALIDATION;
    case zsre::ErrorCode::Numeric: return ZSRE_ERR_NUMERIC;
    case zsre::ErrorCode::Version: return ZSRE_ERR_VERSION;
  }
  return ZSRE_ERR_INTERNAL;
}

template <typename Fn>
zsre_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return ZSRE_OK;
  } catch (const zsre::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return ZSRE_ERR_PARSE;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ZSRE_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename T>
void require(const T* p, const char* what) {
  if (p == nullptr) zsre::fail(zsre::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

}  // namespace

extern "C" {

const char* zsre_version(void) { return "1.0.0"; }

const char* zsre_last_error(void) { return g_last_error.c_str(); }

const char* zsre_status_name(zsre_status status) {
  switch (status) {
    case ZSRE_OK: return "ok";
    case ZSRE_ERR_INVALID_ARGUMENT: return "invalid argument";
    case ZSRE_ERR_IO: return "i/o error";
    case ZSRE_ERR_PARSE: return "parse error";
    case ZSRE_ERR_VALIDATION: return "validation error";
    case ZSRE_ERR_NUMERIC: return "numeric error";
    case ZSRE_ERR_VERSION: return "version mismatch";
    case ZSRE_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void zsre_string_free(char* s) { std::free(s); }

zsre_status zsre_config_build(const char* path, const char* overrides_json, zsre_config** out) {
  return guarded([&] {
    require(out, "out");
    std::optional<std::filesystem::path> file;
    if (path != nullptr) file = path;
    nlohmann::json overrides = nlohmann::json::object();
    if (overrides_json != nullptr && *overrides_json != '\0') overrides = nlohmann::json::parse(overrides_json);
    *out = new zsre_config{zsre::build_config(file, overrides)};
  });
}

zsre_status zsre_config_to_json(const zsre_config* config, char** out_json) {
  return guarded([&] {
    require(config, "config");
    require(out_json, "out_json");
    *out_json = dup_string(zsre::to_json(config->value).dump(2));
  });
}

void zsre_config_destroy(zsre_config* config) { delete config; }

zsre_status zsre_corpus_load(const zsre_config* config, zsre_corpus** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    *out = new zsre_corpus{zsre::load_corpus(config->value)};
  });
}

zsre_status zsre_corpus_synthesize(const char* synthetic_json, zsre_corpus** out) {
  return guarded([&] {
    require(out, "out");
    zsre::SyntheticConfig cfg;
    if (synthetic_json != nullptr && *synthetic_json != '\0') {
      const auto j = nlohmann::json::parse(synthetic_json);
      for (const auto& [key, v] : j.items()) {
        if (key == "n_relations") cfg.n_relations = v.get<std::size_t>();
        else if (key == "instances_per_relation") cfg.instances_per_relation = v.get<std::size_t>();
        else if (key == "vocab_size") cfg.vocab_size = v.get<std::size_t>();
        else if (key == "d_attr") cfg.d_attr = v.get<std::size_t>();
        else if (key == "hidden_dim") cfg.hidden_dim = v.get<std::size_t>();
        else if (key == "latent_dim") cfg.latent_dim = v.get<std::size_t>();
        else if (key == "noise_scale") cfg.noise_scale = v.get<double>();
        else if (key == "seed") cfg.seed = v.get<std::uint64_t>();
        else zsre::fail(zsre::ErrorCode::Validation, "unknown synthetic config key '" + key + "'");
      }
    }
    auto synth = zsre::generate_synthetic(cfg);
    auto* corpus = new zsre_corpus;
    corpus->value.instances = std::move(synth.instances);
    corpus->value.relations = std::move(synth.relations);
    corpus->value.token_table = std::move(synth.token_table);
    *out = corpus;
  });
}

zsre_status zsre_corpus_save(const zsre_corpus* corpus, const char* dir) {
  return guarded([&] {
    require(corpus, "corpus");
    require(dir, "dir");
    const std::filesystem::path base(dir);
    std::filesystem::create_directories(base);
    zsre::save_instances(corpus->value.instances, base / "instances.jsonl");
    zsre::save_relations(corpus->value.relations, base / "relations.jsonl");
    if (corpus->value.token_table) zsre::save_token_table(*corpus->value.token_table, base / "token_embeddings.jsonl");
  });
}

size_t zsre_corpus_instance_count(const zsre_corpus* corpus) { return corpus ? corpus->value.instances.size() : 0; }

size_t zsre_corpus_relation_count(const zsre_corpus* corpus) { return corpus ? corpus->value.relations.size() : 0; }

void zsre_corpus_destroy(zsre_corpus* corpus) { delete corpus; }

zsre_status zsre_split_zero_shot(const zsre_corpus* corpus, size_t m, uint64_t seed, zsre_split** out) {
  return guarded([&] {
    require(corpus, "corpus");
    require(out, "out");
    *out = new zsre_split{zsre::make_zero_shot_split(corpus->value.instances, corpus->value.relations, m, seed)};
  });
}

zsre_status zsre_split_few_shot(const zsre_split* split, const zsre_corpus* corpus, double fraction, uint64_t seed,
                                zsre_split** out) {
  return guarded([&] {
    require(split, "split");
    require(corpus, "corpus");
    require(out, "out");
    *out = new zsre_split{zsre::make_few_shot_split(split->value, corpus->value.instances, fraction, seed)};
  });
}

zsre_status zsre_split_load(const char* path, zsre_split** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new zsre_split{zsre::load_split(path)};
  });
}

zsre_status zsre_split_save(const zsre_split* split, const char* path) {
  return guarded([&] {
    require(split, "split");
    require(path, "path");
    zsre::save_split(split->value, path);
  });
}

zsre_status zsre_split_to_json(const zsre_split* split, char** out_json) {
  return guarded([&] {
    require(split, "split");
    require(out_json, "out_json");
    *out_json = dup_string(zsre::split_to_json(split->value));
  });
}

void zsre_split_destroy(zsre_split* split) { delete split; }

zsre_status zsre_train(const zsre_config* config, const zsre_corpus* corpus, const zsre_split* split, zsre_model** out,
                       char** history_jsonl) {
  return guarded([&] {
    require(config, "config");
    require(corpus, "corpus");
    require(split, "split");
    require(out, "out");
    auto result = zsre::train(corpus->value.instances, corpus->value.relations, split->value, config->value.train,
                              corpus->value.inputs());
    if (history_jsonl != nullptr) *history_jsonl = dup_string(zsre::history_jsonl(result.history));
    *out = new zsre_model{std::move(result.model)};
  });
}

zsre_status zsre_model_save(const zsre_model* model, const char* path) {
  return guarded([&] {
    require(model, "model");
    require(path, "path");
    zsre::save_checkpoint(model->value, path);
  });
}

zsre_status zsre_model_load(const char* path, zsre_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new zsre_model{zsre::load_checkpoint(path)};
  });
}

size_t zsre_model_attr_dim(const zsre_model* model) { return model ? model->value.config.attr_dim : 0; }

zsre_status zsre_model_embed(const zsre_model* model, const char* instance_json, double* out, size_t out_len) {
  return guarded([&] {
    require(model, "model");
    require(instance_json, "instance_json");
    require(out, "out");
    std::istringstream in(instance_json);
    const auto instances = zsre::read_instances(in, "instance_json");
    if (instances.size() != 1) zsre::fail(zsre::ErrorCode::InvalidArgument, "expected exactly one instance");
    const zsre::Vector a_hat = model->value.embed(instances.front(), 0);
    zsre::require_size(out_len, a_hat.size(), "output buffer");
    std::copy(a_hat.begin(), a_hat.end(), out);
  });
}

void zsre_model_destroy(zsre_model* model) { delete model; }

zsre_status zsre_predict_file(const zsre_model* model, const char* relations_path, const char* instances_path,
                              const char* hidden_states_path, const char* dist, const char* out_path) {
  return guarded([&] {
    require(model, "model");
    require(relations_path, "relations_path");
    require(instances_path, "instances_path");
    require(out_path, "out_path");
    const auto& m = model->value;
    const auto kind = dist != nullptr ? zsre::parse_dist_kind(dist) : m.config.dist;
    std::optional<std::size_t> d_attr;
    if (m.config.description_mode != zsre::DescriptionMode::Hashed) d_attr = m.config.attr_dim;
    const auto relations = zsre::load_relations(relations_path, d_attr);
    std::vector<std::string> ids;
    for (const auto& r : relations.rows()) ids.push_back(r.id);
    const auto index = zsre::build_index(relations, ids, m.config.description_mode, m.config.attr_dim, kind);
    const auto instances = zsre::load_instances(instances_path);
    std::optional<zsre::HiddenStateStore> store;
    if (hidden_states_path != nullptr) store = zsre::load_hidden_states(hidden_states_path);
    const auto encoder = m.sentence_encoder(store ? &*store : nullptr);

    std::ofstream out(out_path);
    if (!out) zsre::fail(zsre::ErrorCode::Io, std::string("cannot write ") + out_path);
    for (std::size_t i = 0; i < instances.size(); ++i) {
      const auto a_hat = zsre::forward(instances[i], encoder.encode(instances[i], i), m.params.head).a_hat;
      const auto p = zsre::predict(a_hat, index);
      nlohmann::json ranking = nlohmann::json::array();
      for (const auto& r : p.ranking) ranking.push_back({{"id", r.id}, {"distance", r.distance}});
      out << nlohmann::json{{"index", i}, {"predicted", p.relation_id}, {"ranking", ranking}}.dump() << '\n';
    }
    zsre::logger()->info("predicted {} instances against {} relations", instances.size(), index.size());
  });
}

zsre_status zsre_dump_embeddings(const zsre_model* model, const char* instances_path, const char* hidden_states_path,
                                 const char* out_path) {
  return guarded([&] {
    require(model, "model");
    require(instances_path, "instances_path");
    require(out_path, "out_path");
    const auto instances = zsre::load_instances(instances_path);
    std::optional<zsre::HiddenStateStore> store;
    if (hidden_states_path != nullptr) store = zsre::load_hidden_states(hidden_states_path);
    zsre::dump_embeddings(model->value, instances, store ? &*store : nullptr, out_path);
  });
}

zsre_status zsre_run_experiment(const zsre_config* config, const zsre_corpus* corpus, char** report_json) {
  return guarded([&] {
    require(config, "config");
    require(corpus, "corpus");
    require(report_json, "report_json");
    const auto report = zsre::run_experiment(corpus->value, config->value.protocol());
    *report_json = dup_string(zsre::to_json(report).dump(2));
  });
}

zsre_status zsre_run_fewshot(const zsre_config* config, const zsre_corpus* corpus, char** csv) {
  return guarded([&] {
    require(config, "config");
    require(corpus, "corpus");
    require(csv, "csv");
    const auto points = zsre::run_fewshot_curve(corpus->value, config->value.protocol(), config->value.fractions);
    *csv = dup_string(zsre::curve_csv(points));
  });
}

zsre_status zsre_run_sweep(const zsre_config* config, const zsre_corpus* corpus, char** csv) {
  return guarded([&] {
    require(config, "config");
    require(corpus, "corpus");
    require(csv, "csv");
    const auto axis = zsre::parse_sweep_axis(config->value.sweep_axis);
    const auto points = zsre::run_sweep(corpus->value, config->value.protocol(), axis, config->value.sweep_values);
    *csv = dup_string(zsre::curve_csv(points));
  });
}

zsre_status zsre_gradcheck(const zsre_config* config, const zsre_corpus* corpus, char** table, int* passed) {
  return guarded([&] {
    require(config, "config");
    require(corpus, "corpus");
    require(table, "table");
    require(passed, "passed");
    const auto report = zsre::gradcheck_for(config->value, corpus->value);
    *table = dup_string(zsre::gradcheck_table(report));
    *passed = report.passed ? 1 : 0;
  });
}

}  // extern "C"
