// Command-line front end. Talks to the engine only through the C API.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zsre/zsre.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliFailure {
  std::string message;
};

void check(zsre_status status) {
  if (status != ZSRE_OK) throw CliFailure{std::string(zsre_status_name(status)) + ": " + zsre_last_error()};
}

// RAII owners for C handles and strings.
template <typename T, void (*Destroy)(T*)>
class Handle {
 public:
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() {
    if (ptr_) Destroy(ptr_);
  }
  T** out() { return &ptr_; }
  T* get() const { return ptr_; }

 private:
  T* ptr_ = nullptr;
};

using Config = Handle<zsre_config, zsre_config_destroy>;
using Corpus = Handle<zsre_corpus, zsre_corpus_destroy>;
using Split = Handle<zsre_split, zsre_split_destroy>;
using Model = Handle<zsre_model, zsre_model_destroy>;

class OwnedString {
 public:
  ~OwnedString() { zsre_string_free(ptr_); }
  char** out() { return &ptr_; }
  std::string str() const { return ptr_ ? ptr_ : ""; }

 private:
  char* ptr_ = nullptr;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw CliFailure{"cannot write " + path.string()};
  out << text;
}

// Flags shared by every config-driven subcommand. Only flags the user
// actually passed become overrides.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> out, instances, relations, token_embeddings, hidden_states, split, preset, dist,
      encoder_mode, description_mode, axis;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> m, repeats, epochs, batch_size, hidden_dim, attr_dim, jobs;
  std::optional<double> lr, gamma, alpha, grad_clip, tol;
  std::optional<bool> encoder_trainable, mixing;
  std::vector<double> fractions;
  std::vector<std::string> values;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--out", out, "Output directory");
    app->add_option("--instances", instances, "Instances JSONL");
    app->add_option("--relations", relations, "Relations JSONL");
    app->add_option("--token-embeddings", token_embeddings, "Token embedding JSONL");
    app->add_option("--hidden-states", hidden_states, "Precomputed hidden states");
    app->add_option("--split", split, "Split JSON to replay");
    app->add_option("--preset", preset, "desk or paper");
    app->add_option("--seed", seed, "Base seed");
    app->add_option("--m", m, "Number of unseen relations");
    app->add_option("--repeats", repeats, "Protocol repeats");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", lr, "Learning rate");
    app->add_option("--batch-size", batch_size, "Batch size");
    app->add_option("--gamma", gamma, "Margin");
    app->add_option("--alpha", alpha, "Balance between margin and cross-entropy");
    app->add_option("--dist", dist, "nip, euclid or cosine");
    app->add_option("--encoder-mode", encoder_mode, "auto, toy, token_table or hidden_states");
    app->add_option("--encoder-trainable", encoder_trainable, "Update encoder parameters");
    app->add_option("--mixing", mixing, "Enable the encoder mixing layer");
    app->add_option("--description-mode", description_mode, "identity, precomputed or hashed");
    app->add_option("--hidden-dim", hidden_dim, "Hidden size");
    app->add_option("--attr-dim", attr_dim, "Attribute vector size");
    app->add_option("--grad-clip", grad_clip, "Gradient norm cap (0 = off)");
    app->add_option("--jobs", jobs, "Concurrent repeats");
    app->add_option("--fractions", fractions, "Few-shot fractions");
    app->add_option("--axis", axis, "Sweep axis: gamma, alpha or dist");
    app->add_option("--values", values, "Sweep values");
    app->add_option("--tol", tol, "Gradient check tolerance");
  }

  json overrides() const {
    json j = json::object();
    auto put = [&](const char* key, const auto& opt) {
      if (opt) j[key] = *opt;
    };
    put("out", out);
    put("instances", instances);
    put("relations", relations);
    put("token_embeddings", token_embeddings);
    put("hidden_states", hidden_states);
    put("split", split);
    put("preset", preset);
    put("seed", seed);
    put("m", m);
    put("repeats", repeats);
    put("epochs", epochs);
    put("learning_rate", lr);
    put("batch_size", batch_size);
    put("gamma", gamma);
    put("alpha", alpha);
    put("dist", dist);
    put("encoder_mode", encoder_mode);
    put("encoder_trainable", encoder_trainable);
    put("encoder_mixing", mixing);
    put("description_mode", description_mode);
    put("hidden_dim", hidden_dim);
    put("attr_dim", attr_dim);
    put("grad_clip", grad_clip);
    put("jobs", jobs);
    put("sweep_axis", axis);
    put("gradcheck_tol", tol);
    if (!fractions.empty()) j["fractions"] = fractions;
    if (!values.empty()) j["sweep_values"] = values;
    return j;
  }
};

struct Session {
  Config config;
  json resolved;
  fs::path out;
};

void open_session(const ConfigFlags& flags, Session& s) {
  const std::string overrides = flags.overrides().dump();
  check(zsre_config_build(flags.config_path.empty() ? nullptr : flags.config_path.c_str(), overrides.c_str(),
                          s.config.out()));
  OwnedString text;
  check(zsre_config_to_json(s.config.get(), text.out()));
  s.resolved = json::parse(text.str());
  s.out = s.resolved.at("out").get<std::string>();
  fs::create_directories(s.out);
  write_file(s.out / "resolved_config.json", text.str() + "\n");
}

void load_corpus(const Session& s, Corpus& corpus) { check(zsre_corpus_load(s.config.get(), corpus.out())); }

void make_split(const Session& s, const Corpus& corpus, Split& split) {
  const std::string path = s.resolved.at("split").get<std::string>();
  if (!path.empty()) {
    check(zsre_split_load(path.c_str(), split.out()));
  } else {
    check(zsre_split_zero_shot(corpus.get(), s.resolved.at("m").get<std::size_t>(),
                               s.resolved.at("seed").get<std::uint64_t>(), split.out()));
  }
}

int run_split(const ConfigFlags& flags) {
  Session s;
  open_session(flags, s);
  Corpus corpus;
  load_corpus(s, corpus);
  Split split;
  make_split(s, corpus, split);
  check(zsre_split_save(split.get(), (s.out / "split.json").c_str()));
  std::cout << "wrote " << (s.out / "split.json").string() << '\n';
  return 0;
}

int run_train(const ConfigFlags& flags) {
  Session s;
  open_session(flags, s);
  Corpus corpus;
  load_corpus(s, corpus);
  Split split;
  make_split(s, corpus, split);
  check(zsre_split_save(split.get(), (s.out / "split.json").c_str()));
  Model model;
  OwnedString history;
  check(zsre_train(s.config.get(), corpus.get(), split.get(), model.out(), history.out()));
  write_file(s.out / "train_log.jsonl", history.str());
  check(zsre_model_save(model.get(), (s.out / "checkpoint.bin").c_str()));
  std::cout << "wrote " << (s.out / "checkpoint.bin").string() << '\n';
  return 0;
}

int run_eval(const ConfigFlags& flags) {
  Session s;
  open_session(flags, s);
  Corpus corpus;
  load_corpus(s, corpus);
  OwnedString report;
  check(zsre_run_experiment(s.config.get(), corpus.get(), report.out()));
  write_file(s.out / "report.json", report.str() + "\n");
  const json j = json::parse(report.str());
  const auto& f1 = j.at("aggregate").at("macro_f1");
  std::cout << "macro_F1 " << f1.at("mean").get<double>() << " +/- " << f1.at("std").get<double>() << " over "
            << j.at("repeats").size() << " repeats\n";
  return 0;
}

int run_curve(const ConfigFlags& flags, bool sweep) {
  Session s;
  open_session(flags, s);
  Corpus corpus;
  load_corpus(s, corpus);
  OwnedString csv;
  check(sweep ? zsre_run_sweep(s.config.get(), corpus.get(), csv.out())
              : zsre_run_fewshot(s.config.get(), corpus.get(), csv.out()));
  write_file(s.out / (sweep ? "sweep.csv" : "fewshot.csv"), csv.str());
  std::cout << csv.str();
  return 0;
}

int run_gradcheck(const ConfigFlags& flags) {
  Session s;
  open_session(flags, s);
  Corpus corpus;
  load_corpus(s, corpus);
  OwnedString table;
  int passed = 0;
  check(zsre_gradcheck(s.config.get(), corpus.get(), table.out(), &passed));
  write_file(s.out / "gradcheck.txt", table.str());
  std::cout << table.str();
  return passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Zero-shot relation extraction: train, evaluate and predict"};
  app.require_subcommand(1);

  ConfigFlags split_flags, train_flags, eval_flags, fewshot_flags, sweep_flags, grad_flags;
  split_flags.attach(app.add_subcommand("split", "Draw a zero-shot split"));
  train_flags.attach(app.add_subcommand("train", "Train on one split and write a checkpoint"));
  eval_flags.attach(app.add_subcommand("eval", "Repeated zero-shot protocol, writes report.json"));
  fewshot_flags.attach(app.add_subcommand("fewshot", "Few-shot curve, writes fewshot.csv"));
  sweep_flags.attach(app.add_subcommand("sweep", "Hyperparameter sweep, writes sweep.csv"));
  grad_flags.attach(app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients"));

  std::string checkpoint, pred_relations, pred_input, pred_out = "out";
  std::optional<std::string> pred_dist, pred_hidden;
  auto* predict = app.add_subcommand("predict", "Predict unseen relations for an instances file");
  predict->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  predict->add_option("--relations", pred_relations, "Unseen relation descriptions")->required()->check(CLI::ExistingFile);
  predict->add_option("--input", pred_input, "Instances JSONL")->required()->check(CLI::ExistingFile);
  predict->add_option("--dist", pred_dist, "nip, euclid or cosine");
  predict->add_option("--hidden-states", pred_hidden, "Precomputed hidden states for --input");
  predict->add_option("--out", pred_out, "Output directory");

  std::string dump_checkpoint, dump_input, dump_out = "out";
  std::optional<std::string> dump_hidden;
  auto* dump = app.add_subcommand("dump-embeddings", "Write sentence embeddings as JSONL");
  dump->add_option("--checkpoint", dump_checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  dump->add_option("--input", dump_input, "Instances JSONL")->required()->check(CLI::ExistingFile);
  dump->add_option("--hidden-states", dump_hidden, "Precomputed hidden states for --input");
  dump->add_option("--out", dump_out, "Output directory");

  json synth_cfg = json::object();
  std::string synth_out = "out";
  std::size_t n_rel = 12, per_rel = 50, vocab = 240, d_attr = 64, hidden = 32, latent = 0;
  double noise = 0.1;
  std::uint64_t synth_seed = 1;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic separable corpus");
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--relations", n_rel, "Number of relations");
  synth->add_option("--per-relation", per_rel, "Instances per relation");
  synth->add_option("--vocab-size", vocab, "Vocabulary size");
  synth->add_option("--attr-dim", d_attr, "Attribute dimension");
  synth->add_option("--hidden-dim", hidden, "Token embedding width");
  synth->add_option("--latent-dim", latent, "Attribute subspace rank (0 = auto)");
  synth->add_option("--noise", noise, "Noise token rate");
  synth->add_option("--seed", synth_seed, "Seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("split")) return run_split(split_flags);
    if (app.got_subcommand("train")) return run_train(train_flags);
    if (app.got_subcommand("eval")) return run_eval(eval_flags);
    if (app.got_subcommand("fewshot")) return run_curve(fewshot_flags, false);
    if (app.got_subcommand("sweep")) return run_curve(sweep_flags, true);
    if (app.got_subcommand("gradcheck")) return run_gradcheck(grad_flags);
    if (app.got_subcommand("predict")) {
      Model model;
      check(zsre_model_load(checkpoint.c_str(), model.out()));
      fs::create_directories(pred_out);
      const fs::path dest = fs::path(pred_out) / "predictions.jsonl";
      check(zsre_predict_file(model.get(), pred_relations.c_str(), pred_input.c_str(),
                              pred_hidden ? pred_hidden->c_str() : nullptr, pred_dist ? pred_dist->c_str() : nullptr,
                              dest.c_str()));
      std::cout << "wrote " << dest.string() << '\n';
      return 0;
    }
    if (app.got_subcommand("dump-embeddings")) {
      Model model;
      check(zsre_model_load(dump_checkpoint.c_str(), model.out()));
      fs::create_directories(dump_out);
      const fs::path dest = fs::path(dump_out) / "embeddings.jsonl";
      check(zsre_dump_embeddings(model.get(), dump_input.c_str(), dump_hidden ? dump_hidden->c_str() : nullptr,
                                 dest.c_str()));
      std::cout << "wrote " << dest.string() << '\n';
      return 0;
    }
    if (app.got_subcommand("synth")) {
      synth_cfg = {{"n_relations", n_rel}, {"instances_per_relation", per_rel}, {"vocab_size", vocab},
                   {"d_attr", d_attr},     {"hidden_dim", hidden},             {"latent_dim", latent},
                   {"noise_scale", noise}, {"seed", synth_seed}};
      Corpus corpus;
      check(zsre_corpus_synthesize(synth_cfg.dump().c_str(), corpus.out()));
      check(zsre_corpus_save(corpus.get(), synth_out.c_str()));
      std::cout << "wrote " << zsre_corpus_instance_count(corpus.get()) << " instances and "
                << zsre_corpus_relation_count(corpus.get()) << " relations to " << synth_out << '\n';
      return 0;
    }
  } catch (const CliFailure& e) {
    std::cerr << "zsre: error: " << e.message << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "zsre: error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
