#include "zsre/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "zsre/error.hpp"
#include "zsre/random.hpp"

namespace zsre {

using nlohmann::json;

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") return c;
  if (name == "paper") {
    c.train.learning_rate = 5e-6;
    c.train.batch_size = 4;
    c.train.gamma = 7.5;
    c.train.alpha = 0.4;
    c.train.hidden_dim = 768;
    c.train.attr_dim = 1024;
    c.m = 5;
    return c;
  }
  fail(ErrorCode::Validation, "unknown preset '" + name + "' (expected desk or paper)");
}

namespace {

template <typename T>
T get(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::Validation, "config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    fail(ErrorCode::Validation, "config key '" + key + "' must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void apply_json(RunConfig& c, const json& j) {
  if (!j.is_object()) fail(ErrorCode::Parse, "config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "preset") c.preset = get<std::string>(v, key);
    else if (key == "instances") c.instances = get<std::string>(v, key);
    else if (key == "relations") c.relations = get<std::string>(v, key);
    else if (key == "token_embeddings") c.token_embeddings = get<std::string>(v, key);
    else if (key == "hidden_states") c.hidden_states = get<std::string>(v, key);
    else if (key == "split") c.split = get<std::string>(v, key);
    else if (key == "out") c.out = get<std::string>(v, key);
    else if (key == "learning_rate") c.train.learning_rate = get<double>(v, key);
    else if (key == "batch_size") c.train.batch_size = get_count(v, key);
    else if (key == "gamma") c.train.gamma = get<double>(v, key);
    else if (key == "alpha") c.train.alpha = get<double>(v, key);
    else if (key == "epochs") c.train.epochs = get_count(v, key);
    else if (key == "seed") c.train.seed = get_count(v, key);
    else if (key == "dist") c.train.dist = parse_dist_kind(get<std::string>(v, key));
    else if (key == "encoder_mode") c.encoder_mode = get<std::string>(v, key);
    else if (key == "encoder_trainable") {
      if (v.is_null()) c.encoder_trainable.reset();
      else c.encoder_trainable = get<bool>(v, key);
    }
    else if (key == "encoder_mixing") c.train.encoder_mixing = get<bool>(v, key);
    else if (key == "description_mode") c.train.description_mode = parse_description_mode(get<std::string>(v, key));
    else if (key == "hidden_dim") c.train.hidden_dim = get_count(v, key);
    else if (key == "attr_dim") c.train.attr_dim = get_count(v, key);
    else if (key == "grad_clip") c.train.grad_clip = get<double>(v, key);
    else if (key == "m") c.m = get_count(v, key);
    else if (key == "repeats") c.repeats = get_count(v, key);
    else if (key == "fractions") c.fractions = get<std::vector<double>>(v, key);
    else if (key == "sweep_axis") c.sweep_axis = get<std::string>(v, key);
    else if (key == "sweep_values") {
      c.sweep_values.clear();
      if (!v.is_array()) fail(ErrorCode::Validation, "config key 'sweep_values' must be an array");
      for (const auto& x : v) c.sweep_values.push_back(x.is_string() ? x.get<std::string>() : x.dump());
    }
    else if (key == "jobs") c.jobs = get_count(v, key);
    else if (key == "gradcheck_tol") c.gradcheck_tol = get<double>(v, key);
    else if (key == "gradcheck_step") c.gradcheck_step = get<double>(v, key);
    else if (key == "gradcheck_batch") c.gradcheck_batch = get_count(v, key);
    else if (key == "gradcheck_coords") c.gradcheck_coords = get_count(v, key);
    else fail(ErrorCode::Validation, "unknown config key '" + key + "'");
  }
}

void resolve(RunConfig& c) {
  if (c.encoder_mode == "auto") {
    if (!c.hidden_states.empty()) c.train.encoder_mode = EncoderMode::HiddenStates;
    else if (!c.token_embeddings.empty()) c.train.encoder_mode = EncoderMode::TokenTable;
    else c.train.encoder_mode = EncoderMode::Toy;
  } else {
    c.train.encoder_mode = parse_encoder_mode(c.encoder_mode);
  }
  c.encoder_mode = to_string(c.train.encoder_mode);
  if (!c.encoder_trainable) c.encoder_trainable = c.train.encoder_mode == EncoderMode::Toy;
  if (c.train.encoder_mode == EncoderMode::HiddenStates) c.encoder_trainable = false;
  c.train.encoder_trainable = *c.encoder_trainable;
}

void validate(const RunConfig& c, bool check_paths) {
  c.train.validate();
  if (c.repeats < 1) fail(ErrorCode::Validation, "repeats must be >= 1");
  if (c.jobs < 1) fail(ErrorCode::Validation, "jobs must be >= 1");
  if (!(c.gradcheck_tol > 0.0)) fail(ErrorCode::Validation, "gradcheck_tol must be > 0");
  if (!(c.gradcheck_step > 0.0)) fail(ErrorCode::Validation, "gradcheck_step must be > 0");
  if (c.gradcheck_batch < 1) fail(ErrorCode::Validation, "gradcheck_batch must be >= 1");
  for (double f : c.fractions) {
    if (!(f >= 0.0 && f < 1.0)) fail(ErrorCode::Validation, "fractions must lie in [0, 1)");
  }
  parse_sweep_axis(c.sweep_axis);
  if (c.train.encoder_mode == EncoderMode::TokenTable && c.token_embeddings.empty()) {
    fail(ErrorCode::Validation, "encoder_mode token_table needs token_embeddings");
  }
  if (c.train.encoder_mode == EncoderMode::HiddenStates && c.hidden_states.empty()) {
    fail(ErrorCode::Validation, "encoder_mode hidden_states needs hidden_states");
  }
  if (!check_paths) return;
  for (const auto* p : {&c.instances, &c.relations, &c.token_embeddings, &c.hidden_states, &c.split}) {
    if (!p->empty() && !std::filesystem::exists(*p)) fail(ErrorCode::Io, "path does not exist: " + *p);
  }
}

RunConfig build_config(const std::optional<std::filesystem::path>& file, const json& overrides, bool check_paths) {
  json from_file = json::object();
  if (file) {
    try {
      from_file = json::parse(slurp(*file));
    } catch (const json::parse_error& e) {
      fail(ErrorCode::Parse, "config " + file->string() + ": " + e.what());
    }
    if (!from_file.is_object()) fail(ErrorCode::Parse, "config " + file->string() + " is not a JSON object");
  }
  if (!overrides.is_null() && !overrides.is_object()) fail(ErrorCode::Parse, "overrides must be a JSON object");
  std::string preset = "desk";
  if (from_file.contains("preset")) preset = get<std::string>(from_file["preset"], "preset");
  if (overrides.is_object() && overrides.contains("preset")) preset = get<std::string>(overrides["preset"], "preset");

  RunConfig c = preset_config(preset);
  apply_json(c, from_file);
  if (overrides.is_object()) apply_json(c, overrides);
  c.preset = preset;
  resolve(c);
  validate(c, check_paths);
  return c;
}

RunConfig load_config(const std::filesystem::path& path) { return build_config(path, json::object()); }

json to_json(const RunConfig& c) {
  json j = to_json(c.train);
  j.erase("encoder_mode");
  j["preset"] = c.preset;
  j["instances"] = c.instances;
  j["relations"] = c.relations;
  j["token_embeddings"] = c.token_embeddings;
  j["hidden_states"] = c.hidden_states;
  j["split"] = c.split;
  j["out"] = c.out;
  j["encoder_mode"] = c.encoder_mode;
  j["encoder_trainable"] = c.encoder_trainable ? json(*c.encoder_trainable) : json(nullptr);
  j["m"] = c.m;
  j["repeats"] = c.repeats;
  j["fractions"] = c.fractions;
  j["sweep_axis"] = c.sweep_axis;
  j["sweep_values"] = c.sweep_values;
  j["jobs"] = c.jobs;
  j["gradcheck_tol"] = c.gradcheck_tol;
  j["gradcheck_step"] = c.gradcheck_step;
  j["gradcheck_batch"] = c.gradcheck_batch;
  j["gradcheck_coords"] = c.gradcheck_coords;
  return j;
}

Corpus load_corpus(const RunConfig& c) {
  if (c.instances.empty() || c.relations.empty()) fail(ErrorCode::Validation, "config needs instances and relations paths");
  Corpus corpus;
  corpus.instances = load_instances(c.instances);
  std::optional<std::size_t> d_attr;
  if (c.train.description_mode != DescriptionMode::Hashed) d_attr = c.train.attr_dim;
  corpus.relations = load_relations(c.relations, d_attr);
  check_relations_known(corpus.instances, corpus.relations);
  if (!c.token_embeddings.empty()) corpus.token_table = load_token_table(c.token_embeddings);
  if (!c.hidden_states.empty()) corpus.hidden_states = load_hidden_states(c.hidden_states);
  return corpus;
}

}  // namespace zsre

namespace zsre {

SplitSpec split_for(const RunConfig& config, const Corpus& corpus) {
  if (!config.split.empty()) return load_split(config.split);
  return make_zero_shot_split(corpus.instances, corpus.relations, config.m, config.train.seed);
}

GradCheckReport gradcheck_for(const RunConfig& config, const Corpus& corpus) {
  const SplitSpec split = split_for(config, corpus);
  const TrainedModel model = initialize_model(corpus.instances, corpus.relations, split, config.train, corpus.inputs());
  std::vector<std::size_t> order = split.train_idx;
  Rng rng(derive_seed(config.train.seed, SeedStream::GradCheck));
  rng.shuffle(order);
  order.resize(std::min(order.size(), config.gradcheck_batch));

  BatchInput input;
  input.attrs = Matrix(order.size(), config.train.attr_dim);
  for (std::size_t b = 0; b < order.size(); ++b) {
    const Instance& inst = corpus.instances[order[b]];
    input.instances.push_back(inst);
    input.file_indices.push_back(order[b]);
    const auto label = static_cast<std::size_t>(
        std::find(model.labels.begin(), model.labels.end(), inst.relation_id) - model.labels.begin());
    input.labels.push_back(label);
    const Vector a = encode_description(corpus.relations.at(inst.relation_id), config.train.description_mode,
                                        config.train.attr_dim);
    std::copy(a.begin(), a.end(), input.attrs.row(b).begin());
  }
  GradCheckOptions opt;
  opt.gamma = config.train.gamma;
  opt.alpha = config.train.alpha;
  opt.encoder_trainable = model.config.encoder_trainable && model.config.encoder_mode != EncoderMode::HiddenStates;
  opt.step = config.gradcheck_step;
  opt.tol = config.gradcheck_tol;
  opt.coords_per_tensor = config.gradcheck_coords;
  opt.seed = config.train.seed;
  const HiddenStateStore* store =
      model.config.encoder_mode == EncoderMode::HiddenStates ? corpus.inputs().hidden_states : nullptr;
  return grad_check(model.params, input, model.vocab, store, opt);
}

}  // namespace zsre
