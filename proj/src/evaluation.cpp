#include "zsre/evaluation.hpp"

#include <cmath>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

#include "zsre/error.hpp"
#include "zsre/inference.hpp"

namespace zsre {

using nlohmann::json;

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

Summary summarize(const std::vector<double>& xs) {
  Summary s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.std += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(s.std / static_cast<double>(xs.size()));
  return s;
}

}  // namespace

Metrics compute_metrics(const std::vector<std::string>& gold, const std::vector<std::string>& pred,
                        const std::vector<std::string>& unseen_ids) {
  require_size(pred.size(), gold.size(), "prediction list");
  std::map<std::string, std::size_t> slot;
  Metrics m;
  for (const auto& id : unseen_ids) {
    if (!slot.emplace(id, m.per_relation.size()).second) fail(ErrorCode::InvalidArgument, "duplicate unseen id " + id);
    m.per_relation.push_back({id});
  }
  auto find = [&](const std::string& id, const char* what) -> RelationScore& {
    auto it = slot.find(id);
    if (it == slot.end()) fail(ErrorCode::InvalidArgument, std::string(what) + " relation " + id + " is not in the unseen set");
    return m.per_relation[it->second];
  };
  for (std::size_t i = 0; i < gold.size(); ++i) {
    RelationScore& g = find(gold[i], "gold");
    RelationScore& p = find(pred[i], "predicted");
    ++g.support;
    if (gold[i] == pred[i]) {
      ++g.tp;
    } else {
      ++g.fn;
      ++p.fp;
    }
  }
  std::size_t tp = 0, fp = 0, fn = 0, counted = 0;
  for (auto& r : m.per_relation) {
    r.precision = ratio(r.tp, r.tp + r.fp);
    r.recall = ratio(r.tp, r.tp + r.fn);
    r.f1 = harmonic(r.precision, r.recall);
    tp += r.tp;
    fp += r.fp;
    fn += r.fn;
    if (r.support == 0) continue;
    m.macro_p += r.precision;
    m.macro_r += r.recall;
    m.macro_f1 += r.f1;
    ++counted;
  }
  if (counted > 0) {
    m.macro_p /= static_cast<double>(counted);
    m.macro_r /= static_cast<double>(counted);
    m.macro_f1 /= static_cast<double>(counted);
  }
  m.n = gold.size();
  m.micro_p = ratio(tp, tp + fp);
  m.micro_r = ratio(tp, tp + fn);
  m.micro_f1 = harmonic(m.micro_p, m.micro_r);
  m.accuracy = ratio(tp, m.n);
  return m;
}

json to_json(const Metrics& m) {
  json rel = json::array();
  for (const auto& r : m.per_relation) {
    rel.push_back({{"id", r.id},
                   {"tp", r.tp},
                   {"fp", r.fp},
                   {"fn", r.fn},
                   {"support", r.support},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"f1", r.f1}});
  }
  return {{"macro_p", m.macro_p},   {"macro_r", m.macro_r},   {"macro_f1", m.macro_f1},
          {"micro_p", m.micro_p},   {"micro_r", m.micro_r},   {"micro_f1", m.micro_f1},
          {"accuracy", m.accuracy}, {"n", m.n},               {"per_relation", rel}};
}

json to_json(const ExperimentReport& report) {
  json repeats = json::array();
  for (const auto& r : report.repeats) {
    repeats.push_back({{"seed", r.seed}, {"final_loss", r.final_loss}, {"metrics", to_json(r.metrics)}});
  }
  auto summary = [](const Summary& s) { return json{{"mean", s.mean}, {"std", s.std}}; };
  return {{"config", to_json(report.protocol.train)},
          {"m", report.protocol.m},
          {"repeat_count", report.protocol.repeats},
          {"repeats", repeats},
          {"aggregate",
           {{"macro_p", summary(report.macro_p)},
            {"macro_r", summary(report.macro_r)},
            {"macro_f1", summary(report.macro_f1)},
            {"micro_f1", summary(report.micro_f1)}}}};
}

RepeatOutcome evaluate_split(const Corpus& corpus, const SplitSpec& split, const TrainConfig& config) {
  const EncoderInputs inputs = corpus.inputs();
  TrainResult trained = train(corpus.instances, corpus.relations, split, config, inputs);
  const TrainedModel& model = trained.model;
  const RelationIndex index =
      build_index(corpus.relations, split.unseen_ids, config.description_mode, config.attr_dim, config.dist);
  const SentenceEncoder encoder = model.sentence_encoder(inputs.hidden_states);
  std::vector<std::string> gold;
  std::vector<std::string> pred;
  for (std::size_t i : split.test_idx) {
    const Instance& inst = corpus.instances[i];
    const Vector a_hat = forward(inst, encoder.encode(inst, i), model.params.head).a_hat;
    gold.push_back(inst.relation_id);
    pred.push_back(predict(a_hat, index).relation_id);
  }
  RepeatOutcome out;
  out.seed = config.seed;
  out.metrics = compute_metrics(gold, pred, split.unseen_ids);
  out.final_loss = trained.history.epochs.empty() ? 0.0 : trained.history.epochs.back().total;
  return out;
}

namespace {

// Runs fn(r) for r in [0, count) with at most `jobs` in flight; results in order.
template <typename Fn>
auto run_repeats(std::size_t count, std::size_t jobs, Fn fn) {
  using Result = decltype(fn(std::size_t{0}));
  std::vector<Result> results;
  results.reserve(count);
  if (jobs <= 1) {
    for (std::size_t r = 0; r < count; ++r) results.push_back(fn(r));
    return results;
  }
  for (std::size_t start = 0; start < count; start += jobs) {
    std::vector<std::future<Result>> wave;
    for (std::size_t r = start; r < std::min(count, start + jobs); ++r) wave.push_back(std::async(std::launch::async, fn, r));
    for (auto& f : wave) results.push_back(f.get());
  }
  return results;
}

std::vector<RepeatOutcome> run_protocol(const Corpus& corpus, const Protocol& protocol,
                                        const std::function<SplitSpec(const SplitSpec&, std::uint64_t)>& adjust) {
  if (protocol.repeats < 1) fail(ErrorCode::InvalidArgument, "repeats must be >= 1");
  protocol.train.validate();
  return run_repeats(protocol.repeats, protocol.jobs, [&](std::size_t r) {
    const std::uint64_t seed = protocol.train.seed + r;
    SplitSpec split = make_zero_shot_split(corpus.instances, corpus.relations, protocol.m, seed);
    if (adjust) split = adjust(split, seed);
    TrainConfig cfg = protocol.train;
    cfg.seed = seed;
    return evaluate_split(corpus, split, cfg);
  });
}

Summary macro_f1_summary(const std::vector<RepeatOutcome>& outcomes) {
  std::vector<double> f1;
  for (const auto& o : outcomes) f1.push_back(o.metrics.macro_f1);
  return summarize(f1);
}

std::string format_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

ExperimentReport run_experiment(const Corpus& corpus, const Protocol& protocol) {
  ExperimentReport report;
  report.protocol = protocol;
  report.repeats = run_protocol(corpus, protocol, nullptr);
  std::vector<double> p, r, f, mf;
  for (const auto& o : report.repeats) {
    p.push_back(o.metrics.macro_p);
    r.push_back(o.metrics.macro_r);
    f.push_back(o.metrics.macro_f1);
    mf.push_back(o.metrics.micro_f1);
  }
  report.macro_p = summarize(p);
  report.macro_r = summarize(r);
  report.macro_f1 = summarize(f);
  report.micro_f1 = summarize(mf);
  return report;
}

std::vector<CurvePoint> run_fewshot_curve(const Corpus& corpus, const Protocol& protocol,
                                          const std::vector<double>& fractions) {
  if (fractions.empty()) fail(ErrorCode::InvalidArgument, "no few-shot fractions given");
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) fail(ErrorCode::InvalidArgument, "few-shot fractions must lie in [0, 1)");
    if (i > 0 && fractions[i] < fractions[i - 1]) fail(ErrorCode::InvalidArgument, "few-shot fractions must be sorted");
  }
  std::vector<CurvePoint> points;
  for (double fraction : fractions) {
    std::function<SplitSpec(const SplitSpec&, std::uint64_t)> adjust;
    if (fraction > 0.0) {
      adjust = [&](const SplitSpec& s, std::uint64_t seed) {
        return make_few_shot_split(s, corpus.instances, fraction, seed);
      };
    }
    points.push_back({format_value(fraction), macro_f1_summary(run_protocol(corpus, protocol, adjust))});
  }
  return points;
}

SweepAxis parse_sweep_axis(const std::string& name) {
  if (name == "gamma") return SweepAxis::Gamma;
  if (name == "alpha") return SweepAxis::Alpha;
  if (name == "dist") return SweepAxis::Dist;
  fail(ErrorCode::InvalidArgument, "unknown sweep axis '" + name + "'");
}

std::vector<CurvePoint> run_sweep(const Corpus& corpus, const Protocol& protocol, SweepAxis axis,
                                  const std::vector<std::string>& values) {
  if (values.empty()) fail(ErrorCode::InvalidArgument, "sweep needs at least one value");
  std::vector<CurvePoint> points;
  for (const auto& value : values) {
    Protocol p = protocol;
    try {
      switch (axis) {
        case SweepAxis::Gamma: p.train.gamma = std::stod(value); break;
        case SweepAxis::Alpha: p.train.alpha = std::stod(value); break;
        case SweepAxis::Dist: p.train.dist = parse_dist_kind(value); break;
      }
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidArgument, "bad sweep value '" + value + "'");
    }
    points.push_back({value, macro_f1_summary(run_protocol(corpus, p, nullptr))});
  }
  return points;
}

std::string curve_csv(const std::vector<CurvePoint>& points) {
  std::ostringstream os;
  os.precision(17);
  os << "value,mean_macro_F1,std_macro_F1\n";
  for (const auto& p : points) os << p.value << ',' << p.macro_f1.mean << ',' << p.macro_f1.std << '\n';
  return os.str();
}

void dump_embeddings(const TrainedModel& model, const std::vector<Instance>& instances,
                     const HiddenStateStore* store, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  const SentenceEncoder encoder = model.sentence_encoder(store);
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Vector a_hat = forward(instances[i], encoder.encode(instances[i], i), model.params.head).a_hat;
    out << json{{"index", i}, {"relation", instances[i].relation_id}, {"embedding", a_hat}}.dump() << '\n';
  }
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

}  // namespace zsre
