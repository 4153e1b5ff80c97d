#include "sqlcascade/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <thread>

#include "sqlcascade/error.hpp"
#include "sqlcascade/rng.hpp"

namespace sqlcascade {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Keeps timed predictions from being optimized away.
std::atomic<long long> g_sink{0};

nlohmann::json families_json(const std::vector<FeatureFamily>& families) {
  auto out = nlohmann::json::array();
  for (const auto& f : families) out.push_back(f.name());
  return out;
}

std::vector<FeatureFamily> families_from_json(const nlohmann::json& doc) {
  std::vector<FeatureFamily> out;
  if (doc.is_string()) return parse_families(doc.get<std::string>());
  for (const auto& f : doc) out.push_back(FeatureFamily::parse(f.get<std::string>()));
  return out;
}

nlohmann::json counts_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"tn", c.tn}, {"fp", c.fp}, {"fn", c.fn}};
}

nlohmann::json metrics_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy},   {"precision", m.precision}, {"recall", m.recall},
          {"f1", m.f1},               {"fallout", m.fallout}};
}

nlohmann::json latency_json(const LatencyStats& s) {
  return {{"mean_ms", s.mean_ms},
          {"median_ms", s.median_ms},
          {"p99_ms", s.p99_ms},
          {"samples", s.samples}};
}

nlohmann::json point_json(const CascadeEstimatePoint& p) {
  return {{"prior_attack", p.prior_attack},
          {"trigger_probability", p.trigger_probability},
          {"latency_ms", p.latency_ms},
          {"speedup", p.speedup}};
}

std::string read_cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        auto value = line.substr(colon + 1);
        value.erase(0, value.find_first_not_of(' '));
        return value;
      }
    }
  }
  return "unknown";
}

ConfusionCounts stage1_counts(const std::vector<CascadeTrace>& traces,
                              std::span<const int> truth) {
  std::vector<int> decisions;
  decisions.reserve(traces.size());
  for (const auto& t : traces) decisions.push_back(t.stage1_decision);
  return confusion(decisions, truth);
}

// What the timing phase needs from a fitted method.
struct Fitted {
  std::function<void(std::span<const std::string>)> infer;
  std::shared_ptr<CascadeModel> cascade;
  std::vector<std::string> stage2_samples;
};

struct TaskOutput {
  RunResult result;
  Fitted fitted;
};

TaskOutput run_single(const MethodSpec& spec, const Split& split, std::size_t run) {
  TaskOutput out;
  auto config = spec.train;
  config.shuffle_seed += run;

  const auto t0 = Clock::now();
  auto stack = std::make_shared<FeatureStack>(
      FeatureStack::fit(split.train.payloads(), spec.features));
  auto model = std::make_shared<Classifier>(
      fit(spec.classifier, stack->transform(split.train.payloads()), split.train.labels(), config));
  out.result.train_ms = ms_since(t0);

  const auto test = stack->transform(split.test.payloads());
  std::vector<int> predictions;
  predictions.reserve(test.rows());
  for (std::size_t r = 0; r < test.rows(); ++r) {
    predictions.push_back(predict(*model, test.row(r), spec.threshold));
  }
  out.result.counts = confusion(predictions, split.test.labels());

  const double threshold = spec.threshold;
  out.fitted.infer = [stack, model, threshold](std::span<const std::string> batch) {
    long long positives = 0;
    for (const auto& p : batch) positives += predict(*model, stack->transform(p), threshold);
    g_sink += positives;
  };
  return out;
}

TaskOutput run_ensemble(const MethodSpec& spec, const Split& split, std::size_t run) {
  TaskOutput out;
  auto config = spec.train;
  config.shuffle_seed += run;

  const auto t0 = Clock::now();
  auto model = std::make_shared<EnsembleModel>(EnsembleModel::fit(spec.ensemble, split.train, config));
  out.result.train_ms = ms_since(t0);

  std::vector<int> predictions;
  predictions.reserve(split.test.size());
  for (const auto& p : split.test.payloads()) predictions.push_back(model->predict(p));
  out.result.counts = confusion(predictions, split.test.labels());

  out.fitted.infer = [model](std::span<const std::string> batch) {
    long long positives = 0;
    for (const auto& p : batch) positives += model->predict(p);
    g_sink += positives;
  };
  return out;
}

TaskOutput run_cascade(const MethodSpec& spec, const Split& split, std::size_t run,
                       std::uint64_t split_seed, const ExperimentConfig& config) {
  TaskOutput out;
  auto cascade_config = spec.cascade;
  cascade_config.stage1_train.shuffle_seed += run;

  const auto t0 = Clock::now();
  auto stage2 = make_stage2(cascade_config.stage2, split.train);
  auto model = std::make_shared<CascadeModel>(fit_cascade(split.train, cascade_config, stage2));
  out.result.train_ms = ms_since(t0);

  const auto traces = model->classify_batch(split.test.payloads());
  std::vector<int> final_labels;
  final_labels.reserve(traces.size());
  for (const auto& t : traces) final_labels.push_back(t.final_label);
  out.result.counts = confusion(final_labels, split.test.labels());

  CascadeRunExtras extras;
  extras.stage1 = stage1_counts(traces, split.test.labels());
  extras.test_trigger_rate = trigger_rate(traces);

  // The same stage-1 without the recall tuning, for the tuning-direction check.
  {
    auto untuned = cascade_config.stage1_train;
    untuned.class_weights = ClassWeights{};
    const auto stack = FeatureStack::fit(split.train.payloads(), cascade_config.stage1_features);
    const auto clf = fit(cascade_config.stage1_kind, stack.transform(split.train.payloads()),
                         split.train.labels(), untuned);
    const auto test = stack.transform(split.test.payloads());
    std::vector<int> decisions;
    decisions.reserve(test.rows());
    for (std::size_t r = 0; r < test.rows(); ++r) decisions.push_back(predict(clf, test.row(r), 0.0));
    extras.stage1_untuned = confusion(decisions, split.test.labels());
  }

  if (config.trigger_stream_size > 0) {
    const auto stream = attack_stream(split.test, config.trigger_stream_size, config.prior_attack,
                                      split_seed ^ 0x9e3779b97f4a7c15ULL);
    std::size_t triggered = 0;
    for (const auto& p : stream.payloads()) {
      triggered += static_cast<std::size_t>(model->stage1_decision(p));
    }
    const auto s1 = prf1(extras.stage1);
    extras.stream_size = stream.size();
    extras.stream_trigger_rate = static_cast<double>(triggered) / static_cast<double>(stream.size());
    extras.stream_predicted_trigger = effective_positive_rate(
        {s1.fallout, s1.recall, config.prior_attack, 1.0, 1.0});
  }
  out.result.cascade = extras;

  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (traces[i].stage1_decision == 1) out.fitted.stage2_samples.push_back(split.test.payload(i));
  }
  out.fitted.cascade = model;
  out.fitted.infer = [model](std::span<const std::string> batch) {
    long long positives = 0;
    for (const auto& t : model->classify_batch(batch)) positives += t.final_label;
    g_sink += positives;
  };
  return out;
}

void time_cascade(TaskOutput& task, std::span<const std::string> samples,
                  const ExperimentConfig& config) {
  auto& extras = *task.result.cascade;
  const auto& model = *task.fitted.cascade;

  extras.t1_ms = measure_latency(
      [&model](std::span<const std::string> batch) {
        long long positives = 0;
        for (const auto& p : batch) positives += model.stage1_decision(p);
        g_sink += positives;
      },
      samples, config.latency).mean_ms;

  std::span<const std::string> stage2_samples = task.fitted.stage2_samples;
  if (stage2_samples.empty()) stage2_samples = samples;
  stage2_samples = stage2_samples.first(std::min(stage2_samples.size(), config.latency.max_samples));
  extras.t2_ms = measure_latency(
      [&model](std::span<const std::string> batch) {
        g_sink += static_cast<long long>(model.stage2().score_batch(batch).size());
      },
      stage2_samples, config.latency).mean_ms;

  task.result.latency = measure_latency(task.fitted.infer, samples, config.latency);
  extras.measured_ms = task.result.latency.mean_ms;
  task.fitted.cascade->measured_t1_ms = extras.t1_ms;
  task.fitted.cascade->measured_t2_ms = extras.t2_ms;

  if (extras.t1_ms > 0.0 && extras.t2_ms > 0.0) {
    const auto s1 = prf1(extras.stage1);
    extras.estimate = estimate_cascade(
        {s1.fallout, s1.recall, config.prior_attack, extras.t1_ms, extras.t2_ms});
    task.result.inference_ms = extras.estimate->at_prior.latency_ms;
  } else {
    task.result.inference_ms = extras.measured_ms;
  }
}

MeanMetrics mean_of(const std::vector<RunResult>& runs) {
  MeanMetrics m;
  if (runs.empty()) return m;
  const double n = static_cast<double>(runs.size());
  for (const auto& r : runs) {
    m.metrics.accuracy += r.metrics.accuracy / n;
    m.metrics.precision += r.metrics.precision / n;
    m.metrics.recall += r.metrics.recall / n;
    m.metrics.f1 += r.metrics.f1 / n;
    m.metrics.fallout += r.metrics.fallout / n;
    m.tp += static_cast<double>(r.counts.tp) / n;
    m.tn += static_cast<double>(r.counts.tn) / n;
    m.fp += static_cast<double>(r.counts.fp) / n;
    m.fn += static_cast<double>(r.counts.fn) / n;
    m.train_ms_per_sample += r.train_ms_per_sample / n;
    m.inference_ms += r.inference_ms / n;
  }
  return m;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

// ---------------------------------------------------------------- configuration

nlohmann::json DatasetSpec::to_json() const {
  return {{"path", path},
          {"text_column", csv.text_column},
          {"label_column", csv.label_column},
          {"positive_token", csv.positive_token},
          {"negative_token", csv.negative_token},
          {"delimiter", std::string(1, csv.delimiter)},
          {"synthetic",
           {{"positives", synthetic.positives},
            {"negatives", synthetic.negatives},
            {"seed", synthetic.seed},
            {"label_noise", synthetic.label_noise}}}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& doc) {
  DatasetSpec spec;
  try {
    if (doc.is_string()) {
      spec.path = doc.get<std::string>();
      return spec;
    }
    spec.path = doc.value("path", spec.path);
    spec.csv.text_column = doc.value("text_column", spec.csv.text_column);
    spec.csv.label_column = doc.value("label_column", spec.csv.label_column);
    spec.csv.positive_token = doc.value("positive_token", spec.csv.positive_token);
    spec.csv.negative_token = doc.value("negative_token", spec.csv.negative_token);
    const auto delimiter = doc.value("delimiter", std::string(","));
    if (delimiter.size() != 1) throw ConfigError("dataset delimiter must be one character");
    spec.csv.delimiter = delimiter[0];
    if (doc.contains("synthetic")) {
      const auto& s = doc.at("synthetic");
      spec.synthetic.positives = s.value("positives", spec.synthetic.positives);
      spec.synthetic.negatives = s.value("negatives", spec.synthetic.negatives);
      spec.synthetic.seed = s.value("seed", spec.synthetic.seed);
      spec.synthetic.label_noise = s.value("label_noise", spec.synthetic.label_noise);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  return spec;
}

LabeledCorpus load_dataset(const DatasetSpec& spec, CsvLoadReport* report) {
  if (spec.is_synthetic()) return generate_sqli_corpus(spec.synthetic);
  return load_csv(spec.path, spec.csv, report);
}

void LatencySpec::validate() const {
  if (batch_size == 0) throw ConfigError("latency.batch_size must be positive");
  if (repeats == 0) throw ConfigError("latency.repeats must be positive");
  if (max_samples == 0) throw ConfigError("latency.max_samples must be positive");
}

nlohmann::json LatencySpec::to_json() const {
  return {{"warmup", warmup},
          {"batch_size", batch_size},
          {"repeats", repeats},
          {"max_samples", max_samples}};
}

LatencySpec LatencySpec::from_json(const nlohmann::json& doc) {
  LatencySpec spec;
  try {
    spec.warmup = doc.value("warmup", spec.warmup);
    spec.batch_size = doc.value("batch_size", spec.batch_size);
    spec.repeats = doc.value("repeats", spec.repeats);
    spec.max_samples = doc.value("max_samples", spec.max_samples);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("latency: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string to_string(MethodType t) {
  switch (t) {
    case MethodType::single: return "single";
    case MethodType::ensemble: return "ensemble";
    case MethodType::cascade: return "cascade";
  }
  return "single";
}

MethodType parse_method_type(std::string_view name) {
  if (name == "single") return MethodType::single;
  if (name == "ensemble") return MethodType::ensemble;
  if (name == "cascade") return MethodType::cascade;
  throw ConfigError("unknown method type '" + std::string(name) + "'");
}

void MethodSpec::validate() const {
  if (name.empty()) throw ConfigError("roster entry without a name");
  switch (type) {
    case MethodType::single:
      if (features.empty()) throw ConfigError(name + ": no feature families");
      for (const auto& f : features) f.termizer.validate();
      train.validate();
      break;
    case MethodType::ensemble:
      ensemble.validate();
      train.validate();
      break;
    case MethodType::cascade:
      cascade.validate();
      break;
  }
}

nlohmann::json MethodSpec::to_json() const {
  nlohmann::json doc{{"name", name}, {"type", to_string(type)}, {"group", group}};
  switch (type) {
    case MethodType::single:
      doc["features"] = families_json(features);
      doc["classifier"] = to_string(classifier);
      doc["threshold"] = threshold;
      doc["train"] = train.to_json();
      break;
    case MethodType::ensemble:
      doc["ensemble"] = ensemble.to_json();
      doc["train"] = train.to_json();
      break;
    case MethodType::cascade:
      doc["cascade"] = cascade.to_json();
      break;
  }
  return doc;
}

MethodSpec MethodSpec::from_json(const nlohmann::json& doc) {
  MethodSpec spec;
  try {
    spec.type = parse_method_type(doc.value("type", std::string{"single"}));
    spec.group = doc.value("group", to_string(spec.type));
    if (doc.contains("train")) spec.train = TrainConfig::from_json(doc.at("train"), spec.train);
    switch (spec.type) {
      case MethodType::single:
        spec.features = families_from_json(doc.at("features"));
        spec.classifier = parse_classifier_kind(doc.at("classifier").get<std::string>());
        spec.threshold = doc.value("threshold", 0.0);
        if (doc.contains("name")) {
          spec.name = doc.at("name").get<std::string>();
        } else {
          spec.name = to_string(spec.classifier);
          for (const auto& f : spec.features) spec.name += "/" + f.name();
        }
        break;
      case MethodType::ensemble:
        spec.ensemble = EnsembleSpec::from_json(doc.at("ensemble"));
        spec.name = doc.value("name", spec.ensemble.name());
        break;
      case MethodType::cascade:
        spec.cascade = CascadeConfig::from_json(doc.value("cascade", nlohmann::json::object()));
        spec.name = doc.value("name", std::string{"cascade"});
        break;
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("roster entry: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::vector<MethodSpec> ExperimentConfig::default_roster() {
  std::vector<MethodSpec> roster;
  const std::vector<FeatureFamily> char1{{Weighting::tfidf, Termizer::chars(1)}};
  const std::pair<const char*, ClassifierKind> singles[] = {
      {"PassiveAggressive", ClassifierKind::passive_aggressive},
      {"Perceptron", ClassifierKind::perceptron},
      {"SGDClassifier", ClassifierKind::sgd_hinge},
      {"SGDClassifier-log", ClassifierKind::sgd_log},
      {"MultinomialNB", ClassifierKind::multinomial_nb},
      {"NearestCentroid", ClassifierKind::nearest_centroid},
  };
  for (const auto& [name, kind] : singles) {
    MethodSpec m;
    m.name = name;
    m.type = MethodType::single;
    m.group = "single";
    m.features = char1;
    m.classifier = kind;
    roster.push_back(std::move(m));
  }

  const auto families = parse_families("raw-char2,tf-char2,boc,bow,tfidf-char3");
  const std::pair<const char*, EnsembleStrategy> ensembles[] = {
      {"Ensemble 1", EnsembleStrategy::by_classifier},
      {"Ensemble 2", EnsembleStrategy::by_feature},
      {"Ensemble 3", EnsembleStrategy::concat},
  };
  for (const auto& [name, strategy] : ensembles) {
    MethodSpec m;
    m.name = name;
    m.type = MethodType::ensemble;
    m.group = "ensemble";
    m.ensemble.strategy = strategy;
    m.ensemble.classifier_kinds = {ClassifierKind::multinomial_nb, ClassifierKind::sgd_hinge,
                                   ClassifierKind::passive_aggressive};
    m.ensemble.feature_families = families;
    roster.push_back(std::move(m));
  }

  MethodSpec proposed;
  proposed.name = "Proposed";
  proposed.type = MethodType::cascade;
  proposed.group = "ensemble";
  roster.push_back(std::move(proposed));
  return roster;
}

void ExperimentConfig::validate() const {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  if (roster.empty()) throw ConfigError("roster is empty");
  if (!(split.test_fraction > 0.0 && split.test_fraction < 1.0)) {
    throw ConfigError("split.test_fraction must lie strictly between 0 and 1");
  }
  if (!(prior_attack >= 0.0 && prior_attack <= 1.0)) {
    throw ConfigError("prior_attack must lie in [0, 1]");
  }
  for (double a : fe_alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("fe_alphas must lie in [0, 1]");
  }
  latency.validate();
  for (const auto& m : roster) m.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  auto roster_json = nlohmann::json::array();
  for (const auto& m : roster) roster_json.push_back(m.to_json());
  nlohmann::json doc{
      {"dataset", dataset.to_json()},
      {"split",
       {{"test_fraction", split.test_fraction},
        {"seed", split.seed},
        {"stratified", split.stratified}}},
      {"repetitions", repetitions},
      {"workers", workers},
      {"fe_alphas", fe_alphas},
      {"prior_attack", prior_attack},
      {"trigger_stream_size", trigger_stream_size},
      {"measure_latency", measure_latency},
      {"latency", latency.to_json()},
      {"output_dir", output_dir.string()},
      {"roster", roster_json},
  };
  if (external_measurements) doc["external_measurements"] = external_measurements->string();
  return doc;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  try {
    if (doc.contains("dataset")) c.dataset = DatasetSpec::from_json(doc.at("dataset"));
    if (doc.contains("split")) {
      const auto& s = doc.at("split");
      c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
      c.split.seed = s.value("seed", c.split.seed);
      c.split.stratified = s.value("stratified", c.split.stratified);
    }
    c.repetitions = doc.value("repetitions", c.repetitions);
    c.workers = doc.value("workers", c.workers);
    if (doc.contains("fe_alphas")) c.fe_alphas = doc.at("fe_alphas").get<std::vector<double>>();
    c.prior_attack = doc.value("prior_attack", c.prior_attack);
    c.trigger_stream_size = doc.value("trigger_stream_size", c.trigger_stream_size);
    c.measure_latency = doc.value("measure_latency", c.measure_latency);
    if (doc.contains("latency")) c.latency = LatencySpec::from_json(doc.at("latency"));
    c.output_dir = doc.value("output_dir", c.output_dir.string());
    if (doc.contains("external_measurements") && !doc.at("external_measurements").is_null()) {
      c.external_measurements = doc.at("external_measurements").get<std::string>();
    }
    if (doc.contains("roster")) {
      c.roster.clear();
      for (const auto& entry : doc.at("roster")) c.roster.push_back(MethodSpec::from_json(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto config = from_json(doc);
  const auto base = path.parent_path();
  if (!config.dataset.is_synthetic()) config.dataset.path = resolve(config.dataset.path, base).string();
  if (config.external_measurements) {
    config.external_measurements = resolve(*config.external_measurements, base);
  }
  return config;
}

// ---------------------------------------------------------------- measurement

LatencyStats measure_latency(const std::function<void(std::span<const std::string>)>& infer,
                             std::span<const std::string> samples, const LatencySpec& spec) {
  spec.validate();
  if (samples.empty()) throw Error("measure_latency: no samples");
  samples = samples.first(std::min(samples.size(), spec.max_samples));

  for (std::size_t w = 0; w < spec.warmup; ++w) infer(samples);

  std::vector<double> per_sample;
  for (std::size_t rep = 0; rep < spec.repeats; ++rep) {
    for (std::size_t start = 0; start < samples.size(); start += spec.batch_size) {
      const auto batch = samples.subspan(start, std::min(spec.batch_size, samples.size() - start));
      const auto t0 = Clock::now();
      infer(batch);
      per_sample.push_back(ms_since(t0) / static_cast<double>(batch.size()));
    }
  }
  return summarize_latency(std::move(per_sample));
}

nlohmann::json CascadeEstimate::to_json() const {
  auto sweep_json = nlohmann::json::array();
  for (const auto& p : sweep) sweep_json.push_back(point_json(p));
  return {{"inputs",
           {{"fpr", inputs.fpr},
            {"recall", inputs.recall},
            {"prior_attack", inputs.prior_attack},
            {"t1_ms", inputs.t1_ms},
            {"t2_ms", inputs.t2_ms}}},
          {"trigger_probability", at_prior.trigger_probability},
          {"effective_latency_ms", at_prior.latency_ms},
          {"speedup", at_prior.speedup},
          {"sweep", sweep_json}};
}

CascadeEstimate estimate_cascade(const LatencyModelInputs& inputs,
                                 std::span<const double> prior_sweep) {
  inputs.validate();
  const auto point = [&](double prior) {
    auto in = inputs;
    in.prior_attack = prior;
    in.validate();
    CascadeEstimatePoint p;
    p.prior_attack = prior;
    p.trigger_probability = effective_positive_rate(in);
    p.latency_ms = effective_latency(in);
    p.speedup = in.t2_ms / p.latency_ms;
    return p;
  };
  CascadeEstimate est;
  est.inputs = inputs;
  est.at_prior = point(inputs.prior_attack);
  for (double prior : prior_sweep) est.sweep.push_back(point(prior));
  return est;
}

LabeledCorpus attack_stream(const LabeledCorpus& pool, std::size_t size, double prior,
                            std::uint64_t seed) {
  if (!(prior >= 0.0 && prior <= 1.0)) throw Error("attack_stream: prior outside [0, 1]");
  std::vector<std::size_t> attacks, benign;
  for (std::size_t i = 0; i < pool.size(); ++i) (pool.label(i) == 1 ? attacks : benign).push_back(i);
  const auto n_attack = static_cast<std::size_t>(std::llround(prior * static_cast<double>(size)));
  if ((n_attack > 0 && attacks.empty()) || (n_attack < size && benign.empty())) {
    throw Error("attack_stream: pool lacks a required class");
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picks;
  picks.reserve(size);
  for (std::size_t i = 0; i < n_attack; ++i) picks.push_back(attacks[uniform_below(rng, attacks.size())]);
  for (std::size_t i = n_attack; i < size; ++i) picks.push_back(benign[uniform_below(rng, benign.size())]);
  deterministic_shuffle(std::span<std::size_t>(picks), rng);
  return pool.subset(picks, pool.source_id() + "#stream");
}

MachineInfo machine_info() {
  MachineInfo info;
  info.cpu_model = read_cpu_model();
  info.cores = std::max(1u, std::thread::hardware_concurrency());
#if defined(__clang__)
  info.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  info.compiler = "gcc " __VERSION__;
#else
  info.compiler = "unknown";
#endif
  return info;
}

// ---------------------------------------------------------------- runner

ExperimentReport run_experiment(const ExperimentConfig& config, const LabeledCorpus& corpus) {
  config.validate();

  ExperimentReport report;
  report.config = config;
  report.machine = machine_info();
  report.dataset_source = corpus.source_id();
  report.dataset_counts = class_counts(corpus);
  report.dataset_size = corpus.size();

  if (config.external_measurements) {
    std::ifstream in(*config.external_measurements);
    if (!in) throw ConfigError("cannot open " + config.external_measurements->string());
    nlohmann::json doc;
    in >> doc;
    report.external = measurements_from_json(doc);
  }

  std::vector<Split> splits;
  std::vector<std::uint64_t> seeds;
  for (std::size_t run = 0; run < config.repetitions; ++run) {
    auto spec = config.split;
    spec.seed = config.split.seed + run;
    seeds.push_back(spec.seed);
    splits.push_back(stratified_split(corpus, spec));
  }

  const std::size_t n_methods = config.roster.size();
  const std::size_t n_tasks = n_methods * config.repetitions;
  std::vector<std::optional<TaskOutput>> outputs(n_tasks);
  std::vector<std::string> errors(n_tasks);

  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t t = next++; t < n_tasks; t = next++) {
      const auto& spec = config.roster[t / config.repetitions];
      const std::size_t run = t % config.repetitions;
      const auto& split = splits[run];
      try {
        switch (spec.type) {
          case MethodType::single: outputs[t] = run_single(spec, split, run); break;
          case MethodType::ensemble: outputs[t] = run_ensemble(spec, split, run); break;
          case MethodType::cascade:
            outputs[t] = run_cascade(spec, split, run, seeds[run], config);
            break;
        }
      } catch (const std::exception& e) {
        errors[t] = e.what();
      }
    }
  };
  std::size_t n_workers = config.workers ? config.workers : std::thread::hardware_concurrency();
  n_workers = std::clamp<std::size_t>(n_workers, 1, n_tasks);
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
    worker();
  }

  // Timing runs alone, one method at a time.
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (!outputs[t]) continue;
    auto& out = *outputs[t];
    const std::size_t run = t % config.repetitions;
    const auto& split = splits[run];
    out.result.run = run;
    out.result.seed = seeds[run];
    out.result.metrics = prf1(out.result.counts);
    out.result.train_ms_per_sample = out.result.train_ms / static_cast<double>(split.train.size());
    if (!config.measure_latency) continue;
    try {
      const std::span<const std::string> samples = split.test.payloads();
      if (out.fitted.cascade) {
        time_cascade(out, samples, config);
      } else {
        out.result.latency = measure_latency(out.fitted.infer, samples, config.latency);
        out.result.inference_ms = out.result.latency.mean_ms;
      }
    } catch (const std::exception& e) {
      errors[t] = e.what();
    }
  }

  for (std::size_t m = 0; m < n_methods; ++m) {
    MethodResult result;
    result.spec = config.roster[m];
    for (std::size_t run = 0; run < config.repetitions; ++run) {
      const std::size_t t = m * config.repetitions + run;
      if (!errors[t].empty()) {
        result.failed = true;
        if (result.error.empty()) result.error = "run " + std::to_string(run) + ": " + errors[t];
        continue;
      }
      result.runs.push_back(std::move(outputs[t]->result));
      outputs[t].reset();
    }
    if (result.failed) result.runs.clear();
    result.mean = mean_of(result.runs);
    report.methods.push_back(std::move(result));
  }
  return report;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  return run_experiment(config, load_dataset(config.dataset));
}

// ---------------------------------------------------------------- reporting

bool ExperimentReport::any_failed() const noexcept {
  return std::any_of(methods.begin(), methods.end(), [](const auto& m) { return m.failed; });
}

std::vector<MethodMeasurement> ExperimentReport::measurements() const {
  std::vector<MethodMeasurement> out;
  for (const auto& m : methods) {
    if (m.failed || m.runs.empty() || !(m.mean.inference_ms > 0.0)) continue;
    out.push_back({m.spec.name, m.mean.metrics.f1, m.mean.inference_ms,
                   m.spec.group.empty() ? to_string(m.spec.type) : m.spec.group});
  }
  out.insert(out.end(), external.begin(), external.end());
  return out;
}

nlohmann::json fe_ranking_json(std::span<const MethodMeasurement> context,
                               std::span<const double> alphas) {
  auto rankings = nlohmann::json::array();
  for (double alpha : alphas) {
    auto rows = nlohmann::json::array();
    if (!context.empty()) {
      std::size_t rank = 1;
      for (const auto& r : rank_by_fe(context, alpha)) {
        rows.push_back({{"rank", rank++},
                        {"name", r.method.name},
                        {"group", r.method.group},
                        {"f1", r.method.f1},
                        {"inference_ms", r.method.inference_ms},
                        {"speed_term", r.speed_term},
                        {"fe", r.fe}});
      }
    }
    rankings.push_back({{"alpha", alpha}, {"methods", rows}});
  }
  auto names = nlohmann::json::array();
  for (const auto& m : context) names.push_back(m.name);
  return {{"format", "sqlcascade.fe_ranking"},
          {"schema_version", kReportSchemaVersion},
          {"context", names},
          {"rankings", rankings}};
}

nlohmann::json ExperimentReport::fe_ranking_json() const {
  const auto context = measurements();
  return sqlcascade::fe_ranking_json(context, config.fe_alphas);
}

nlohmann::json ExperimentReport::to_json() const {
  auto methods_json = nlohmann::json::array();
  for (const auto& m : methods) {
    nlohmann::json entry{{"name", m.spec.name},
                         {"type", to_string(m.spec.type)},
                         {"group", m.spec.group},
                         {"status", m.failed ? "failed" : "ok"},
                         {"spec", m.spec.to_json()}};
    if (m.failed) {
      entry["error"] = m.error;
    } else {
      auto mean = metrics_json(m.mean.metrics);
      mean["tp"] = m.mean.tp;
      mean["tn"] = m.mean.tn;
      mean["fp"] = m.mean.fp;
      mean["fn"] = m.mean.fn;
      mean["train_ms_per_sample"] = m.mean.train_ms_per_sample;
      mean["inference_ms"] = m.mean.inference_ms;
      entry["mean"] = mean;
    }
    auto runs = nlohmann::json::array();
    for (const auto& r : m.runs) {
      auto run = metrics_json(r.metrics);
      run.update(counts_json(r.counts));
      run["run"] = r.run;
      run["seed"] = r.seed;
      run["train_ms"] = r.train_ms;
      run["train_ms_per_sample"] = r.train_ms_per_sample;
      run["inference_ms"] = r.inference_ms;
      run["latency"] = latency_json(r.latency);
      if (r.cascade) {
        const auto& c = *r.cascade;
        nlohmann::json cj{{"stage1", counts_json(c.stage1)},
                          {"stage1_metrics", metrics_json(prf1(c.stage1))},
                          {"stage1_untuned", counts_json(c.stage1_untuned)},
                          {"stage1_untuned_metrics", metrics_json(prf1(c.stage1_untuned))},
                          {"test_trigger_rate", c.test_trigger_rate},
                          {"stream_size", c.stream_size},
                          {"stream_trigger_rate", c.stream_trigger_rate},
                          {"stream_predicted_trigger", c.stream_predicted_trigger},
                          {"t1_ms", c.t1_ms},
                          {"t2_ms", c.t2_ms},
                          {"measured_ms", c.measured_ms}};
        if (c.estimate) cj["estimate"] = c.estimate->to_json();
        run["cascade"] = cj;
      }
      runs.push_back(run);
    }
    entry["runs"] = runs;
    methods_json.push_back(entry);
  }

  return {{"format", "sqlcascade.report"},
          {"schema_version", kReportSchemaVersion},
          {"machine",
           {{"cpu_model", machine.cpu_model},
            {"cores", machine.cores},
            {"compiler", machine.compiler}}},
          {"dataset",
           {{"source", dataset_source},
            {"size", dataset_size},
            {"positives", dataset_counts.positives},
            {"negatives", dataset_counts.negatives}}},
          {"config", config.to_json()},
          {"methods", methods_json},
          {"external", measurements_to_json(external)}};
}

std::string ExperimentReport::markdown_table(std::string_view group) const {
  std::ostringstream out;
  out << "| Method | Accuracy | Precision | Recall | F1 | TP | TN | FP | FN "
         "| Training Time (ms) | Inference Time (ms) |\n"
      << "|---|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
  std::vector<std::string> failures;
  char buf[512];
  for (const auto& m : methods) {
    if (!group.empty() && m.spec.group != group) continue;
    if (m.failed) {
      failures.push_back(m.spec.name + ": " + m.error);
      continue;
    }
    const auto& mm = m.mean;
    std::snprintf(buf, sizeof buf,
                  "| %s | %.4f | %.4f | %.4f | %.4f | %.0f | %.0f | %.0f | %.0f | %.6f | %.6f |\n",
                  m.spec.name.c_str(), mm.metrics.accuracy, mm.metrics.precision,
                  mm.metrics.recall, mm.metrics.f1, mm.tp, mm.tn, mm.fp, mm.fn,
                  mm.train_ms_per_sample, mm.inference_ms);
    out << buf;
  }
  for (const auto& f : failures) out << "\nFailed: " << f << "\n";
  return out.str();
}

void write_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tables");
  const auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
  };
  write(dir / "report.json", report.to_json().dump(2) + "\n");
  write(dir / "fe_ranking.json", report.fe_ranking_json().dump(2) + "\n");

  std::vector<std::string> groups;
  for (const auto& m : report.methods) {
    if (std::find(groups.begin(), groups.end(), m.spec.group) == groups.end()) {
      groups.push_back(m.spec.group);
    }
  }
  for (const auto& g : groups) write(dir / "tables" / (g + ".md"), report.markdown_table(g));
  write(dir / "tables" / "all.md", report.markdown_table());
}

}  // namespace sqlcascade
