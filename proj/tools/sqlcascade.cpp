// sqlcascade: train, evaluate and benchmark the cascaded SQL-injection detector.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sqlcascade/cascade.hpp"
#include "sqlcascade/corpus.hpp"
#include "sqlcascade/experiment.hpp"
#include "sqlcascade/features.hpp"
#include "sqlcascade/linear_models.hpp"
#include "sqlcascade/metrics.hpp"
#include "sqlcascade/synthetic.hpp"

using namespace sqlcascade;
using nlohmann::json;

namespace {

struct DataArgs {
  std::string path = "synthetic";
  std::string text_column = "Query";
  std::string label_column = "Label";
  std::string positive_token = "1";
  std::string negative_token = "0";
  std::uint64_t synth_seed = 7;

  void attach(CLI::App* cmd) {
    cmd->add_option("-d,--data", path, "CSV dataset, or 'synthetic'")->capture_default_str();
    cmd->add_option("--text-column", text_column)->capture_default_str();
    cmd->add_option("--label-column", label_column)->capture_default_str();
    cmd->add_option("--positive-token", positive_token)->capture_default_str();
    cmd->add_option("--negative-token", negative_token)->capture_default_str();
    cmd->add_option("--synth-seed", synth_seed, "seed of the synthetic corpus")
        ->capture_default_str();
  }

  DatasetSpec spec() const {
    DatasetSpec d;
    d.path = path;
    d.csv.text_column = text_column;
    d.csv.label_column = label_column;
    d.csv.positive_token = positive_token;
    d.csv.negative_token = negative_token;
    d.synthetic.seed = synth_seed;
    return d;
  }

  LabeledCorpus load() const {
    CsvLoadReport report;
    auto corpus = load_dataset(spec(), &report);
    for (const auto& r : report.repairs) {
      std::cerr << "row " << r.row << ": replaced " << r.replaced_sequences
                << " invalid UTF-8 sequence(s)\n";
    }
    return corpus;
  }
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return doc;
}

void emit(const json& doc, const std::string& out_path) {
  if (out_path.empty() || out_path == "-") {
    std::cout << doc.dump(2) << "\n";
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw Error("cannot write " + out_path);
  out << doc.dump(2) << "\n";
}

json evaluation_json(std::span<const int> predictions, std::span<const int> truth) {
  const auto c = confusion(predictions, truth);
  const auto m = prf1(c);
  return {{"tp", c.tp},           {"tn", c.tn},
          {"fp", c.fp},           {"fn", c.fn},
          {"accuracy", m.accuracy}, {"precision", m.precision},
          {"recall", m.recall},   {"f1", m.f1},
          {"fallout", m.fallout}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cascaded SQL-injection detector and benchmark harness"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "fit one stage-1 classifier and save it as JSON");
  DataArgs train_data;
  train_data.attach(train_cmd);
  std::string train_features = "tfidf-char1";
  std::string train_kind = "pa";
  std::string train_config;
  double train_threshold = 0.0;
  double train_w_pos = 1.0;
  std::string train_out;
  train_cmd->add_option("-f,--features", train_features, "comma-separated feature families")
      ->capture_default_str();
  train_cmd->add_option("-c,--classifier", train_kind)->capture_default_str();
  train_cmd->add_option("--train-config", train_config, "JSON file with TrainConfig keys");
  train_cmd->add_option("--threshold", train_threshold)->capture_default_str();
  train_cmd->add_option("--w-pos", train_w_pos, "positive class weight")->capture_default_str();
  train_cmd->add_option("-o,--out", train_out, "model file (stdout when omitted)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a saved model on a labeled dataset");
  DataArgs eval_data;
  eval_data.attach(eval_cmd);
  std::string eval_model;
  eval_cmd->add_option("-m,--model", eval_model)->required();

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "run the repeated-split experiment protocol");
  std::string bench_config;
  std::optional<std::string> bench_data;
  std::optional<std::string> bench_out;
  std::optional<std::size_t> bench_reps;
  std::optional<std::size_t> bench_workers;
  std::optional<std::string> bench_external;
  bool bench_no_latency = false;
  bench_cmd->add_option("--config", bench_config, "experiment JSON (defaults when omitted)");
  bench_cmd->add_option("-d,--data", bench_data, "override dataset path");
  bench_cmd->add_option("-o,--output-dir", bench_out);
  bench_cmd->add_option("-r,--repetitions", bench_reps);
  bench_cmd->add_option("-j,--workers", bench_workers);
  bench_cmd->add_option("--external", bench_external, "extra measurements for FE ranking");
  bench_cmd->add_flag("--no-latency", bench_no_latency, "skip the timing phase");

  // cascade
  auto* cascade_cmd = app.add_subcommand("cascade", "fit and evaluate the two-stage detector on one split");
  DataArgs cascade_data;
  cascade_data.attach(cascade_cmd);
  std::string cascade_config;
  double cascade_test_fraction = 0.2;
  std::uint64_t cascade_seed = 0;
  double cascade_prior = 0.033;
  std::optional<std::string> cascade_stage2;
  std::optional<std::string> cascade_endpoint;
  std::optional<double> cascade_latency;
  std::optional<std::string> cascade_policy;
  cascade_cmd->add_option("--config", cascade_config, "cascade JSON");
  cascade_cmd->add_option("--test-fraction", cascade_test_fraction)->capture_default_str();
  cascade_cmd->add_option("--seed", cascade_seed)->capture_default_str();
  cascade_cmd->add_option("--prior", cascade_prior, "attack prior for the latency estimate")
      ->capture_default_str();
  cascade_cmd->add_option("--stage2", cascade_stage2, "reference | mock | remote");
  cascade_cmd->add_option("--endpoint", cascade_endpoint, "stage-2 service base URL");
  cascade_cmd->add_option("--mock-latency", cascade_latency, "injected mock latency (ms)");
  cascade_cmd->add_option("--fail-policy", cascade_policy, "fail_closed | fail_open | raise");

  // fe-rank
  auto* fe_cmd = app.add_subcommand("fe-rank", "rank measurements by F1-Efficiency");
  std::vector<std::string> fe_inputs;
  std::vector<double> fe_alphas{1.0, 0.98};
  std::string fe_out;
  fe_cmd->add_option("measurements", fe_inputs, "measurement or report JSON files")->required();
  fe_cmd->add_option("-a,--alpha", fe_alphas, "alpha values")->capture_default_str();
  fe_cmd->add_option("-o,--out", fe_out);

  // effective-latency
  auto* lat_cmd = app.add_subcommand("effective-latency", "analytic cascade latency model");
  LatencyModelInputs lat;
  std::vector<double> lat_sweep;
  lat_cmd->add_option("--fpr", lat.fpr)->required();
  lat_cmd->add_option("--recall", lat.recall)->required();
  lat_cmd->add_option("--prior", lat.prior_attack)->required();
  lat_cmd->add_option("--t1", lat.t1_ms, "stage-1 ms per sample")->required();
  lat_cmd->add_option("--t2", lat.t2_ms, "stage-2 ms per sample")->required();
  lat_cmd->add_option("--sweep", lat_sweep, "extra attack priors");

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write the synthetic SQL payload corpus as CSV");
  SynthOptions synth;
  std::string synth_out;
  synth_cmd->add_option("--positives", synth.positives)->capture_default_str();
  synth_cmd->add_option("--negatives", synth.negatives)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
  synth_cmd->add_option("--label-noise", synth.label_noise)->capture_default_str();
  synth_cmd->add_option("-o,--out", synth_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto corpus = train_data.load();
      TrainConfig config;
      if (!train_config.empty()) config = TrainConfig::from_json(read_json(train_config), config);
      if (train_w_pos != 1.0) config.class_weights.positive = train_w_pos;
      const auto families = parse_families(train_features);
      const auto stack = FeatureStack::fit(corpus.payloads(), families);
      const auto clf = fit(parse_classifier_kind(train_kind), stack.transform(corpus.payloads()),
                           corpus.labels(), config);
      emit({{"format", "sqlcascade.bundle"},
            {"version", 1},
            {"features", stack.to_json()},
            {"model", clf.to_json(train_threshold, stack.name())}},
           train_out);
      return 0;
    }

    if (*eval_cmd) {
      const auto doc = read_json(eval_model);
      const auto stack = FeatureStack::from_json(doc.at("features"));
      double threshold = 0.0;
      const auto clf = Classifier::from_json(doc.at("model"), &threshold);
      const auto corpus = eval_data.load();
      const auto data = stack.transform(corpus.payloads());
      std::vector<int> predictions;
      for (std::size_t r = 0; r < data.rows(); ++r) {
        predictions.push_back(predict(clf, data.row(r), threshold));
      }
      emit(evaluation_json(predictions, corpus.labels()), "-");
      return 0;
    }

    if (*bench_cmd) {
      auto config = bench_config.empty() ? ExperimentConfig{} : ExperimentConfig::load(bench_config);
      if (bench_data) config.dataset.path = *bench_data;
      if (bench_out) config.output_dir = *bench_out;
      if (bench_reps) config.repetitions = *bench_reps;
      if (bench_workers) config.workers = *bench_workers;
      if (bench_external) config.external_measurements = *bench_external;
      if (bench_no_latency) config.measure_latency = false;
      config.validate();

      const auto report = run_experiment(config);
      write_report(report, config.output_dir);
      std::cout << report.markdown_table();
      std::cerr << "report written to " << config.output_dir.string() << "\n";
      for (const auto& m : report.methods) {
        if (m.failed) std::cerr << "method failed: " << m.spec.name << ": " << m.error << "\n";
      }
      return report.any_failed() ? 2 : 0;
    }

    if (*cascade_cmd) {
      auto config = cascade_config.empty() ? CascadeConfig{}
                                           : CascadeConfig::from_json(read_json(cascade_config));
      if (cascade_stage2) config.stage2.variant = parse_stage2_variant(*cascade_stage2);
      if (cascade_endpoint) config.stage2.endpoint = *cascade_endpoint;
      if (cascade_latency) config.stage2.injected_latency_ms = *cascade_latency;
      if (cascade_policy) config.fail_policy = parse_fail_policy(*cascade_policy);
      config.validate();

      const auto corpus = cascade_data.load();
      const auto split = stratified_split(corpus, {cascade_test_fraction, cascade_seed, true});
      const auto model = fit_cascade(split.train, config);
      const auto traces = model.classify_batch(split.test.payloads());
      std::vector<int> s1, final_labels;
      for (const auto& t : traces) {
        s1.push_back(t.stage1_decision);
        final_labels.push_back(t.final_label);
      }
      const auto stage1 = prf1(confusion(s1, split.test.labels()));

      const std::span<const std::string> samples = split.test.payloads();
      LatencySpec spec;
      const double t1 = measure_latency(
          [&](std::span<const std::string> batch) {
            for (const auto& p : batch) (void)model.stage1_decision(p);
          },
          samples, spec).mean_ms;
      std::vector<std::string> positives;
      for (std::size_t i = 0; i < traces.size(); ++i) {
        if (traces[i].stage1_decision == 1) positives.push_back(split.test.payload(i));
      }
      std::span<const std::string> stage2_samples = positives;
      if (stage2_samples.empty()) stage2_samples = samples;
      const double t2 = measure_latency(
          [&](std::span<const std::string> batch) { (void)model.stage2().score_batch(batch); },
          stage2_samples, spec).mean_ms;

      const double sweep[] = {0.0, cascade_prior, 0.1};
      const auto est = estimate_cascade({stage1.fallout, stage1.recall, cascade_prior, t1, t2}, sweep);
      emit({{"config", config.to_json()},
            {"stage2_model_id", model.stage2().model_id()},
            {"test_size", split.test.size()},
            {"stage1", evaluation_json(s1, split.test.labels())},
            {"cascade", evaluation_json(final_labels, split.test.labels())},
            {"trigger_rate", trigger_rate(traces)},
            {"estimate", est.to_json()}},
           "-");
      return 0;
    }

    if (*fe_cmd) {
      std::vector<MethodMeasurement> context;
      for (const auto& path : fe_inputs) {
        const auto doc = read_json(path);
        if (doc.is_object() && doc.value("format", "") == "sqlcascade.report") {
          for (const auto& m : doc.at("methods")) {
            if (m.value("status", "") != "ok") continue;
            const auto& mean = m.at("mean");
            if (!(mean.at("inference_ms").get<double>() > 0.0)) continue;
            context.push_back({m.at("name"), mean.at("f1"), mean.at("inference_ms"), m.at("group")});
          }
        } else {
          const auto ms = measurements_from_json(doc);
          context.insert(context.end(), ms.begin(), ms.end());
        }
      }
      emit(fe_ranking_json(context, fe_alphas), fe_out);
      return 0;
    }

    if (*lat_cmd) {
      emit(estimate_cascade(lat, lat_sweep).to_json(), "-");
      return 0;
    }

    if (*synth_cmd) {
      const auto corpus = generate_sqli_corpus(synth);
      write_csv(synth_out, corpus);
      const auto counts = class_counts(corpus);
      std::cerr << "wrote " << counts.positives + counts.negatives << " rows (" << counts.positives
                << " attacks) to " << synth_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
