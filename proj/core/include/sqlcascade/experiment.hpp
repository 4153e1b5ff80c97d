#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqlcascade/cascade.hpp"
#include "sqlcascade/corpus.hpp"
#include "sqlcascade/ensemble.hpp"
#include "sqlcascade/features.hpp"
#include "sqlcascade/linear_models.hpp"
#include "sqlcascade/metrics.hpp"
#include "sqlcascade/synthetic.hpp"

namespace sqlcascade {

inline constexpr int kReportSchemaVersion = 1;

struct DatasetSpec {
  std::string path = "synthetic";  // a CSV path, or "synthetic" for the built-in generator
  CsvOptions csv;
  SynthOptions synthetic;

  bool is_synthetic() const noexcept { return path == "synthetic"; }
  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& doc);
};

LabeledCorpus load_dataset(const DatasetSpec& spec, CsvLoadReport* report = nullptr);

struct LatencySpec {
  std::size_t warmup = 1;       // untimed passes over the sample set
  std::size_t batch_size = 256;
  std::size_t repeats = 3;      // timed passes over the sample set
  std::size_t max_samples = 2048;

  void validate() const;
  nlohmann::json to_json() const;
  static LatencySpec from_json(const nlohmann::json& doc);
};

enum class MethodType { single, ensemble, cascade };

std::string to_string(MethodType t);
MethodType parse_method_type(std::string_view name);

/// One roster entry. Only the fields of the matching type are used.
struct MethodSpec {
  std::string name;
  MethodType type = MethodType::single;
  std::string group;  // defaults to the type name

  std::vector<FeatureFamily> features;  // single
  ClassifierKind classifier = ClassifierKind::passive_aggressive;
  double threshold = 0.0;
  TrainConfig train;  // single and ensemble members

  EnsembleSpec ensemble;
  CascadeConfig cascade;

  void validate() const;
  nlohmann::json to_json() const;
  static MethodSpec from_json(const nlohmann::json& doc);
};

struct ExperimentConfig {
  DatasetSpec dataset;
  SplitSpec split;
  std::size_t repetitions = 10;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::vector<double> fe_alphas{1.0, 0.98};
  double prior_attack = 0.033;
  std::size_t trigger_stream_size = 50000;
  bool measure_latency = true;
  LatencySpec latency;
  std::filesystem::path output_dir = "results";
  std::optional<std::filesystem::path> external_measurements;
  std::vector<MethodSpec> roster = default_roster();

  /// Six linear classifiers, Ensembles 1-3 and the cascade.
  static std::vector<MethodSpec> default_roster();

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// Per-sample wall time of `infer` over `samples`, cut into batches. Each
/// batch contributes one sample (batch time / batch size) per timed pass.
LatencyStats measure_latency(const std::function<void(std::span<const std::string>)>& infer,
                             std::span<const std::string> samples, const LatencySpec& spec);

struct CascadeEstimatePoint {
  double prior_attack = 0.0;
  double trigger_probability = 0.0;
  double latency_ms = 0.0;
  double speedup = 0.0;  // t2 / latency
};

struct CascadeEstimate {
  LatencyModelInputs inputs;
  CascadeEstimatePoint at_prior;
  std::vector<CascadeEstimatePoint> sweep;

  nlohmann::json to_json() const;
};

CascadeEstimate estimate_cascade(const LatencyModelInputs& inputs,
                                 std::span<const double> prior_sweep = {});

/// `size` payloads from `pool`, round(prior * size) of them attacks, drawn
/// with replacement and shuffled.
LabeledCorpus attack_stream(const LabeledCorpus& pool, std::size_t size, double prior,
                            std::uint64_t seed);

struct CascadeRunExtras {
  ConfusionCounts stage1;          // tuned stage-1 alone
  ConfusionCounts stage1_untuned;  // same family, w_pos = 1 and threshold 0
  double test_trigger_rate = 0.0;
  double stream_trigger_rate = 0.0;
  double stream_predicted_trigger = 0.0;
  std::size_t stream_size = 0;
  double t1_ms = 0.0;
  double t2_ms = 0.0;
  double measured_ms = 0.0;  // end-to-end batch latency on the test split
  std::optional<CascadeEstimate> estimate;
};

struct RunResult {
  std::size_t run = 0;
  std::uint64_t seed = 0;
  ConfusionCounts counts;
  ClassificationMetrics metrics;
  double train_ms = 0.0;
  double train_ms_per_sample = 0.0;
  double inference_ms = 0.0;
  LatencyStats latency;
  std::optional<CascadeRunExtras> cascade;
};

struct MeanMetrics {
  ClassificationMetrics metrics;
  double tp = 0.0, tn = 0.0, fp = 0.0, fn = 0.0;
  double train_ms_per_sample = 0.0;
  double inference_ms = 0.0;
};

struct MethodResult {
  MethodSpec spec;
  bool failed = false;
  std::string error;
  std::vector<RunResult> runs;
  MeanMetrics mean;
};

struct MachineInfo {
  std::string cpu_model;
  unsigned cores = 0;
  std::string compiler;
};

MachineInfo machine_info();

struct ExperimentReport {
  ExperimentConfig config;
  MachineInfo machine;
  std::string dataset_source;
  ClassCounts dataset_counts;
  std::size_t dataset_size = 0;
  std::vector<MethodResult> methods;
  std::vector<MethodMeasurement> external;

  bool any_failed() const noexcept;
  std::vector<MethodMeasurement> measurements() const;  // successful methods plus external
  nlohmann::json to_json() const;
  nlohmann::json fe_ranking_json() const;
  /// Accuracy, precision, recall, F1, counts, then timings; counts are rounded means.
  std::string markdown_table(std::string_view group = {}) const;
};

ExperimentReport run_experiment(const ExperimentConfig& config, const LabeledCorpus& corpus);
ExperimentReport run_experiment(const ExperimentConfig& config);

/// Writes report.json, fe_ranking.json and tables/<group>.md into `dir`.
void write_report(const ExperimentReport& report, const std::filesystem::path& dir);

nlohmann::json fe_ranking_json(std::span<const MethodMeasurement> context,
                               std::span<const double> alphas);

}  // namespace sqlcascade
