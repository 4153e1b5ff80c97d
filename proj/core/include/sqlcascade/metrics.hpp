#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace sqlcascade {

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const noexcept { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Throws Error on length mismatch.
ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> truth);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fallout = 0.0;
};

/// Standard ratios; any 0/0 is reported as 0.
ClassificationMetrics prf1(const ConfusionCounts& c) noexcept;

/// One (F1, per-sample latency) point for FE ranking.
struct MethodMeasurement {
  std::string name;
  double f1 = 0.0;
  double inference_ms = 0.0;
  std::string group;  // free-form category, e.g. "single", "ensemble", "transformer"

  void validate() const;
};

/// FE = alpha*F1 + (1-alpha)*l with l = fastest latency in `context` / m.inference_ms.
/// Throws Error when the context is empty or does not contain `m`.
double fe_score(const MethodMeasurement& m, double alpha,
                std::span<const MethodMeasurement> context);

struct RankedMethod {
  MethodMeasurement method;
  double speed_term = 0.0;  // l
  double fe = 0.0;
};

/// Descending FE; ties by lower latency, then name.
std::vector<RankedMethod> rank_by_fe(std::span<const MethodMeasurement> context, double alpha);

nlohmann::json measurements_to_json(std::span<const MethodMeasurement> ms);
std::vector<MethodMeasurement> measurements_from_json(const nlohmann::json& doc);

struct LatencyModelInputs {
  double fpr = 0.0;
  double recall = 0.0;
  double prior_attack = 0.0;
  double t1_ms = 0.0;
  double t2_ms = 0.0;

  void validate() const;
};

/// p(D=1) = FPR*(1-p(C=1)) + Recall*p(C=1).
double effective_positive_rate(const LatencyModelInputs& in);

/// T = T1*(p(D=1)+p(D=0)) + T2*p(D=1), i.e. T1 + T2*p(D=1).
double effective_latency(const LatencyModelInputs& in);

struct LatencyStats {
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p99_ms = 0.0;
  std::size_t samples = 0;
};

/// Summary of per-sample latencies (nearest-rank p99).
LatencyStats summarize_latency(std::vector<double> per_sample_ms);

}  // namespace sqlcascade
