#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sqlcascade/corpus.hpp"
#include "sqlcascade/error.hpp"
#include "sqlcascade/features.hpp"
#include "sqlcascade/linear_models.hpp"

namespace sqlcascade {

struct Stage2Verdict {
  double score = 0.0;  // larger = more attack-like
  int label = 0;
};

/// Transport, protocol or availability failure of a stage-2 scorer.
class Stage2Error : public Error {
 public:
  using Error::Error;
};

/// Re-check model for stage-1 positives. Implementations are safe to call
/// from several threads at once.
class Stage2Scorer {
 public:
  virtual ~Stage2Scorer() = default;
  /// One verdict per payload, positionally aligned. Throws Stage2Error.
  virtual std::vector<Stage2Verdict> score_batch(std::span<const std::string> payloads) const = 0;
  virtual std::string model_id() const = 0;
};

/// Slow-but-strong in-process stand-in: logistic SGD over concatenated
/// character 1..3-gram TF-IDF.
class ReferenceStage2 final : public Stage2Scorer {
 public:
  static std::vector<FeatureFamily> default_families();
  static TrainConfig default_train_config();

  static std::shared_ptr<ReferenceStage2> fit(const LabeledCorpus& train,
                                              std::span<const FeatureFamily> families,
                                              const TrainConfig& config);
  static std::shared_ptr<ReferenceStage2> fit(const LabeledCorpus& train) {
    const auto families = default_families();
    return fit(train, families, default_train_config());
  }

  std::vector<Stage2Verdict> score_batch(std::span<const std::string> payloads) const override;
  std::string model_id() const override;

  const FeatureStack& features() const noexcept { return features_; }
  const Classifier& classifier() const noexcept { return model_; }

 private:
  FeatureStack features_;
  Classifier model_;
};

/// Deterministic rule plus a sleep of `latency_ms` per payload in the batch.
class FixedLatencyMock final : public Stage2Scorer {
 public:
  using Rule = std::function<Stage2Verdict(std::string_view)>;

  FixedLatencyMock(double latency_ms, Rule rule, std::string id = "fixed-latency-mock");

  /// Always answers `label`; label 1 echoes stage-1 (it only sees stage-1 positives).
  static Rule constant(int label);
  /// Keyword heuristic shared with the mock scoring service.
  static Rule keyword_rule();
  static Rule parse_rule(std::string_view name);

  std::vector<Stage2Verdict> score_batch(std::span<const std::string> payloads) const override;
  std::string model_id() const override { return id_; }
  double latency_ms() const noexcept { return latency_ms_; }

 private:
  double latency_ms_;
  Rule rule_;
  std::string id_;
};

struct RemoteOptions {
  std::string base_url;  // e.g. "http://127.0.0.1:8080"
  std::chrono::milliseconds timeout{2000};
  std::size_t max_in_flight = 4;
  std::size_t max_batch = 256;  // larger batches are split into chunks
};

/// Client for POST /v1/score.
class RemoteStage2 final : public Stage2Scorer {
 public:
  explicit RemoteStage2(RemoteOptions options);

  std::vector<Stage2Verdict> score_batch(std::span<const std::string> payloads) const override;
  std::string model_id() const override;

  /// Makes pending and future calls fail with Stage2Error("cancelled").
  void cancel() noexcept { cancelled_.store(true); }
  std::size_t peak_in_flight() const noexcept { return peak_in_flight_.load(); }

 private:
  std::vector<Stage2Verdict> score_chunk(std::span<const std::string> payloads) const;

  RemoteOptions options_;
  mutable std::counting_semaphore<1024> slots_;
  mutable std::atomic<std::size_t> in_flight_{0};
  mutable std::atomic<std::size_t> peak_in_flight_{0};
  mutable std::atomic<bool> cancelled_{false};
  mutable std::mutex id_mutex_;
  mutable std::string last_model_id_;
};

/// Wire helpers, exposed for protocol conformance tests.
nlohmann::json make_score_request(std::span<const std::string> payloads);
/// Validates shape and alignment; throws Stage2Error on any mismatch.
std::vector<Stage2Verdict> parse_score_response(const nlohmann::json& body, std::size_t expected,
                                                std::string* model_id = nullptr);

enum class Stage2Variant { in_process_reference, fixed_latency_mock, remote_service };

std::string to_string(Stage2Variant v);
Stage2Variant parse_stage2_variant(std::string_view name);

struct Stage2Handle {
  Stage2Variant variant = Stage2Variant::in_process_reference;
  std::string endpoint;              // remote only
  double injected_latency_ms = 0.0;  // mock only
  std::string mock_rule = "echo";    // mock only: echo | benign | keyword
  RemoteOptions remote;              // remote only; base_url mirrors endpoint

  void validate() const;
  nlohmann::json to_json() const;
  static Stage2Handle from_json(const nlohmann::json& doc);
};

/// Builds the scorer; the reference variant trains on `train`.
std::shared_ptr<Stage2Scorer> make_stage2(const Stage2Handle& handle, const LabeledCorpus& train);

}  // namespace sqlcascade
