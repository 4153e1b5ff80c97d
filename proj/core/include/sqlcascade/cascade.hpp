#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sqlcascade/corpus.hpp"
#include "sqlcascade/features.hpp"
#include "sqlcascade/linear_models.hpp"
#include "sqlcascade/stage2.hpp"

namespace sqlcascade {

/// What to do with a stage-1 positive when stage-2 cannot answer.
enum class FailPolicy {
  fail_closed,  // treat as attack
  fail_open,    // treat as benign
  raise,        // throw CascadeStage2Failure
};

std::string to_string(FailPolicy p);
FailPolicy parse_fail_policy(std::string_view name);

struct CascadeConfig {
  std::vector<FeatureFamily> stage1_features{{Weighting::tfidf, Termizer::chars(1)}};
  ClassifierKind stage1_kind = ClassifierKind::passive_aggressive;
  TrainConfig stage1_train = default_stage1_train();
  double threshold = -0.3;
  FailPolicy fail_policy = FailPolicy::fail_closed;
  Stage2Handle stage2;

  /// Positive samples weighted 1000x, everything else at defaults.
  static TrainConfig default_stage1_train();

  void validate() const;
  nlohmann::json to_json() const;
  static CascadeConfig from_json(const nlohmann::json& doc);
};

struct CascadeTrace {
  double stage1_score = 0.0;
  int stage1_decision = 0;
  bool stage2_invoked = false;
  std::optional<int> stage2_decision;
  std::optional<double> stage2_score;
  std::string stage2_error;  // set when stage-2 failed and the fail policy decided
  int final_label = 0;
  double stage1_ms = 0.0;
  double stage2_ms = 0.0;  // batch time amortized over invoked payloads
};

/// Stage-2 failure under FailPolicy::raise; carries the stage-1 verdicts so
/// the caller can still decide.
class CascadeStage2Failure : public Stage2Error {
 public:
  CascadeStage2Failure(const std::string& what, std::vector<CascadeTrace> partial)
      : Stage2Error(what), partial_(std::move(partial)) {}
  const std::vector<CascadeTrace>& stage1_traces() const noexcept { return partial_; }

 private:
  std::vector<CascadeTrace> partial_;
};

class CascadeModel {
 public:
  CascadeModel(FeatureStack features, Classifier stage1, double threshold,
               std::shared_ptr<const Stage2Scorer> stage2, FailPolicy policy);

  const FeatureStack& stage1_features() const noexcept { return features_; }
  const Classifier& stage1() const noexcept { return stage1_; }
  double threshold() const noexcept { return threshold_; }
  const Stage2Scorer& stage2() const noexcept { return *stage2_; }
  FailPolicy fail_policy() const noexcept { return policy_; }

  double stage1_score(std::string_view payload) const;
  int stage1_decision(std::string_view payload) const;

  CascadeTrace classify(std::string_view payload) const;
  /// Stage-1 over every payload, then one stage-2 batch for the positives.
  std::vector<CascadeTrace> classify_batch(std::span<const std::string> payloads) const;

  std::optional<double> measured_t1_ms;
  std::optional<double> measured_t2_ms;

 private:
  void resolve_failure(std::vector<CascadeTrace>& traces, const std::vector<std::size_t>& invoked,
                       const std::string& error) const;

  FeatureStack features_;
  Classifier stage1_;
  double threshold_;
  std::shared_ptr<const Stage2Scorer> stage2_;
  FailPolicy policy_;
};

/// Fits stage-1 on `train`; the reference stage-2 trains on the same split.
CascadeModel fit_cascade(const LabeledCorpus& train, const CascadeConfig& config);
/// Same, with a caller-supplied stage-2.
CascadeModel fit_cascade(const LabeledCorpus& train, const CascadeConfig& config,
                         std::shared_ptr<const Stage2Scorer> stage2);

/// Fraction of traces whose stage-1 decision was positive, an estimate of p(D=1).
double trigger_rate(std::span<const CascadeTrace> traces);

}  // namespace sqlcascade
