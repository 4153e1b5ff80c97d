#include "sqlcascade/cascade.hpp"

#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>

namespace sqlcascade {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

std::string to_string(FailPolicy p) {
  switch (p) {
    case FailPolicy::fail_closed:
      return "fail_closed";
    case FailPolicy::fail_open:
      return "fail_open";
    case FailPolicy::raise:
      return "raise";
  }
  return "?";
}

FailPolicy parse_fail_policy(std::string_view name) {
  if (name == "fail_closed" || name == "closed") return FailPolicy::fail_closed;
  if (name == "fail_open" || name == "open") return FailPolicy::fail_open;
  if (name == "raise") return FailPolicy::raise;
  throw ConfigError("unknown fail policy '" + std::string(name) + "'");
}

TrainConfig CascadeConfig::default_stage1_train() {
  TrainConfig config;
  config.class_weights = {1.0, 1000.0};
  return config;
}

void CascadeConfig::validate() const {
  if (stage1_features.empty()) throw ConfigError("cascade: no stage-1 feature families");
  if (!std::isfinite(threshold)) throw ConfigError("cascade: threshold must be finite");
  stage1_train.validate();
  stage2.validate();
}

nlohmann::json CascadeConfig::to_json() const {
  std::vector<std::string> families;
  for (const auto& f : stage1_features) families.push_back(f.name());
  return {{"stage1_features", families},
          {"stage1_kind", to_string(stage1_kind)},
          {"stage1_train", stage1_train.to_json()},
          {"threshold", threshold},
          {"fail_policy", to_string(fail_policy)},
          {"stage2", stage2.to_json()}};
}

CascadeConfig CascadeConfig::from_json(const nlohmann::json& doc) {
  CascadeConfig c;
  try {
    if (doc.contains("stage1_features")) {
      c.stage1_features.clear();
      for (const auto& f : doc.at("stage1_features")) {
        c.stage1_features.push_back(FeatureFamily::parse(f.get<std::string>()));
      }
    }
    c.stage1_kind = parse_classifier_kind(doc.value("stage1_kind", std::string{"pa"}));
    if (doc.contains("stage1_train")) {
      c.stage1_train = TrainConfig::from_json(doc.at("stage1_train"), c.stage1_train);
    }
    c.threshold = doc.value("threshold", c.threshold);
    c.fail_policy = parse_fail_policy(doc.value("fail_policy", std::string{"fail_closed"}));
    if (doc.contains("stage2")) c.stage2 = Stage2Handle::from_json(doc.at("stage2"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cascade config: ") + e.what());
  }
  c.validate();
  return c;
}

CascadeModel::CascadeModel(FeatureStack features, Classifier stage1, double threshold,
                           std::shared_ptr<const Stage2Scorer> stage2, FailPolicy policy)
    : features_(std::move(features)),
      stage1_(std::move(stage1)),
      threshold_(threshold),
      stage2_(std::move(stage2)),
      policy_(policy) {
  if (!std::isfinite(threshold_)) throw ConfigError("cascade: threshold must be finite");
  if (!stage2_) throw ConfigError("cascade: missing stage-2 scorer");
  if (features_.dim() != stage1_.dim()) {
    throw ModelError("cascade: stage-1 model and feature pipeline dimensions differ");
  }
}

double CascadeModel::stage1_score(std::string_view payload) const {
  return decision_score(stage1_, features_.transform(payload));
}

int CascadeModel::stage1_decision(std::string_view payload) const {
  return stage1_score(payload) >= threshold_ ? 1 : 0;
}

void CascadeModel::resolve_failure(std::vector<CascadeTrace>& traces,
                                   const std::vector<std::size_t>& invoked,
                                   const std::string& error) const {
  if (policy_ == FailPolicy::raise) {
    throw CascadeStage2Failure("cascade: stage-2 failed: " + error, traces);
  }
  const int verdict = policy_ == FailPolicy::fail_closed ? 1 : 0;
  for (auto i : invoked) {
    traces[i].stage2_error = error;
    traces[i].final_label = verdict;
  }
}

std::vector<CascadeTrace> CascadeModel::classify_batch(
    std::span<const std::string> payloads) const {
  std::vector<CascadeTrace> traces(payloads.size());
  std::vector<std::size_t> invoked;
  std::vector<std::string> suspicious;
  for (std::size_t i = 0; i < payloads.size(); ++i) {
    const auto start = Clock::now();
    auto& t = traces[i];
    t.stage1_score = stage1_score(payloads[i]);
    t.stage1_decision = t.stage1_score >= threshold_ ? 1 : 0;
    t.stage1_ms = elapsed_ms(start);
    if (t.stage1_decision == 1) {
      t.stage2_invoked = true;
      invoked.push_back(i);
      suspicious.push_back(payloads[i]);
    }
  }
  if (invoked.empty()) return traces;

  const auto start = Clock::now();
  std::vector<Stage2Verdict> verdicts;
  try {
    verdicts = stage2_->score_batch(suspicious);
    if (verdicts.size() != invoked.size()) {
      throw Stage2Error("stage-2 returned " + std::to_string(verdicts.size()) + " verdicts for " +
                        std::to_string(invoked.size()) + " payloads");
    }
  } catch (const Stage2Error& e) {
    resolve_failure(traces, invoked, e.what());
    return traces;
  }
  const double per_payload = elapsed_ms(start) / static_cast<double>(invoked.size());
  for (std::size_t k = 0; k < invoked.size(); ++k) {
    auto& t = traces[invoked[k]];
    t.stage2_decision = verdicts[k].label;
    t.stage2_score = verdicts[k].score;
    t.stage2_ms = per_payload;
    t.final_label = verdicts[k].label;
  }
  return traces;
}

CascadeTrace CascadeModel::classify(std::string_view payload) const {
  const std::string owned(payload);
  return classify_batch(std::span<const std::string>(&owned, 1)).front();
}

CascadeModel fit_cascade(const LabeledCorpus& train, const CascadeConfig& config,
                         std::shared_ptr<const Stage2Scorer> stage2) {
  config.validate();
  auto features = FeatureStack::fit(train.payloads(), config.stage1_features);
  const auto data = features.transform(train.payloads());
  auto stage1 = fit(config.stage1_kind, data, train.labels(), config.stage1_train);
  return CascadeModel(std::move(features), std::move(stage1), config.threshold, std::move(stage2),
                      config.fail_policy);
}

CascadeModel fit_cascade(const LabeledCorpus& train, const CascadeConfig& config) {
  config.validate();
  return fit_cascade(train, config, make_stage2(config.stage2, train));
}

double trigger_rate(std::span<const CascadeTrace> traces) {
  if (traces.empty()) throw Error("trigger_rate: no traces");
  std::size_t fired = 0;
  for (const auto& t : traces) fired += t.stage1_decision == 1 ? 1 : 0;
  return static_cast<double>(fired) / static_cast<double>(traces.size());
}

}  // namespace sqlcascade
