#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sqlcascade/corpus.hpp"
#include "sqlcascade/features.hpp"
#include "sqlcascade/linear_models.hpp"

namespace sqlcascade {

enum class EnsembleStrategy {
  by_classifier,  // one vote per classifier kind, each from MV over feature families
  by_feature,     // one vote per feature family, each from MV over classifier kinds
  concat,         // families concatenated into one vector, MV over classifier kinds
};

std::string to_string(EnsembleStrategy s);
EnsembleStrategy parse_ensemble_strategy(std::string_view name);

struct EnsembleSpec {
  EnsembleStrategy strategy = EnsembleStrategy::by_classifier;
  std::vector<ClassifierKind> classifier_kinds;
  std::vector<FeatureFamily> feature_families;
  int tie_break = 1;
  bool flat = false;  // single MV over every cell instead of the two-level vote

  void validate() const;
  std::string name() const;

  nlohmann::json to_json() const;
  static EnsembleSpec from_json(const nlohmann::json& doc);
};

/// Label with strictly more votes; an exact tie returns `tie_break`.
int majority_vote(std::span<const int> votes, int tie_break = 1);

/// Reduces a vote grid indexed [kind][family] (for concat: [kind][0]).
/// Throws ModelError when the grid shape does not match the spec.
int combine_votes(const EnsembleSpec& spec, const std::vector<std::vector<int>>& grid);

class EnsembleModel {
 public:
  static EnsembleModel fit(const EnsembleSpec& spec, const LabeledCorpus& train,
                           const TrainConfig& config);

  const EnsembleSpec& spec() const noexcept { return spec_; }

  std::vector<std::vector<int>> votes(std::string_view payload) const;
  int predict(std::string_view payload) const;

 private:
  EnsembleSpec spec_;
  std::vector<FeaturePipeline> pipelines_;  // one per family (unused by concat)
  FeatureStack stack_;                      // concat only
  std::vector<std::vector<Classifier>> members_;
};

inline int ensemble_predict(const EnsembleModel& model, std::string_view payload) {
  return model.predict(payload);
}

}  // namespace sqlcascade
