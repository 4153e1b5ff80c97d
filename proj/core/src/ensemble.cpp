#include "sqlcascade/ensemble.hpp"

#include <nlohmann/json.hpp>

#include "sqlcascade/error.hpp"

namespace sqlcascade {

std::string to_string(EnsembleStrategy s) {
  switch (s) {
    case EnsembleStrategy::by_classifier:
      return "by_classifier";
    case EnsembleStrategy::by_feature:
      return "by_feature";
    case EnsembleStrategy::concat:
      return "concat";
  }
  return "?";
}

EnsembleStrategy parse_ensemble_strategy(std::string_view name) {
  if (name == "by_classifier" || name == "1") return EnsembleStrategy::by_classifier;
  if (name == "by_feature" || name == "2") return EnsembleStrategy::by_feature;
  if (name == "concat" || name == "3") return EnsembleStrategy::concat;
  throw ConfigError("unknown ensemble strategy '" + std::string(name) + "'");
}

void EnsembleSpec::validate() const {
  if (classifier_kinds.empty()) throw ConfigError("ensemble: no classifier kinds");
  if (feature_families.empty()) throw ConfigError("ensemble: no feature families");
  if (tie_break != 0 && tie_break != 1) throw ConfigError("ensemble: tie_break must be 0 or 1");
}

std::string EnsembleSpec::name() const {
  std::string out = "ensemble-" + to_string(strategy) + (flat ? "-flat" : "") + "[";
  for (std::size_t i = 0; i < classifier_kinds.size(); ++i) {
    out += (i ? "," : "") + to_string(classifier_kinds[i]);
  }
  out += "|";
  for (std::size_t i = 0; i < feature_families.size(); ++i) {
    out += (i ? "," : "") + feature_families[i].name();
  }
  return out + "]";
}

nlohmann::json EnsembleSpec::to_json() const {
  std::vector<std::string> kinds;
  for (auto k : classifier_kinds) kinds.push_back(to_string(k));
  std::vector<std::string> families;
  for (const auto& f : feature_families) families.push_back(f.name());
  return {{"strategy", to_string(strategy)},
          {"classifiers", kinds},
          {"features", families},
          {"tie_break", tie_break},
          {"flat", flat}};
}

EnsembleSpec EnsembleSpec::from_json(const nlohmann::json& doc) {
  EnsembleSpec spec;
  try {
    spec.strategy = parse_ensemble_strategy(doc.at("strategy").get<std::string>());
    for (const auto& k : doc.at("classifiers")) {
      spec.classifier_kinds.push_back(parse_classifier_kind(k.get<std::string>()));
    }
    for (const auto& f : doc.at("features")) {
      spec.feature_families.push_back(FeatureFamily::parse(f.get<std::string>()));
    }
    spec.tie_break = doc.value("tie_break", 1);
    spec.flat = doc.value("flat", false);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("ensemble spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

int majority_vote(std::span<const int> votes, int tie_break) {
  if (votes.empty()) throw ModelError("majority_vote: no votes");
  std::size_t ones = 0;
  for (int v : votes) ones += v == 1 ? 1 : 0;
  const std::size_t zeros = votes.size() - ones;
  if (ones > zeros) return 1;
  if (zeros > ones) return 0;
  return tie_break;
}

int combine_votes(const EnsembleSpec& spec, const std::vector<std::vector<int>>& grid) {
  const std::size_t kinds = spec.classifier_kinds.size();
  const std::size_t families =
      spec.strategy == EnsembleStrategy::concat ? 1 : spec.feature_families.size();
  if (grid.size() != kinds) throw ModelError("ensemble: vote grid is missing classifier rows");
  for (const auto& row : grid) {
    if (row.size() != families) throw ModelError("ensemble: vote grid is missing cells");
  }

  if (spec.flat || spec.strategy == EnsembleStrategy::concat) {
    std::vector<int> all;
    for (const auto& row : grid) all.insert(all.end(), row.begin(), row.end());
    return majority_vote(all, spec.tie_break);
  }

  std::vector<int> decisions;
  if (spec.strategy == EnsembleStrategy::by_classifier) {
    for (const auto& row : grid) decisions.push_back(majority_vote(row, spec.tie_break));
  } else {
    for (std::size_t f = 0; f < families; ++f) {
      std::vector<int> column;
      for (const auto& row : grid) column.push_back(row[f]);
      decisions.push_back(majority_vote(column, spec.tie_break));
    }
  }
  return majority_vote(decisions, spec.tie_break);
}

EnsembleModel EnsembleModel::fit(const EnsembleSpec& spec, const LabeledCorpus& train,
                                 const TrainConfig& config) {
  spec.validate();
  EnsembleModel model;
  model.spec_ = spec;
  const auto& payloads = train.payloads();
  const auto& labels = train.labels();

  if (spec.strategy == EnsembleStrategy::concat) {
    model.stack_ = FeatureStack::fit(payloads, spec.feature_families);
    const auto data = model.stack_.transform(payloads);
    for (auto kind : spec.classifier_kinds) {
      model.members_.push_back({sqlcascade::fit(kind, data, labels, config)});
    }
    return model;
  }

  std::vector<SparseMatrix> matrices;
  for (const auto& family : spec.feature_families) {
    model.pipelines_.push_back(FeaturePipeline::fit(payloads, family));
    matrices.push_back(model.pipelines_.back().transform(payloads));
  }
  for (auto kind : spec.classifier_kinds) {
    std::vector<Classifier> row;
    for (const auto& m : matrices) row.push_back(sqlcascade::fit(kind, m, labels, config));
    model.members_.push_back(std::move(row));
  }
  return model;
}

std::vector<std::vector<int>> EnsembleModel::votes(std::string_view payload) const {
  std::vector<std::vector<int>> grid(members_.size());
  if (spec_.strategy == EnsembleStrategy::concat) {
    const auto x = stack_.transform(payload);
    for (std::size_t k = 0; k < members_.size(); ++k) grid[k].push_back(sqlcascade::predict(members_[k][0], x));
    return grid;
  }
  std::vector<SparseVector> features;
  features.reserve(pipelines_.size());
  for (const auto& p : pipelines_) features.push_back(p.transform(payload));
  for (std::size_t k = 0; k < members_.size(); ++k) {
    for (std::size_t f = 0; f < features.size(); ++f) {
      grid[k].push_back(sqlcascade::predict(members_[k][f], features[f]));
    }
  }
  return grid;
}

int EnsembleModel::predict(std::string_view payload) const {
  return combine_votes(spec_, votes(payload));
}

}  // namespace sqlcascade
