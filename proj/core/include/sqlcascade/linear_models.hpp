#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sqlcascade/features.hpp"

namespace sqlcascade {

enum class ClassifierKind {
  passive_aggressive,
  perceptron,
  sgd_hinge,
  sgd_log,
  multinomial_nb,
  nearest_centroid,
};

std::string to_string(ClassifierKind kind);
/// Accepts the canonical names ("pa", "perceptron", "sgd-hinge", "sgd-log",
/// "mnb", "centroid") and a few long aliases.
ClassifierKind parse_classifier_kind(std::string_view name);
bool is_online(ClassifierKind kind) noexcept;

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;

  double for_label(int label) const noexcept { return label == 1 ? positive : negative; }
  friend bool operator==(const ClassWeights&, const ClassWeights&) = default;
};

struct TrainConfig {
  int epochs = 5;
  double aggressiveness = 1.0;  // PA-I cap C
  double learning_rate = 0.1;   // Perceptron step, SGD initial step
  double l2 = 1e-4;             // SGD regularization strength
  double nb_smoothing = 1.0;    // additive smoothing for multinomial NB
  bool fit_bias = true;
  std::uint64_t shuffle_seed = 0;
  ClassWeights class_weights;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep the values of `base`.
  static TrainConfig from_json(const nlohmann::json& doc, const TrainConfig& base);
};

/// Affine scorer f(x) = w.x + b used by the online kinds.
struct LinearModel {
  ClassifierKind kind = ClassifierKind::passive_aggressive;
  std::vector<double> weights;
  double bias = 0.0;
  bool fit_bias = true;
  int epochs_trained = 0;
  ClassWeights class_weights;

  LinearModel() = default;
  LinearModel(ClassifierKind k, std::size_t dim, bool with_bias = true)
      : kind(k), weights(dim, 0.0), fit_bias(with_bias) {}

  std::size_t dim() const noexcept { return weights.size(); }
  double score(SparseRow x) const;
};

struct NbModel {
  std::array<double, 2> log_prior{};
  std::array<std::vector<double>, 2> log_likelihood;  // [class][term]
  double smoothing = 1.0;

  std::size_t dim() const noexcept { return log_likelihood[0].size(); }
  /// Joint log-probability log P(c) + sum_t x_t log P(t|c).
  double joint_log_likelihood(SparseRow x, int label) const;
  double score(SparseRow x) const;
};

struct CentroidModel {
  std::array<std::vector<double>, 2> centroids;  // [class][feature]
  std::array<double, 2> squared_norms{};

  std::size_t dim() const noexcept { return centroids[0].size(); }
  double distance(SparseRow x, int label) const;
  double score(SparseRow x) const;
};

/// Any fitted stage-1 / ensemble member. Larger scores are more attack-like.
class Classifier {
 public:
  using Model = std::variant<LinearModel, NbModel, CentroidModel>;

  Classifier() = default;
  Classifier(ClassifierKind kind, Model model) : kind_(kind), model_(std::move(model)) {}

  ClassifierKind kind() const noexcept { return kind_; }
  std::size_t dim() const noexcept;
  const Model& model() const noexcept { return model_; }
  Model& model() noexcept { return model_; }

  nlohmann::json to_json(double threshold = 0.0, const std::string& pipeline_id = {}) const;
  static Classifier from_json(const nlohmann::json& doc, double* threshold = nullptr,
                              std::string* pipeline_id = nullptr);

 private:
  ClassifierKind kind_ = ClassifierKind::passive_aggressive;
  Model model_;
};

/// PA-I update on one example, y in {-1, +1}.
/// tau = min(C * sample_weight, loss / (||x||^2 [+1 with bias])). Zero-norm
/// inputs are skipped. Returns the applied tau (0 when passive).
double pa_step(LinearModel& model, SparseRow x, int y, double aggressiveness,
               double sample_weight = 1.0);

/// Hinge loss max(0, 1 - y f(x)).
double hinge_loss(const LinearModel& model, SparseRow x, int y);

LinearModel fit_linear(ClassifierKind kind, const SparseMatrix& data, std::span<const int> labels,
                       const TrainConfig& config);
NbModel fit_multinomial_nb(const SparseMatrix& data, std::span<const int> labels,
                           const TrainConfig& config);
CentroidModel fit_nearest_centroid(const SparseMatrix& data, std::span<const int> labels);

Classifier fit(ClassifierKind kind, const SparseMatrix& data, std::span<const int> labels,
               const TrainConfig& config);

double decision_score(const Classifier& model, SparseRow x);
inline double decision_score(const Classifier& model, const SparseVector& x) {
  return decision_score(model, x.view());
}

/// 1 iff decision_score >= threshold.
int predict(const Classifier& model, SparseRow x, double threshold = 0.0);
inline int predict(const Classifier& model, const SparseVector& x, double threshold = 0.0) {
  return predict(model, x.view(), threshold);
}

std::vector<double> decision_scores(const Classifier& model, const SparseMatrix& data);

}  // namespace sqlcascade
