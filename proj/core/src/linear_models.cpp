#include "sqlcascade/linear_models.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "sqlcascade/error.hpp"
#include "sqlcascade/rng.hpp"

namespace sqlcascade {

std::string to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::passive_aggressive:
      return "pa";
    case ClassifierKind::perceptron:
      return "perceptron";
    case ClassifierKind::sgd_hinge:
      return "sgd-hinge";
    case ClassifierKind::sgd_log:
      return "sgd-log";
    case ClassifierKind::multinomial_nb:
      return "mnb";
    case ClassifierKind::nearest_centroid:
      return "centroid";
  }
  return "?";
}

ClassifierKind parse_classifier_kind(std::string_view name) {
  if (name == "pa" || name == "passive-aggressive" || name == "passive_aggressive") {
    return ClassifierKind::passive_aggressive;
  }
  if (name == "perceptron") return ClassifierKind::perceptron;
  if (name == "sgd-hinge" || name == "linear-svc" || name == "sgd") return ClassifierKind::sgd_hinge;
  if (name == "sgd-log" || name == "logistic") return ClassifierKind::sgd_log;
  if (name == "mnb" || name == "multinomial-nb" || name == "nb") {
    return ClassifierKind::multinomial_nb;
  }
  if (name == "centroid" || name == "nearest-centroid") return ClassifierKind::nearest_centroid;
  throw ModelError("unknown classifier kind '" + std::string(name) + "'");
}

bool is_online(ClassifierKind kind) noexcept {
  return kind != ClassifierKind::multinomial_nb && kind != ClassifierKind::nearest_centroid;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (!(aggressiveness > 0.0)) throw ConfigError("train config: aggressiveness C must be > 0");
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
  if (!(l2 >= 0.0)) throw ConfigError("train config: l2 must be >= 0");
  if (!(nb_smoothing > 0.0)) throw ConfigError("train config: nb_smoothing must be > 0");
  if (!(class_weights.negative > 0.0) || !(class_weights.positive > 0.0)) {
    throw ConfigError("train config: class weights must be positive");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"aggressiveness", aggressiveness},
          {"learning_rate", learning_rate},
          {"l2", l2},
          {"nb_smoothing", nb_smoothing},
          {"fit_bias", fit_bias},
          {"shuffle_seed", shuffle_seed},
          {"w_neg", class_weights.negative},
          {"w_pos", class_weights.positive}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc, const TrainConfig& base) {
  TrainConfig c = base;
  try {
    c.epochs = doc.value("epochs", c.epochs);
    c.aggressiveness = doc.value("aggressiveness", c.aggressiveness);
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.l2 = doc.value("l2", c.l2);
    c.nb_smoothing = doc.value("nb_smoothing", c.nb_smoothing);
    c.fit_bias = doc.value("fit_bias", c.fit_bias);
    c.shuffle_seed = doc.value("shuffle_seed", c.shuffle_seed);
    c.class_weights.negative = doc.value("w_neg", c.class_weights.negative);
    c.class_weights.positive = doc.value("w_pos", c.class_weights.positive);
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

double LinearModel::score(SparseRow x) const {
  if (x.dim != weights.size()) {
    throw ModelError("linear model: input dimension " + std::to_string(x.dim) +
                     " does not match " + std::to_string(weights.size()));
  }
  return x.dot(weights) + bias;
}

double NbModel::joint_log_likelihood(SparseRow x, int label) const {
  const auto& ll = log_likelihood[static_cast<std::size_t>(label)];
  if (x.dim != ll.size()) throw ModelError("naive bayes: input dimension mismatch");
  return log_prior[static_cast<std::size_t>(label)] + x.dot(ll);
}

double NbModel::score(SparseRow x) const {
  return joint_log_likelihood(x, 1) - joint_log_likelihood(x, 0);
}

double CentroidModel::distance(SparseRow x, int label) const {
  const auto& mu = centroids[static_cast<std::size_t>(label)];
  if (x.dim != mu.size()) throw ModelError("nearest centroid: input dimension mismatch");
  const double sq = x.squared_norm() - 2.0 * x.dot(mu) + squared_norms[static_cast<std::size_t>(label)];
  return std::sqrt(std::max(sq, 0.0));
}

double CentroidModel::score(SparseRow x) const { return distance(x, 0) - distance(x, 1); }

std::size_t Classifier::dim() const noexcept {
  return std::visit([](const auto& m) { return m.dim(); }, model_);
}

double hinge_loss(const LinearModel& model, SparseRow x, int y) {
  return std::max(0.0, 1.0 - static_cast<double>(y) * model.score(x));
}

double pa_step(LinearModel& model, SparseRow x, int y, double aggressiveness,
               double sample_weight) {
  const double loss = hinge_loss(model, x, y);
  if (loss == 0.0) return 0.0;
  const double sq = x.squared_norm();
  if (sq == 0.0) return 0.0;
  const double denom = sq + (model.fit_bias ? 1.0 : 0.0);
  const double tau = std::min(aggressiveness * sample_weight, loss / denom);
  const double step = tau * static_cast<double>(y);
  for (std::size_t k = 0; k < x.nnz(); ++k) model.weights[x.indices[k]] += step * x.values[k];
  if (model.fit_bias) model.bias += step;
  return tau;
}

namespace {

void check_training_data(const SparseMatrix& data, std::span<const int> labels) {
  if (data.rows() == 0) throw ModelError("fit: training data is empty");
  if (data.rows() != labels.size()) {
    throw ModelError("fit: " + std::to_string(data.rows()) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw ModelError("fit: labels must be 0 or 1");
  }
}

void require_both_classes(std::span<const int> labels, ClassifierKind kind) {
  const bool has_pos = std::find(labels.begin(), labels.end(), 1) != labels.end();
  const bool has_neg = std::find(labels.begin(), labels.end(), 0) != labels.end();
  if (!has_pos || !has_neg) {
    throw ModelError("fit: " + to_string(kind) + " needs both classes in the training data");
  }
}

// Weight vector kept as scale * v so L2 shrinkage costs O(1) per step.
class ScaledWeights {
 public:
  explicit ScaledWeights(std::size_t dim) : v_(dim, 0.0) {}

  double dot(SparseRow x) const { return scale_ * x.dot(v_); }
  void shrink(double factor) {
    scale_ *= factor;
    if (scale_ < 1e-9) materialize();
  }
  void add(SparseRow x, double step) {
    const double s = step / scale_;
    for (std::size_t k = 0; k < x.nnz(); ++k) v_[x.indices[k]] += s * x.values[k];
  }
  std::vector<double> take() {
    materialize();
    return std::move(v_);
  }

 private:
  void materialize() {
    for (double& w : v_) w *= scale_;
    scale_ = 1.0;
  }

  std::vector<double> v_;
  double scale_ = 1.0;
};

LinearModel fit_sgd(ClassifierKind kind, const SparseMatrix& data, std::span<const int> labels,
                    const TrainConfig& config) {
  LinearModel model(kind, data.cols(), config.fit_bias);
  ScaledWeights w(data.cols());
  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double eta0 = config.learning_rate;
  const double lambda = config.l2;
  double bias = 0.0;
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    deterministic_shuffle(std::span<std::size_t>(order), rng);
    for (auto i : order) {
      ++t;
      const auto x = data.row(i);
      const int y = labels[i] == 1 ? 1 : -1;
      const double eta = eta0 / (1.0 + eta0 * lambda * static_cast<double>(t));
      const double margin = static_cast<double>(y) * (w.dot(x) + bias);
      double dloss = 0.0;  // d loss / d f
      if (kind == ClassifierKind::sgd_hinge) {
        if (margin < 1.0) dloss = -y;
      } else {
        // -y * sigmoid(-margin), written to stay finite for large |margin|
        dloss = margin > 0 ? -y * std::exp(-margin) / (1.0 + std::exp(-margin))
                           : -y / (1.0 + std::exp(margin));
      }
      if (lambda > 0.0) w.shrink(std::max(1.0 - eta * lambda, 1e-12));
      if (dloss != 0.0) {
        const double step = -eta * config.class_weights.for_label(labels[i]) * dloss;
        w.add(x, step);
        if (config.fit_bias) bias += step;
      }
    }
  }
  model.weights = w.take();
  model.bias = bias;
  model.epochs_trained = config.epochs;
  model.class_weights = config.class_weights;
  return model;
}

}  // namespace

LinearModel fit_linear(ClassifierKind kind, const SparseMatrix& data, std::span<const int> labels,
                       const TrainConfig& config) {
  config.validate();
  check_training_data(data, labels);
  if (!is_online(kind)) throw ModelError("fit_linear: " + to_string(kind) + " is not linear-online");
  if (kind == ClassifierKind::sgd_hinge || kind == ClassifierKind::sgd_log) {
    return fit_sgd(kind, data, labels, config);
  }

  LinearModel model(kind, data.cols(), config.fit_bias);
  std::mt19937_64 rng(config.shuffle_seed);
  std::vector<std::size_t> order(data.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    deterministic_shuffle(std::span<std::size_t>(order), rng);
    for (auto i : order) {
      const auto x = data.row(i);
      const int y = labels[i] == 1 ? 1 : -1;
      const double sw = config.class_weights.for_label(labels[i]);
      if (kind == ClassifierKind::passive_aggressive) {
        pa_step(model, x, y, config.aggressiveness, sw);
      } else if (static_cast<double>(y) * model.score(x) <= 0.0) {
        const double step = config.learning_rate * sw * static_cast<double>(y);
        for (std::size_t k = 0; k < x.nnz(); ++k) model.weights[x.indices[k]] += step * x.values[k];
        if (model.fit_bias) model.bias += step;
      }
    }
  }
  model.epochs_trained = config.epochs;
  model.class_weights = config.class_weights;
  return model;
}

NbModel fit_multinomial_nb(const SparseMatrix& data, std::span<const int> labels,
                           const TrainConfig& config) {
  config.validate();
  check_training_data(data, labels);
  require_both_classes(labels, ClassifierKind::multinomial_nb);
  const std::size_t dim = data.cols();
  std::array<std::vector<double>, 2> feature_count{std::vector<double>(dim, 0.0),
                                                   std::vector<double>(dim, 0.0)};
  std::array<double, 2> class_mass{0.0, 0.0};
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto x = data.row(r);
    auto& fc = feature_count[static_cast<std::size_t>(labels[r])];
    for (std::size_t k = 0; k < x.nnz(); ++k) {
      if (x.values[k] < 0.0) throw ModelError("naive bayes: features must be non-negative");
      fc[x.indices[k]] += x.values[k];
    }
    class_mass[static_cast<std::size_t>(labels[r])] += config.class_weights.for_label(labels[r]);
  }
  NbModel model;
  model.smoothing = config.nb_smoothing;
  const double total_mass = class_mass[0] + class_mass[1];
  for (std::size_t c = 0; c < 2; ++c) {
    model.log_prior[c] = std::log(class_mass[c] / total_mass);
    double total = 0.0;
    for (double v : feature_count[c]) total += v;
    const double denom = std::log(total + config.nb_smoothing * static_cast<double>(dim));
    model.log_likelihood[c].resize(dim);
    for (std::size_t t = 0; t < dim; ++t) {
      model.log_likelihood[c][t] = std::log(feature_count[c][t] + config.nb_smoothing) - denom;
    }
  }
  return model;
}

CentroidModel fit_nearest_centroid(const SparseMatrix& data, std::span<const int> labels) {
  check_training_data(data, labels);
  require_both_classes(labels, ClassifierKind::nearest_centroid);
  const std::size_t dim = data.cols();
  CentroidModel model;
  std::array<std::size_t, 2> n{0, 0};
  model.centroids = {std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  for (std::size_t r = 0; r < data.rows(); ++r) {
    const auto x = data.row(r);
    const auto c = static_cast<std::size_t>(labels[r]);
    ++n[c];
    for (std::size_t k = 0; k < x.nnz(); ++k) model.centroids[c][x.indices[k]] += x.values[k];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    double sq = 0.0;
    for (double& v : model.centroids[c]) {
      v /= static_cast<double>(n[c]);
      sq += v * v;
    }
    model.squared_norms[c] = sq;
  }
  return model;
}

Classifier fit(ClassifierKind kind, const SparseMatrix& data, std::span<const int> labels,
               const TrainConfig& config) {
  switch (kind) {
    case ClassifierKind::multinomial_nb:
      return {kind, fit_multinomial_nb(data, labels, config)};
    case ClassifierKind::nearest_centroid:
      return {kind, fit_nearest_centroid(data, labels)};
    default:
      return {kind, fit_linear(kind, data, labels, config)};
  }
}

double decision_score(const Classifier& model, SparseRow x) {
  return std::visit([&](const auto& m) { return m.score(x); }, model.model());
}

int predict(const Classifier& model, SparseRow x, double threshold) {
  return decision_score(model, x) >= threshold ? 1 : 0;
}

std::vector<double> decision_scores(const Classifier& model, const SparseMatrix& data) {
  std::vector<double> scores(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r) scores[r] = decision_score(model, data.row(r));
  return scores;
}

namespace {

constexpr int kModelFormatVersion = 1;

void require_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw ModelError(std::string("model json: non-finite ") + what);
  }
}

}  // namespace

nlohmann::json Classifier::to_json(double threshold, const std::string& pipeline_id) const {
  nlohmann::json doc;
  doc["format"] = "sqlcascade.model";
  doc["version"] = kModelFormatVersion;
  doc["kind"] = to_string(kind_);
  doc["threshold"] = threshold;
  doc["pipeline_id"] = pipeline_id;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          doc["weights"] = m.weights;
          doc["bias"] = m.bias;
          doc["fit_bias"] = m.fit_bias;
          doc["epochs_trained"] = m.epochs_trained;
          doc["class_weights"] = {m.class_weights.negative, m.class_weights.positive};
        } else if constexpr (std::is_same_v<T, NbModel>) {
          doc["log_prior"] = m.log_prior;
          doc["log_likelihood"] = m.log_likelihood;
          doc["smoothing"] = m.smoothing;
        } else {
          doc["centroids"] = m.centroids;
        }
      },
      model_);
  return doc;
}

Classifier Classifier::from_json(const nlohmann::json& doc, double* threshold,
                                 std::string* pipeline_id) {
  try {
    if (doc.at("format").get<std::string>() != "sqlcascade.model") {
      throw ModelError("model json: wrong format tag");
    }
    if (doc.at("version").get<int>() != kModelFormatVersion) {
      throw ModelError("model json: unsupported version");
    }
    const auto kind = parse_classifier_kind(doc.at("kind").get<std::string>());
    if (threshold) *threshold = doc.at("threshold").get<double>();
    if (pipeline_id) *pipeline_id = doc.at("pipeline_id").get<std::string>();
    switch (kind) {
      case ClassifierKind::multinomial_nb: {
        NbModel m;
        m.log_prior = doc.at("log_prior").get<std::array<double, 2>>();
        m.log_likelihood = doc.at("log_likelihood").get<std::array<std::vector<double>, 2>>();
        m.smoothing = doc.at("smoothing").get<double>();
        if (m.log_likelihood[0].size() != m.log_likelihood[1].size()) {
          throw ModelError("model json: class likelihood lengths differ");
        }
        return {kind, std::move(m)};
      }
      case ClassifierKind::nearest_centroid: {
        CentroidModel m;
        m.centroids = doc.at("centroids").get<std::array<std::vector<double>, 2>>();
        if (m.centroids[0].size() != m.centroids[1].size()) {
          throw ModelError("model json: centroid lengths differ");
        }
        for (std::size_t c = 0; c < 2; ++c) {
          double sq = 0.0;
          for (double v : m.centroids[c]) sq += v * v;
          m.squared_norms[c] = sq;
        }
        return {kind, std::move(m)};
      }
      default: {
        LinearModel m;
        m.kind = kind;
        m.weights = doc.at("weights").get<std::vector<double>>();
        m.bias = doc.at("bias").get<double>();
        m.fit_bias = doc.at("fit_bias").get<bool>();
        m.epochs_trained = doc.at("epochs_trained").get<int>();
        const auto cw = doc.at("class_weights").get<std::array<double, 2>>();
        m.class_weights = {cw[0], cw[1]};
        require_finite(m.weights, "weights");
        if (!std::isfinite(m.bias)) throw ModelError("model json: non-finite bias");
        return {kind, std::move(m)};
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("model json: ") + e.what());
  }
}

}  // namespace sqlcascade
