#include "sqlcascade/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "sqlcascade/error.hpp"

namespace sqlcascade {

ConfusionCounts confusion(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) {
    throw Error("confusion: " + std::to_string(predictions.size()) + " predictions for " +
                std::to_string(truth.size()) + " labels");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predictions[i] == 1;
    const bool t = truth[i] == 1;
    if (p && t) {
      ++c.tp;
    } else if (!p && !t) {
      ++c.tn;
    } else if (p) {
      ++c.fp;
    } else {
      ++c.fn;
    }
  }
  return c;
}

namespace {

double ratio(std::size_t num, std::size_t den) noexcept {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ClassificationMetrics prf1(const ConfusionCounts& c) noexcept {
  ClassificationMetrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  m.fallout = ratio(c.fp, c.fp + c.tn);
  return m;
}

void MethodMeasurement::validate() const {
  if (!(f1 >= 0.0 && f1 <= 1.0)) throw Error("measurement '" + name + "': f1 outside [0,1]");
  if (!(inference_ms > 0.0) || !std::isfinite(inference_ms)) {
    throw Error("measurement '" + name + "': inference_ms must be positive");
  }
}

namespace {

double fastest(std::span<const MethodMeasurement> context) {
  if (context.empty()) throw Error("fe_score: empty comparison context");
  double best = context.front().inference_ms;
  for (const auto& m : context) {
    m.validate();
    best = std::min(best, m.inference_ms);
  }
  return best;
}

}  // namespace

double fe_score(const MethodMeasurement& m, double alpha,
                std::span<const MethodMeasurement> context) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("fe_score: alpha outside [0,1]");
  const double t_min = fastest(context);
  const bool member = std::any_of(context.begin(), context.end(), [&](const auto& c) {
    return c.name == m.name && c.f1 == m.f1 && c.inference_ms == m.inference_ms;
  });
  if (!member) throw Error("fe_score: '" + m.name + "' is not part of the comparison context");
  const double l = t_min / m.inference_ms;
  return alpha * m.f1 + (1.0 - alpha) * l;
}

std::vector<RankedMethod> rank_by_fe(std::span<const MethodMeasurement> context, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("rank_by_fe: alpha outside [0,1]");
  const double t_min = fastest(context);
  std::vector<RankedMethod> ranked;
  ranked.reserve(context.size());
  for (const auto& m : context) {
    const double l = t_min / m.inference_ms;
    ranked.push_back({m, l, alpha * m.f1 + (1.0 - alpha) * l});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedMethod& a, const RankedMethod& b) {
    if (a.fe != b.fe) return a.fe > b.fe;
    if (a.method.inference_ms != b.method.inference_ms) {
      return a.method.inference_ms < b.method.inference_ms;
    }
    return a.method.name < b.method.name;
  });
  return ranked;
}

nlohmann::json measurements_to_json(std::span<const MethodMeasurement> ms) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& m : ms) {
    nlohmann::json j = {{"name", m.name}, {"f1", m.f1}, {"inference_ms", m.inference_ms}};
    if (!m.group.empty()) j["group"] = m.group;
    arr.push_back(std::move(j));
  }
  return arr;
}

std::vector<MethodMeasurement> measurements_from_json(const nlohmann::json& doc) {
  const auto& arr = doc.is_object() && doc.contains("measurements") ? doc.at("measurements") : doc;
  if (!arr.is_array()) throw Error("measurements json: expected an array");
  std::vector<MethodMeasurement> out;
  try {
    for (const auto& j : arr) {
      MethodMeasurement m;
      m.name = j.at("name").get<std::string>();
      m.f1 = j.at("f1").get<double>();
      m.inference_ms = j.at("inference_ms").get<double>();
      m.group = j.value("group", std::string{});
      m.validate();
      out.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("measurements json: ") + e.what());
  }
  return out;
}

void LatencyModelInputs::validate() const {
  auto prob = [](double p, const char* what) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(std::string("latency model: ") + what + " outside [0,1]");
  };
  prob(fpr, "fpr");
  prob(recall, "recall");
  prob(prior_attack, "prior_attack");
  if (!(t1_ms >= 0.0) || !(t2_ms >= 0.0)) throw Error("latency model: latencies must be >= 0");
}

double effective_positive_rate(const LatencyModelInputs& in) {
  in.validate();
  return in.fpr * (1.0 - in.prior_attack) + in.recall * in.prior_attack;
}

double effective_latency(const LatencyModelInputs& in) {
  // stage 1 runs on every payload: p(D=1) + p(D=0) = 1
  return in.t1_ms + in.t2_ms * effective_positive_rate(in);
}

LatencyStats summarize_latency(std::vector<double> per_sample_ms) {
  LatencyStats s;
  s.samples = per_sample_ms.size();
  if (per_sample_ms.empty()) return s;
  std::sort(per_sample_ms.begin(), per_sample_ms.end());
  s.mean_ms = std::accumulate(per_sample_ms.begin(), per_sample_ms.end(), 0.0) /
              static_cast<double>(per_sample_ms.size());
  const std::size_t n = per_sample_ms.size();
  s.median_ms = n % 2 == 1 ? per_sample_ms[n / 2]
                           : 0.5 * (per_sample_ms[n / 2 - 1] + per_sample_ms[n / 2]);
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n)));
  s.p99_ms = per_sample_ms[std::max<std::size_t>(rank, 1) - 1];
  return s;
}

}  // namespace sqlcascade
