#include "sqlcascade/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace sqlcascade {

std::vector<FeatureFamily> ReferenceStage2::default_families() {
  return {{Weighting::tfidf, Termizer::chars(1)},
          {Weighting::tfidf, Termizer::chars(2)},
          {Weighting::tfidf, Termizer::chars(3)}};
}

TrainConfig ReferenceStage2::default_train_config() {
  TrainConfig config;
  config.epochs = 10;
  config.learning_rate = 0.5;
  config.l2 = 1e-6;
  config.shuffle_seed = 0x5eed2;
  return config;
}

std::shared_ptr<ReferenceStage2> ReferenceStage2::fit(const LabeledCorpus& train,
                                                      std::span<const FeatureFamily> families,
                                                      const TrainConfig& config) {
  auto scorer = std::make_shared<ReferenceStage2>();
  scorer->features_ = FeatureStack::fit(train.payloads(), families);
  const auto data = scorer->features_.transform(train.payloads());
  scorer->model_ = sqlcascade::fit(ClassifierKind::sgd_log, data, train.labels(), config);
  return scorer;
}

std::vector<Stage2Verdict> ReferenceStage2::score_batch(
    std::span<const std::string> payloads) const {
  std::vector<Stage2Verdict> out;
  out.reserve(payloads.size());
  for (const auto& p : payloads) {
    const double f = decision_score(model_, features_.transform(p));
    out.push_back({1.0 / (1.0 + std::exp(-f)), f >= 0.0 ? 1 : 0});
  }
  return out;
}

std::string ReferenceStage2::model_id() const { return "reference-sgd-log[" + features_.name() + "]"; }

FixedLatencyMock::FixedLatencyMock(double latency_ms, Rule rule, std::string id)
    : latency_ms_(latency_ms), rule_(std::move(rule)), id_(std::move(id)) {
  if (!(latency_ms_ >= 0.0)) throw Stage2Error("mock stage-2: latency must be >= 0");
  if (!rule_) throw Stage2Error("mock stage-2: missing rule");
}

FixedLatencyMock::Rule FixedLatencyMock::constant(int label) {
  return [label](std::string_view) { return Stage2Verdict{label == 1 ? 1.0 : 0.0, label}; };
}

FixedLatencyMock::Rule FixedLatencyMock::keyword_rule() {
  return [](std::string_view payload) {
    static const std::vector<std::string> kMarkers = {
        "' or ",   "\" or ",       "or 1=1",     "union select", "union all select",
        "--",      "/*",           "sleep(",     "benchmark(",
        "waitfor delay", "; drop ", "xp_cmdshell", "' and ",      "information_schema",
    };
    std::string lowered(payload);
    for (auto& c : lowered) {
      if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    for (const auto& m : kMarkers) {
      if (lowered.find(m) != std::string::npos) return Stage2Verdict{0.99, 1};
    }
    return Stage2Verdict{0.01, 0};
  };
}

FixedLatencyMock::Rule FixedLatencyMock::parse_rule(std::string_view name) {
  if (name == "echo") return constant(1);
  if (name == "benign") return constant(0);
  if (name == "keyword") return keyword_rule();
  throw ConfigError("unknown mock stage-2 rule '" + std::string(name) + "'");
}

std::vector<Stage2Verdict> FixedLatencyMock::score_batch(
    std::span<const std::string> payloads) const {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Stage2Verdict> out;
  out.reserve(payloads.size());
  for (const auto& p : payloads) out.push_back(rule_(p));
  if (latency_ms_ > 0.0 && !payloads.empty()) {
    const auto budget = std::chrono::duration<double, std::milli>(
        latency_ms_ * static_cast<double>(payloads.size()));
    std::this_thread::sleep_until(
        start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(budget));
  }
  return out;
}

nlohmann::json make_score_request(std::span<const std::string> payloads) {
  return {{"payloads", std::vector<std::string>(payloads.begin(), payloads.end())}};
}

std::vector<Stage2Verdict> parse_score_response(const nlohmann::json& body, std::size_t expected,
                                                std::string* model_id) {
  if (!body.is_object()) throw Stage2Error("stage-2 response: body is not a JSON object");
  const auto scores = body.find("scores");
  const auto labels = body.find("labels");
  const auto id = body.find("model_id");
  if (scores == body.end() || !scores->is_array()) {
    throw Stage2Error("stage-2 response: missing 'scores' array");
  }
  if (labels == body.end() || !labels->is_array()) {
    throw Stage2Error("stage-2 response: missing 'labels' array");
  }
  if (id == body.end() || !id->is_string()) {
    throw Stage2Error("stage-2 response: missing 'model_id' string");
  }
  if (scores->size() != expected || labels->size() != expected) {
    throw Stage2Error("stage-2 response: expected " + std::to_string(expected) +
                      " results, got " + std::to_string(scores->size()) + " scores and " +
                      std::to_string(labels->size()) + " labels");
  }
  std::vector<Stage2Verdict> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    const auto& s = (*scores)[i];
    const auto& l = (*labels)[i];
    if (!s.is_number() || !std::isfinite(s.get<double>())) {
      throw Stage2Error("stage-2 response: score " + std::to_string(i) + " is not a finite number");
    }
    if (!l.is_number_integer() || (l.get<int>() != 0 && l.get<int>() != 1)) {
      throw Stage2Error("stage-2 response: label " + std::to_string(i) + " is not 0 or 1");
    }
    out[i] = {s.get<double>(), l.get<int>()};
  }
  if (model_id) *model_id = id->get<std::string>();
  return out;
}

RemoteStage2::RemoteStage2(RemoteOptions options)
    : options_(std::move(options)),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.max_in_flight, 1, 1024))) {
  if (options_.base_url.empty()) throw Stage2Error("remote stage-2: empty base URL");
  if (options_.max_batch == 0) throw Stage2Error("remote stage-2: max_batch must be positive");
}

std::string RemoteStage2::model_id() const {
  std::lock_guard lock(id_mutex_);
  return last_model_id_.empty() ? "remote:" + options_.base_url : last_model_id_;
}

std::vector<Stage2Verdict> RemoteStage2::score_batch(std::span<const std::string> payloads) const {
  std::vector<Stage2Verdict> out;
  out.reserve(payloads.size());
  for (std::size_t start = 0; start < payloads.size(); start += options_.max_batch) {
    const auto len = std::min(options_.max_batch, payloads.size() - start);
    auto part = score_chunk(payloads.subspan(start, len));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

std::vector<Stage2Verdict> RemoteStage2::score_chunk(std::span<const std::string> payloads) const {
  if (cancelled_.load()) throw Stage2Error("remote stage-2: cancelled");
  if (payloads.empty()) return {};

  slots_.acquire();
  struct SlotGuard {
    const RemoteStage2& self;
    ~SlotGuard() {
      self.in_flight_.fetch_sub(1);
      self.slots_.release();
    }
  } guard{*this};
  const auto now = in_flight_.fetch_add(1) + 1;
  auto peak = peak_in_flight_.load();
  while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
  }

  httplib::Client client(options_.base_url);
  const auto timeout = options_.timeout;
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const auto body = make_score_request(payloads).dump();
  auto res = client.Post("/v1/score", body, "application/json");
  if (cancelled_.load()) throw Stage2Error("remote stage-2: cancelled");
  if (!res) {
    throw Stage2Error("remote stage-2: request to " + options_.base_url +
                      " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Stage2Error("remote stage-2: HTTP " + std::to_string(res->status) + " from " +
                      options_.base_url);
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Stage2Error(std::string("stage-2 response: malformed JSON: ") + e.what());
  }
  std::string id;
  auto verdicts = parse_score_response(parsed, payloads.size(), &id);
  {
    std::lock_guard lock(id_mutex_);
    last_model_id_ = std::move(id);
  }
  return verdicts;
}

std::string to_string(Stage2Variant v) {
  switch (v) {
    case Stage2Variant::in_process_reference:
      return "reference";
    case Stage2Variant::fixed_latency_mock:
      return "mock";
    case Stage2Variant::remote_service:
      return "remote";
  }
  return "?";
}

Stage2Variant parse_stage2_variant(std::string_view name) {
  if (name == "reference" || name == "in_process_reference") {
    return Stage2Variant::in_process_reference;
  }
  if (name == "mock" || name == "fixed_latency_mock") return Stage2Variant::fixed_latency_mock;
  if (name == "remote" || name == "remote_service") return Stage2Variant::remote_service;
  throw ConfigError("unknown stage-2 variant '" + std::string(name) + "'");
}

void Stage2Handle::validate() const {
  const bool remote_variant = variant == Stage2Variant::remote_service;
  if (remote_variant && endpoint.empty()) throw ConfigError("stage-2: remote variant needs an endpoint");
  if (!remote_variant && !endpoint.empty()) {
    throw ConfigError("stage-2: endpoint is only valid for the remote variant");
  }
  if (!(injected_latency_ms >= 0.0)) throw ConfigError("stage-2: injected latency must be >= 0");
  if (variant == Stage2Variant::fixed_latency_mock) FixedLatencyMock::parse_rule(mock_rule);
}

nlohmann::json Stage2Handle::to_json() const {
  nlohmann::json doc = {{"variant", to_string(variant)}};
  if (variant == Stage2Variant::remote_service) {
    doc["endpoint"] = endpoint;
    doc["timeout_ms"] = remote.timeout.count();
    doc["max_in_flight"] = remote.max_in_flight;
    doc["max_batch"] = remote.max_batch;
  }
  if (variant == Stage2Variant::fixed_latency_mock) {
    doc["injected_latency_ms"] = injected_latency_ms;
    doc["mock_rule"] = mock_rule;
  }
  return doc;
}

Stage2Handle Stage2Handle::from_json(const nlohmann::json& doc) {
  Stage2Handle h;
  try {
    h.variant = parse_stage2_variant(doc.at("variant").get<std::string>());
    h.endpoint = doc.value("endpoint", std::string{});
    h.injected_latency_ms = doc.value("injected_latency_ms", 0.0);
    h.mock_rule = doc.value("mock_rule", std::string{"echo"});
    h.remote.base_url = h.endpoint;
    h.remote.timeout = std::chrono::milliseconds(doc.value("timeout_ms", 2000));
    h.remote.max_in_flight = doc.value("max_in_flight", std::size_t{4});
    h.remote.max_batch = doc.value("max_batch", std::size_t{256});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stage-2 handle: ") + e.what());
  }
  h.validate();
  return h;
}

std::shared_ptr<Stage2Scorer> make_stage2(const Stage2Handle& handle, const LabeledCorpus& train) {
  handle.validate();
  switch (handle.variant) {
    case Stage2Variant::in_process_reference:
      return ReferenceStage2::fit(train);
    case Stage2Variant::fixed_latency_mock:
      return std::make_shared<FixedLatencyMock>(handle.injected_latency_ms,
                                                FixedLatencyMock::parse_rule(handle.mock_rule),
                                                "mock-" + handle.mock_rule);
    case Stage2Variant::remote_service: {
      auto options = handle.remote;
      options.base_url = handle.endpoint;
      return std::make_shared<RemoteStage2>(options);
    }
  }
  throw ConfigError("stage-2: unhandled variant");
}

}  // namespace sqlcascade
