#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "sqlcascade/experiment.hpp"
#include "sqlcascade/synthetic.hpp"

using namespace sqlcascade;
using namespace std::chrono_literals;
using Strings = std::vector<std::string>;

#ifndef SQLCASCADE_FIXTURE_DIR
#define SQLCASCADE_FIXTURE_DIR "tests/fixtures"
#endif

namespace {

MethodSpec single(const std::string& name, ClassifierKind kind, const char* families = "tfidf-char1") {
  MethodSpec m;
  m.name = name;
  m.type = MethodType::single;
  m.group = "single";
  m.features = parse_families(families);
  m.classifier = kind;
  return m;
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.dataset.path = std::filesystem::path(SQLCASCADE_FIXTURE_DIR) / "tiny.csv";
  cfg.repetitions = 1;
  cfg.workers = 2;
  cfg.measure_latency = false;
  cfg.trigger_stream_size = 1000;
  cfg.roster = {single("PA", ClassifierKind::passive_aggressive),
                single("PA again", ClassifierKind::passive_aggressive),
                single("NB", ClassifierKind::multinomial_nb, "boc")};
  return cfg;
}

const MethodResult& method(const ExperimentReport& r, const std::string& name) {
  for (const auto& m : r.methods) {
    if (m.spec.name == name) return m;
  }
  FAIL("no method " << name);
  return r.methods.front();
}

}  // namespace

TEST_SUITE("experiment") {
  TEST_CASE("one repetition on the fixture gives one run per method") {
    const auto cfg = tiny_config();
    const auto report = run_experiment(cfg);
    CHECK(report.dataset_size == 20);
    CHECK_FALSE(report.any_failed());
    REQUIRE(report.methods.size() == 3);
    for (const auto& m : report.methods) {
      CHECK(m.runs.size() == 1);
      CHECK(m.runs[0].counts.total() == 4);
    }
  }

  TEST_CASE("identical roster entries give identical means") {
    const auto report = run_experiment(tiny_config());
    const auto& a = method(report, "PA").mean;
    const auto& b = method(report, "PA again").mean;
    CHECK(a.metrics.f1 == b.metrics.f1);
    CHECK(a.metrics.accuracy == b.metrics.accuracy);
    CHECK(a.tp == b.tp);
    CHECK(a.fp == b.fp);
  }

  TEST_CASE("reruns reproduce every count") {
    auto cfg = tiny_config();
    cfg.dataset.path = "synthetic";
    cfg.dataset.synthetic = {200, 300, 91, 0.0};
    cfg.repetitions = 3;
    const auto first = run_experiment(cfg);
    cfg.workers = 1;
    const auto second = run_experiment(cfg);
    REQUIRE(first.methods.size() == second.methods.size());
    for (std::size_t i = 0; i < first.methods.size(); ++i) {
      REQUIRE(first.methods[i].runs.size() == 3);
      std::set<std::uint64_t> seeds;
      for (std::size_t r = 0; r < 3; ++r) {
        CHECK(first.methods[i].runs[r].counts == second.methods[i].runs[r].counts);
        seeds.insert(first.methods[i].runs[r].seed);
      }
      CHECK(seeds.size() == 3);
    }
  }

  TEST_CASE("a failing method is isolated and marked") {
    auto cfg = tiny_config();
    MethodSpec broken;
    broken.name = "cascade-without-service";
    broken.type = MethodType::cascade;
    broken.cascade.fail_policy = FailPolicy::raise;
    broken.cascade.threshold = -1e6;  // every payload goes to stage-2
    broken.cascade.stage2.variant = Stage2Variant::remote_service;
    broken.cascade.stage2.endpoint = "http://127.0.0.1:1";
    broken.cascade.stage2.remote.timeout = 200ms;
    cfg.roster.push_back(broken);
    const auto report = run_experiment(cfg);
    CHECK(report.any_failed());
    CHECK(method(report, "cascade-without-service").failed);
    CHECK_FALSE(method(report, "cascade-without-service").error.empty());
    CHECK_FALSE(method(report, "PA").failed);

    const auto doc = report.to_json();
    std::map<std::string, std::string> status;
    for (const auto& m : doc.at("methods")) status[m.at("name")] = m.at("status");
    CHECK(status["cascade-without-service"] == "failed");
    CHECK(status["PA"] == "ok");
    for (const auto& m : report.measurements()) CHECK(m.name != "cascade-without-service");
  }

  TEST_CASE("cascade runs record stage-1 baselines and the trigger stream") {
    ExperimentConfig cfg;
    cfg.dataset.synthetic = {400, 700, 92, 0.0};
    cfg.repetitions = 1;
    cfg.trigger_stream_size = 5000;
    cfg.latency.repeats = 1;
    cfg.latency.max_samples = 128;
    MethodSpec cascade;
    cascade.name = "Proposed";
    cascade.type = MethodType::cascade;
    cascade.cascade.stage2.variant = Stage2Variant::fixed_latency_mock;
    cascade.cascade.stage2.mock_rule = "keyword";
    cfg.roster = {cascade};
    const auto report = run_experiment(cfg);
    const auto& run = method(report, "Proposed").runs.at(0);
    REQUIRE(run.cascade.has_value());
    const auto& x = *run.cascade;
    CHECK(x.stream_size == 5000);
    CHECK(run.counts.fp <= x.stage1.fp);
    CHECK(x.stage1.fn <= x.stage1_untuned.fn);
    CHECK(x.stream_trigger_rate >= 0.0);
    CHECK(std::abs(x.stream_trigger_rate - x.stream_predicted_trigger) < 0.05);
    REQUIRE(x.estimate.has_value());
    CHECK(x.t1_ms > 0.0);
    CHECK(run.inference_ms == doctest::Approx(x.estimate->at_prior.latency_ms));
  }

  TEST_CASE("attack streams hold the exact attack count") {
    const auto pool = generate_sqli_corpus({100, 200, 93, 0.0});
    const std::set<std::string> known(pool.payloads().begin(), pool.payloads().end());
    for (double prior : {0.0, 0.033, 0.5, 1.0}) {
      const auto s = attack_stream(pool, 10000, prior, 5);
      CHECK(s.size() == 10000);
      CHECK(class_counts(s).positives == static_cast<std::size_t>(std::llround(prior * 10000)));
      for (std::size_t i = 0; i < 200; ++i) CHECK(known.count(s.payload(i)) == 1);
    }
    CHECK(attack_stream(pool, 1000, 0.1, 5).payloads() == attack_stream(pool, 1000, 0.1, 5).payloads());
  }

  TEST_CASE("per-sample latency of the 2 ms mock") {
    const FixedLatencyMock mock(2.0, FixedLatencyMock::constant(1));
    const Strings samples(100, "' OR 1=1 --");
    LatencySpec spec;
    spec.warmup = 0;
    spec.batch_size = 100;
    spec.repeats = 2;
    const auto stats = measure_latency([&](std::span<const std::string> b) { mock.score_batch(b); }, samples, spec);
    CHECK(stats.samples == 2);
    CHECK(std::abs(stats.mean_ms - 2.0) <= 0.5);
  }

  TEST_CASE("doubling the batch keeps per-sample latency within 2x") {
    const auto corpus = generate_sqli_corpus({300, 500, 94, 0.0});
    const auto pipe = FeaturePipeline::fit(corpus.payloads(), FeatureFamily::parse("tfidf-char1"));
    const auto clf = fit(ClassifierKind::passive_aggressive, pipe.transform(corpus.payloads()), corpus.labels(),
                         TrainConfig{});
    const auto infer = [&](std::span<const std::string> batch) {
      volatile int sink = 0;
      for (const auto& p : batch) sink = sink + predict(clf, pipe.transform(p));
    };
    LatencySpec spec;
    spec.repeats = 5;
    spec.max_samples = 512;
    spec.batch_size = 64;
    const auto small = measure_latency(infer, corpus.payloads(), spec);
    spec.batch_size = 128;
    const auto large = measure_latency(infer, corpus.payloads(), spec);
    CHECK(large.mean_ms <= 2.0 * small.mean_ms);
    CHECK(small.mean_ms <= 2.0 * large.mean_ms);
  }

  TEST_CASE("warm-up passes absorb first-call cost") {
    // The first call pays a one-off 30 ms setup, like a lazily built cache.
    const auto make = [] {
      return [done = std::make_shared<bool>(false)](std::span<const std::string>) {
        if (!*done) {
          std::this_thread::sleep_for(30ms);
          *done = true;
        }
      };
    };
    const Strings samples(32, "SELECT 1");
    LatencySpec spec;
    spec.batch_size = 8;
    spec.repeats = 2;
    spec.warmup = 0;
    const auto cold = measure_latency(make(), samples, spec);
    spec.warmup = 10;
    const auto warm = measure_latency(make(), samples, spec);
    CHECK(warm.mean_ms <= cold.mean_ms);
    CHECK_THROWS(measure_latency(make(), Strings{}, spec));
  }

  TEST_CASE("cascade estimate") {
    const LatencyModelInputs in{0.0157, 0.9973, 0.033, 0.000314, 2.047714};
    const std::vector<double> priors{0.0, 0.01, 0.033, 0.1, 0.5, 1.0};
    const auto e = estimate_cascade(in, priors);
    CHECK(e.at_prior.prior_attack == 0.033);
    CHECK(std::abs(e.at_prior.latency_ms - 0.0988) <= 1e-4);
    CHECK(e.at_prior.speedup == doctest::Approx(in.t2_ms / e.at_prior.latency_ms));
    REQUIRE(e.sweep.size() == priors.size());
    for (std::size_t i = 1; i < e.sweep.size(); ++i) CHECK(e.sweep[i].latency_ms > e.sweep[i - 1].latency_ms);
    CHECK(e.sweep.front().trigger_probability == doctest::Approx(0.0157));
    CHECK(e.sweep.back().trigger_probability == doctest::Approx(0.9973));

    const auto quiet = estimate_cascade({0.0, 0.9, 0.0, 0.4, 3.0});
    CHECK(quiet.at_prior.latency_ms == 0.4);
    const auto doc = e.to_json();
    CHECK(doc.contains("trigger_probability"));
    CHECK(doc.contains("effective_latency_ms"));
    CHECK(doc.at("sweep").size() == priors.size());
  }

  TEST_CASE("experiment config round-trips and validates") {
    const ExperimentConfig cfg;
    CHECK(cfg.repetitions == 10);
    CHECK(cfg.roster.size() == 10);
    const auto back = ExperimentConfig::from_json(nlohmann::json::parse(cfg.to_json().dump()));
    CHECK(back.to_json() == cfg.to_json());

    auto bad = cfg;
    bad.repetitions = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.roster.clear();
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.fe_alphas = {1.5};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS(MethodSpec::from_json(nlohmann::json{{"type", "single"}}));
  }

  TEST_CASE("config files resolve paths next to themselves") {
    const auto dir = std::filesystem::temp_directory_path() / "sqlcascade-config-test";
    std::filesystem::create_directories(dir);
    std::filesystem::copy_file(std::filesystem::path(SQLCASCADE_FIXTURE_DIR) / "tiny.csv", dir / "tiny.csv",
                               std::filesystem::copy_options::overwrite_existing);
    std::ofstream(dir / "config.json") << R"({"dataset": {"path": "tiny.csv"}, "repetitions": 1,
      "roster": [{"type": "single", "features": ["tfidf-char1"], "classifier": "pa"}]})";
    const auto cfg = ExperimentConfig::load(dir / "config.json");
    CHECK(cfg.dataset.path == (dir / "tiny.csv").string());
    CHECK(cfg.roster.at(0).name == "pa/tfidf-char1");
    CHECK(load_dataset(cfg.dataset).size() == 20);
  }

  TEST_CASE("reports are written with tables in column order") {
    auto cfg = tiny_config();
    cfg.measure_latency = true;
    cfg.latency.repeats = 1;
    const auto report = run_experiment(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "sqlcascade-report-test";
    std::filesystem::remove_all(dir);
    write_report(report, dir);
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "fe_ranking.json"));
    const auto table = report.markdown_table("single");
    CHECK(table.rfind("| Method | Accuracy | Precision | Recall | F1 | TP | TN | FP | FN | Training Time (ms) | "
                      "Inference Time (ms) |",
                      0) == 0);
    CHECK(table.find("| PA |") != std::string::npos);

    const auto ranking = report.fe_ranking_json();
    CHECK(ranking.at("format") == "sqlcascade.fe_ranking");
    CHECK(ranking.at("rankings").size() == 2);
    CHECK(ranking.at("context").size() == 3);
    std::ifstream in(dir / "report.json");
    const auto doc = nlohmann::json::parse(in);
    CHECK(doc.at("format") == "sqlcascade.report");
    CHECK(doc.at("schema_version") == kReportSchemaVersion);
  }
}
