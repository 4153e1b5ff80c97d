#include <benchmark/benchmark.h>

#include <memory>
#include <string>
#include <vector>

#include "sqlcascade/cascade.hpp"
#include "sqlcascade/ensemble.hpp"
#include "sqlcascade/features.hpp"
#include "sqlcascade/linear_models.hpp"
#include "sqlcascade/synthetic.hpp"

using namespace sqlcascade;

namespace {

const LabeledCorpus& corpus() {
  static const LabeledCorpus c = generate_sqli_corpus({2000, 3000, 7, 0.0});
  return c;
}

struct Scoring {
  FeatureStack stack;
  Classifier model;
};

const Scoring& pa_char1() {
  static const Scoring s = [] {
    const auto families = parse_families("tfidf-char1");
    auto stack = FeatureStack::fit(corpus().payloads(), families);
    const auto data = stack.transform(corpus().payloads());
    auto model = fit(ClassifierKind::passive_aggressive, data, corpus().labels(), TrainConfig{});
    return Scoring{std::move(stack), std::move(model)};
  }();
  return s;
}

void BM_Vectorize(benchmark::State& state, const char* family) {
  const auto families = parse_families(family);
  const auto stack = FeatureStack::fit(corpus().payloads(), families);
  const auto& payloads = corpus().payloads();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(stack.transform(payloads[i++ % payloads.size()]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK_CAPTURE(BM_Vectorize, tfidf_char1, "tfidf-char1");
BENCHMARK_CAPTURE(BM_Vectorize, tfidf_char3, "tfidf-char3");
BENCHMARK_CAPTURE(BM_Vectorize, tfidf_word, "tfidf-word");

void BM_ScorePrevectorized(benchmark::State& state) {
  const auto& s = pa_char1();
  const auto data = s.stack.transform(corpus().payloads());
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(decision_score(s.model, data.row(i++ % data.rows())));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ScorePrevectorized);

void BM_Stage1EndToEnd(benchmark::State& state) {
  const auto& s = pa_char1();
  const auto& payloads = corpus().payloads();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(predict(s.model, s.stack.transform(payloads[i++ % payloads.size()]), -0.3));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_Stage1EndToEnd);

void BM_EnsemblePredict(benchmark::State& state) {
  EnsembleSpec spec;
  spec.classifier_kinds = {ClassifierKind::multinomial_nb, ClassifierKind::sgd_hinge,
                           ClassifierKind::passive_aggressive};
  spec.feature_families = parse_families("raw-char2,tf-char2,boc,bow,tfidf-char3");
  const auto model = EnsembleModel::fit(spec, corpus(), TrainConfig{});
  const auto& payloads = corpus().payloads();
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict(payloads[i++ % payloads.size()]));
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnsemblePredict);

// range(0): injected stage-2 latency in microseconds
void BM_CascadeClassifyBatch(benchmark::State& state) {
  CascadeConfig config;
  config.stage2.variant = Stage2Variant::fixed_latency_mock;
  config.stage2.mock_rule = "keyword";
  config.stage2.injected_latency_ms = static_cast<double>(state.range(0)) / 1000.0;
  const auto model = fit_cascade(corpus(), config);
  const std::vector<std::string> batch(corpus().payloads().begin(), corpus().payloads().begin() + 256);
  double rate = 0.0;
  for (auto _ : state) {
    const auto traces = model.classify_batch(batch);
    rate = trigger_rate(traces);
    benchmark::DoNotOptimize(traces.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
  state.counters["trigger_rate"] = rate;
}
BENCHMARK(BM_CascadeClassifyBatch)->Arg(0)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
