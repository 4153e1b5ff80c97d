#include <doctest.h>

#include <nlohmann/json.hpp>

#include "sqlcascade/ensemble.hpp"
#include "sqlcascade/synthetic.hpp"
#include "support/properties.hpp"

using namespace sqlcascade;
using Grid = std::vector<std::vector<int>>;

namespace {

EnsembleSpec spec_of(EnsembleStrategy strategy, std::size_t kinds, std::size_t families) {
  EnsembleSpec spec;
  spec.strategy = strategy;
  const ClassifierKind pool[] = {ClassifierKind::multinomial_nb, ClassifierKind::sgd_hinge,
                                 ClassifierKind::passive_aggressive};
  for (std::size_t k = 0; k < kinds; ++k) spec.classifier_kinds.push_back(pool[k % 3]);
  const auto names = parse_families("raw-char2,tf-char2,boc,bow,tfidf-char3");
  for (std::size_t f = 0; f < families; ++f) spec.feature_families.push_back(names[f % names.size()]);
  return spec;
}

}  // namespace

TEST_SUITE("ensemble") {
  TEST_CASE("majority vote examples") {
    const std::vector<int> two_of_three{1, 1, 0};
    CHECK(majority_vote(two_of_three) == 1);
    const std::vector<int> tie{1, 0};
    CHECK(majority_vote(tie, 1) == 1);
    CHECK(majority_vote(tie, 0) == 0);
    const std::vector<int> none{0, 0, 0};
    CHECK(majority_vote(none) == 0);
    CHECK_THROWS_AS(majority_vote(std::vector<int>{}), ModelError);
  }

  TEST_CASE("majority vote agrees with counting") {
    const auto r = testing::check_majority_vote(51, 1000);
    CHECK_MESSAGE(r.ok, r.detail);
  }

  TEST_CASE("two-level vote traced by hand") {
    // Kind A votes (1,1,0) over three families, kind B votes (0,0,0).
    const Grid grid{{1, 1, 0}, {0, 0, 0}};
    auto spec = spec_of(EnsembleStrategy::by_classifier, 2, 3);
    // Per kind: A -> 1, B -> 0; the 1-1 tie goes to attack.
    CHECK(combine_votes(spec, grid) == 1);
    spec.tie_break = 0;
    CHECK(combine_votes(spec, grid) == 0);

    auto by_feature = spec_of(EnsembleStrategy::by_feature, 2, 3);
    // Per family: (1,0) -> 1, (1,0) -> 1, (0,0) -> 0; two of three.
    CHECK(combine_votes(by_feature, grid) == 1);

    auto flat = spec_of(EnsembleStrategy::by_classifier, 2, 3);
    flat.flat = true;
    // Two attack votes out of six.
    CHECK(combine_votes(flat, grid) == 0);
  }

  TEST_CASE("unanimous grids are never overturned") {
    for (auto strategy : {EnsembleStrategy::by_classifier, EnsembleStrategy::by_feature,
                          EnsembleStrategy::concat}) {
      for (std::size_t kinds = 1; kinds <= 3; ++kinds) {
        for (std::size_t families = 1; families <= 5; ++families) {
          auto spec = spec_of(strategy, kinds, families);
          const std::size_t cols = strategy == EnsembleStrategy::concat ? 1 : families;
          for (int label : {0, 1}) {
            spec.tie_break = 1 - label;
            CHECK(combine_votes(spec, Grid(kinds, std::vector<int>(cols, label))) == label);
          }
        }
      }
    }
  }

  TEST_CASE("a one-cell grid passes its vote through") {
    for (auto strategy : {EnsembleStrategy::by_classifier, EnsembleStrategy::by_feature,
                          EnsembleStrategy::concat}) {
      auto spec = spec_of(strategy, 1, 1);
      for (int label : {0, 1}) {
        spec.tie_break = 1 - label;
        CHECK(combine_votes(spec, Grid{{label}}) == label);
      }
    }
  }

  TEST_CASE("vote grids of the wrong shape are rejected") {
    const auto spec = spec_of(EnsembleStrategy::by_classifier, 2, 3);
    CHECK_THROWS_AS(combine_votes(spec, Grid{{1, 1, 0}}), ModelError);
    CHECK_THROWS_AS(combine_votes(spec, Grid{{1, 1}, {0, 0}}), ModelError);
    const auto concat = spec_of(EnsembleStrategy::concat, 2, 3);
    CHECK_NOTHROW(combine_votes(concat, Grid{{1}, {0}}));
    CHECK_THROWS_AS(combine_votes(concat, Grid{{1, 1, 0}, {0, 0, 0}}), ModelError);
  }

  TEST_CASE("spec validation and JSON") {
    EnsembleSpec empty;
    CHECK_THROWS_AS(empty.validate(), ConfigError);
    auto spec = spec_of(EnsembleStrategy::by_feature, 3, 5);
    spec.tie_break = 0;
    const auto back = EnsembleSpec::from_json(nlohmann::json::parse(spec.to_json().dump()));
    CHECK(back.name() == spec.name());
    CHECK(back.tie_break == 0);
    CHECK(parse_ensemble_strategy("3") == EnsembleStrategy::concat);
    CHECK_THROWS_AS(parse_ensemble_strategy("stacking"), ConfigError);
    spec.tie_break = 2;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
  }

  TEST_CASE("a single-member ensemble reduces to that member") {
    const auto train = generate_sqli_corpus({120, 180, 61, 0.0});
    const auto probe = generate_sqli_corpus({50, 50, 62, 0.0});
    const auto family = FeatureFamily::parse("tfidf-char2");
    const auto pipe = FeaturePipeline::fit(train.payloads(), family);
    const auto data = pipe.transform(train.payloads());
    for (auto kind : {ClassifierKind::passive_aggressive, ClassifierKind::multinomial_nb}) {
      const auto member = fit(kind, data, train.labels(), TrainConfig{});
      for (auto strategy : {EnsembleStrategy::by_classifier, EnsembleStrategy::by_feature,
                            EnsembleStrategy::concat}) {
        EnsembleSpec spec;
        spec.strategy = strategy;
        spec.classifier_kinds = {kind};
        spec.feature_families = {family};
        const auto model = EnsembleModel::fit(spec, train, TrainConfig{});
        for (const auto& p : probe.payloads()) {
          CHECK(model.predict(p) == predict(member, pipe.transform(p)));
        }
      }
    }
  }

  TEST_CASE("fitted ensembles vote on every cell") {
    const auto train = generate_sqli_corpus({150, 250, 63, 0.0});
    const auto probe = generate_sqli_corpus({40, 60, 64, 0.0});
    for (auto strategy : {EnsembleStrategy::by_classifier, EnsembleStrategy::by_feature,
                          EnsembleStrategy::concat}) {
      const auto spec = spec_of(strategy, 3, 5);
      const auto model = EnsembleModel::fit(spec, train, TrainConfig{});
      std::size_t right = 0;
      for (std::size_t i = 0; i < probe.size(); ++i) {
        const auto grid = model.votes(probe.payload(i));
        CHECK(grid.size() == 3);
        CHECK(grid[0].size() == (strategy == EnsembleStrategy::concat ? 1u : 5u));
        const int label = model.predict(probe.payload(i));
        CHECK(label == combine_votes(spec, grid));
        right += label == probe.label(i);
      }
      CHECK(static_cast<double>(right) / probe.size() > 0.9);
    }
  }
}
