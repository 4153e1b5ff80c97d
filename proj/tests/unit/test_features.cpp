#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "sqlcascade/features.hpp"
#include "support/properties.hpp"

using namespace sqlcascade;
using Strings = std::vector<std::string>;

namespace {

std::vector<double> dense_row(const SparseMatrix& m, std::size_t r) {
  return m.row_vector(r).to_dense();
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("vocabulary is sorted and distinct") {
    const Strings ab{"ab", "ba"};
    CHECK(build_vocabulary(ab, Termizer::chars(1)).terms() == Strings{"a", "b"});
    CHECK(build_vocabulary(ab, Termizer::chars(2)).terms() == Strings{"ab", "ba"});
    const Strings aa{"aa"};
    const auto v = build_vocabulary(aa, Termizer::chars(1));
    CHECK(v.terms() == Strings{"a"});
    CHECK(v.find("a") == 0u);
    CHECK_FALSE(v.find("z").has_value());
    const Strings nothing{"", ""};
    CHECK_THROWS_AS(build_vocabulary(nothing, Termizer::chars(1)), FeatureError);
  }

  TEST_CASE("min document frequency prunes rare terms") {
    const Strings docs{"ab", "ac", "ad"};
    CHECK(build_vocabulary(docs, Termizer::chars(1), 2).terms() == Strings{"a"});
  }

  TEST_CASE("count matrix") {
    const Strings train{"ab"};
    const auto vocab = build_vocabulary(train, Termizer::chars(1));
    const Strings docs{"aab", "zz", ""};
    const auto m = count_matrix(docs, vocab);
    CHECK(dense_row(m, 0) == std::vector<double>{2, 1});
    CHECK(m.row(1).nnz() == 0);
    CHECK(m.row(2).nnz() == 0);
    CHECK(m.at(0, 0) == 2.0);
  }

  TEST_CASE("bag of characters equals monogram counts") {
    const auto payloads = testing::random_payloads(200, 31);
    const auto boc = FeaturePipeline::fit(payloads, FeatureFamily::parse("boc"));
    const auto vocab = build_vocabulary(payloads, Termizer::chars(1));
    const auto counts = count_matrix(payloads, vocab);
    const auto via_pipeline = boc.transform(payloads);
    REQUIRE(via_pipeline.rows() == counts.rows());
    for (std::size_t r = 0; r < counts.rows(); ++r) {
      CHECK(via_pipeline.row_vector(r) == counts.row_vector(r));
    }
    CHECK(FeatureFamily::parse("bow").name() == "bow");
    CHECK(FeatureFamily::parse("raw-char1").name() == "boc");
    CHECK(FeatureFamily::parse("tfidf-char3").name() == "tfidf-char3");
    CHECK_THROWS(FeatureFamily::parse("tfidf-char9"));
    CHECK_THROWS(FeatureFamily::parse("bogus"));
  }

  TEST_CASE("tf normalization") {
    SparseMatrix m(2);
    m.append_row(SparseVector::from_pairs(2, {{0, 2.0}, {1, 1.0}}));
    m.append_row(SparseVector{2, {}, {}});
    const auto tf = tf_normalize(m);
    CHECK(tf.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(tf.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(tf.row(1).nnz() == 0);
  }

  TEST_CASE("tf rows sum to one") {
    const auto r = testing::check_tf_row_normalization(32);
    CHECK_MESSAGE(r.ok, r.detail);
  }

  TEST_CASE("document frequency") {
    const Strings docs{"ab", "ac"};
    const auto vocab = build_vocabulary(docs, Termizer::chars(1));
    const auto df = document_frequency(count_matrix(docs, vocab));
    CHECK(df == std::vector<std::size_t>{2, 1, 1});

    const Strings five{"xa", "xb", "xc", "xd", "xe"};
    const auto v5 = build_vocabulary(five, Termizer::chars(1));
    CHECK(document_frequency(count_matrix(five, v5))[*v5.find("x")] == 5);

    const Strings other{"q"};
    CHECK(document_frequency(count_matrix(other, v5)) == std::vector<std::size_t>(6, 0));
  }

  TEST_CASE("idf values") {
    const std::vector<std::size_t> all{5};
    CHECK(idf(all, 5).values[0] == 0.0);
    const std::vector<std::size_t> none{0};
    CHECK(idf(none, 1).values[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<std::size_t> four{4};
    CHECK(idf(four, 9).values[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    const std::vector<std::size_t> too_many{6};
    CHECK_THROWS_AS(idf(too_many, 5), FeatureError);
  }

  TEST_CASE("idf bounds and annihilation") {
    const auto r = testing::check_idf_cases(33);
    CHECK_MESSAGE(r.ok, r.detail);
  }

  TEST_CASE("tf-idf by hand") {
    const Strings docs{"ab", "aa"};
    const auto vocab = build_vocabulary(docs, Termizer::chars(1));
    const auto counts = count_matrix(docs, vocab);
    const auto w = idf(document_frequency(counts), docs.size());
    const auto m = tfidf(counts, w);
    CHECK(m.at(0, *vocab.find("b")) == doctest::Approx(0.5 * std::log(1.5)).epsilon(1e-15));
    CHECK(m.at(0, *vocab.find("b")) == doctest::Approx(0.2027).epsilon(1e-4));
    CHECK(m.at(0, *vocab.find("a")) == 0.0);
    CHECK(m.at(1, *vocab.find("a")) == 0.0);

    const Strings single{"select 1"};
    const auto v1 = build_vocabulary(single, Termizer::chars(1));
    const auto c1 = count_matrix(single, v1);
    CHECK(tfidf(c1, idf(document_frequency(c1), 1)).nnz() == 0);
  }

  TEST_CASE("vectorize agrees with the batch path") {
    const Strings docs{"SELECT 1", "' OR 1=1 --", "admin'--"};
    const auto pipe = FeaturePipeline::fit(docs, FeatureFamily::parse("tfidf-char2"));
    const auto batch = pipe.transform(docs);
    for (std::size_t i = 0; i < docs.size(); ++i) CHECK(pipe.transform(docs[i]) == batch.row_vector(i));
    CHECK(pipe.transform("\x01\x02\x03").nnz() == 0);
    CHECK(pipe.transform("").nnz() == 0);
    CHECK_THROWS_AS(vectorize("x", pipe.vocabulary(), Weighting::tfidf, nullptr), FeatureError);
  }

  TEST_CASE("batch and stream vectorizers agree on random payloads") {
    const auto r = testing::check_batch_stream_equivalence(34, 1000);
    CHECK_MESSAGE(r.ok, r.detail);
    CHECK(r.cases == 8000);
  }

  TEST_CASE("concatenation shifts indices by part widths") {
    const std::vector<SparseVector> parts{SparseVector::from_pairs(3, {{1, 0.5}}),
                                          SparseVector::from_pairs(2, {{0, 0.25}})};
    const auto joined = concat_features(parts);
    CHECK(joined.dim == 5);
    CHECK(joined.indices == std::vector<std::uint32_t>{1, 3});
    CHECK(joined.values == std::vector<double>{0.5, 0.25});

    const std::vector<SparseVector> one{parts[0]};
    CHECK(concat_features(one) == parts[0]);

    const std::vector<SparseVector> zeros{SparseVector{4, {}, {}}, SparseVector{6, {}, {}}};
    CHECK(concat_features(zeros).dim == 10);
    CHECK(concat_features(zeros).nnz() == 0);
  }

  TEST_CASE("sparse containers reject bad input") {
    SparseMatrix m(3);
    CHECK_THROWS_AS(m.append_row(SparseVector::from_pairs(4, {{0, 1.0}})), FeatureError);
    CHECK_THROWS_AS(SparseVector::from_pairs(2, {{2, 1.0}}), FeatureError);
    const auto v = SparseVector::from_pairs(3, {{2, 1.0}, {0, 2.0}, {2, 1.0}});
    CHECK(v.indices == std::vector<std::uint32_t>{0, 2});
    CHECK(v.values == std::vector<double>{2.0, 2.0});
  }

  TEST_CASE("pipelines round-trip through JSON bit-exactly") {
    const auto payloads = testing::random_payloads(300, 35);
    for (const auto& family : parse_families("tfidf-char1,tfidf-char3,tf-word,boc,bow")) {
      const auto pipe = FeaturePipeline::fit(payloads, family);
      const auto text = pipe.to_json().dump();
      const auto back = FeaturePipeline::from_json(nlohmann::json::parse(text));
      CHECK(back.id() == pipe.id());
      CHECK(back.vocabulary().terms() == pipe.vocabulary().terms());
      if (pipe.idf_values()) CHECK(back.idf_values()->values == pipe.idf_values()->values);
      for (std::size_t i = 0; i < 50; ++i) CHECK(back.transform(payloads[i]) == pipe.transform(payloads[i]));
    }

    const auto families = parse_families("tfidf-char1,bow");
    const auto stack = FeatureStack::fit(payloads, families);
    const auto back = FeatureStack::from_json(nlohmann::json::parse(stack.to_json().dump()));
    CHECK(back.name() == "tfidf-char1+bow");
    CHECK(back.dim() == stack.dim());
    CHECK(back.transform(payloads[3]) == stack.transform(payloads[3]));

    auto bad = stack.to_json();
    bad["format"] = "something-else";
    CHECK_THROWS(FeatureStack::from_json(bad));
  }
}
