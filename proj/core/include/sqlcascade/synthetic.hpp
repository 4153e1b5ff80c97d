#pragma once

#include <cstddef>
#include <cstdint>

#include "sqlcascade/corpus.hpp"

namespace sqlcascade {

/// Template-driven SQL payload generator for tests, benchmarks and demos
/// when the public dataset is not at hand. Benign rows mix well-formed SQL
/// statements and form-field style values (names with apostrophes, prose
/// with dashes); attack rows cover tautologies, UNION, stacked, blind,
/// error-based and comment/encoding-obfuscated injections.
struct SynthOptions {
  std::size_t positives = 11341;
  std::size_t negatives = 19268;
  std::uint64_t seed = 7;
  double label_noise = 0.002;  // fraction of rows whose label is flipped
};

LabeledCorpus generate_sqli_corpus(const SynthOptions& options = {});

}  // namespace sqlcascade
