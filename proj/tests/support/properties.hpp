#pragma once

// Randomized invariant checks shared by the unit tests and the acceptance runner.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sqlcascade::testing {

struct PropertyResult {
  bool ok = true;
  std::size_t cases = 0;
  std::string detail;  // first counterexample when !ok

  void fail(std::string what) {
    if (ok) detail = std::move(what);
    ok = false;
  }
};

/// SQL-flavoured random text: keywords, quotes, operators, whitespace and
/// some multi-byte characters. Roughly one in twenty is empty.
std::string random_payload(std::mt19937_64& rng, std::size_t max_len = 60);
std::vector<std::string> random_payloads(std::size_t count, std::uint64_t seed,
                                         std::size_t max_len = 60);

PropertyResult check_tf_row_normalization(std::uint64_t seed, std::size_t docs = 300);
PropertyResult check_idf_cases(std::uint64_t seed, std::size_t trials = 200);
PropertyResult check_pa_zero_post_loss(std::uint64_t seed, std::size_t trials = 1000);
PropertyResult check_majority_vote(std::uint64_t seed, std::size_t trials = 1000);
PropertyResult check_batch_stream_equivalence(std::uint64_t seed, std::size_t payloads = 1000);
PropertyResult check_confusion_bruteforce(std::uint64_t seed, std::size_t cases = 1000);

}  // namespace sqlcascade::testing
