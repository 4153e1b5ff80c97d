#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sqlcascade {

enum class TermScheme { char_ngram, word };

/// How a payload is cut into terms. Character schemes slide a window over
/// Unicode scalar values (whitespace included); the word scheme splits on
/// whitespace and keeps punctuation runs as tokens.
struct Termizer {
  TermScheme scheme = TermScheme::char_ngram;
  int n = 1;               // window length, char_ngram only (1..5)
  bool lowercase = false;  // ASCII case folding

  static Termizer chars(int n, bool lowercase = false) {
    return {TermScheme::char_ngram, n, lowercase};
  }
  static Termizer words(bool lowercase = true) { return {TermScheme::word, 1, lowercase}; }

  void validate() const;
  /// Short stable name: "char1" .. "char5" or "word".
  std::string name() const;
  static Termizer parse(std::string_view name);

  friend bool operator==(const Termizer&, const Termizer&) = default;
};

/// Byte offsets of each code point boundary in a UTF-8 string, plus the end.
/// Invalid bytes count as one code point each.
std::vector<std::uint32_t> code_point_offsets(std::string_view text);

std::vector<std::string> char_ngrams(std::string_view payload, int n, bool lowercase = false);

std::vector<std::string> word_tokens(std::string_view payload, bool lowercase = true);

std::vector<std::string> termize(std::string_view payload, const Termizer& termizer);

/// Calls `sink(std::string_view term)` for every term without allocating per
/// term. The views point into `scratch` or `payload` and die with them.
template <typename Sink>
void for_each_term(std::string_view payload, const Termizer& termizer, std::string& scratch,
                   Sink&& sink);

namespace detail {

enum class CharClass { space, word, punct };
CharClass classify(std::string_view text, std::size_t offset);
std::string ascii_lower(std::string_view s);

}  // namespace detail

template <typename Sink>
void for_each_term(std::string_view payload, const Termizer& termizer, std::string& scratch,
                   Sink&& sink) {
  std::string_view text = payload;
  if (termizer.lowercase) {
    scratch = detail::ascii_lower(payload);
    text = scratch;
  }
  if (termizer.scheme == TermScheme::char_ngram) {
    const auto offsets = code_point_offsets(text);
    const std::size_t cps = offsets.size() - 1;
    const auto n = static_cast<std::size_t>(termizer.n);
    if (cps < n) return;
    for (std::size_t i = 0; i + n <= cps; ++i) {
      sink(text.substr(offsets[i], offsets[i + n] - offsets[i]));
    }
    return;
  }
  const auto offsets = code_point_offsets(text);
  const std::size_t cps = offsets.size() - 1;
  std::size_t i = 0;
  while (i < cps) {
    const auto cls = detail::classify(text, offsets[i]);
    if (cls == detail::CharClass::space) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < cps && detail::classify(text, offsets[j]) == cls) ++j;
    sink(text.substr(offsets[i], offsets[j] - offsets[i]));
    i = j;
  }
}

}  // namespace sqlcascade
