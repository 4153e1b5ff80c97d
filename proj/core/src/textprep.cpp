#include "sqlcascade/textprep.hpp"

#include <stdexcept>

#include "sqlcascade/error.hpp"

namespace sqlcascade {

void Termizer::validate() const {
  if (scheme == TermScheme::char_ngram && (n < 1 || n > 5)) {
    throw FeatureError("termizer: character n-gram length must be in 1..5, got " +
                       std::to_string(n));
  }
}

std::string Termizer::name() const {
  return scheme == TermScheme::word ? "word" : "char" + std::to_string(n);
}

Termizer Termizer::parse(std::string_view name) {
  if (name == "word") return words();
  if (name.size() == 5 && name.substr(0, 4) == "char" && name[4] >= '1' && name[4] <= '5') {
    return chars(name[4] - '0');
  }
  throw FeatureError("termizer: unknown scheme '" + std::string(name) + "'");
}

std::vector<std::uint32_t> code_point_offsets(std::string_view text) {
  std::vector<std::uint32_t> offsets;
  offsets.reserve(text.size() + 1);
  std::size_t i = 0;
  while (i < text.size()) {
    offsets.push_back(static_cast<std::uint32_t>(i));
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
    }
    if (len > 1) {
      bool ok = i + len <= text.size();
      for (std::size_t k = 1; ok && k < len; ++k) {
        ok = (static_cast<unsigned char>(text[i + k]) & 0xC0) == 0x80;
      }
      if (!ok) len = 1;
    }
    i += len;
  }
  offsets.push_back(static_cast<std::uint32_t>(text.size()));
  return offsets;
}

namespace detail {

CharClass classify(std::string_view text, std::size_t offset) {
  const auto c = static_cast<unsigned char>(text[offset]);
  if (c >= 0x80) return CharClass::word;  // non-ASCII letters and symbols join words
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
    return CharClass::space;
  }
  if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
    return CharClass::word;
  }
  return CharClass::punct;
}

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& ch : out) {
    if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
  }
  return out;
}

}  // namespace detail

std::vector<std::string> char_ngrams(std::string_view payload, int n, bool lowercase) {
  if (n < 1) throw FeatureError("char_ngrams: n must be positive");
  return termize(payload, Termizer{TermScheme::char_ngram, n, lowercase});
}

std::vector<std::string> word_tokens(std::string_view payload, bool lowercase) {
  return termize(payload, Termizer::words(lowercase));
}

std::vector<std::string> termize(std::string_view payload, const Termizer& termizer) {
  std::vector<std::string> terms;
  std::string scratch;
  for_each_term(payload, termizer, scratch,
                [&](std::string_view term) { terms.emplace_back(term); });
  return terms;
}

}  // namespace sqlcascade
