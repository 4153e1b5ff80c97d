#include "sqlcascade/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sqlcascade/rng.hpp"

namespace sqlcascade {

LabeledCorpus::LabeledCorpus(std::vector<std::string> payloads, std::vector<int> labels,
                             std::string source_id)
    : payloads_(std::move(payloads)), labels_(std::move(labels)), source_id_(std::move(source_id)) {
  if (payloads_.size() != labels_.size()) {
    throw CorpusError("corpus: " + std::to_string(payloads_.size()) + " payloads but " +
                      std::to_string(labels_.size()) + " labels");
  }
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] != 0 && labels_[i] != 1) {
      throw CorpusError("corpus: label at position " + std::to_string(i) + " is " +
                        std::to_string(labels_[i]) + ", expected 0 or 1");
    }
  }
}

LabeledCorpus LabeledCorpus::subset(const std::vector<std::size_t>& indices,
                                    std::string source_id) const {
  std::vector<std::string> payloads;
  std::vector<int> labels;
  payloads.reserve(indices.size());
  labels.reserve(indices.size());
  for (auto i : indices) {
    payloads.push_back(payloads_.at(i));
    labels.push_back(labels_.at(i));
  }
  return LabeledCorpus(std::move(payloads), std::move(labels), std::move(source_id));
}

std::size_t repair_utf8(std::string& text) {
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
  std::string out;
  std::size_t replaced = 0;
  std::size_t i = 0;
  const std::size_t n = text.size();
  bool dirty = false;
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool valid = len > 0 && i + len <= n;
    for (std::size_t k = 1; valid && k < len; ++k) {
      const auto cc = static_cast<unsigned char>(text[i + k]);
      if ((cc & 0xC0) != 0x80) {
        valid = false;
      } else {
        cp = (cp << 6) | (cc & 0x3F);
      }
    }
    if (valid && len > 1) {
      // overlong forms, surrogates and out-of-range scalars
      static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
      if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) valid = false;
    }
    if (!valid) {
      if (!dirty) {
        out.assign(text, 0, i);
        dirty = true;
      }
      out.append(kReplacement);
      ++replaced;
      ++i;
      // skip stray continuation bytes belonging to the broken sequence
      while (i < n && (static_cast<unsigned char>(text[i]) & 0xC0) == 0x80) ++i;
      continue;
    }
    if (dirty) out.append(text, i, len);
    i += len;
  }
  if (dirty) text = std::move(out);
  return replaced;
}

namespace {

struct CsvRecord {
  std::vector<std::string> fields;
  std::size_t line = 0;
};

std::string row_context(std::size_t record, std::size_t line) {
  return "row " + std::to_string(record) + " (line " + std::to_string(line) + ")";
}

std::vector<CsvRecord> parse_records(const std::string& text, char delim) {
  std::vector<CsvRecord> records;
  std::size_t i = 0;
  const std::size_t n = text.size();
  if (text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
  std::size_t line = 1;

  while (i < n) {
    CsvRecord rec;
    rec.line = line;
    std::string field;
    bool end_of_record = false;
    while (!end_of_record) {
      field.clear();
      if (i < n && text[i] == '"') {
        ++i;
        bool closed = false;
        while (i < n) {
          const char c = text[i];
          if (c == '"') {
            if (i + 1 < n && text[i + 1] == '"') {
              field.push_back('"');
              i += 2;
            } else {
              ++i;
              closed = true;
              break;
            }
          } else {
            if (c == '\n') ++line;
            field.push_back(c);
            ++i;
          }
        }
        if (!closed) {
          throw CorpusError("csv: unterminated quoted field in " +
                            row_context(records.size(), rec.line));
        }
        if (i < n && text[i] != delim && text[i] != '\n' && text[i] != '\r') {
          throw CorpusError("csv: unexpected character after closing quote in " +
                            row_context(records.size(), rec.line));
        }
      } else {
        while (i < n && text[i] != delim && text[i] != '\n' && text[i] != '\r') {
          if (text[i] == '"') {
            throw CorpusError("csv: bare quote inside unquoted field in " +
                              row_context(records.size(), rec.line));
          }
          field.push_back(text[i]);
          ++i;
        }
      }
      rec.fields.push_back(field);
      if (i >= n) {
        end_of_record = true;
      } else if (text[i] == delim) {
        ++i;
      } else {
        if (text[i] == '\r' && i + 1 < n && text[i + 1] == '\n') ++i;
        ++i;
        ++line;
        end_of_record = true;
      }
    }
    // blank lines carry no data
    if (rec.fields.size() == 1 && rec.fields[0].empty()) continue;
    records.push_back(std::move(rec));
  }
  return records;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (trim(header[c]) == name) return c;
  }
  throw CorpusError("csv: column '" + name + "' not found in header");
}

}  // namespace

LabeledCorpus parse_csv(const std::string& text, const CsvOptions& options,
                        const std::string& source_id, CsvLoadReport* report) {
  auto records = parse_records(text, options.delimiter);
  if (records.empty()) throw CorpusError("csv: missing header row");
  const auto& header = records.front().fields;
  const auto text_col = column_index(header, options.text_column);
  const auto label_col = column_index(header, options.label_column);

  std::vector<std::string> payloads;
  std::vector<int> labels;
  payloads.reserve(records.size() - 1);
  labels.reserve(records.size() - 1);
  CsvLoadReport local;

  for (std::size_t r = 1; r < records.size(); ++r) {
    auto& rec = records[r];
    if (rec.fields.size() != header.size()) {
      throw CorpusError("csv: " + row_context(r, rec.line) + " has " +
                        std::to_string(rec.fields.size()) + " fields, header has " +
                        std::to_string(header.size()));
    }
    const auto token = trim(rec.fields[label_col]);
    int label;
    if (token == options.positive_token) {
      label = 1;
    } else if (token == options.negative_token) {
      label = 0;
    } else {
      throw CorpusError("csv: " + row_context(r, rec.line) + " label '" + token +
                        "' maps to neither '" + options.positive_token + "' nor '" +
                        options.negative_token + "'");
    }
    std::string payload = std::move(rec.fields[text_col]);
    if (const auto replaced = repair_utf8(payload); replaced > 0) {
      local.repairs.push_back({r, replaced});
    }
    payloads.push_back(std::move(payload));
    labels.push_back(label);
  }
  local.rows = payloads.size();
  if (report) *report = std::move(local);
  return LabeledCorpus(std::move(payloads), std::move(labels), source_id);
}

LabeledCorpus load_csv(const std::filesystem::path& path, const CsvOptions& options,
                       CsvLoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorpusError("csv: cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_csv(buf.str(), options, path.string(), report);
}

namespace {

void append_field(std::string& out, const std::string& field, char delim) {
  const bool needs_quotes = field.find_first_of(std::string{delim, '"', '\r', '\n'}) != std::string::npos;
  if (!needs_quotes) {
    out += field;
    return;
  }
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

}  // namespace

std::string to_csv(const LabeledCorpus& corpus, const CsvOptions& options) {
  std::string out;
  append_field(out, options.text_column, options.delimiter);
  out.push_back(options.delimiter);
  append_field(out, options.label_column, options.delimiter);
  out.push_back('\n');
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    append_field(out, corpus.payload(i), options.delimiter);
    out.push_back(options.delimiter);
    append_field(out, corpus.label(i) == 1 ? options.positive_token : options.negative_token,
                 options.delimiter);
    out.push_back('\n');
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const LabeledCorpus& corpus,
               const CsvOptions& options) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CorpusError("csv: cannot write '" + path.string() + "'");
  out << to_csv(corpus, options);
}

ClassCounts class_counts(const LabeledCorpus& corpus) noexcept {
  ClassCounts counts;
  for (int label : corpus.labels()) {
    if (label == 1) {
      ++counts.positives;
    } else {
      ++counts.negatives;
    }
  }
  return counts;
}

Split stratified_split(const LabeledCorpus& corpus, const SplitSpec& spec) {
  if (!(spec.test_fraction > 0.0 && spec.test_fraction < 1.0)) {
    throw CorpusError("split: test_fraction must lie strictly between 0 and 1");
  }
  if (corpus.empty()) throw CorpusError("split: corpus is empty");

  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> test;
  std::vector<std::size_t> train;

  auto take = [&](std::vector<std::size_t> pool, bool require_both_sides) {
    deterministic_shuffle(std::span<std::size_t>(pool), rng);
    auto n_test = static_cast<std::size_t>(std::llround(spec.test_fraction * pool.size()));
    if (require_both_sides) {
      if (pool.size() < 2) {
        throw CorpusError("split: corpus too small to place a sample of each class on both sides");
      }
      n_test = std::clamp<std::size_t>(n_test, 1, pool.size() - 1);
    }
    test.insert(test.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_test), pool.end());
  };

  if (spec.stratified) {
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      (corpus.label(i) == 1 ? pos : neg).push_back(i);
    }
    if (pos.empty() || neg.empty()) {
      throw CorpusError("split: stratified split needs both classes present");
    }
    take(std::move(pos), true);
    take(std::move(neg), true);
  } else {
    std::vector<std::size_t> all(corpus.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    take(std::move(all), true);
  }

  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  Split split;
  split.train = corpus.subset(train, corpus.source_id() + "#train");
  split.test = corpus.subset(test, corpus.source_id() + "#test");
  split.train_indices = std::move(train);
  split.test_indices = std::move(test);
  return split;
}

}  // namespace sqlcascade
