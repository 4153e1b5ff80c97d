#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sqlcascade/error.hpp"

namespace sqlcascade {

/// Ordered SQL payloads with binary labels (1 = attack, 0 = benign).
///
/// Payloads are kept byte-for-byte as read (after CSV unescaping and UTF-8
/// repair); empty payloads and duplicates are legal entries.
class LabeledCorpus {
 public:
  LabeledCorpus() = default;
  LabeledCorpus(std::vector<std::string> payloads, std::vector<int> labels,
                std::string source_id = {});

  std::size_t size() const noexcept { return payloads_.size(); }
  bool empty() const noexcept { return payloads_.empty(); }

  const std::vector<std::string>& payloads() const noexcept { return payloads_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::string& payload(std::size_t i) const { return payloads_.at(i); }
  int label(std::size_t i) const { return labels_.at(i); }
  const std::string& source_id() const noexcept { return source_id_; }

  /// Rows at the given indices, in the given order.
  LabeledCorpus subset(const std::vector<std::size_t>& indices, std::string source_id) const;

 private:
  std::vector<std::string> payloads_;
  std::vector<int> labels_;
  std::string source_id_;
};

struct CsvOptions {
  std::string text_column = "Query";
  std::string label_column = "Label";
  std::string positive_token = "1";
  std::string negative_token = "0";
  char delimiter = ',';
};

/// One row whose payload needed U+FFFD substitution for invalid UTF-8.
struct CsvRepair {
  std::size_t row = 0;  // 1-based data row (header excluded)
  std::size_t replaced_sequences = 0;
};

struct CsvLoadReport {
  std::size_t rows = 0;
  std::vector<CsvRepair> repairs;
};

/// Reads an RFC-4180 CSV. Throws CorpusError naming the row on any failure.
LabeledCorpus load_csv(const std::filesystem::path& path, const CsvOptions& options = {},
                       CsvLoadReport* report = nullptr);

/// Parses CSV text already in memory; `source_id` is recorded on the corpus.
LabeledCorpus parse_csv(const std::string& text, const CsvOptions& options,
                        const std::string& source_id = "memory",
                        CsvLoadReport* report = nullptr);

/// Writes `corpus` with the header `text_column,label_column`, quoting as needed.
void write_csv(const std::filesystem::path& path, const LabeledCorpus& corpus,
               const CsvOptions& options = {});
std::string to_csv(const LabeledCorpus& corpus, const CsvOptions& options = {});

struct SplitSpec {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
  bool stratified = true;
};

struct Split {
  LabeledCorpus train;
  LabeledCorpus test;
  std::vector<std::size_t> train_indices;  // ascending positions in the source corpus
  std::vector<std::size_t> test_indices;
};

Split stratified_split(const LabeledCorpus& corpus, const SplitSpec& spec);

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts class_counts(const LabeledCorpus& corpus) noexcept;

/// Replaces every invalid UTF-8 sequence with U+FFFD; returns the number replaced.
std::size_t repair_utf8(std::string& text);

}  // namespace sqlcascade
