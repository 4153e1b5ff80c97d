#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sqlcascade/corpus.hpp"
#include "sqlcascade/textprep.hpp"

namespace sqlcascade {

/// Read-only view of one sparse row; indices strictly increasing.
struct SparseRow {
  std::size_t dim = 0;
  std::span<const std::uint32_t> indices;
  std::span<const double> values;

  std::size_t nnz() const noexcept { return indices.size(); }
  double squared_norm() const noexcept;
  double dot(std::span<const double> dense) const noexcept;
};

struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> values;

  SparseRow view() const noexcept { return {dim, indices, values}; }
  std::size_t nnz() const noexcept { return indices.size(); }
  /// Builds from unsorted (index, value) pairs; duplicates are summed, zeros dropped.
  static SparseVector from_pairs(std::size_t dim,
                                 std::vector<std::pair<std::uint32_t, double>> pairs);
  std::vector<double> to_dense() const;

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

/// Compressed sparse rows: rows are documents, columns are terms. Stored
/// values are nonzero and column indices are strictly increasing per row.
class SparseMatrix {
 public:
  explicit SparseMatrix(std::size_t cols = 0) : cols_(cols), row_ptr_{0} {}

  std::size_t rows() const noexcept { return row_ptr_.size() - 1; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return col_idx_.size(); }

  SparseRow row(std::size_t r) const;
  SparseVector row_vector(std::size_t r) const;
  /// Value at (r, c), zero when not stored.
  double at(std::size_t r, std::size_t c) const;

  void append_row(const SparseVector& v);
  void append_row(SparseRow v);

 private:
  std::size_t cols_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::uint32_t> col_idx_;
  std::vector<double> values_;
};

struct TransparentStringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const noexcept {
    return std::hash<std::string_view>{}(s);
  }
};

/// Sorted distinct terms of a training corpus and their column positions.
class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(Termizer termizer, std::vector<std::string> sorted_terms);

  const Termizer& termizer() const noexcept { return termizer_; }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  std::size_t size() const noexcept { return terms_.size(); }
  std::optional<std::uint32_t> find(std::string_view term) const;

 private:
  Termizer termizer_;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t, TransparentStringHash, std::equal_to<>> index_;
  std::array<std::int64_t, 256> byte_index_{};  // single-byte terms, -1 when absent
};

/// Throws FeatureError when no payload yields a term.
Vocabulary build_vocabulary(std::span<const std::string> payloads, const Termizer& termizer,
                            std::size_t min_document_frequency = 1);
Vocabulary build_vocabulary(const LabeledCorpus& corpus, const Termizer& termizer,
                            std::size_t min_document_frequency = 1);

/// Term multiplicities; out-of-vocabulary terms are dropped.
SparseVector count_vector(std::string_view payload, const Vocabulary& vocab);
SparseMatrix count_matrix(std::span<const std::string> payloads, const Vocabulary& vocab);
SparseMatrix count_matrix(const LabeledCorpus& corpus, const Vocabulary& vocab);

/// Divides each row by its sum; all-zero rows stay zero.
SparseMatrix tf_normalize(const SparseMatrix& counts);
SparseVector tf_normalize(const SparseVector& counts);

std::vector<std::size_t> document_frequency(const SparseMatrix& counts);

struct IdfVector {
  std::vector<double> values;
  std::size_t corpus_size = 0;
};

/// Smoothed natural-log idf: ln((|D|+1)/(df+1)).
IdfVector idf(std::span<const std::size_t> df, std::size_t corpus_size);

/// Takes raw counts: rows are tf-normalized, then scaled per column by idf.
SparseMatrix tfidf(const SparseMatrix& counts, const IdfVector& idf);
SparseVector tfidf(const SparseVector& counts, const IdfVector& idf);

enum class Weighting { raw, tf, tfidf };

std::string to_string(Weighting w);
Weighting parse_weighting(std::string_view name);

/// Single-payload path; `idf` is required for Weighting::tfidf.
SparseVector vectorize(std::string_view payload, const Vocabulary& vocab, Weighting weighting,
                       const IdfVector* idf = nullptr);

/// Block concatenation; offsets shift by cumulative part widths.
SparseVector concat_features(std::span<const SparseVector> parts);

/// One member of the feature families: raw counts F, normalized counts,
/// bag of characters, bag of words, and TF-IDF over a termizer.
struct FeatureFamily {
  Weighting weighting = Weighting::tfidf;
  Termizer termizer = Termizer::chars(1);

  /// "boc", "bow", or "<raw|tf|tfidf>-<char1..char5|word>".
  std::string name() const;
  static FeatureFamily parse(std::string_view name);

  friend bool operator==(const FeatureFamily&, const FeatureFamily&) = default;
};

/// A fitted vocabulary (+ idf) that turns payloads into feature rows.
class FeaturePipeline {
 public:
  FeaturePipeline() = default;

  static FeaturePipeline fit(std::span<const std::string> payloads, const FeatureFamily& family,
                             std::size_t min_document_frequency = 1);

  const FeatureFamily& family() const noexcept { return family_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const std::optional<IdfVector>& idf_values() const noexcept { return idf_; }
  std::size_t dim() const noexcept { return vocab_.size(); }

  SparseVector transform(std::string_view payload) const;
  SparseMatrix transform(std::span<const std::string> payloads) const;

  /// FNV-1a digest of the serialized form, hex encoded.
  std::string id() const;

  nlohmann::json to_json() const;
  static FeaturePipeline from_json(const nlohmann::json& doc);

 private:
  FeatureFamily family_;
  Vocabulary vocab_;
  std::optional<IdfVector> idf_;
};

/// Several pipelines whose outputs are concatenated in order.
class FeatureStack {
 public:
  FeatureStack() = default;
  explicit FeatureStack(std::vector<FeaturePipeline> parts) : parts_(std::move(parts)) {}

  static FeatureStack fit(std::span<const std::string> payloads,
                          std::span<const FeatureFamily> families,
                          std::size_t min_document_frequency = 1);

  const std::vector<FeaturePipeline>& parts() const noexcept { return parts_; }
  std::size_t dim() const noexcept;
  std::string name() const;

  SparseVector transform(std::string_view payload) const;
  SparseMatrix transform(std::span<const std::string> payloads) const;

  nlohmann::json to_json() const;
  static FeatureStack from_json(const nlohmann::json& doc);

 private:
  std::vector<FeaturePipeline> parts_;
};

std::vector<FeatureFamily> parse_families(std::string_view comma_separated);

}  // namespace sqlcascade
