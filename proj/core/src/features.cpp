#include "sqlcascade/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>

#include <nlohmann/json.hpp>

#include "sqlcascade/error.hpp"

namespace sqlcascade {

double SparseRow::squared_norm() const noexcept {
  double sum = 0.0;
  for (double v : values) sum += v * v;
  return sum;
}

double SparseRow::dot(std::span<const double> dense) const noexcept {
  double sum = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) sum += values[k] * dense[indices[k]];
  return sum;
}

SparseVector SparseVector::from_pairs(std::size_t dim,
                                      std::vector<std::pair<std::uint32_t, double>> pairs) {
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  SparseVector v;
  v.dim = dim;
  for (std::size_t k = 0; k < pairs.size();) {
    const auto idx = pairs[k].first;
    if (idx >= dim) throw FeatureError("sparse vector: index out of range");
    double sum = 0.0;
    while (k < pairs.size() && pairs[k].first == idx) sum += pairs[k++].second;
    if (sum != 0.0) {
      v.indices.push_back(idx);
      v.values.push_back(sum);
    }
  }
  return v;
}

std::vector<double> SparseVector::to_dense() const {
  std::vector<double> dense(dim, 0.0);
  for (std::size_t k = 0; k < indices.size(); ++k) dense[indices[k]] = values[k];
  return dense;
}

SparseRow SparseMatrix::row(std::size_t r) const {
  if (r >= rows()) throw FeatureError("sparse matrix: row out of range");
  const auto begin = row_ptr_[r];
  const auto len = row_ptr_[r + 1] - begin;
  return {cols_, std::span<const std::uint32_t>(col_idx_).subspan(begin, len),
          std::span<const double>(values_).subspan(begin, len)};
}

SparseVector SparseMatrix::row_vector(std::size_t r) const {
  const auto view = row(r);
  return {cols_, {view.indices.begin(), view.indices.end()},
          {view.values.begin(), view.values.end()}};
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto view = row(r);
  const auto it = std::lower_bound(view.indices.begin(), view.indices.end(), c);
  if (it == view.indices.end() || *it != c) return 0.0;
  return view.values[static_cast<std::size_t>(it - view.indices.begin())];
}

void SparseMatrix::append_row(const SparseVector& v) { append_row(v.view()); }

void SparseMatrix::append_row(SparseRow v) {
  if (v.dim != cols_) {
    throw FeatureError("sparse matrix: row width " + std::to_string(v.dim) +
                       " does not match " + std::to_string(cols_) + " columns");
  }
  for (std::size_t k = 0; k < v.nnz(); ++k) {
    if (v.values[k] == 0.0) continue;
    col_idx_.push_back(v.indices[k]);
    values_.push_back(v.values[k]);
  }
  row_ptr_.push_back(col_idx_.size());
}

Vocabulary::Vocabulary(Termizer termizer, std::vector<std::string> sorted_terms)
    : termizer_(termizer), terms_(std::move(sorted_terms)) {
  if (!std::is_sorted(terms_.begin(), terms_.end()) ||
      std::adjacent_find(terms_.begin(), terms_.end()) != terms_.end()) {
    throw FeatureError("vocabulary: terms must be sorted and distinct");
  }
  index_.reserve(terms_.size());
  byte_index_.fill(-1);
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
    if (terms_[i].size() == 1) byte_index_[static_cast<unsigned char>(terms_[i][0])] = i;
  }
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view term) const {
  if (term.size() == 1) {
    const auto id = byte_index_[static_cast<unsigned char>(term[0])];
    if (id < 0) return std::nullopt;
    return static_cast<std::uint32_t>(id);
  }
  const auto it = index_.find(term);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Vocabulary build_vocabulary(std::span<const std::string> payloads, const Termizer& termizer,
                            std::size_t min_document_frequency) {
  termizer.validate();
  if (payloads.empty()) throw FeatureError("vocabulary: corpus is empty");
  struct TermStats {
    std::size_t df = 0;
    std::size_t last_doc = SIZE_MAX;
  };
  std::unordered_map<std::string, TermStats, TransparentStringHash, std::equal_to<>> stats;
  std::string scratch;
  for (std::size_t d = 0; d < payloads.size(); ++d) {
    for_each_term(payloads[d], termizer, scratch, [&](std::string_view term) {
      auto it = stats.find(term);
      if (it == stats.end()) it = stats.emplace(std::string(term), TermStats{}).first;
      if (it->second.last_doc != d) {
        it->second.last_doc = d;
        ++it->second.df;
      }
    });
  }
  std::vector<std::string> terms;
  terms.reserve(stats.size());
  for (const auto& [term, st] : stats) {
    if (st.df >= min_document_frequency) terms.push_back(term);
  }
  if (terms.empty()) {
    throw FeatureError("vocabulary: corpus yields no " + termizer.name() + " terms");
  }
  std::sort(terms.begin(), terms.end());
  return Vocabulary(termizer, std::move(terms));
}

Vocabulary build_vocabulary(const LabeledCorpus& corpus, const Termizer& termizer,
                            std::size_t min_document_frequency) {
  return build_vocabulary(corpus.payloads(), termizer, min_document_frequency);
}

SparseVector count_vector(std::string_view payload, const Vocabulary& vocab) {
  std::vector<std::uint32_t> ids;
  ids.reserve(payload.size());
  std::string scratch;
  for_each_term(payload, vocab.termizer(), scratch, [&](std::string_view term) {
    if (auto id = vocab.find(term)) ids.push_back(*id);
  });
  std::sort(ids.begin(), ids.end());
  SparseVector v;
  v.dim = vocab.size();
  for (std::size_t k = 0; k < ids.size();) {
    std::size_t j = k;
    while (j < ids.size() && ids[j] == ids[k]) ++j;
    v.indices.push_back(ids[k]);
    v.values.push_back(static_cast<double>(j - k));
    k = j;
  }
  return v;
}

SparseMatrix count_matrix(std::span<const std::string> payloads, const Vocabulary& vocab) {
  SparseMatrix m(vocab.size());
  for (const auto& p : payloads) m.append_row(count_vector(p, vocab));
  return m;
}

SparseMatrix count_matrix(const LabeledCorpus& corpus, const Vocabulary& vocab) {
  return count_matrix(corpus.payloads(), vocab);
}

SparseVector tf_normalize(const SparseVector& counts) {
  double sum = 0.0;
  for (double v : counts.values) sum += v;
  SparseVector out = counts;
  if (sum == 0.0) return out;
  for (double& v : out.values) v /= sum;
  return out;
}

SparseMatrix tf_normalize(const SparseMatrix& counts) {
  SparseMatrix out(counts.cols());
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    out.append_row(tf_normalize(counts.row_vector(r)));
  }
  return out;
}

std::vector<std::size_t> document_frequency(const SparseMatrix& counts) {
  std::vector<std::size_t> df(counts.cols(), 0);
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    for (auto c : counts.row(r).indices) ++df[c];
  }
  return df;
}

IdfVector idf(std::span<const std::size_t> df, std::size_t corpus_size) {
  IdfVector out;
  out.corpus_size = corpus_size;
  out.values.reserve(df.size());
  const double numerator = static_cast<double>(corpus_size) + 1.0;
  for (std::size_t t = 0; t < df.size(); ++t) {
    if (df[t] > corpus_size) {
      throw FeatureError("idf: document frequency " + std::to_string(df[t]) + " of term " +
                         std::to_string(t) + " exceeds corpus size " +
                         std::to_string(corpus_size));
    }
    // df == |D| gives ln(1), exactly zero
    out.values.push_back(std::log(numerator / (static_cast<double>(df[t]) + 1.0)));
  }
  return out;
}

SparseVector tfidf(const SparseVector& counts, const IdfVector& weights) {
  if (counts.dim != weights.values.size()) {
    throw FeatureError("tfidf: vocabulary has " + std::to_string(counts.dim) +
                       " terms but idf has " + std::to_string(weights.values.size()));
  }
  const auto tf = tf_normalize(counts);
  SparseVector out;
  out.dim = tf.dim;
  for (std::size_t k = 0; k < tf.indices.size(); ++k) {
    const double v = tf.values[k] * weights.values[tf.indices[k]];
    if (v == 0.0) continue;
    out.indices.push_back(tf.indices[k]);
    out.values.push_back(v);
  }
  return out;
}

SparseMatrix tfidf(const SparseMatrix& counts, const IdfVector& weights) {
  if (counts.cols() != weights.values.size()) {
    throw FeatureError("tfidf: vocabulary has " + std::to_string(counts.cols()) +
                       " terms but idf has " + std::to_string(weights.values.size()));
  }
  SparseMatrix out(counts.cols());
  for (std::size_t r = 0; r < counts.rows(); ++r) {
    out.append_row(tfidf(counts.row_vector(r), weights));
  }
  return out;
}

std::string to_string(Weighting w) {
  switch (w) {
    case Weighting::raw:
      return "raw";
    case Weighting::tf:
      return "tf";
    case Weighting::tfidf:
      return "tfidf";
  }
  return "?";
}

Weighting parse_weighting(std::string_view name) {
  if (name == "raw" || name == "counts") return Weighting::raw;
  if (name == "tf") return Weighting::tf;
  if (name == "tfidf") return Weighting::tfidf;
  throw FeatureError("unknown weighting '" + std::string(name) + "'");
}

SparseVector vectorize(std::string_view payload, const Vocabulary& vocab, Weighting weighting,
                       const IdfVector* idf_values) {
  if (weighting == Weighting::tfidf && idf_values == nullptr) {
    throw FeatureError("vectorize: tfidf weighting needs fitted idf values");
  }
  auto counts = count_vector(payload, vocab);
  switch (weighting) {
    case Weighting::raw:
      return counts;
    case Weighting::tf:
      return tf_normalize(counts);
    case Weighting::tfidf:
      return tfidf(counts, *idf_values);
  }
  return counts;
}

SparseVector concat_features(std::span<const SparseVector> parts) {
  if (parts.empty()) throw FeatureError("concat_features: no parts");
  SparseVector out;
  std::size_t offset = 0;
  for (const auto& part : parts) {
    for (std::size_t k = 0; k < part.indices.size(); ++k) {
      out.indices.push_back(static_cast<std::uint32_t>(offset + part.indices[k]));
      out.values.push_back(part.values[k]);
    }
    offset += part.dim;
  }
  out.dim = offset;
  return out;
}

std::string FeatureFamily::name() const {
  if (weighting == Weighting::raw && termizer == Termizer::chars(1)) return "boc";
  if (weighting == Weighting::raw && termizer == Termizer::words()) return "bow";
  return to_string(weighting) + "-" + termizer.name();
}

FeatureFamily FeatureFamily::parse(std::string_view name) {
  if (name == "boc") return {Weighting::raw, Termizer::chars(1)};
  if (name == "bow") return {Weighting::raw, Termizer::words()};
  const auto dash = name.find('-');
  if (dash == std::string_view::npos) {
    throw FeatureError("unknown feature family '" + std::string(name) + "'");
  }
  FeatureFamily f{parse_weighting(name.substr(0, dash)), Termizer::parse(name.substr(dash + 1))};
  f.termizer.validate();
  return f;
}

std::vector<FeatureFamily> parse_families(std::string_view comma_separated) {
  std::vector<FeatureFamily> out;
  std::size_t start = 0;
  while (start <= comma_separated.size()) {
    auto end = comma_separated.find(',', start);
    if (end == std::string_view::npos) end = comma_separated.size();
    const auto item = comma_separated.substr(start, end - start);
    if (!item.empty()) out.push_back(FeatureFamily::parse(item));
    start = end + 1;
  }
  if (out.empty()) throw FeatureError("no feature families given");
  return out;
}

FeaturePipeline FeaturePipeline::fit(std::span<const std::string> payloads,
                                     const FeatureFamily& family,
                                     std::size_t min_document_frequency) {
  FeaturePipeline p;
  p.family_ = family;
  p.vocab_ = build_vocabulary(payloads, family.termizer, min_document_frequency);
  if (family.weighting == Weighting::tfidf) {
    const auto counts = count_matrix(payloads, p.vocab_);
    const auto df = document_frequency(counts);
    p.idf_ = idf(df, payloads.size());
  }
  return p;
}

SparseVector FeaturePipeline::transform(std::string_view payload) const {
  return vectorize(payload, vocab_, family_.weighting, idf_ ? &*idf_ : nullptr);
}

SparseMatrix FeaturePipeline::transform(std::span<const std::string> payloads) const {
  SparseMatrix m(dim());
  for (const auto& p : payloads) m.append_row(transform(p));
  return m;
}

namespace {

constexpr int kFeatureFormatVersion = 1;

nlohmann::json termizer_json(const Termizer& t) {
  return {{"scheme", t.scheme == TermScheme::word ? "word" : "char_ngram"},
          {"n", t.n},
          {"lowercase", t.lowercase}};
}

Termizer termizer_from_json(const nlohmann::json& j) {
  Termizer t;
  const auto scheme = j.at("scheme").get<std::string>();
  if (scheme == "word") {
    t.scheme = TermScheme::word;
  } else if (scheme == "char_ngram") {
    t.scheme = TermScheme::char_ngram;
  } else {
    throw FeatureError("pipeline json: unknown termizer scheme '" + scheme + "'");
  }
  t.n = j.at("n").get<int>();
  t.lowercase = j.at("lowercase").get<bool>();
  t.validate();
  return t;
}

}  // namespace

nlohmann::json FeaturePipeline::to_json() const {
  nlohmann::json doc;
  doc["format"] = "sqlcascade.feature_pipeline";
  doc["version"] = kFeatureFormatVersion;
  doc["family"] = family_.name();
  doc["scheme"] = to_string(family_.weighting);
  doc["termizer"] = termizer_json(family_.termizer);
  doc["terms"] = vocab_.terms();
  if (idf_) {
    doc["idf"] = idf_->values;
    doc["corpus_size"] = idf_->corpus_size;
  } else {
    doc["idf"] = nullptr;
    doc["corpus_size"] = nullptr;
  }
  return doc;
}

FeaturePipeline FeaturePipeline::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "sqlcascade.feature_pipeline") {
      throw FeatureError("pipeline json: wrong format tag");
    }
    if (doc.at("version").get<int>() != kFeatureFormatVersion) {
      throw FeatureError("pipeline json: unsupported version");
    }
    FeaturePipeline p;
    p.family_.weighting = parse_weighting(doc.at("scheme").get<std::string>());
    p.family_.termizer = termizer_from_json(doc.at("termizer"));
    p.vocab_ = Vocabulary(p.family_.termizer, doc.at("terms").get<std::vector<std::string>>());
    if (!doc.at("idf").is_null()) {
      IdfVector v;
      v.values = doc.at("idf").get<std::vector<double>>();
      v.corpus_size = doc.at("corpus_size").get<std::size_t>();
      if (v.values.size() != p.vocab_.size()) {
        throw FeatureError("pipeline json: idf length differs from vocabulary size");
      }
      p.idf_ = std::move(v);
    }
    if (p.family_.weighting == Weighting::tfidf && !p.idf_) {
      throw FeatureError("pipeline json: tfidf pipeline without idf values");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FeatureError(std::string("pipeline json: ") + e.what());
  }
}

std::string FeaturePipeline::id() const {
  const auto text = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

FeatureStack FeatureStack::fit(std::span<const std::string> payloads,
                               std::span<const FeatureFamily> families,
                               std::size_t min_document_frequency) {
  if (families.empty()) throw FeatureError("feature stack: no families");
  std::vector<FeaturePipeline> parts;
  for (const auto& f : families) {
    parts.push_back(FeaturePipeline::fit(payloads, f, min_document_frequency));
  }
  return FeatureStack(std::move(parts));
}

std::size_t FeatureStack::dim() const noexcept {
  std::size_t d = 0;
  for (const auto& p : parts_) d += p.dim();
  return d;
}

std::string FeatureStack::name() const {
  std::string out;
  for (const auto& p : parts_) {
    if (!out.empty()) out += "+";
    out += p.family().name();
  }
  return out;
}

SparseVector FeatureStack::transform(std::string_view payload) const {
  if (parts_.size() == 1) return parts_.front().transform(payload);
  std::vector<SparseVector> pieces;
  pieces.reserve(parts_.size());
  for (const auto& p : parts_) pieces.push_back(p.transform(payload));
  return concat_features(pieces);
}

SparseMatrix FeatureStack::transform(std::span<const std::string> payloads) const {
  SparseMatrix m(dim());
  for (const auto& p : payloads) m.append_row(transform(p));
  return m;
}

nlohmann::json FeatureStack::to_json() const {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& p : parts_) parts.push_back(p.to_json());
  return {{"format", "sqlcascade.feature_stack"}, {"version", 1}, {"parts", parts}};
}

FeatureStack FeatureStack::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "sqlcascade.feature_stack") {
      throw FeatureError("feature stack json: wrong format tag");
    }
    std::vector<FeaturePipeline> parts;
    for (const auto& p : doc.at("parts")) parts.push_back(FeaturePipeline::from_json(p));
    if (parts.empty()) throw FeatureError("feature stack json: no parts");
    return FeatureStack(std::move(parts));
  } catch (const nlohmann::json::exception& e) {
    throw FeatureError(std::string("feature stack json: ") + e.what());
  }
}

}  // namespace sqlcascade
