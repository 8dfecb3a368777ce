#pragma once

#include "zsl/corpus.hpp"
#include "zsl/textprep.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace zsl {

using Json = nlohmann::json;

/// Documents are children: the concatenation of a child's preprocessed consults.
struct Vocabulary {
    std::vector<std::string> terms; ///< rank order: total frequency desc, then term asc
    std::vector<std::size_t> df;
    std::vector<std::size_t> df_pos;
    std::vector<std::size_t> df_neg;
    std::size_t n_docs = 0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
    double avgdl = 0;

    std::size_t size() const { return terms.size(); }
    std::optional<std::size_t> find(std::string_view term) const;

    /// Rebuilds the lookup table; needed after editing `terms` by hand.
    void reindex();

    Json to_json() const;
    static Vocabulary from_json(const Json& j);

    bool operator==(const Vocabulary& o) const;

private:
    std::unordered_map<std::string, std::size_t> index_;
};

/// `top_k == nullopt` keeps every term with df >= min_df.
/// `labels` may be empty for unsupervised use; class counts then stay zero.
Vocabulary build_vocabulary(std::span<const TermSequence* const> docs, std::span<const int> labels,
                            std::optional<std::size_t> top_k, std::size_t min_df = 1);
Vocabulary build_vocabulary(std::span<const TermSequence> docs, std::span<const int> labels,
                            std::optional<std::size_t> top_k, std::size_t min_df = 1);

enum class Weighting { boolean, count, tfidf_augmented, delta_tfidf, bm25 };

std::string_view to_string(Weighting w);
Weighting parse_weighting(std::string_view s);

struct WeightScheme {
    Weighting kind = Weighting::tfidf_augmented;
    double k1 = 1.2;
    double b = 0.75;
    double smoothing = 1.0;

    Json to_json() const;
    static WeightScheme from_json(const Json& j);
    bool operator==(const WeightScheme&) const = default;
};

/// Sorted by index, no stored zeros.
struct SparseVector {
    std::vector<std::uint32_t> indices;
    std::vector<double> values;

    std::size_t nnz() const { return indices.size(); }
    double get(std::uint32_t i) const;
    bool operator==(const SparseVector&) const = default;
};

/// Term weights of one document. Out-of-vocabulary terms are ignored but
/// still count toward max_tf and document length.
SparseVector weigh(const TermSequence& doc, const Vocabulary& vocab, const WeightScheme& scheme);

enum class ColumnOrigin { term, summarizing, structured };

std::string_view to_string(ColumnOrigin o);

struct ColumnInfo {
    std::string name;
    ColumnOrigin origin = ColumnOrigin::term;

    bool operator==(const ColumnInfo&) const = default;
};

/// Compressed sparse rows.
class FeatureMatrix {
public:
    FeatureMatrix() = default;
    explicit FeatureMatrix(std::vector<ColumnInfo> columns);

    /// Zeros are dropped; indices must be ascending and < n_cols.
    void append_row(const SparseVector& row);

    std::size_t n_rows() const { return row_ptr_.size() - 1; }
    std::size_t n_cols() const { return columns_.size(); }
    std::size_t nnz() const { return values_.size(); }
    const std::vector<ColumnInfo>& columns() const { return columns_; }

    std::span<const std::uint32_t> row_indices(std::size_t r) const;
    std::span<const double> row_values(std::size_t r) const;
    SparseVector row(std::size_t r) const;
    std::vector<double> dense_row(std::size_t r) const;
    double at(std::size_t r, std::size_t c) const;

    FeatureMatrix select_rows(std::span<const std::size_t> rows) const;
    FeatureMatrix select_columns(std::span<const std::size_t> cols) const;
    /// Every stored entry > 0 becomes 1; others are dropped.
    FeatureMatrix binarized() const;

    bool operator==(const FeatureMatrix&) const = default;

private:
    std::vector<ColumnInfo> columns_;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::uint32_t> col_idx_;
    std::vector<double> values_;
};

/// Presence x class chi-square without continuity correction.
std::vector<double> chi2_scores(const FeatureMatrix& X, std::span<const int> y);
/// Direct sum of (O-E)^2/E over a 2x2 table [[a,b],[c,d]]; 0 when a marginal is 0.
double chi2_2x2(double a, double b, double c, double d);

/// One-way ANOVA F. Zero within-group variance yields +inf when the group
/// means differ and 0 otherwise.
std::vector<double> anova_f_scores(const FeatureMatrix& X, std::span<const int> y);

/// Ascending indices of the k largest scores; ties go to the lower index.
std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k);

enum class Selector { none, chi2, anova };
std::string_view to_string(Selector s);
Selector parse_selector(std::string_view s);

inline constexpr std::size_t kAgeIntervals = 4;

struct MetaFeatureSet {
    double avg_chars_per_consult = 0;
    std::array<std::size_t, kAgeIntervals> consults_per_age_interval{};
    double lexical_diversity = 0;
    std::string most_visited_location = "NONE";
    std::map<std::string, std::size_t> relation_counts;
    Sex gender = Sex::unknown;

    bool operator==(const MetaFeatureSet&) const = default;
};

/// Interval i holds consults with age in [i, i+1) years; older consults are not counted.
MetaFeatureSet meta_features(const ChildRecord& child, const std::unordered_set<std::string>& stopwords);

/// Fixed column layout for summarizing features; the location and relation
/// dictionaries come from the training children.
class MetaEncoder {
public:
    MetaEncoder() = default;
    MetaEncoder(std::span<const ChildRecord* const> children, std::unordered_set<std::string> stopwords);

    std::vector<ColumnInfo> columns() const;
    std::vector<double> encode(const ChildRecord& child) const;

    Json to_json() const;
    static MetaEncoder from_json(const Json& j);
    bool operator==(const MetaEncoder&) const = default;

private:
    std::vector<std::string> locations_;
    std::vector<std::string> relation_types_;
    std::vector<std::string> stopwords_; // sorted, for a stable artifact
    std::unordered_set<std::string> stopword_set_;
};

struct StructuredVector {
    std::vector<double> values;
    std::vector<std::string> names;
};

/// Counts, pass-through numerics and one-hot categoricals. Categorical
/// dictionaries come from the training children; unseen values encode as zeros.
class StructuredEncoder {
public:
    StructuredEncoder() = default;
    explicit StructuredEncoder(std::span<const ChildRecord* const> children);

    std::vector<ColumnInfo> columns() const;
    StructuredVector encode(const ChildRecord& child) const;

    Json to_json() const;
    static StructuredEncoder from_json(const Json& j);
    bool operator==(const StructuredEncoder&) const = default;

private:
    std::map<std::string, std::vector<std::string>> dictionaries_; // category -> sorted values
};

/// Per-category value of one child, ignoring categorical categories.
double structured_value(const ChildRecord& child, ObservationCategory category);

/// Everything needed to turn (terms, child) into a feature row; frozen after fitting.
struct FeatureSpace {
    bool use_terms = true;
    Vocabulary vocab;
    WeightScheme scheme;
    std::vector<std::size_t> selected; ///< vocabulary indices, ascending
    bool include_meta = false;
    MetaEncoder meta;
    bool include_structured = false;
    StructuredEncoder structured;

    std::vector<ColumnInfo> columns() const;
    std::size_t n_cols() const;

    /// Row layout: [selected terms][meta][structured].
    SparseVector encode(const TermSequence& doc, const ChildRecord& child) const;

    Json to_json() const;
    static FeatureSpace from_json(const Json& j);
    bool operator==(const FeatureSpace&) const = default;
};

struct FeatureSpaceOptions {
    bool use_terms = true;
    WeightScheme scheme;
    std::optional<std::size_t> vocab_top_k;
    std::size_t min_df = 1;
    Selector selector = Selector::none;
    std::size_t k_features = 0; ///< ignored when selector is none
    bool include_meta = false;
    bool include_structured = false;
    std::unordered_set<std::string> stopwords;
};

/// Fits vocabulary, selector and encoders on training rows only.
FeatureSpace fit_feature_space(std::span<const TermSequence* const> docs,
                               std::span<const ChildRecord* const> children, std::span<const int> labels,
                               const FeatureSpaceOptions& options, int jobs = 1);

/// Stacks encode() over the rows; OpenMP-parallel unless jobs == 1.
FeatureMatrix assemble(const FeatureSpace& space, std::span<const TermSequence* const> docs,
                       std::span<const ChildRecord* const> children, int jobs = 1);

} // namespace zsl
