#include "zsl/vectorize.hpp"

#include "zsl/error.hpp"

#include "detail/utf8.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace zsl {

namespace {

template <class T>
std::vector<T> json_vector(const Json& j, const char* key) {
    return j.at(key).get<std::vector<T>>();
}

std::vector<const TermSequence*> pointers(std::span<const TermSequence> docs) {
    std::vector<const TermSequence*> out;
    out.reserve(docs.size());
    for (const auto& d : docs) {
        out.push_back(&d);
    }
    return out;
}

} // namespace

std::optional<std::size_t> Vocabulary::find(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void Vocabulary::reindex() {
    index_.clear();
    index_.reserve(terms.size());
    for (std::size_t i = 0; i < terms.size(); ++i) {
        index_.emplace(terms[i], i);
    }
}

bool Vocabulary::operator==(const Vocabulary& o) const {
    return terms == o.terms && df == o.df && df_pos == o.df_pos && df_neg == o.df_neg &&
           n_docs == o.n_docs && n_pos == o.n_pos && n_neg == o.n_neg && avgdl == o.avgdl;
}

Json Vocabulary::to_json() const {
    return Json{{"terms", terms}, {"df", df},         {"df_pos", df_pos}, {"df_neg", df_neg},
                {"n_docs", n_docs}, {"n_pos", n_pos}, {"n_neg", n_neg},   {"avgdl", avgdl}};
}

Vocabulary Vocabulary::from_json(const Json& j) {
    Vocabulary v;
    v.terms = json_vector<std::string>(j, "terms");
    v.df = json_vector<std::size_t>(j, "df");
    v.df_pos = json_vector<std::size_t>(j, "df_pos");
    v.df_neg = json_vector<std::size_t>(j, "df_neg");
    v.n_docs = j.at("n_docs").get<std::size_t>();
    v.n_pos = j.at("n_pos").get<std::size_t>();
    v.n_neg = j.at("n_neg").get<std::size_t>();
    v.avgdl = j.at("avgdl").get<double>();
    if (v.df.size() != v.terms.size() || v.df_pos.size() != v.terms.size() ||
        v.df_neg.size() != v.terms.size()) {
        throw DataError("vocabulary artifact: array lengths differ");
    }
    v.reindex();
    return v;
}

Vocabulary build_vocabulary(std::span<const TermSequence* const> docs, std::span<const int> labels,
                            std::optional<std::size_t> top_k, std::size_t min_df) {
    if (!labels.empty() && labels.size() != docs.size()) {
        throw ArgumentError("build_vocabulary: labels and documents differ in length");
    }
    struct Stats {
        std::size_t total = 0;
        std::size_t df = 0;
        std::size_t df_pos = 0;
        std::size_t df_neg = 0;
        std::size_t last_doc = static_cast<std::size_t>(-1);
    };
    std::unordered_map<std::string, Stats> stats;
    Vocabulary v;
    v.n_docs = docs.size();
    std::size_t total_len = 0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        const bool labelled = !labels.empty();
        const bool pos = labelled && labels[d] == 1;
        if (labelled) {
            (pos ? v.n_pos : v.n_neg) += 1;
        }
        total_len += docs[d]->size();
        for (const auto& t : *docs[d]) {
            Stats& s = stats[t];
            ++s.total;
            if (s.last_doc != d) {
                s.last_doc = d;
                ++s.df;
                if (labelled) {
                    (pos ? s.df_pos : s.df_neg) += 1;
                }
            }
        }
    }
    v.avgdl = v.n_docs > 0 ? static_cast<double>(total_len) / static_cast<double>(v.n_docs) : 0.0;

    std::vector<std::pair<const std::string*, const Stats*>> ranked;
    ranked.reserve(stats.size());
    for (const auto& [term, s] : stats) {
        if (s.df >= min_df) {
            ranked.emplace_back(&term, &s);
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second->total != b.second->total) {
            return a.second->total > b.second->total;
        }
        return *a.first < *b.first;
    });
    if (top_k && *top_k < ranked.size()) {
        ranked.resize(*top_k);
    }
    for (const auto& [term, s] : ranked) {
        v.terms.push_back(*term);
        v.df.push_back(s->df);
        v.df_pos.push_back(s->df_pos);
        v.df_neg.push_back(s->df_neg);
    }
    v.reindex();
    return v;
}

Vocabulary build_vocabulary(std::span<const TermSequence> docs, std::span<const int> labels,
                            std::optional<std::size_t> top_k, std::size_t min_df) {
    const auto ptrs = pointers(docs);
    return build_vocabulary(std::span<const TermSequence* const>(ptrs), labels, top_k, min_df);
}

std::string_view to_string(Weighting w) {
    switch (w) {
    case Weighting::boolean: return "boolean";
    case Weighting::count: return "count";
    case Weighting::tfidf_augmented: return "tfidf_augmented";
    case Weighting::delta_tfidf: return "delta_tfidf";
    case Weighting::bm25: return "bm25";
    }
    return "?";
}

Weighting parse_weighting(std::string_view s) {
    for (auto w : {Weighting::boolean, Weighting::count, Weighting::tfidf_augmented, Weighting::delta_tfidf,
                   Weighting::bm25}) {
        if (to_string(w) == s) {
            return w;
        }
    }
    if (s == "tfidf" || s == "tf-idf") {
        return Weighting::tfidf_augmented;
    }
    throw ConfigError("unknown weighting '" + std::string(s) + "'");
}

Json WeightScheme::to_json() const {
    return Json{{"kind", to_string(kind)}, {"k1", k1}, {"b", b}, {"smoothing", smoothing}};
}

WeightScheme WeightScheme::from_json(const Json& j) {
    WeightScheme w;
    w.kind = parse_weighting(j.at("kind").get<std::string>());
    w.k1 = j.value("k1", w.k1);
    w.b = j.value("b", w.b);
    w.smoothing = j.value("smoothing", w.smoothing);
    if (w.b < 0 || w.b > 1 || w.k1 < 0 || w.smoothing < 0) {
        throw ConfigError("weight scheme parameters out of range");
    }
    return w;
}

double SparseVector::get(std::uint32_t i) const {
    auto it = std::lower_bound(indices.begin(), indices.end(), i);
    if (it == indices.end() || *it != i) {
        return 0.0;
    }
    return values[static_cast<std::size_t>(it - indices.begin())];
}

SparseVector weigh(const TermSequence& doc, const Vocabulary& vocab, const WeightScheme& scheme) {
    SparseVector out;
    if (doc.empty() || vocab.size() == 0) {
        return out;
    }
    if (scheme.kind == Weighting::delta_tfidf && (vocab.n_pos == 0 || vocab.n_neg == 0)) {
        throw ConfigError("delta_tfidf needs a vocabulary with both class counts");
    }

    std::vector<std::uint32_t> ids;
    ids.reserve(doc.size());
    for (const auto& t : doc) {
        if (auto i = vocab.find(t)) {
            ids.push_back(static_cast<std::uint32_t>(*i));
        }
    }
    std::sort(ids.begin(), ids.end());

    double max_tf = 0;
    if (scheme.kind == Weighting::tfidf_augmented) {
        std::unordered_map<std::string_view, std::size_t> counts;
        for (const auto& t : doc) {
            max_tf = std::max(max_tf, static_cast<double>(++counts[t]));
        }
    }
    const double dl = static_cast<double>(doc.size());
    const double n_docs = static_cast<double>(vocab.n_docs);

    for (std::size_t i = 0; i < ids.size();) {
        std::size_t j = i;
        while (j < ids.size() && ids[j] == ids[i]) {
            ++j;
        }
        const std::uint32_t id = ids[i];
        const double tf = static_cast<double>(j - i);
        const double df = static_cast<double>(vocab.df[id]);
        double w = 0;
        switch (scheme.kind) {
        case Weighting::boolean:
            w = 1.0;
            break;
        case Weighting::count:
            w = tf;
            break;
        case Weighting::tfidf_augmented:
            w = (0.5 + 0.5 * tf / max_tf) * std::log(n_docs / df);
            break;
        case Weighting::delta_tfidf: {
            const double s = scheme.smoothing;
            const double num = (static_cast<double>(vocab.df_neg[id]) + s) * static_cast<double>(vocab.n_pos);
            const double den = (static_cast<double>(vocab.df_pos[id]) + s) * static_cast<double>(vocab.n_neg);
            w = (num > 0 && den > 0) ? tf * std::log2(num / den) : 0.0;
            break;
        }
        case Weighting::bm25: {
            const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
            const double ratio = vocab.avgdl > 0 ? dl / vocab.avgdl : 1.0;
            w = idf * tf * (scheme.k1 + 1.0) / (tf + scheme.k1 * (1.0 - scheme.b + scheme.b * ratio));
            break;
        }
        }
        if (w != 0.0 && std::isfinite(w)) {
            out.indices.push_back(id);
            out.values.push_back(w);
        }
        i = j;
    }
    return out;
}

std::string_view to_string(ColumnOrigin o) {
    switch (o) {
    case ColumnOrigin::term: return "term";
    case ColumnOrigin::summarizing: return "summarizing";
    case ColumnOrigin::structured: return "structured";
    }
    return "?";
}

FeatureMatrix::FeatureMatrix(std::vector<ColumnInfo> columns) : columns_(std::move(columns)) {}

void FeatureMatrix::append_row(const SparseVector& row) {
    std::int64_t prev = -1;
    for (std::size_t k = 0; k < row.indices.size(); ++k) {
        const auto c = row.indices[k];
        if (c >= columns_.size() || static_cast<std::int64_t>(c) <= prev) {
            throw ArgumentError("append_row: column indices must ascend within [0, n_cols)");
        }
        prev = c;
        if (row.values[k] != 0.0) {
            col_idx_.push_back(c);
            values_.push_back(row.values[k]);
        }
    }
    row_ptr_.push_back(values_.size());
}

std::span<const std::uint32_t> FeatureMatrix::row_indices(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
}

std::span<const double> FeatureMatrix::row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
}

SparseVector FeatureMatrix::row(std::size_t r) const {
    const auto idx = row_indices(r);
    const auto val = row_values(r);
    return SparseVector{{idx.begin(), idx.end()}, {val.begin(), val.end()}};
}

std::vector<double> FeatureMatrix::dense_row(std::size_t r) const {
    std::vector<double> out(n_cols(), 0.0);
    const auto idx = row_indices(r);
    const auto val = row_values(r);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        out[idx[k]] = val[k];
    }
    return out;
}

double FeatureMatrix::at(std::size_t r, std::size_t c) const {
    const auto idx = row_indices(r);
    auto it = std::lower_bound(idx.begin(), idx.end(), static_cast<std::uint32_t>(c));
    if (it == idx.end() || *it != c) {
        return 0.0;
    }
    return row_values(r)[static_cast<std::size_t>(it - idx.begin())];
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> rows) const {
    FeatureMatrix out(columns_);
    for (auto r : rows) {
        if (r >= n_rows()) {
            throw ArgumentError("select_rows: row out of range");
        }
        out.append_row(row(r));
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const std::size_t> cols) const {
    std::vector<std::int64_t> remap(n_cols(), -1);
    std::vector<ColumnInfo> infos;
    for (std::size_t k = 0; k < cols.size(); ++k) {
        if (cols[k] >= n_cols() || (k > 0 && cols[k] <= cols[k - 1])) {
            throw ArgumentError("select_columns: indices must ascend within [0, n_cols)");
        }
        remap[cols[k]] = static_cast<std::int64_t>(k);
        infos.push_back(columns_[cols[k]]);
    }
    FeatureMatrix out(std::move(infos));
    for (std::size_t r = 0; r < n_rows(); ++r) {
        SparseVector v;
        const auto idx = row_indices(r);
        const auto val = row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (remap[idx[k]] >= 0) {
                v.indices.push_back(static_cast<std::uint32_t>(remap[idx[k]]));
                v.values.push_back(val[k]);
            }
        }
        out.append_row(v);
    }
    return out;
}

FeatureMatrix FeatureMatrix::binarized() const {
    FeatureMatrix out(columns_);
    for (std::size_t r = 0; r < n_rows(); ++r) {
        SparseVector v;
        const auto idx = row_indices(r);
        const auto val = row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (val[k] > 0) {
                v.indices.push_back(idx[k]);
                v.values.push_back(1.0);
            }
        }
        out.append_row(v);
    }
    return out;
}

double chi2_2x2(double a, double b, double c, double d) {
    const double n = a + b + c + d;
    const double row1 = a + b;
    const double row2 = c + d;
    const double col1 = a + c;
    const double col2 = b + d;
    if (row1 == 0 || row2 == 0 || col1 == 0 || col2 == 0) {
        return 0.0;
    }
    const double obs[4] = {a, b, c, d};
    const double exp[4] = {row1 * col1 / n, row1 * col2 / n, row2 * col1 / n, row2 * col2 / n};
    double chi = 0;
    for (int i = 0; i < 4; ++i) {
        chi += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
    }
    return chi;
}

std::vector<double> chi2_scores(const FeatureMatrix& X, std::span<const int> y) {
    if (y.size() != X.n_rows()) {
        throw ArgumentError("chi2_scores: label count differs from row count");
    }
    std::vector<double> scores(X.n_cols(), 0.0);
    const auto n_pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    const std::size_t n_neg = y.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        spdlog::warn("chi2_scores: single-class labels, all scores are 0");
        return scores;
    }
    std::vector<std::size_t> present_pos(X.n_cols(), 0);
    std::vector<std::size_t> present_neg(X.n_cols(), 0);
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        const auto idx = X.row_indices(r);
        const auto val = X.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (val[k] > 0) {
                ++(y[r] == 1 ? present_pos : present_neg)[idx[k]];
            }
        }
    }
    for (std::size_t c = 0; c < X.n_cols(); ++c) {
        const auto a = static_cast<double>(present_pos[c]);
        const auto b = static_cast<double>(present_neg[c]);
        scores[c] = chi2_2x2(a, b, static_cast<double>(n_pos) - a, static_cast<double>(n_neg) - b);
    }
    return scores;
}

std::vector<double> anova_f_scores(const FeatureMatrix& X, std::span<const int> y) {
    if (y.size() != X.n_rows()) {
        throw ArgumentError("anova_f_scores: label count differs from row count");
    }
    std::array<std::size_t, 2> n{};
    for (int v : y) {
        ++n[v == 1 ? 1 : 0];
    }
    if (n[0] < 2 || n[1] < 2) {
        throw ArgumentError("anova_f_scores: each class needs at least two rows");
    }
    const std::size_t cols = X.n_cols();
    std::array<std::vector<double>, 2> sum{std::vector<double>(cols, 0.0), std::vector<double>(cols, 0.0)};
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        const int g = y[r] == 1 ? 1 : 0;
        const auto idx = X.row_indices(r);
        const auto val = X.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            sum[g][idx[k]] += val[k];
        }
    }
    std::array<std::vector<double>, 2> mean{std::vector<double>(cols), std::vector<double>(cols)};
    for (int g = 0; g < 2; ++g) {
        for (std::size_t c = 0; c < cols; ++c) {
            mean[g][c] = sum[g][c] / static_cast<double>(n[g]);
        }
    }
    // Within-group squares: stored entries exactly, implicit zeros in bulk.
    std::vector<double> ssw(cols, 0.0);
    std::array<std::vector<std::size_t>, 2> nnz{std::vector<std::size_t>(cols, 0),
                                                 std::vector<std::size_t>(cols, 0)};
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        const int g = y[r] == 1 ? 1 : 0;
        const auto idx = X.row_indices(r);
        const auto val = X.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const double d = val[k] - mean[g][idx[k]];
            ssw[idx[k]] += d * d;
            ++nnz[g][idx[k]];
        }
    }
    const double n_total = static_cast<double>(n[0] + n[1]);
    std::vector<double> scores(cols, 0.0);
    for (std::size_t c = 0; c < cols; ++c) {
        for (int g = 0; g < 2; ++g) {
            ssw[c] += static_cast<double>(n[g] - nnz[g][c]) * mean[g][c] * mean[g][c];
        }
        const double grand = (sum[0][c] + sum[1][c]) / n_total;
        double ssb = 0;
        for (int g = 0; g < 2; ++g) {
            ssb += static_cast<double>(n[g]) * (mean[g][c] - grand) * (mean[g][c] - grand);
        }
        if (ssw[c] <= 0.0) {
            scores[c] = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
        } else {
            scores[c] = ssb / (ssw[c] / (n_total - 2.0));
        }
    }
    return scores;
}

std::vector<std::size_t> select_top_k(std::span<const double> scores, std::size_t k) {
    if (k > scores.size()) {
        throw ArgumentError("select_top_k: k exceeds the number of columns");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto key = [&](std::size_t i) { return std::isnan(scores[i]) ? -std::numeric_limits<double>::infinity() : scores[i]; };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double ka = key(a);
                          const double kb = key(b);
                          return ka != kb ? ka > kb : a < b;
                      });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

std::string_view to_string(Selector s) {
    switch (s) {
    case Selector::none: return "none";
    case Selector::chi2: return "chi2";
    case Selector::anova: return "anova";
    }
    return "?";
}

Selector parse_selector(std::string_view s) {
    for (auto v : {Selector::none, Selector::chi2, Selector::anova}) {
        if (to_string(v) == s) {
            return v;
        }
    }
    throw ConfigError("unknown selector '" + std::string(s) + "'");
}

MetaFeatureSet meta_features(const ChildRecord& child, const std::unordered_set<std::string>& stopwords) {
    MetaFeatureSet m;
    m.gender = child.sex;
    for (const auto& r : child.relations) {
        ++m.relation_counts[r.relation_type];
    }
    if (child.consults.empty()) {
        return m;
    }
    std::size_t chars = 0;
    std::map<std::string, std::size_t> visits;
    std::unordered_set<std::string> distinct;
    std::size_t total = 0;
    for (const auto& n : child.consults) {
        chars += detail::utf8_decode(n.text).size();
        ++visits[n.location];
        const double age = years_between(child.birth_date, n.observation_date);
        if (age >= 0 && age < static_cast<double>(kAgeIntervals)) {
            ++m.consults_per_age_interval[static_cast<std::size_t>(age)];
        }
        for (auto& t : tokenize(normalize_characters(n.text))) {
            if (!stopwords.contains(t)) {
                ++total;
                distinct.insert(std::move(t));
            }
        }
    }
    m.avg_chars_per_consult = static_cast<double>(chars) / static_cast<double>(child.consults.size());
    m.lexical_diversity = total > 0 ? static_cast<double>(distinct.size()) / static_cast<double>(total) : 0.0;
    std::size_t best = 0;
    for (const auto& [loc, count] : visits) {
        if (count > best) {
            best = count;
            m.most_visited_location = loc;
        }
    }
    return m;
}

MetaEncoder::MetaEncoder(std::span<const ChildRecord* const> children, std::unordered_set<std::string> stopwords)
    : stopwords_(stopwords.begin(), stopwords.end()), stopword_set_(std::move(stopwords)) {
    std::sort(stopwords_.begin(), stopwords_.end());
    std::set<std::string> locs;
    std::set<std::string> rels;
    for (const auto* c : children) {
        const auto m = meta_features(*c, stopword_set_);
        locs.insert(m.most_visited_location);
        for (const auto& [type, count] : m.relation_counts) {
            rels.insert(type);
        }
    }
    locations_.assign(locs.begin(), locs.end());
    relation_types_.assign(rels.begin(), rels.end());
}

std::vector<ColumnInfo> MetaEncoder::columns() const {
    std::vector<ColumnInfo> cols;
    auto add = [&](std::string name) { cols.push_back({"meta:" + std::move(name), ColumnOrigin::summarizing}); };
    add("avg_chars_per_consult");
    for (std::size_t i = 0; i < kAgeIntervals; ++i) {
        add("consults_age_" + std::to_string(i) + "_" + std::to_string(i + 1));
    }
    add("lexical_diversity");
    for (const auto& l : locations_) {
        add("location=" + l);
    }
    for (const auto& r : relation_types_) {
        add("relation=" + r);
    }
    add("sex=male");
    add("sex=female");
    return cols;
}

std::vector<double> MetaEncoder::encode(const ChildRecord& child) const {
    const auto m = meta_features(child, stopword_set_);
    std::vector<double> v;
    v.reserve(8 + locations_.size() + relation_types_.size());
    v.push_back(m.avg_chars_per_consult);
    for (auto c : m.consults_per_age_interval) {
        v.push_back(static_cast<double>(c));
    }
    v.push_back(m.lexical_diversity);
    for (const auto& l : locations_) {
        v.push_back(l == m.most_visited_location ? 1.0 : 0.0);
    }
    for (const auto& r : relation_types_) {
        auto it = m.relation_counts.find(r);
        v.push_back(it == m.relation_counts.end() ? 0.0 : static_cast<double>(it->second));
    }
    v.push_back(m.gender == Sex::male ? 1.0 : 0.0);
    v.push_back(m.gender == Sex::female ? 1.0 : 0.0);
    return v;
}

Json MetaEncoder::to_json() const {
    return Json{{"locations", locations_}, {"relation_types", relation_types_}, {"stopwords", stopwords_}};
}

MetaEncoder MetaEncoder::from_json(const Json& j) {
    MetaEncoder e;
    e.locations_ = json_vector<std::string>(j, "locations");
    e.relation_types_ = json_vector<std::string>(j, "relation_types");
    e.stopwords_ = json_vector<std::string>(j, "stopwords");
    e.stopword_set_ = {e.stopwords_.begin(), e.stopwords_.end()};
    return e;
}

double structured_value(const ChildRecord& child, ObservationCategory category) {
    double total = 0;
    std::size_t n = 0;
    const ObservationKind kind = kind_of(category);
    for (const auto& o : child.structured_observations) {
        if (o.category != category) {
            continue;
        }
        switch (kind) {
        case ObservationKind::count: {
            const auto v = o.numeric_value();
            total += v ? std::max(0.0, *v) : 1.0;
            break;
        }
        case ObservationKind::count_with_findings:
            total += is_no_finding(o.value) ? 0.0 : 1.0;
            break;
        case ObservationKind::numeric:
            if (const auto v = o.numeric_value()) {
                total += *v;
                ++n;
            }
            break;
        case ObservationKind::categorical:
            break;
        }
    }
    if (kind == ObservationKind::numeric) {
        return n > 0 ? total / static_cast<double>(n) : 0.0;
    }
    return total;
}

namespace {

/// Last observed value of a categorical category, if any.
std::optional<std::string> categorical_value(const ChildRecord& child, ObservationCategory category) {
    std::optional<std::string> out;
    for (const auto& o : child.structured_observations) {
        if (o.category == category && !o.value.empty()) {
            out = o.value;
        }
    }
    return out;
}

} // namespace

StructuredEncoder::StructuredEncoder(std::span<const ChildRecord* const> children) {
    for (auto cat : all_observation_categories()) {
        if (kind_of(cat) != ObservationKind::categorical) {
            continue;
        }
        std::set<std::string> values;
        for (const auto* c : children) {
            if (auto v = categorical_value(*c, cat)) {
                values.insert(*v);
            }
        }
        dictionaries_[std::string(to_string(cat))] = {values.begin(), values.end()};
    }
}

std::vector<ColumnInfo> StructuredEncoder::columns() const {
    std::vector<ColumnInfo> cols;
    for (auto cat : all_observation_categories()) {
        const std::string name(to_string(cat));
        if (kind_of(cat) != ObservationKind::categorical) {
            cols.push_back({"struct:" + name, ColumnOrigin::structured});
            continue;
        }
        auto it = dictionaries_.find(name);
        if (it == dictionaries_.end()) {
            continue;
        }
        for (const auto& v : it->second) {
            cols.push_back({"struct:" + name + "=" + v, ColumnOrigin::structured});
        }
    }
    return cols;
}

StructuredVector StructuredEncoder::encode(const ChildRecord& child) const {
    StructuredVector out;
    for (auto cat : all_observation_categories()) {
        const std::string name(to_string(cat));
        if (kind_of(cat) != ObservationKind::categorical) {
            out.values.push_back(structured_value(child, cat));
            out.names.push_back("struct:" + name);
            continue;
        }
        auto it = dictionaries_.find(name);
        if (it == dictionaries_.end()) {
            continue;
        }
        const auto value = categorical_value(child, cat);
        for (const auto& v : it->second) {
            out.values.push_back(value && *value == v ? 1.0 : 0.0);
            out.names.push_back("struct:" + name + "=" + v);
        }
    }
    return out;
}

Json StructuredEncoder::to_json() const { return Json{{"dictionaries", dictionaries_}}; }

StructuredEncoder StructuredEncoder::from_json(const Json& j) {
    StructuredEncoder e;
    e.dictionaries_ = j.at("dictionaries").get<std::map<std::string, std::vector<std::string>>>();
    return e;
}

std::vector<ColumnInfo> FeatureSpace::columns() const {
    std::vector<ColumnInfo> cols;
    if (use_terms) {
        for (auto i : selected) {
            cols.push_back({vocab.terms[i], ColumnOrigin::term});
        }
    }
    if (include_meta) {
        auto m = meta.columns();
        cols.insert(cols.end(), m.begin(), m.end());
    }
    if (include_structured) {
        auto s = structured.columns();
        cols.insert(cols.end(), s.begin(), s.end());
    }
    return cols;
}

std::size_t FeatureSpace::n_cols() const { return columns().size(); }

SparseVector FeatureSpace::encode(const TermSequence& doc, const ChildRecord& child) const {
    SparseVector out;
    std::uint32_t offset = 0;
    if (use_terms) {
        const SparseVector w = weigh(doc, vocab, scheme);
        for (std::size_t k = 0; k < w.indices.size(); ++k) {
            auto it = std::lower_bound(selected.begin(), selected.end(), static_cast<std::size_t>(w.indices[k]));
            if (it != selected.end() && *it == w.indices[k]) {
                out.indices.push_back(static_cast<std::uint32_t>(it - selected.begin()));
                out.values.push_back(w.values[k]);
            }
        }
        offset = static_cast<std::uint32_t>(selected.size());
    }
    auto append_dense = [&](const std::vector<double>& values) {
        for (std::size_t k = 0; k < values.size(); ++k) {
            if (values[k] != 0.0) {
                out.indices.push_back(offset + static_cast<std::uint32_t>(k));
                out.values.push_back(values[k]);
            }
        }
        offset += static_cast<std::uint32_t>(values.size());
    };
    if (include_meta) {
        append_dense(meta.encode(child));
    }
    if (include_structured) {
        append_dense(structured.encode(child).values);
    }
    return out;
}

Json FeatureSpace::to_json() const {
    Json j{{"use_terms", use_terms},
           {"scheme", scheme.to_json()},
           {"include_meta", include_meta},
           {"include_structured", include_structured}};
    if (use_terms) {
        j["vocabulary"] = vocab.to_json();
        j["selected"] = selected;
    }
    if (include_meta) {
        j["meta"] = meta.to_json();
    }
    if (include_structured) {
        j["structured"] = structured.to_json();
    }
    return j;
}

FeatureSpace FeatureSpace::from_json(const Json& j) {
    FeatureSpace f;
    f.use_terms = j.at("use_terms").get<bool>();
    f.scheme = WeightScheme::from_json(j.at("scheme"));
    f.include_meta = j.at("include_meta").get<bool>();
    f.include_structured = j.at("include_structured").get<bool>();
    if (f.use_terms) {
        f.vocab = Vocabulary::from_json(j.at("vocabulary"));
        f.selected = json_vector<std::size_t>(j, "selected");
        for (std::size_t k = 0; k < f.selected.size(); ++k) {
            if (f.selected[k] >= f.vocab.size() || (k > 0 && f.selected[k] <= f.selected[k - 1])) {
                throw DataError("feature space artifact: selected indices invalid");
            }
        }
    }
    if (f.include_meta) {
        f.meta = MetaEncoder::from_json(j.at("meta"));
    }
    if (f.include_structured) {
        f.structured = StructuredEncoder::from_json(j.at("structured"));
    }
    return f;
}

FeatureSpace fit_feature_space(std::span<const TermSequence* const> docs,
                               std::span<const ChildRecord* const> children, std::span<const int> labels,
                               const FeatureSpaceOptions& options, int jobs) {
    if (docs.size() != children.size() || labels.size() != children.size()) {
        throw ArgumentError("fit_feature_space: docs, children and labels differ in length");
    }
    FeatureSpace f;
    f.use_terms = options.use_terms;
    f.scheme = options.scheme;
    f.include_meta = options.include_meta;
    f.include_structured = options.include_structured;
    if (f.use_terms) {
        f.vocab = build_vocabulary(docs, labels, options.vocab_top_k, options.min_df);
        if (options.selector == Selector::none) {
            f.selected.resize(f.vocab.size());
            std::iota(f.selected.begin(), f.selected.end(), std::size_t{0});
        } else {
            FeatureSpace all = f;
            all.include_meta = false;
            all.include_structured = false;
            all.selected.resize(f.vocab.size());
            std::iota(all.selected.begin(), all.selected.end(), std::size_t{0});
            const FeatureMatrix X = assemble(all, docs, children, jobs);
            const auto scores = options.selector == Selector::chi2 ? chi2_scores(X, labels) : anova_f_scores(X, labels);
            f.selected = select_top_k(scores, std::min(options.k_features, scores.size()));
        }
    }
    if (f.include_meta) {
        f.meta = MetaEncoder(children, options.stopwords);
    }
    if (f.include_structured) {
        f.structured = StructuredEncoder(children);
    }
    return f;
}

FeatureMatrix assemble(const FeatureSpace& space, std::span<const TermSequence* const> docs,
                       std::span<const ChildRecord* const> children, int jobs) {
    if (docs.size() != children.size()) {
        throw ArgumentError("assemble: docs and children differ in length");
    }
    std::vector<SparseVector> rows(docs.size());
    const auto n = static_cast<long>(docs.size());
#pragma omp parallel for schedule(dynamic, 32) if (jobs > 1) num_threads(jobs > 1 ? jobs : 1)
    for (long i = 0; i < n; ++i) {
        const auto u = static_cast<std::size_t>(i);
        rows[u] = space.encode(*docs[u], *children[u]);
    }
    FeatureMatrix X(space.columns());
    for (const auto& r : rows) {
        X.append_row(r);
    }
    return X;
}

} // namespace zsl
