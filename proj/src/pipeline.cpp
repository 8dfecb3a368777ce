#include "zsl/pipeline.hpp"

#include "zsl/error.hpp"
#include "zsl/parallel.hpp"
#include "zsl/table.hpp"

#include <algorithm>
#include <cmath>

namespace zsl {

namespace {

std::vector<std::string> sorted(const std::unordered_set<std::string>& s) {
    std::vector<std::string> v(s.begin(), s.end());
    std::sort(v.begin(), v.end());
    return v;
}

std::unordered_set<std::string> to_set(const Json& j) {
    std::unordered_set<std::string> s;
    for (const auto& w : j) {
        s.insert(w.get<std::string>());
    }
    return s;
}

} // namespace

Json prep_to_json(const PrepConfig& prep) {
    Json rules = Json::array();
    for (const auto& r : prep.rules) {
        rules.push_back(Json{{"pattern", r.pattern}, {"replacement", r.replacement}, {"note", r.note}});
    }
    return Json{{"rules", rules},
                {"stopwords", sorted(prep.stopwords)},
                {"negation_whitelist", sorted(prep.negation_whitelist)},
                {"ngram_min", prep.ngram_min},
                {"ngram_max", prep.ngram_max},
                {"stemming", prep.stemming}};
}

PrepConfig prep_from_json(const Json& j) {
    PrepConfig p = PrepConfig::dutch_defaults();
    if (j.contains("rules")) {
        p.rules.clear();
        for (const auto& r : j["rules"]) {
            p.rules.push_back({r.at("pattern").get<std::string>(), r.at("replacement").get<std::string>(),
                               r.value("note", std::string{})});
        }
    }
    if (j.contains("stopwords")) {
        p.stopwords = to_set(j["stopwords"]);
    }
    if (j.contains("negation_whitelist")) {
        p.negation_whitelist = to_set(j["negation_whitelist"]);
    }
    p.ngram_min = j.value("ngram_min", p.ngram_min);
    p.ngram_max = j.value("ngram_max", p.ngram_max);
    p.stemming = j.value("stemming", p.stemming);
    p.validate();
    return p;
}

FeatureSpaceOptions MemberConfig::feature_options(const PrepConfig& prep) const {
    FeatureSpaceOptions o;
    o.use_terms = use_terms;
    o.scheme = scheme;
    o.vocab_top_k = vocab_top_k;
    o.min_df = min_df;
    o.selector = selector;
    o.k_features = k_features;
    o.include_meta = include_meta;
    o.include_structured = include_structured;
    o.stopwords = prep.stopwords;
    return o;
}

Json MemberConfig::to_json() const {
    Json j{{"terms", use_terms},
           {"scheme", scheme.to_json()},
           {"min_df", min_df},
           {"selector", to_string(selector)},
           {"k_features", k_features},
           {"meta", include_meta},
           {"structured", include_structured},
           {"model", model.to_json()}};
    j["vocab_top_k"] = vocab_top_k ? Json(*vocab_top_k) : Json(nullptr);
    return j;
}

MemberConfig MemberConfig::from_json(const Json& j) {
    MemberConfig m;
    m.use_terms = j.value("terms", m.use_terms);
    if (j.contains("scheme")) {
        m.scheme = WeightScheme::from_json(j["scheme"]);
    } else if (j.contains("weighting")) {
        m.scheme.kind = parse_weighting(j["weighting"].get<std::string>());
    }
    if (j.contains("vocab_top_k") && !j["vocab_top_k"].is_null()) {
        m.vocab_top_k = j["vocab_top_k"].get<std::size_t>();
    }
    m.min_df = j.value("min_df", m.min_df);
    m.selector = parse_selector(j.value("selector", std::string(to_string(m.selector))));
    m.k_features = j.value("k_features", m.k_features);
    m.include_meta = j.value("meta", m.include_meta);
    m.include_structured = j.value("structured", m.include_structured);
    if (j.contains("model")) {
        m.model = ModelSpec::from_json(j["model"]);
    }
    if (!m.use_terms && !m.include_meta && !m.include_structured) {
        throw ConfigError("a member needs terms, meta or structured features");
    }
    if (m.selector != Selector::none && m.k_features == 0) {
        throw ConfigError("k_features must be >= 1 when a selector is set");
    }
    return m;
}

void PipelineConfig::validate() const {
    prep.validate();
    if (members.empty() || members.size() > 2) {
        throw ConfigError("a pipeline has one or two members");
    }
    if (weights.size() != members.size()) {
        throw ConfigError("one ensemble weight per member is required");
    }
    double total = 0;
    for (double w : weights) {
        if (!(w >= 0)) {
            throw ConfigError("ensemble weights must be non-negative");
        }
        total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("ensemble weights must sum to 1");
    }
    if (!(threshold >= 0 && threshold <= 1)) {
        throw ConfigError("threshold must lie in [0,1]");
    }
    for (const auto& m : members) {
        m.model.validate();
    }
}

Json PipelineConfig::to_json() const {
    Json ms = Json::array();
    for (const auto& m : members) {
        ms.push_back(m.to_json());
    }
    return Json{{"prep", prep_to_json(prep)},
                {"members", ms},
                {"weights", weights},
                {"threshold", threshold},
                {"seed", seed}};
}

PipelineConfig PipelineConfig::from_json(const Json& j) {
    PipelineConfig c;
    if (j.contains("prep")) {
        c.prep = prep_from_json(j["prep"]);
    }
    if (j.contains("members")) {
        c.members.clear();
        for (const auto& m : j["members"]) {
            c.members.push_back(MemberConfig::from_json(m));
        }
    }
    if (j.contains("weights")) {
        c.weights = j["weights"].get<std::vector<double>>();
    } else {
        c.weights.assign(c.members.size(), c.members.empty() ? 0.0 : 1.0 / static_cast<double>(c.members.size()));
    }
    c.threshold = j.value("threshold", c.threshold);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    Json j;
    try {
        j = Json::parse(read_file(path));
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    if (j.contains("prep")) {
        auto& p = j["prep"];
        const auto base = path.parent_path();
        if (p.contains("rules_file")) {
            const auto rules = load_rules(base / p["rules_file"].get<std::string>());
            Json arr = Json::array();
            for (const auto& r : rules) {
                arr.push_back(Json{{"pattern", r.pattern}, {"replacement", r.replacement}, {"note", r.note}});
            }
            p["rules"] = arr;
            p.erase("rules_file");
        }
        if (p.contains("stopwords_file")) {
            p["stopwords"] = sorted(load_stopwords(base / p["stopwords_file"].get<std::string>()));
            p.erase("stopwords_file");
        }
    }
    try {
        return from_json(j);
    } catch (const Json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

TermSequence child_document(const ChildRecord& child, const Preprocessor& prep) {
    TermSequence doc;
    for (const auto& c : child.consults) {
        auto terms = prep(c.text);
        doc.insert(doc.end(), std::make_move_iterator(terms.begin()), std::make_move_iterator(terms.end()));
    }
    return doc;
}

PreparedCorpus prepare_corpus(const Corpus& corpus, const PrepConfig& prep, int jobs) {
    const Preprocessor p(prep);
    std::vector<std::string_view> texts;
    std::vector<std::size_t> owner;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (const auto& c : corpus[i].consults) {
            texts.push_back(c.text);
            owner.push_back(i);
        }
    }
    auto processed = preprocess_all(p, texts, jobs);
    PreparedCorpus out;
    out.corpus = &corpus;
    out.docs.resize(corpus.size());
    for (std::size_t k = 0; k < processed.size(); ++k) {
        auto& doc = out.docs[owner[k]];
        doc.insert(doc.end(), std::make_move_iterator(processed[k].begin()),
                   std::make_move_iterator(processed[k].end()));
    }
    out.labels = derive_labels(corpus);
    return out;
}

PipelineModel::PipelineModel(PipelineConfig config, std::vector<FeatureSpace> spaces,
                             std::vector<TrainedModel> models)
    : config_(std::move(config)), spaces_(std::move(spaces)), models_(std::move(models)),
      prep_(std::make_shared<Preprocessor>(config_.prep)) {
    if (spaces_.size() != config_.members.size() || models_.size() != config_.members.size()) {
        throw ArgumentError("pipeline model: one feature space and model per member");
    }
    for (std::size_t m = 0; m < models_.size(); ++m) {
        if (models_[m].n_features() != spaces_[m].n_cols()) {
            throw DataError("pipeline model: member " + std::to_string(m) +
                            " model width differs from its feature space");
        }
    }
}

void PipelineModel::set_model_version(std::uint64_t v) {
    model_version_ = v;
    for (auto& m : models_) {
        m.set_model_version(v);
    }
}

double PipelineModel::score(const TermSequence& doc, const ChildRecord& child) const {
    std::vector<double> s(models_.size());
    for (std::size_t m = 0; m < models_.size(); ++m) {
        s[m] = models_[m].score(spaces_[m].encode(doc, child));
    }
    return ensemble_score(s, config_.weights);
}

double PipelineModel::score(const ChildRecord& child) const {
    return score(child_document(child, *prep_), child);
}

std::vector<std::vector<double>> PipelineModel::member_scores(const PreparedCorpus& data,
                                                              std::span<const std::size_t> rows, int jobs) const {
    std::vector<const TermSequence*> docs;
    std::vector<const ChildRecord*> children;
    for (auto r : rows) {
        docs.push_back(&data.docs[r]);
        children.push_back(&(*data.corpus)[r]);
    }
    std::vector<std::vector<double>> out;
    for (std::size_t m = 0; m < models_.size(); ++m) {
        const auto X = assemble(spaces_[m], docs, children, jobs);
        out.push_back(models_[m].score_all(X, jobs));
    }
    return out;
}

std::vector<double> PipelineModel::score_rows(const PreparedCorpus& data, std::span<const std::size_t> rows,
                                              int jobs) const {
    const auto per_member = member_scores(data, rows, jobs);
    std::vector<double> out(rows.size());
    std::vector<double> s(models_.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t m = 0; m < models_.size(); ++m) {
            s[m] = per_member[m][i];
        }
        out[i] = ensemble_score(s, config_.weights);
    }
    return out;
}

Json PipelineModel::to_json() const {
    Json members = Json::array();
    for (std::size_t m = 0; m < models_.size(); ++m) {
        members.push_back(Json{{"features", spaces_[m].to_json()}, {"model", models_[m].to_json()}});
    }
    return Json{{"format", "zsl-pipeline"},
                {"format_version", 1},
                {"model_version", model_version_},
                {"config", config_.to_json()},
                {"members", members}};
}

PipelineModel PipelineModel::from_json(const Json& j) {
    if (j.value("format", std::string{}) != "zsl-pipeline" || j.value("format_version", 0) != 1) {
        throw DataError("not a pipeline artifact of a supported version");
    }
    try {
        auto config = PipelineConfig::from_json(j.at("config"));
        std::vector<FeatureSpace> spaces;
        std::vector<TrainedModel> models;
        for (const auto& m : j.at("members")) {
            spaces.push_back(FeatureSpace::from_json(m.at("features")));
            models.push_back(TrainedModel::from_json(m.at("model")));
        }
        PipelineModel p(std::move(config), std::move(spaces), std::move(models));
        p.set_model_version(j.at("model_version").get<std::uint64_t>());
        return p;
    } catch (const Json::exception& e) {
        throw DataError(std::string("pipeline artifact: ") + e.what());
    }
}

void PipelineModel::save(const std::filesystem::path& path) const {
    write_file(path, to_json().dump(1) + "\n");
}

PipelineModel PipelineModel::load(const std::filesystem::path& path) {
    try {
        return from_json(Json::parse(read_file(path)));
    } catch (const Json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

PipelineModel fit_pipeline(const PipelineConfig& config, std::span<const TermSequence* const> docs,
                           std::span<const ChildRecord* const> children, std::span<const int> labels,
                           std::uint64_t seed, int jobs) {
    config.validate();
    std::vector<FeatureSpace> spaces;
    std::vector<TrainedModel> models;
    for (std::size_t m = 0; m < config.members.size(); ++m) {
        const auto& member = config.members[m];
        spaces.push_back(fit_feature_space(docs, children, labels, member.feature_options(config.prep), jobs));
        const auto X = assemble(spaces.back(), docs, children, jobs);
        ModelSpec spec = member.model;
        spec.seed = derive_seed(seed, m);
        models.push_back(train_model(X, labels, spec, jobs));
    }
    return PipelineModel(config, std::move(spaces), std::move(models));
}

PipelineModel fit_pipeline(const PipelineConfig& config, const PreparedCorpus& data,
                           std::span<const std::size_t> rows, std::span<const int> labels, std::uint64_t seed,
                           int jobs) {
    if (rows.size() != labels.size()) {
        throw ArgumentError("fit_pipeline: one label per row is required");
    }
    std::vector<const TermSequence*> docs;
    std::vector<const ChildRecord*> children;
    for (auto r : rows) {
        docs.push_back(&data.docs.at(r));
        children.push_back(&(*data.corpus)[r]);
    }
    return fit_pipeline(config, docs, children, labels, seed, jobs);
}

} // namespace zsl
