#include "zsl/service.hpp"

#include "zsl/error.hpp"
#include "zsl/eval.hpp"
#include "zsl/parallel.hpp"
#include "zsl/table.hpp"

#include "httplib.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <random>
#include <regex>
#include <unordered_set>

namespace zsl {

namespace fs = std::filesystem;

// ------------------------------------------------------------------- config

ServiceConfig ServiceConfig::from_json(const Json& j) {
    ServiceConfig c;
    c.bind_address = j.value("bind_address", c.bind_address);
    c.port = j.value("port", c.port);
    if (j.contains("threshold") && !j["threshold"].is_null()) {
        c.threshold = j["threshold"].get<double>();
    }
    c.retrain_interval = std::chrono::seconds(j.value("retrain_interval_seconds", std::int64_t{0}));
    c.state_dir = j.value("state_dir", c.state_dir.string());
    c.behind_tls_proxy = j.value("behind_tls_proxy", c.behind_tls_proxy);
    c.bearer_token = j.value("bearer_token", c.bearer_token);
    c.balance_base = j.value("balance_base", c.balance_base);
    c.jobs = j.value("jobs", c.jobs);
    return c;
}

void ServiceConfig::apply_environment() {
    auto env = [](const char* name) -> std::optional<std::string> {
        const char* v = std::getenv(name);
        if (v == nullptr || *v == '\0') {
            return std::nullopt;
        }
        return std::string(v);
    };
    try {
        if (auto v = env("ZSL_BIND")) {
            bind_address = *v;
        }
        if (auto v = env("ZSL_PORT")) {
            port = std::stoi(*v);
        }
        if (auto v = env("ZSL_THRESHOLD")) {
            threshold = std::stod(*v);
        }
        if (auto v = env("ZSL_RETRAIN_INTERVAL")) {
            retrain_interval = std::chrono::seconds(std::stoll(*v));
        }
        if (auto v = env("ZSL_STATE_DIR")) {
            state_dir = *v;
        }
        if (auto v = env("ZSL_TOKEN")) {
            bearer_token = *v;
        }
    } catch (const std::logic_error&) {
        throw ConfigError("malformed ZSL_* environment override");
    }
}

void ServiceConfig::validate() const {
    const bool loopback = bind_address == "127.0.0.1" || bind_address == "::1" || bind_address == "localhost";
    if (!loopback && !behind_tls_proxy) {
        throw ConfigError("refusing plaintext bind on " + bind_address +
                          "; terminate TLS in a proxy and set behind_tls_proxy");
    }
    if (port < 0 || port > 65535) {
        throw ConfigError("port out of range");
    }
    if (threshold && !(*threshold >= 0 && *threshold <= 1)) {
        throw ConfigError("threshold must lie in [0,1]");
    }
    if (retrain_interval.count() < 0) {
        throw ConfigError("retrain interval must be >= 0");
    }
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[80];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

// ------------------------------------------------------------------ records

Json PredictionRecord::to_json() const {
    return Json{{"id", id},       {"received_at", received_at}, {"input", input},
                {"score", score}, {"flagged", flagged},         {"model_version", model_version}};
}

PredictionRecord PredictionRecord::from_json(const Json& j) {
    PredictionRecord r;
    r.id = j.at("id").get<std::string>();
    r.received_at = j.at("received_at").get<std::string>();
    r.input = j.at("input");
    r.score = j.at("score").get<double>();
    r.flagged = j.at("flagged").get<bool>();
    r.model_version = j.at("model_version").get<std::uint64_t>();
    return r;
}

Json FeedbackRecord::to_json() const {
    return Json{{"prediction_id", prediction_id},
                {"confirmed_label", confirmed_label},
                {"note", note},
                {"received_at", received_at}};
}

FeedbackRecord FeedbackRecord::from_json(const Json& j) {
    FeedbackRecord r;
    r.prediction_id = j.at("prediction_id").get<std::string>();
    r.confirmed_label = j.at("confirmed_label").get<bool>();
    r.note = j.value("note", std::string{});
    r.received_at = j.at("received_at").get<std::string>();
    return r;
}

// ------------------------------------------------------------------- schema

namespace {

const std::unordered_set<std::string>& identifier_keys() {
    static const std::unordered_set<std::string> keys{
        "name",      "first_name",  "last_name",  "surname",     "full_name", "address", "street",
        "house_number", "postcode", "postal_code", "zip",        "city",      "phone",   "telephone",
        "email",     "bsn",         "citizen_id", "citizen_service_number", "ssn", "person_number",
        "child_id",  "relative_id", "relative_person_number", "patient_id"};
    return keys;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

void reject_identifiers(const Json& j, const std::string& path) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
            if (identifier_keys().contains(lower(k))) {
                throw ServiceError(422,
                                   "direct identifier field '" + k +
                                       "' is not accepted; send de-identified data only",
                                   path + "." + k);
            }
            reject_identifiers(v, path + "." + k);
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            reject_identifiers(j[i], path + "[" + std::to_string(i) + "]");
        }
    }
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
    throw ServiceError(400, what, path);
}

void only_keys(const Json& obj, std::initializer_list<const char*> allowed, const std::string& path) {
    for (const auto& [k, v] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
            schema_error(path + "." + k, "unknown field");
        }
    }
}

std::string string_field(const Json& obj, const char* key, const std::string& path, bool required) {
    if (!obj.contains(key)) {
        if (required) {
            schema_error(path + "." + key, "required field missing");
        }
        return {};
    }
    if (!obj[key].is_string()) {
        schema_error(path + "." + key, "must be a string");
    }
    return obj[key].get<std::string>();
}

std::string date_field(const Json& obj, const char* key, const std::string& path) {
    auto s = string_field(obj, key, path, false);
    if (!s.empty()) {
        try {
            parse_date(s);
        } catch (const DataError&) {
            schema_error(path + "." + key, "must be a YYYY-MM-DD date");
        }
    }
    return s;
}

const Date kDefaultBirth{std::chrono::year{2000}, std::chrono::month{1}, std::chrono::day{1}};

} // namespace

Json normalize_predict_payload(const Json& payload) {
    if (!payload.is_object()) {
        schema_error("$", "payload must be a JSON object");
    }
    reject_identifiers(payload, "$");
    only_keys(payload, {"socs", "structured", "meta"}, "$");
    Json out{{"socs", Json::array()}, {"structured", Json::array()}};

    if (!payload.contains("socs") || !payload["socs"].is_array()) {
        schema_error("$.socs", "required array missing");
    }
    const auto& socs = payload["socs"];
    for (std::size_t i = 0; i < socs.size(); ++i) {
        const std::string p = "$.socs[" + std::to_string(i) + "]";
        const auto& s = socs[i];
        Json n;
        if (s.is_string()) {
            n["text"] = s.get<std::string>();
        } else if (s.is_object()) {
            only_keys(s, {"text", "date", "location", "action_type"}, p);
            n["text"] = string_field(s, "text", p, true);
            if (auto d = date_field(s, "date", p); !d.empty()) {
                n["date"] = d;
            }
            if (s.contains("location")) {
                n["location"] = string_field(s, "location", p, false);
            }
            if (s.contains("action_type")) {
                n["action_type"] = string_field(s, "action_type", p, false);
            }
        } else {
            schema_error(p, "must be a string or an object with text");
        }
        out["socs"].push_back(n);
    }

    if (!payload.contains("structured") || !payload["structured"].is_array()) {
        schema_error("$.structured", "required array missing");
    }
    const auto& st = payload["structured"];
    for (std::size_t i = 0; i < st.size(); ++i) {
        const std::string p = "$.structured[" + std::to_string(i) + "]";
        const auto& o = st[i];
        if (!o.is_object()) {
            schema_error(p, "must be an object");
        }
        only_keys(o, {"category", "value", "location", "action_type"}, p);
        const auto cat = string_field(o, "category", p, true);
        if (!parse_observation_category(cat)) {
            schema_error(p + ".category", "unknown observation category '" + cat + "'");
        }
        if (!o.contains("value")) {
            schema_error(p + ".value", "required field missing");
        }
        std::string value;
        if (o["value"].is_string()) {
            value = o["value"].get<std::string>();
        } else if (o["value"].is_number()) {
            value = o["value"].dump();
        } else {
            schema_error(p + ".value", "must be a string or a number");
        }
        Json n{{"category", cat}, {"value", value}};
        if (o.contains("location")) {
            n["location"] = string_field(o, "location", p, false);
        }
        if (o.contains("action_type")) {
            n["action_type"] = string_field(o, "action_type", p, false);
        }
        out["structured"].push_back(n);
    }

    if (payload.contains("meta")) {
        const auto& m = payload["meta"];
        if (!m.is_object()) {
            schema_error("$.meta", "must be an object");
        }
        only_keys(m, {"sex", "birth_date", "relations"}, "$.meta");
        Json n = Json::object();
        if (m.contains("sex")) {
            const auto s = string_field(m, "sex", "$.meta", false);
            if (s != "male" && s != "female" && s != "unknown") {
                schema_error("$.meta.sex", "must be male, female or unknown");
            }
            n["sex"] = s;
        }
        if (auto d = date_field(m, "birth_date", "$.meta"); !d.empty()) {
            n["birth_date"] = d;
        }
        if (m.contains("relations")) {
            if (!m["relations"].is_array()) {
                schema_error("$.meta.relations", "must be an array");
            }
            n["relations"] = Json::array();
            for (std::size_t i = 0; i < m["relations"].size(); ++i) {
                const std::string p = "$.meta.relations[" + std::to_string(i) + "]";
                const auto& r = m["relations"][i];
                if (!r.is_object()) {
                    schema_error(p, "must be an object");
                }
                only_keys(r, {"relation_type", "relative_birth_date"}, p);
                Json rn{{"relation_type", string_field(r, "relation_type", p, true)}};
                if (auto d = date_field(r, "relative_birth_date", p); !d.empty()) {
                    rn["relative_birth_date"] = d;
                }
                n["relations"].push_back(rn);
            }
        }
        out["meta"] = n;
    }
    return out;
}

ChildRecord child_from_payload(const Json& normalized) {
    ChildRecord c;
    c.child_id = "payload";
    c.birth_date = kDefaultBirth;
    if (normalized.contains("meta")) {
        const auto& m = normalized["meta"];
        if (m.contains("birth_date")) {
            c.birth_date = parse_date(m["birth_date"].get<std::string>());
        }
        if (m.contains("sex")) {
            c.sex = parse_sex(m["sex"].get<std::string>());
        }
        if (m.contains("relations")) {
            for (const auto& r : m["relations"]) {
                const Date d = r.contains("relative_birth_date")
                                   ? parse_date(r["relative_birth_date"].get<std::string>())
                                   : kDefaultBirth;
                c.relations.push_back({r["relation_type"].get<std::string>(), "", d});
            }
        }
    }
    for (const auto& s : normalized.at("socs")) {
        ConsultNote n;
        n.text = s.at("text").get<std::string>();
        n.observation_date = s.contains("date") ? parse_date(s["date"].get<std::string>()) : c.birth_date;
        n.location = s.value("location", std::string{});
        n.action_type = s.value("action_type", std::string{});
        c.consults.push_back(std::move(n));
    }
    for (const auto& o : normalized.at("structured")) {
        StructuredObservation so;
        so.category = *parse_observation_category(o.at("category").get<std::string>());
        so.value = o.at("value").get<std::string>();
        so.location = o.value("location", std::string{});
        so.action_type = o.value("action_type", std::string{});
        c.structured_observations.push_back(std::move(so));
    }
    return c;
}

Json predict_payload(const ChildRecord& child) {
    Json socs = Json::array();
    for (const auto& n : child.consults) {
        socs.push_back(Json{{"text", n.text},
                            {"date", format_date(n.observation_date)},
                            {"location", n.location},
                            {"action_type", n.action_type}});
    }
    Json structured = Json::array();
    for (const auto& o : child.structured_observations) {
        structured.push_back(Json{{"category", to_string(o.category)},
                                  {"value", o.value},
                                  {"location", o.location},
                                  {"action_type", o.action_type}});
    }
    Json relations = Json::array();
    for (const auto& r : child.relations) {
        relations.push_back(
            Json{{"relation_type", r.relation_type}, {"relative_birth_date", format_date(r.relative_birth_date)}});
    }
    return Json{{"socs", socs},
                {"structured", structured},
                {"meta", Json{{"sex", to_string(child.sex)},
                              {"birth_date", format_date(child.birth_date)},
                              {"relations", relations}}}};
}

// ----------------------------------------------------------------- registry

namespace {

void write_atomically(const fs::path& path, std::string_view content) {
    const fs::path tmp = path.string() + ".tmp";
    write_file(tmp, content);
    fs::rename(tmp, path);
}

fs::path artifact_path(const fs::path& dir, std::uint64_t v) {
    return dir / ("model-v" + std::to_string(v) + ".json");
}

} // namespace

ModelRegistry::ModelRegistry(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    const std::regex name(R"(model-v(\d+)\.json)");
    for (const auto& e : fs::directory_iterator(dir_)) {
        std::smatch m;
        const std::string f = e.path().filename().string();
        if (std::regex_match(f, m, name)) {
            max_version_ = std::max<std::uint64_t>(max_version_, std::stoull(m[1].str()));
        }
    }
    const fs::path active = dir_ / "ACTIVE";
    if (fs::exists(active)) {
        std::string text = read_file(active);
        while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) {
            text.pop_back();
        }
        const std::uint64_t v = std::stoull(text);
        active_ = std::make_shared<const PipelineModel>(PipelineModel::load(artifact_path(dir_, v)));
    }
}

std::uint64_t ModelRegistry::register_model(PipelineModel model) {
    std::uint64_t v;
    {
        std::lock_guard lock(mutex_);
        v = ++max_version_;
    }
    model.set_model_version(v);
    write_atomically(artifact_path(dir_, v), model.to_json().dump(1) + "\n");
    auto ptr = std::make_shared<const PipelineModel>(std::move(model));
    std::lock_guard lock(mutex_);
    write_atomically(dir_ / "ACTIVE", std::to_string(v) + "\n");
    active_ = std::move(ptr);
    return v;
}

std::shared_ptr<const PipelineModel> ModelRegistry::active() const {
    std::lock_guard lock(mutex_);
    return active_;
}

std::optional<std::uint64_t> ModelRegistry::active_version() const {
    std::lock_guard lock(mutex_);
    if (!active_) {
        return std::nullopt;
    }
    return active_->model_version();
}

std::uint64_t ModelRegistry::next_version() const {
    std::lock_guard lock(mutex_);
    return max_version_ + 1;
}

std::vector<std::uint64_t> ModelRegistry::versions() const {
    std::vector<std::uint64_t> out;
    const std::regex name(R"(model-v(\d+)\.json)");
    for (const auto& e : fs::directory_iterator(dir_)) {
        std::smatch m;
        const std::string f = e.path().filename().string();
        if (std::regex_match(f, m, name)) {
            out.push_back(std::stoull(m[1].str()));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ------------------------------------------------------------------ journal

Journal::Journal(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) {
        fs::create_directories(path_.parent_path());
    }
    // Cut a torn final line so the next append starts on a fresh line.
    if (fs::exists(path_)) {
        const std::string text = read_file(path_);
        const auto end = text.rfind('\n');
        const std::size_t keep = end == std::string::npos ? 0 : end + 1;
        if (keep != text.size()) {
            spdlog::warn("{}: dropping a torn trailing record", path_.string());
            fs::resize_file(path_, keep);
        }
    }
    out_.open(path_, std::ios::app | std::ios::binary);
    if (!out_) {
        throw DataError("cannot open journal " + path_.string());
    }
}

void Journal::append(const Json& entry) {
    std::lock_guard lock(mutex_);
    out_ << entry.dump() << '\n';
    out_.flush();
    if (!out_) {
        throw DataError("journal write failed: " + path_.string());
    }
}

std::vector<Json> Journal::replay() const {
    std::vector<Json> out;
    if (!fs::exists(path_)) {
        return out;
    }
    std::ifstream in(path_, std::ios::binary);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error&) {
            spdlog::warn("{}: skipping an unreadable record", path_.string());
        }
    }
    return out;
}

// ------------------------------------------------------------------ service

Service::Service(ServiceConfig config, std::optional<TrainingBase> base)
    : config_(std::move(config)), base_(std::move(base)), registry_(config_.state_dir / "models"),
      predictions_journal_(config_.state_dir / "predictions.jsonl"),
      feedback_journal_(config_.state_dir / "feedback.jsonl") {
    config_.validate();
    id_salt_ = std::random_device{}();
    id_salt_ = (id_salt_ << 32) ^ std::random_device{}();
    recover();
    if (base_) {
        if (!base_->corpus) {
            throw ConfigError("training base has no corpus");
        }
        base_->config.validate();
        base_prepared_ = prepare_corpus(*base_->corpus, base_->config.prep, config_.jobs);
        if (!base_->labels.empty()) {
            if (base_->labels.size() != base_->corpus->size()) {
                throw ConfigError("training base labels differ in length from the corpus");
            }
            base_prepared_->labels = base_->labels;
        }
    }
}

Service::~Service() { stop_scheduler(); }

void Service::recover() {
    std::lock_guard lock(store_mutex_);
    for (const auto& j : predictions_journal_.replay()) {
        try {
            auto r = PredictionRecord::from_json(j);
            predictions_[r.id] = std::move(r);
        } catch (const Json::exception&) {
            spdlog::warn("skipping a malformed prediction record during recovery");
        }
    }
    std::size_t dangling = 0;
    for (const auto& j : feedback_journal_.replay()) {
        try {
            auto f = FeedbackRecord::from_json(j);
            if (!predictions_.contains(f.prediction_id)) {
                ++dangling;
                continue;
            }
            feedback_[f.prediction_id] = std::move(f);
        } catch (const Json::exception&) {
            spdlog::warn("skipping a malformed feedback record during recovery");
        }
    }
    if (dangling > 0) {
        spdlog::warn("recovery dropped {} feedback records without a prediction", dangling);
    }
    id_counter_ = predictions_.size();
}

std::string Service::new_id() {
    for (;;) {
        char buf[24];
        std::snprintf(buf, sizeof buf, "p%016llx",
                      static_cast<unsigned long long>(derive_seed(id_salt_, id_counter_++)));
        if (!predictions_.contains(buf)) {
            return buf;
        }
    }
}

double Service::threshold_for(const PipelineModel& m) const {
    return config_.threshold.value_or(m.config().threshold);
}

Json Service::predict(const Json& payload) {
    const Json input = normalize_predict_payload(payload);
    const auto model = registry_.active();
    if (!model) {
        throw ServiceError(503, "no model is loaded");
    }
    PredictionRecord r;
    r.received_at = utc_timestamp();
    r.score = model->score(child_from_payload(input));
    r.flagged = r.score >= threshold_for(*model);
    r.model_version = model->model_version();
    r.input = input;
    {
        std::lock_guard lock(store_mutex_);
        r.id = new_id();
        predictions_journal_.append(r.to_json());
        predictions_[r.id] = r;
    }
    return Json{{"prediction_id", r.id}, {"score", r.score}, {"flagged", r.flagged},
                {"model_version", r.model_version}};
}

Json Service::feedback(const Json& payload) {
    if (!payload.is_object()) {
        schema_error("$", "payload must be a JSON object");
    }
    reject_identifiers(payload, "$");
    only_keys(payload, {"prediction_id", "confirmed_label", "note"}, "$");
    FeedbackRecord f;
    f.prediction_id = string_field(payload, "prediction_id", "$", true);
    if (!payload.contains("confirmed_label") || !payload["confirmed_label"].is_boolean()) {
        schema_error("$.confirmed_label", "required boolean missing");
    }
    f.confirmed_label = payload["confirmed_label"].get<bool>();
    f.note = string_field(payload, "note", "$", false);
    f.received_at = utc_timestamp();
    std::lock_guard lock(store_mutex_);
    if (!predictions_.contains(f.prediction_id)) {
        throw ServiceError(404, "unknown prediction_id '" + f.prediction_id + "'", "$.prediction_id");
    }
    feedback_journal_.append(f.to_json());
    feedback_[f.prediction_id] = f;
    return Json{{"prediction_id", f.prediction_id},
                {"confirmed_label", f.confirmed_label},
                {"received_at", f.received_at},
                {"status", "stored"}};
}

Json Service::health() const {
    const auto v = registry_.active_version();
    return Json{{"status", v ? "ok" : "no_model"},
                {"active_version", v ? Json(*v) : Json(nullptr)},
                {"predictions", prediction_count()}};
}

std::optional<PredictionRecord> Service::prediction(const std::string& id) const {
    std::lock_guard lock(store_mutex_);
    auto it = predictions_.find(id);
    if (it == predictions_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::optional<FeedbackRecord> Service::feedback_for(const std::string& id) const {
    std::lock_guard lock(store_mutex_);
    auto it = feedback_.find(id);
    if (it == feedback_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t Service::prediction_count() const {
    std::lock_guard lock(store_mutex_);
    return predictions_.size();
}

RetrainOutcome Service::retrain() {
    std::unique_lock running(retrain_mutex_, std::try_to_lock);
    if (!running.owns_lock()) {
        spdlog::info("retrain skipped: another retrain is running");
        return {RetrainStatus::skipped, 0, "a retrain is already running"};
    }
    const std::uint64_t attempt = registry_.next_version();
    ++attempts_;
    if (!base_) {
        spdlog::error("retrain attempt for version {} failed: no base corpus configured", attempt);
        return {RetrainStatus::failed, attempt, "no base corpus configured"};
    }
    std::vector<std::pair<Json, int>> extra;
    {
        std::lock_guard lock(store_mutex_);
        for (const auto& [id, f] : feedback_) {
            extra.emplace_back(predictions_.at(id).input, f.confirmed_label ? 1 : 0);
        }
    }
    try {
        const auto& data = *base_prepared_;
        std::vector<std::size_t> rows;
        if (config_.balance_base) {
            const auto n_pos = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
            const std::size_t per_class = std::min(n_pos, data.labels.size() - n_pos);
            const auto plan = SamplingPlan::for_labels(data.labels, per_class, per_class, 0.0, base_->config.seed);
            rows = undersample_split(data.labels, plan).train;
        } else {
            rows.resize(data.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                rows[i] = i;
            }
        }
        const Preprocessor prep(base_->config.prep);
        std::vector<ChildRecord> extra_children;
        std::vector<TermSequence> extra_docs;
        extra_children.reserve(extra.size());
        extra_docs.reserve(extra.size());
        for (const auto& [input, label] : extra) {
            extra_children.push_back(child_from_payload(input));
            extra_docs.push_back(child_document(extra_children.back(), prep));
        }
        std::vector<const TermSequence*> docs;
        std::vector<const ChildRecord*> children;
        std::vector<int> labels;
        for (auto r : rows) {
            docs.push_back(&data.docs[r]);
            children.push_back(&(*data.corpus)[r]);
            labels.push_back(data.labels[r]);
        }
        for (std::size_t k = 0; k < extra.size(); ++k) {
            docs.push_back(&extra_docs[k]);
            children.push_back(&extra_children[k]);
            labels.push_back(extra[k].second);
        }
        auto model = fit_pipeline(base_->config, docs, children, labels, base_->config.seed, config_.jobs);
        const auto v = registry_.register_model(std::move(model));
        spdlog::info("retrained model version {} on {} base rows and {} feedback rows", v, rows.size(),
                     extra.size());
        return {RetrainStatus::trained, v, "ok"};
    } catch (const std::exception& e) {
        spdlog::error("retrain attempt for version {} failed: {}", attempt, e.what());
        return {RetrainStatus::failed, attempt, e.what()};
    }
}

void Service::start_scheduler() {
    if (config_.retrain_interval.count() == 0 || scheduler_.joinable()) {
        return;
    }
    {
        std::lock_guard lock(scheduler_mutex_);
        scheduler_stop_ = false;
    }
    scheduler_ = std::thread([this] {
        std::unique_lock lock(scheduler_mutex_);
        while (!scheduler_cv_.wait_for(lock, config_.retrain_interval, [this] { return scheduler_stop_; })) {
            lock.unlock();
            retrain();
            lock.lock();
        }
    });
}

void Service::stop_scheduler() {
    {
        std::lock_guard lock(scheduler_mutex_);
        scheduler_stop_ = true;
    }
    scheduler_cv_.notify_all();
    if (scheduler_.joinable()) {
        scheduler_.join();
    }
}

// --------------------------------------------------------------------- HTTP

struct HttpServer::Impl {
    Service& service;
    ServiceConfig config;
    httplib::Server server;
    std::thread thread;

    Impl(Service& s, ServiceConfig c) : service(s), config(std::move(c)) {}

    bool authorized(const httplib::Request& req, httplib::Response& res) const {
        if (config.bearer_token.empty()) {
            return true;
        }
        if (req.get_header_value("Authorization") == "Bearer " + config.bearer_token) {
            return true;
        }
        res.status = 401;
        res.set_content(Json{{"error", "missing or invalid bearer token"}}.dump(), "application/json");
        return false;
    }

    template <class F>
    void json_endpoint(const httplib::Request& req, httplib::Response& res, F&& handle) {
        if (!authorized(req, res)) {
            return;
        }
        Json body;
        try {
            body = Json::parse(req.body);
        } catch (const Json::parse_error& e) {
            res.status = 400;
            res.set_content(Json{{"error", std::string("malformed JSON: ") + e.what()}, {"path", "$"}}.dump(),
                            "application/json");
            return;
        }
        try {
            res.set_content(handle(body).dump(), "application/json");
        } catch (const ServiceError& e) {
            res.status = e.status();
            Json err{{"error", e.what()}};
            if (!e.path().empty()) {
                err["path"] = e.path();
            }
            res.set_content(err.dump(), "application/json");
        } catch (const std::exception& e) {
            spdlog::error("request failed: {}", e.what());
            res.status = 500;
            res.set_content(Json{{"error", "internal error"}}.dump(), "application/json");
        }
    }

    void routes() {
        server.Post("/predict", [this](const httplib::Request& req, httplib::Response& res) {
            json_endpoint(req, res, [this](const Json& b) { return service.predict(b); });
        });
        server.Post("/feedback", [this](const httplib::Request& req, httplib::Response& res) {
            json_endpoint(req, res, [this](const Json& b) { return service.feedback(b); });
        });
        server.Get("/healthz", [this](const httplib::Request& req, httplib::Response& res) {
            if (authorized(req, res)) {
                res.set_content(service.health().dump(), "application/json");
            }
        });
    }

    int bind() {
        const std::string host = config.bind_address == "localhost" ? "127.0.0.1" : config.bind_address;
        int port = config.port;
        if (port == 0) {
            port = server.bind_to_any_port(host);
        } else if (!server.bind_to_port(host, port)) {
            port = -1;
        }
        if (port < 0) {
            throw ConfigError("cannot bind " + config.bind_address + ":" + std::to_string(config.port));
        }
        return port;
    }
};

HttpServer::HttpServer(Service& service, const ServiceConfig& config)
    : impl_(std::make_unique<Impl>(service, config)) {
    config.validate();
    impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
    const int port = impl_->bind();
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void HttpServer::run() {
    const int port = impl_->bind();
    spdlog::info("serving on {}:{}", impl_->config.bind_address, port);
    impl_->server.listen_after_bind();
}

void HttpServer::stop() {
    if (!impl_) {
        return;
    }
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

} // namespace zsl
