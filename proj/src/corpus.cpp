#include "zsl/corpus.hpp"

#include "zsl/error.hpp"
#include "zsl/table.hpp"
#include "zsl/textprep.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <tuple>

namespace zsl {

namespace {

constexpr std::array kCategoryNames = {
    std::string_view{"dramatic_event"},
    std::string_view{"mothers_health"},
    std::string_view{"burden_vs_carrying_family"},
    std::string_view{"burden_vs_carrying_child"},
    std::string_view{"burden_vs_carrying_environment"},
    std::string_view{"burden_vs_carrying_parents"},
    std::string_view{"dental_care"},
    std::string_view{"overweight"},
    std::string_view{"general_care_received"},
    std::string_view{"ggd_care_received"},
    std::string_view{"samen_starten_weging"},
    std::string_view{"triple_p_contact_1"},
    std::string_view{"triple_p_contact_2"},
    std::string_view{"skin_issues"},
    std::string_view{"permanent_condition"},
    std::string_view{"general_health"},
    std::string_view{"womens_genitalia"},
    std::string_view{"micturition_defecation"},
    std::string_view{"mother_age_at_birth"},
    std::string_view{"birth_country_child"},
    std::string_view{"birth_country_mother"},
    std::string_view{"birth_country_father"},
};
static_assert(kCategoryNames.size() == kObservationCategoryCount);

const std::array<ObservationCategory, kObservationCategoryCount> kAllCategories = [] {
    std::array<ObservationCategory, kObservationCategoryCount> out{};
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<ObservationCategory>(i);
    }
    return out;
}();

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

double parse_number(const std::string& s, const std::string& file, const std::string& column) {
    std::string t = s;
    std::replace(t.begin(), t.end(), ',', '.');
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
        throw DataError(file + ": column " + column + ": not a number: '" + s + "'");
    }
    return v;
}

bool parse_bool(const std::string& s, const std::string& file) {
    if (s == "1" || s == "true" || s == "ja" || s == "yes") {
        return true;
    }
    if (s == "0" || s == "false" || s == "nee" || s == "no" || s.empty()) {
        return false;
    }
    throw DataError(file + ": not a boolean: '" + s + "'");
}

/// Column accessor for one table; resolves all required columns up front.
class Columns {
public:
    Columns(const Table& t, std::string file, std::initializer_list<std::string_view> required)
        : table_(t), file_(std::move(file)) {
        for (auto name : required) {
            auto idx = t.column(name);
            if (!idx) {
                throw SchemaError(file_, std::string(name),
                                  file_ + ": missing required column '" + std::string(name) + "'");
            }
            idx_.emplace_back(name, *idx);
        }
    }

    const std::string& get(const std::vector<std::string>& row, std::string_view name) const {
        for (const auto& [n, i] : idx_) {
            if (n == name) {
                if (i >= row.size()) {
                    throw DataError(file_ + ": short row, no value for '" + std::string(name) + "'");
                }
                return row[i];
            }
        }
        throw SchemaError(file_, std::string(name), "unknown column " + std::string(name));
    }

    Date date(const std::vector<std::string>& row, std::string_view name) const {
        try {
            return parse_date(get(row, name));
        } catch (const DataError& e) {
            throw DataError(file_ + ": column " + std::string(name) + ": " + e.what());
        }
    }

    double number(const std::vector<std::string>& row, std::string_view name) const {
        return parse_number(get(row, name), file_, std::string(name));
    }

    const std::string& file() const { return file_; }

private:
    const Table& table_;
    std::string file_;
    std::vector<std::pair<std::string_view, std::size_t>> idx_;
};

Table read_optional(const std::filesystem::path& p) {
    if (p.empty() || !std::filesystem::exists(p)) {
        return {};
    }
    return read_table(p);
}

void canonicalize(ChildRecord& c) {
    auto by_date = [](const auto& a, const auto& b) { return a.observation_date < b.observation_date; };
    std::stable_sort(c.consults.begin(), c.consults.end(), by_date);
    std::stable_sort(c.bmi_series.begin(), c.bmi_series.end(),
                     [](const auto& a, const auto& b) { return a.date < b.date; });
    std::stable_sort(c.zsl_findings.begin(), c.zsl_findings.end(),
                     [](const auto& a, const auto& b) { return a.finding_date < b.finding_date; });
    std::stable_partition(c.structured_observations.begin(), c.structured_observations.end(),
                          [](const auto& o) { return o.kind() != ObservationKind::count; });
}

} // namespace

std::string_view to_string(Sex s) {
    switch (s) {
    case Sex::male: return "male";
    case Sex::female: return "female";
    case Sex::unknown: break;
    }
    return "unknown";
}

Sex parse_sex(std::string_view s) {
    if (s == "male" || s == "m" || s == "M" || s == "jongen") {
        return Sex::male;
    }
    if (s == "female" || s == "f" || s == "F" || s == "v" || s == "V" || s == "meisje") {
        return Sex::female;
    }
    return Sex::unknown;
}

std::span<const ObservationCategory> all_observation_categories() { return kAllCategories; }

std::string_view to_string(ObservationCategory c) {
    return kCategoryNames[static_cast<std::size_t>(c)];
}

std::optional<ObservationCategory> parse_observation_category(std::string_view s) {
    for (std::size_t i = 0; i < kCategoryNames.size(); ++i) {
        if (kCategoryNames[i] == s) {
            return static_cast<ObservationCategory>(i);
        }
    }
    return std::nullopt;
}

ObservationKind kind_of(ObservationCategory c) {
    using C = ObservationCategory;
    switch (c) {
    case C::general_care_received:
    case C::ggd_care_received:
    case C::triple_p_contact_1:
    case C::triple_p_contact_2:
        return ObservationKind::count;
    case C::mother_age_at_birth:
        return ObservationKind::numeric;
    case C::birth_country_child:
    case C::birth_country_mother:
    case C::birth_country_father:
        return ObservationKind::categorical;
    default:
        return ObservationKind::count_with_findings;
    }
}

std::string_view to_string(ObservationKind k) {
    switch (k) {
    case ObservationKind::categorical: return "categorical";
    case ObservationKind::count: return "count";
    case ObservationKind::count_with_findings: return "count_with_findings";
    case ObservationKind::numeric: return "numeric";
    }
    return "?";
}

bool is_no_finding(std::string_view v) {
    return v.empty() || v == "0" || v == "nee" || v == "geen" || v == "geen bijzonderheden" ||
           v == "gb";
}

std::optional<double> StructuredObservation::numeric_value() const {
    std::string t = value;
    std::replace(t.begin(), t.end(), ',', '.');
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size()) {
        return std::nullopt;
    }
    return v;
}

Corpus::Corpus(std::vector<ChildRecord> children) : children_(std::move(children)) {
    for (auto& c : children_) {
        if (c.child_id.empty()) {
            throw ArgumentError("child_id must be non-empty");
        }
        canonicalize(c);
    }
    std::sort(children_.begin(), children_.end(),
              [](const auto& a, const auto& b) { return a.child_id < b.child_id; });
    for (std::size_t i = 1; i < children_.size(); ++i) {
        if (children_[i].child_id == children_[i - 1].child_id) {
            throw ArgumentError("duplicate child_id " + children_[i].child_id);
        }
    }
}

const ChildRecord* Corpus::find(std::string_view id) const {
    auto it = std::lower_bound(children_.begin(), children_.end(), id,
                               [](const ChildRecord& c, std::string_view v) { return c.child_id < v; });
    if (it != children_.end() && it->child_id == id) {
        return &*it;
    }
    return nullptr;
}

std::size_t Corpus::consult_count() const {
    std::size_t n = 0;
    for (const auto& c : children_) {
        n += c.consults.size();
    }
    return n;
}

std::vector<std::string> Corpus::locations() const {
    std::set<std::string> locs;
    for (const auto& c : children_) {
        for (const auto& n : c.consults) {
            locs.insert(n.location);
        }
    }
    return {locs.begin(), locs.end()};
}

CorpusPaths CorpusPaths::in_directory(const std::filesystem::path& dir) {
    return CorpusPaths{dir / "conclusions.csv",   dir / "family_relations.csv",
                       dir / "bmi.csv",           dir / "worries_zsl.csv",
                       dir / "findings_zsl.csv",  dir / "actions_zsl.csv",
                       dir / "attention_child.csv", dir / "label_overrides.csv"};
}

IngestResult ingest_corpus(const CorpusPaths& paths) {
    if (!std::filesystem::exists(paths.conclusions)) {
        throw DataError("conclusions file not found: " + paths.conclusions.string());
    }
    IngestReport report;
    std::map<std::string, ChildRecord> children;
    std::set<std::string> in_conclusions;

    auto child = [&](const std::string& id, Date birth) -> ChildRecord& {
        auto [it, inserted] = children.try_emplace(id);
        if (inserted) {
            it->second.child_id = id;
            it->second.birth_date = birth;
        }
        return it->second;
    };
    auto check_id = [](const std::string& id, const std::string& file) {
        if (id.empty()) {
            throw DataError(file + ": empty person_number");
        }
    };

    {
        const Table t = read_table(paths.conclusions);
        if (!t.header.empty() || !t.rows.empty()) {
            Columns cols(t, "conclusions",
                         {"person_number", "birth_date", "jgz_location", "action_type",
                          "observation_date", "conclusion"});
            std::set<std::tuple<std::string, std::string, std::string>> seen;
            for (const auto& row : t.rows) {
                const auto& id = cols.get(row, "person_number");
                check_id(id, cols.file());
                in_conclusions.insert(id);
                ChildRecord& c = child(id, cols.date(row, "birth_date"));
                const auto& date = cols.get(row, "observation_date");
                const auto& action = cols.get(row, "action_type");
                if (!seen.emplace(id, date, action).second) {
                    ++report.duplicate_conclusions;
                    report.warnings.push_back("conclusions: duplicate row for " + id + " on " + date +
                                              " (" + action + "), dropped");
                    continue;
                }
                c.consults.push_back(ConsultNote{cols.get(row, "jgz_location"), action,
                                                 cols.date(row, "observation_date"),
                                                 cols.get(row, "conclusion")});
            }
        }
    }

    {
        const Table t = read_optional(paths.family_relations);
        if (!t.header.empty()) {
            Columns cols(t, "family_relations",
                         {"person_number", "child_birth_date", "relation_type",
                          "relative_person_number", "relative_birth_date"});
            for (const auto& row : t.rows) {
                const auto& id = cols.get(row, "person_number");
                check_id(id, cols.file());
                ChildRecord& c = child(id, cols.date(row, "child_birth_date"));
                FamilyRelation rel{cols.get(row, "relation_type"),
                                   cols.get(row, "relative_person_number"),
                                   cols.date(row, "relative_birth_date")};
                if (rel.relation_type.empty()) {
                    report.warnings.push_back("family_relations: empty relation_type for " + id +
                                              ", row dropped");
                    continue;
                }
                c.relations.push_back(std::move(rel));
            }
        }
    }

    {
        const Table t = read_optional(paths.bmi);
        if (!t.header.empty()) {
            Columns cols(t, "bmi",
                         {"person_number", "birth_date", "sex", "action_type", "length", "weight",
                          "bmi_date", "bmi_age", "bmi"});
            std::set<std::string> sex_seen;
            for (const auto& row : t.rows) {
                const auto& id = cols.get(row, "person_number");
                check_id(id, cols.file());
                ChildRecord& c = child(id, cols.date(row, "birth_date"));
                const Sex sex = parse_sex(cols.get(row, "sex"));
                if (sex_seen.insert(id).second) {
                    c.sex = sex;
                } else if (sex != c.sex) {
                    ++report.conflicting_sex;
                    report.warnings.push_back("bmi: conflicting sex for " + id + ", first kept");
                }
                BmiMeasurement m;
                m.date = cols.date(row, "bmi_date");
                m.action_type = cols.get(row, "action_type");
                m.age_years = cols.number(row, "bmi_age");
                m.length_cm = cols.number(row, "length");
                m.weight_kg = cols.number(row, "weight");
                m.bmi = cols.number(row, "bmi");
                if (m.length_cm > 0) {
                    const double metres = m.length_cm / 100.0;
                    const double expected = m.weight_kg / (metres * metres);
                    if (std::abs(m.bmi - expected) > 0.1) {
                        ++report.bmi_recomputed;
                        report.warnings.push_back("bmi: " + id + " on " + format_date(m.date) +
                                                  ": bmi " + format_number(m.bmi) +
                                                  " inconsistent with weight/length^2, recomputed");
                        m.bmi = expected;
                    }
                }
                c.bmi_series.push_back(std::move(m));
            }
        }
    }

    auto ingest_observations = [&](const std::filesystem::path& p, const std::string& name,
                                   std::string_view value_column) {
        const Table t = read_optional(p);
        if (t.header.empty()) {
            return;
        }
        Columns cols(t, name,
                     {"person_number", "birth_date", "jgz_location", "action_type",
                      "observation_type", value_column});
        for (const auto& row : t.rows) {
            const auto& id = cols.get(row, "person_number");
            check_id(id, cols.file());
            ChildRecord& c = child(id, cols.date(row, "birth_date"));
            const auto& type = cols.get(row, "observation_type");
            auto cat = parse_observation_category(type);
            if (!cat) {
                ++report.unknown_categories;
                report.warnings.push_back(name + ": unknown observation_type '" + type + "' for " +
                                          id + ", row dropped");
                continue;
            }
            c.structured_observations.push_back(StructuredObservation{
                *cat, cols.get(row, value_column), cols.get(row, "jgz_location"),
                cols.get(row, "action_type")});
        }
    };
    ingest_observations(paths.worries_zsl, "worries_zsl", "value");
    ingest_observations(paths.actions_zsl, "actions_zsl", "action");

    {
        const Table t = read_optional(paths.findings_zsl);
        if (!t.header.empty()) {
            Columns cols(t, "findings_zsl",
                         {"person_number", "birth_date", "action_type", "finding_date",
                          "finding_type", "finding"});
            for (const auto& row : t.rows) {
                const auto& id = cols.get(row, "person_number");
                check_id(id, cols.file());
                ChildRecord& c = child(id, cols.date(row, "birth_date"));
                c.zsl_findings.push_back(ZslFinding{cols.date(row, "finding_date"),
                                                    cols.get(row, "action_type"),
                                                    cols.get(row, "finding_type"),
                                                    cols.get(row, "finding")});
            }
        }
    }

    {
        const Table t = read_optional(paths.attention);
        if (!t.header.empty()) {
            Columns cols(t, "attention_child", {"person_number", "birth_date", "attention"});
            for (const auto& row : t.rows) {
                const auto& id = cols.get(row, "person_number");
                check_id(id, cols.file());
                ChildRecord& c = child(id, cols.date(row, "birth_date"));
                c.attention = parse_bool(cols.get(row, "attention"), cols.file());
            }
        }
    }

    {
        const Table t = read_optional(paths.label_overrides);
        if (!t.header.empty()) {
            Columns cols(t, "label_overrides", {"person_number", "label"});
            for (const auto& row : t.rows) {
                const auto& id = cols.get(row, "person_number");
                auto it = children.find(id);
                if (it == children.end()) {
                    report.warnings.push_back("label_overrides: unknown person " + id + ", ignored");
                    continue;
                }
                it->second.label_override = parse_bool(cols.get(row, "label"), cols.file());
            }
        }
    }

    std::vector<ChildRecord> out;
    out.reserve(children.size());
    for (auto& [id, c] : children) {
        if (!in_conclusions.contains(id)) {
            ++report.skeleton_records;
            report.warnings.push_back("person " + id +
                                      " absent from conclusions, kept as skeleton record");
        }
        for (const auto& n : c.consults) {
            if (n.observation_date < c.birth_date) {
                ++report.consult_before_birth;
                report.warnings.push_back("conclusions: consult of " + id + " dated before birth");
            }
        }
        for (const auto& f : c.zsl_findings) {
            if (f.finding_date < c.birth_date) {
                ++report.finding_before_birth;
                report.warnings.push_back("findings_zsl: finding of " + id + " dated before birth");
            }
        }
        out.push_back(std::move(c));
    }
    return IngestResult{Corpus(std::move(out)), std::move(report)};
}

void export_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
    const auto paths = CorpusPaths::in_directory(dir);
    std::filesystem::create_directories(dir);

    Table conclusions{{"person_number", "birth_date", "jgz_location", "action_type",
                       "observation_date", "conclusion"},
                      {}};
    Table relations{{"person_number", "child_birth_date", "relation_type", "relative_person_number",
                     "relative_birth_date"},
                    {}};
    Table bmi{{"person_number", "birth_date", "sex", "action_type", "length", "weight", "bmi_date",
               "bmi_age", "bmi"},
              {}};
    Table worries{{"person_number", "birth_date", "jgz_location", "action_type", "observation_type",
                   "value"},
                  {}};
    Table findings{{"person_number", "birth_date", "action_type", "finding_date", "finding_type",
                    "finding"},
                   {}};
    Table actions{{"person_number", "birth_date", "jgz_location", "action_type", "observation_type",
                   "action"},
                  {}};
    Table attention{{"person_number", "birth_date", "attention"}, {}};
    Table overrides{{"person_number", "label"}, {}};

    for (const auto& c : corpus.children()) {
        const std::string birth = format_date(c.birth_date);
        for (const auto& n : c.consults) {
            conclusions.rows.push_back({c.child_id, birth, n.location, n.action_type,
                                        format_date(n.observation_date), n.text});
        }
        for (const auto& r : c.relations) {
            relations.rows.push_back({c.child_id, birth, r.relation_type, r.relative_id,
                                      format_date(r.relative_birth_date)});
        }
        for (const auto& m : c.bmi_series) {
            bmi.rows.push_back({c.child_id, birth, std::string(to_string(c.sex)), m.action_type,
                                format_number(m.length_cm), format_number(m.weight_kg),
                                format_date(m.date), format_number(m.age_years),
                                format_number(m.bmi)});
        }
        for (const auto& o : c.structured_observations) {
            Table& dst = o.kind() == ObservationKind::count ? actions : worries;
            dst.rows.push_back({c.child_id, birth, o.location, o.action_type,
                                std::string(to_string(o.category)), o.value});
        }
        for (const auto& f : c.zsl_findings) {
            findings.rows.push_back({c.child_id, birth, f.action_type, format_date(f.finding_date),
                                     f.finding_type, f.finding});
        }
        attention.rows.push_back({c.child_id, birth, c.attention ? "1" : "0"});
        if (c.label_override) {
            overrides.rows.push_back({c.child_id, *c.label_override ? "1" : "0"});
        }
    }

    write_table(paths.conclusions, conclusions);
    write_table(paths.family_relations, relations);
    write_table(paths.bmi, bmi);
    write_table(paths.worries_zsl, worries);
    write_table(paths.findings_zsl, findings);
    write_table(paths.actions_zsl, actions);
    write_table(paths.attention, attention);
    if (!overrides.rows.empty()) {
        write_table(paths.label_overrides, overrides);
    } else if (std::filesystem::exists(paths.label_overrides)) {
        std::filesystem::remove(paths.label_overrides);
    }
}

bool derive_label(const ChildRecord& child) {
    if (child.label_override) {
        return *child.label_override;
    }
    return !child.zsl_findings.empty();
}

std::vector<int> derive_labels(const Corpus& corpus) {
    std::vector<int> y;
    y.reserve(corpus.size());
    for (const auto& c : corpus.children()) {
        y.push_back(derive_label(c) ? 1 : 0);
    }
    return y;
}

std::string pseudonymize(std::string_view id, std::string_view salt) {
    if (salt.empty()) {
        throw ArgumentError("de-identification salt must be non-empty");
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    HMAC(EVP_sha256(), salt.data(), static_cast<int>(salt.size()),
         reinterpret_cast<const unsigned char*>(id.data()), id.size(), digest, &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

ChildRecord deidentify(const ChildRecord& record, std::string_view salt) {
    ChildRecord out = record;
    out.child_id = pseudonymize(record.child_id, salt);
    for (auto& r : out.relations) {
        if (!r.relative_id.empty()) {
            r.relative_id = pseudonymize(r.relative_id, salt);
        }
    }
    return out;
}

Corpus deidentify(const Corpus& corpus, std::string_view salt) {
    std::vector<ChildRecord> out;
    out.reserve(corpus.size());
    for (const auto& c : corpus.children()) {
        out.push_back(deidentify(c, salt));
    }
    return Corpus(std::move(out));
}

CorpusStats corpus_stats(const Corpus& corpus, std::size_t sample_size, std::uint64_t seed,
                         const std::unordered_set<std::string>& stopwords) {
    CorpusStats s;
    s.n_children = corpus.size();
    s.n_consults = corpus.consult_count();
    if (s.n_children == 0 || s.n_consults == 0) {
        return s;
    }
    s.avg_consults_per_child = static_cast<double>(s.n_consults) / static_cast<double>(s.n_children);

    std::vector<const ConsultNote*> notes;
    notes.reserve(s.n_consults);
    std::size_t words = 0;
    for (const auto& c : corpus.children()) {
        for (const auto& n : c.consults) {
            notes.push_back(&n);
            words += tokenize(n.text).size();
        }
    }
    s.avg_words_per_consult = static_cast<double>(words) / static_cast<double>(s.n_consults);

    std::vector<const ConsultNote*> sample;
    std::mt19937_64 rng(seed);
    std::sample(notes.begin(), notes.end(), std::back_inserter(sample),
                std::min(sample_size, notes.size()), rng);

    std::unordered_set<std::string> distinct;
    std::unordered_set<std::string> distinct_content;
    std::size_t total = 0;
    std::size_t total_content = 0;
    for (const auto* n : sample) {
        for (auto& tok : tokenize(normalize_characters(n->text))) {
            ++total;
            distinct.insert(tok);
            if (!stopwords.contains(tok)) {
                ++total_content;
                distinct_content.insert(std::move(tok));
            }
        }
    }
    if (total > 0) {
        s.lexical_diversity_sampled = static_cast<double>(distinct.size()) / static_cast<double>(total);
    }
    if (total_content > 0) {
        s.lexical_diversity_sampled_no_stopwords =
            static_cast<double>(distinct_content.size()) / static_cast<double>(total_content);
    }
    return s;
}

} // namespace zsl
