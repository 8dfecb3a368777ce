#pragma once

#include "zsl/date.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace zsl {

enum class Sex { male, female, unknown };

std::string_view to_string(Sex s);
Sex parse_sex(std::string_view s);

/// One consult's free-text conclusion ("summary of child").
struct ConsultNote {
    std::string location;
    std::string action_type;
    Date observation_date;
    std::string text;

    bool operator==(const ConsultNote&) const = default;
};

/// A registered "worries in the social environment" finding.
struct ZslFinding {
    Date finding_date;
    std::string action_type;
    std::string finding_type;
    std::string finding;

    bool operator==(const ZslFinding&) const = default;
};

struct BmiMeasurement {
    Date date;
    std::string action_type;
    double age_years = 0;
    double length_cm = 0;
    double weight_kg = 0;
    double bmi = 0;

    bool operator==(const BmiMeasurement&) const = default;
};

struct FamilyRelation {
    std::string relation_type;
    std::string relative_id;
    Date relative_birth_date;

    bool operator==(const FamilyRelation&) const = default;
};

enum class ObservationCategory : std::uint8_t {
    dramatic_event,
    mothers_health,
    burden_vs_carrying_family,
    burden_vs_carrying_child,
    burden_vs_carrying_environment,
    burden_vs_carrying_parents,
    dental_care,
    overweight,
    general_care_received,
    ggd_care_received,
    samen_starten_weging,
    triple_p_contact_1,
    triple_p_contact_2,
    skin_issues,
    permanent_condition,
    general_health,
    womens_genitalia,
    micturition_defecation,
    mother_age_at_birth,
    birth_country_child,
    birth_country_mother,
    birth_country_father,
};

enum class ObservationKind { categorical, count, count_with_findings, numeric };

inline constexpr std::size_t kObservationCategoryCount = 22;

std::span<const ObservationCategory> all_observation_categories();
std::string_view to_string(ObservationCategory c);
std::optional<ObservationCategory> parse_observation_category(std::string_view s);
ObservationKind kind_of(ObservationCategory c);
std::string_view to_string(ObservationKind k);

/// Values that mark a count_with_findings row as "no finding".
bool is_no_finding(std::string_view value);

struct StructuredObservation {
    ObservationCategory category{};
    std::string value;
    std::string location;
    std::string action_type;

    ObservationKind kind() const { return kind_of(category); }
    std::optional<double> numeric_value() const;

    bool operator==(const StructuredObservation&) const = default;
};

struct ChildRecord {
    std::string child_id;
    Date birth_date{};
    Sex sex = Sex::unknown;
    std::vector<ConsultNote> consults;
    std::vector<BmiMeasurement> bmi_series;
    std::vector<FamilyRelation> relations;
    std::vector<ZslFinding> zsl_findings;
    bool attention = false;
    std::vector<StructuredObservation> structured_observations;
    std::optional<bool> label_override;

    bool operator==(const ChildRecord&) const = default;
};

/// Immutable set of children, sorted by child_id.
class Corpus {
public:
    Corpus() = default;
    /// Sorts by child_id; throws ArgumentError on empty or duplicate ids.
    explicit Corpus(std::vector<ChildRecord> children);

    std::span<const ChildRecord> children() const { return children_; }
    std::size_t size() const { return children_.size(); }
    bool empty() const { return children_.empty(); }
    const ChildRecord& operator[](std::size_t i) const { return children_[i]; }
    const ChildRecord* find(std::string_view id) const;
    std::size_t consult_count() const;

    /// Sorted distinct consult locations.
    std::vector<std::string> locations() const;

    bool operator==(const Corpus&) const = default;

private:
    std::vector<ChildRecord> children_;
};

/// File names of the multi-table layout inside one directory.
struct CorpusPaths {
    std::filesystem::path conclusions;
    std::filesystem::path family_relations;
    std::filesystem::path bmi;
    std::filesystem::path worries_zsl;
    std::filesystem::path findings_zsl;
    std::filesystem::path actions_zsl;
    std::filesystem::path attention;
    std::filesystem::path label_overrides;

    static CorpusPaths in_directory(const std::filesystem::path& dir);
};

struct IngestReport {
    std::size_t skeleton_records = 0;
    std::size_t duplicate_conclusions = 0;
    std::size_t bmi_recomputed = 0;
    std::size_t consult_before_birth = 0;
    std::size_t finding_before_birth = 0;
    std::size_t conflicting_sex = 0;
    std::size_t unknown_categories = 0;
    std::vector<std::string> warnings;

    std::size_t warning_count() const { return warnings.size(); }
};

struct IngestResult {
    Corpus corpus;
    IngestReport report;
};

/// Reads the layout. `conclusions` must exist; a missing satellite file is an
/// empty table. Throws SchemaError when a required column is absent.
IngestResult ingest_corpus(const CorpusPaths& paths);

/// Writes the layout sorted by person number then date; byte-stable.
void export_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// True when the child carries at least one ZSL finding, unless an override
/// file forced the label.
bool derive_label(const ChildRecord& child);
std::vector<int> derive_labels(const Corpus& corpus);

/// Keyed one-way pseudonym (HMAC-SHA256, hex). Throws ArgumentError on empty salt.
std::string pseudonymize(std::string_view id, std::string_view salt);
ChildRecord deidentify(const ChildRecord& record, std::string_view salt);
Corpus deidentify(const Corpus& corpus, std::string_view salt);

struct CorpusStats {
    std::size_t n_children = 0;
    std::size_t n_consults = 0;
    double avg_consults_per_child = 0;
    double avg_words_per_consult = 0;
    double lexical_diversity_sampled = 0;
    double lexical_diversity_sampled_no_stopwords = 0;
};

/// Lexical diversity = distinct / total normalized tokens over a seeded sample
/// of `sample_size` consults (clamped to the corpus).
CorpusStats corpus_stats(const Corpus& corpus, std::size_t sample_size, std::uint64_t seed,
                         const std::unordered_set<std::string>& stopwords);

} // namespace zsl
