#pragma once

#include <atomic>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace zsl {

struct ReplacementRule {
    std::string pattern;     ///< Perl-syntax regular expression
    std::string replacement; ///< literal text, never containing digits
    std::string note;
};

struct PrepConfig {
    std::vector<ReplacementRule> rules;
    std::unordered_set<std::string> stopwords;
    std::unordered_set<std::string> negation_whitelist{"niet", "geen", "nooit", "zonder"};
    int ngram_min = 1;
    int ngram_max = 1;
    bool stemming = true;

    /// Seed replacement rules, the public Dutch stopword list and unigrams.
    static PrepConfig dutch_defaults();

    /// Throws ConfigError on a bad n-gram range, a whitelist missing
    /// "niet"/"geen", or an invalid rule.
    void validate() const;
};

using TermSequence = std::vector<std::string>;

const std::vector<ReplacementRule>& seed_replacement_rules();
const std::unordered_set<std::string>& dutch_stopwords();

/// Two- or three-column table "pattern;replacement[;note]" with a header row.
std::vector<ReplacementRule> load_rules(const std::filesystem::path& path);
void save_rules(const std::filesystem::path& path, const std::vector<ReplacementRule>& rules);
/// One word per line; blank lines and lines starting with '#' are skipped.
std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path);

/// A rule list compiled once and reused across texts; safe to share between threads.
class CompiledRules {
public:
    CompiledRules() = default;
    /// Throws ConfigError when a pattern does not compile or a replacement holds a digit.
    explicit CompiledRules(const std::vector<ReplacementRule>& rules);
    ~CompiledRules();
    CompiledRules(CompiledRules&&) noexcept;
    CompiledRules& operator=(CompiledRules&&) noexcept;

    /// Applies every rule globally, in order. A rule that exhausts the
    /// matcher's backtracking budget is skipped for this text and counted.
    std::string apply(std::string_view text) const;

    std::size_t size() const;
    std::size_t skipped() const { return skipped_->load(); }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::unique_ptr<std::atomic<std::size_t>> skipped_ = std::make_unique<std::atomic<std::size_t>>(0);
};

std::string apply_replacements(std::string_view text, const std::vector<ReplacementRule>& rules);

/// Deletes date/time expressions, bare numbers and digit-bearing words;
/// collapses whitespace to single spaces.
std::string remove_trivial(std::string_view text);

/// Folds accented Latin letters to ASCII, lowercases, and turns every other
/// character outside [a-z ] into a space.
std::string normalize_characters(std::string_view text);

/// Splits on whitespace and lowercases ASCII letters.
std::vector<std::string> tokenize(std::string_view text);

std::vector<std::string> remove_stopwords(std::vector<std::string> tokens, const PrepConfig& config);

/// Contiguous n-grams for n in [min, max], joined with "_", grouped by n.
TermSequence ngrams(const std::vector<std::string>& tokens, int min, int max);

inline constexpr std::string_view kNgramJoiner = "_";

/// Compiled form of a PrepConfig.
class Preprocessor {
public:
    explicit Preprocessor(PrepConfig config);

    TermSequence operator()(std::string_view text) const;
    /// Stages up to and including stemming; no n-grams.
    std::vector<std::string> tokens(std::string_view text) const;

    const PrepConfig& config() const { return config_; }
    const CompiledRules& rules() const { return rules_; }

private:
    PrepConfig config_;
    CompiledRules rules_;
};

TermSequence preprocess(std::string_view text, const PrepConfig& config);

/// Preprocesses many texts; OpenMP-parallel unless `jobs == 1`. Output order matches input.
std::vector<TermSequence> preprocess_all(const Preprocessor& prep, const std::vector<std::string_view>& texts,
                                         int jobs);

struct AbbreviationCandidate {
    std::string candidate;
    std::size_t frequency = 0;
    std::string example_context;

    bool operator==(const AbbreviationCandidate&) const = default;
};

/// Short consonant-only words (dots allowed) ranked by descending frequency,
/// ties by candidate. `example_context` is a window of words around the first
/// occurrence.
std::vector<AbbreviationCandidate> extract_abbreviation_candidates(const std::vector<std::string>& texts,
                                                                   std::size_t max_len = 3,
                                                                   std::size_t window = 5);

} // namespace zsl
