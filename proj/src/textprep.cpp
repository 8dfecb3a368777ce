#include "zsl/textprep.hpp"

#include "zsl/error.hpp"
#include "zsl/stemmer.hpp"
#include "zsl/table.hpp"

#include "detail/utf8.hpp"

#include <boost/regex.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace zsl {

namespace {

bool has_digit(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

constexpr std::string_view kStopwords[] = {
    "de",     "en",     "van",    "ik",    "te",    "dat",   "die",     "in",     "een",   "hij",
    "het",    "niet",   "zijn",   "is",    "was",   "op",    "aan",     "met",    "als",   "voor",
    "had",    "er",     "maar",   "om",    "hem",   "dan",   "zou",     "of",     "wat",   "mijn",
    "men",    "dit",    "zo",     "door",  "over",  "ze",    "zich",    "bij",    "ook",   "tot",
    "je",     "mij",    "uit",    "der",   "daar",  "haar",  "naar",    "heb",    "hoe",   "heeft",
    "hebben", "deze",   "u",      "want",  "nog",   "zal",   "me",      "zij",    "nu",    "ge",
    "geen",   "omdat",  "iets",   "worden", "toch", "al",    "waren",   "veel",   "meer",  "doen",
    "toen",   "moet",   "ben",    "zonder", "kan",  "hun",   "dus",     "alles",  "onder", "ja",
    "eens",   "hier",   "wie",    "werd",  "altijd", "doch", "wordt",   "wezen",  "kunnen", "ons",
    "zelf",   "tegen",  "na",     "reeds", "wil",   "kon",   "niets",   "uw",     "iemand", "geweest",
    "andere",
};

// Folds Latin-1 and Latin Extended-A letters that occur in Dutch text.
char fold_letter(char32_t c) {
    if (c < 0x80) {
        return static_cast<char>(c);
    }
    switch (c) {
    case U'à': case U'á': case U'â': case U'ã': case U'ä': case U'å':
    case U'À': case U'Á': case U'Â': case U'Ã': case U'Ä': case U'Å':
        return 'a';
    case U'ç': case U'Ç':
        return 'c';
    case U'è': case U'é': case U'ê': case U'ë':
    case U'È': case U'É': case U'Ê': case U'Ë':
        return 'e';
    case U'ì': case U'í': case U'î': case U'ï':
    case U'Ì': case U'Í': case U'Î': case U'Ï':
        return 'i';
    case U'ñ': case U'Ñ':
        return 'n';
    case U'ò': case U'ó': case U'ô': case U'õ': case U'ö': case U'ø':
    case U'Ò': case U'Ó': case U'Ô': case U'Õ': case U'Ö': case U'Ø':
        return 'o';
    case U'ù': case U'ú': case U'û': case U'ü':
    case U'Ù': case U'Ú': case U'Û': case U'Ü':
        return 'u';
    case U'ý': case U'ÿ': case U'Ý':
        return 'y';
    default:
        return ' ';
    }
}

const boost::regex& date_time_pattern() {
    static const boost::regex re(
        R"((?:\b(?i:om|op|rond|vanaf|tot|sinds|per)\s+)?(?<![^\s(])\d{1,4}[-/.:]\d{1,2}(?:[-/.:]\d{1,4})?(?:\s*(?i:uur|u)\b)?(?![^\s,;.!?)]))");
    return re;
}

const boost::regex& digit_word_pattern() {
    static const boost::regex re(R"(\S*\d\S*)");
    return re;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending = !out.empty();
        } else {
            if (pending) {
                out.push_back(' ');
                pending = false;
            }
            out.push_back(c);
        }
    }
    return out;
}

} // namespace

const std::unordered_set<std::string>& dutch_stopwords() {
    static const std::unordered_set<std::string> words = [] {
        std::unordered_set<std::string> w;
        for (auto s : kStopwords) {
            w.emplace(s);
        }
        return w;
    }();
    return words;
}

const std::vector<ReplacementRule>& seed_replacement_rules() {
    static const std::vector<ReplacementRule> rules{
        {R"(\bZH\b)", "ziekenhuis", "hospital"},
        {R"(\b[Zz]('|[a-zA-Z]*)huis\b)", "ziekenhuis", "hospital spellings"},
        {R"(\b[Gg](?!\.)\b)", "gewicht", "weight"},
        {R"(\b[Ff]([Tt]|ysio)\b)", "fysiotherapeut", "physiotherapist"},
        {R"(\bMP\b)", "moedervanvader", "paternal grandmother"},
        {R"(\bMM\b)", "moedervanmoeder", "maternal grandmother"},
        {R"(\bP\b)", "papa", "father"},
        {R"(\b[Mm]\b)", "moeder", "mother"},
        {R"(\bK\b)", "kind", "child"},
        {R"(\b[Kk][Vv]\b)", "kunstvoeding", "formula feeding"},
        {R"(\b[Ff][Vv]\b)", "kunstvoeding", "bottle feeding"},
        {R"(\b[Bb][Vv]\b)", "borstvoeding", "breastfeeding"},
        {R"(\bvoll\b)", "volledig", "full"},
    };
    return rules;
}

PrepConfig PrepConfig::dutch_defaults() {
    PrepConfig c;
    c.rules = seed_replacement_rules();
    c.stopwords = dutch_stopwords();
    return c;
}

void PrepConfig::validate() const {
    if (ngram_min < 1 || ngram_max < ngram_min || ngram_max > 3) {
        throw ConfigError("n-gram range must satisfy 1 <= min <= max <= 3");
    }
    if (!negation_whitelist.contains("niet") || !negation_whitelist.contains("geen")) {
        throw ConfigError("negation whitelist must contain \"niet\" and \"geen\"");
    }
    CompiledRules check(rules);
}

std::vector<ReplacementRule> load_rules(const std::filesystem::path& path) {
    const Table t = read_table(path);
    const auto pat = t.column("pattern");
    const auto rep = t.column("replacement");
    if (!pat || !rep) {
        throw SchemaError(path.string(), !pat ? "pattern" : "replacement",
                          path.string() + ": rules file needs pattern and replacement columns");
    }
    const auto note = t.column("note");
    std::vector<ReplacementRule> rules;
    for (const auto& row : t.rows) {
        if (row.size() <= std::max(*pat, *rep)) {
            throw DataError(path.string() + ": short row in rules file");
        }
        ReplacementRule r{row[*pat], row[*rep], {}};
        if (note && *note < row.size()) {
            r.note = row[*note];
        }
        rules.push_back(std::move(r));
    }
    CompiledRules check(rules);
    return rules;
}

void save_rules(const std::filesystem::path& path, const std::vector<ReplacementRule>& rules) {
    Table t{{"pattern", "replacement", "note"}, {}};
    for (const auto& r : rules) {
        t.rows.push_back({r.pattern, r.replacement, r.note});
    }
    write_table(path, t);
}

std::unordered_set<std::string> load_stopwords(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::unordered_set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        const std::string w = collapse_whitespace(line);
        if (!w.empty() && w.front() != '#') {
            words.insert(w);
        }
    }
    return words;
}

struct CompiledRules::Impl {
    std::vector<std::pair<boost::regex, std::string>> rules;
    std::vector<std::string> patterns;
};

CompiledRules::CompiledRules(const std::vector<ReplacementRule>& rules) : impl_(std::make_unique<Impl>()) {
    for (const auto& r : rules) {
        if (has_digit(r.replacement)) {
            throw ConfigError("replacement for '" + r.pattern + "' contains a digit");
        }
        try {
            impl_->rules.emplace_back(boost::regex(r.pattern, boost::regex::perl), r.replacement);
        } catch (const boost::regex_error& e) {
            throw ConfigError("rule '" + r.pattern + "' does not compile: " + e.what());
        }
        impl_->patterns.push_back(r.pattern);
    }
}

CompiledRules::~CompiledRules() = default;
CompiledRules::CompiledRules(CompiledRules&&) noexcept = default;
CompiledRules& CompiledRules::operator=(CompiledRules&&) noexcept = default;

std::size_t CompiledRules::size() const { return impl_ ? impl_->rules.size() : 0; }

std::string CompiledRules::apply(std::string_view text) const {
    std::string current(text);
    if (!impl_) {
        return current;
    }
    for (std::size_t i = 0; i < impl_->rules.size(); ++i) {
        const auto& [re, replacement] = impl_->rules[i];
        try {
            current = boost::regex_replace(current, re, replacement,
                                           boost::match_default | boost::regex_constants::format_literal);
        } catch (const std::runtime_error& e) {
            skipped_->fetch_add(1, std::memory_order_relaxed);
            spdlog::warn("replacement rule '{}' skipped: {}", impl_->patterns[i], e.what());
        }
    }
    return current;
}

std::string apply_replacements(std::string_view text, const std::vector<ReplacementRule>& rules) {
    return CompiledRules(rules).apply(text);
}

std::string remove_trivial(std::string_view text) {
    std::string s(text);
    s = boost::regex_replace(s, date_time_pattern(), " ", boost::match_default | boost::regex_constants::format_literal);
    s = boost::regex_replace(s, digit_word_pattern(), " ", boost::match_default | boost::regex_constants::format_literal);
    return collapse_whitespace(s);
}

std::string normalize_characters(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char32_t c : detail::utf8_decode(text)) {
        char f = fold_letter(c);
        if (f >= 'A' && f <= 'Z') {
            f = static_cast<char>(f - 'A' + 'a');
        }
        out.push_back((f >= 'a' && f <= 'z') ? f : ' ');
    }
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) {
        tokens.push_back(std::move(cur));
    }
    return tokens;
}

std::vector<std::string> remove_stopwords(std::vector<std::string> tokens, const PrepConfig& config) {
    std::erase_if(tokens, [&](const std::string& t) {
        return config.stopwords.contains(t) && !config.negation_whitelist.contains(t);
    });
    return tokens;
}

TermSequence ngrams(const std::vector<std::string>& tokens, int min, int max) {
    if (min < 1 || max < min) {
        throw ArgumentError("n-gram range must satisfy 1 <= min <= max");
    }
    TermSequence out;
    const auto n_tokens = static_cast<int>(tokens.size());
    for (int n = min; n <= max; ++n) {
        for (int i = 0; i + n <= n_tokens; ++i) {
            std::string g = tokens[static_cast<std::size_t>(i)];
            for (int k = 1; k < n; ++k) {
                g += kNgramJoiner;
                g += tokens[static_cast<std::size_t>(i + k)];
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

Preprocessor::Preprocessor(PrepConfig config) : config_(std::move(config)), rules_(config_.rules) {
    config_.validate();
}

std::vector<std::string> Preprocessor::tokens(std::string_view text) const {
    const std::string replaced = rules_.apply(text);
    const std::string trimmed = remove_trivial(replaced);
    auto toks = remove_stopwords(tokenize(normalize_characters(trimmed)), config_);
    if (config_.stemming) {
        for (auto& t : toks) {
            t = stem(t);
        }
        std::erase_if(toks, [](const std::string& t) { return t.empty(); });
    }
    return toks;
}

TermSequence Preprocessor::operator()(std::string_view text) const {
    return ngrams(tokens(text), config_.ngram_min, config_.ngram_max);
}

TermSequence preprocess(std::string_view text, const PrepConfig& config) {
    return Preprocessor(config)(text);
}

std::vector<TermSequence> preprocess_all(const Preprocessor& prep, const std::vector<std::string_view>& texts,
                                         int jobs) {
    std::vector<TermSequence> out(texts.size());
    const auto n = static_cast<long>(texts.size());
#pragma omp parallel for schedule(dynamic, 64) if (jobs > 1) num_threads(jobs > 1 ? jobs : 1)
    for (long i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = prep(texts[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<AbbreviationCandidate> extract_abbreviation_candidates(const std::vector<std::string>& texts,
                                                                   std::size_t max_len, std::size_t window) {
    auto is_vowel = [](char c) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
    };
    auto trim = [](std::string_view w) {
        auto keep = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
        while (!w.empty() && !keep(w.front())) {
            w.remove_prefix(1);
        }
        while (!w.empty() && !keep(w.back())) {
            w.remove_suffix(1);
        }
        return w;
    };
    auto qualifies = [&](std::string_view w) {
        std::size_t letters = 0;
        bool dotted = false;
        bool consonants_only = true;
        for (char c : w) {
            if (c == '.') {
                dotted = true;
            } else if (std::isalpha(static_cast<unsigned char>(c))) {
                ++letters;
                consonants_only = consonants_only && !is_vowel(c);
            } else {
                return false;
            }
        }
        return letters > 0 && letters <= max_len && (consonants_only || dotted);
    };

    struct Entry {
        std::size_t frequency = 0;
        std::string context;
    };
    std::map<std::string, Entry, std::less<>> found;
    for (const auto& text : texts) {
        std::vector<std::string_view> words;
        std::size_t pos = 0;
        while (pos < text.size()) {
            while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) {
                ++pos;
            }
            const std::size_t start = pos;
            while (pos < text.size() && !std::isspace(static_cast<unsigned char>(text[pos]))) {
                ++pos;
            }
            if (pos > start) {
                words.emplace_back(text.data() + start, pos - start);
            }
        }
        for (std::size_t i = 0; i < words.size(); ++i) {
            const auto w = trim(words[i]);
            if (w.empty() || !qualifies(w)) {
                continue;
            }
            auto [it, inserted] = found.try_emplace(std::string(w));
            ++it->second.frequency;
            if (inserted) {
                const std::size_t lo = i >= window ? i - window : 0;
                const std::size_t hi = std::min(words.size(), i + window + 1);
                std::string ctx;
                for (std::size_t k = lo; k < hi; ++k) {
                    if (!ctx.empty()) {
                        ctx.push_back(' ');
                    }
                    ctx.append(words[k]);
                }
                it->second.context = std::move(ctx);
            }
        }
    }

    std::vector<AbbreviationCandidate> out;
    out.reserve(found.size());
    for (auto& [w, e] : found) {
        out.push_back({w, e.frequency, std::move(e.context)});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.frequency > b.frequency; });
    return out;
}

} // namespace zsl
