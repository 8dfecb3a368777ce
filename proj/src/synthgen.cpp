#include "zsl/synthgen.hpp"

#include "zsl/error.hpp"
#include "zsl/table.hpp"
#include "zsl/textprep.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <unordered_map>

namespace zsl {

void GenConfig::validate() const {
    auto rate = [](double v, const char* name) {
        if (!(v >= 0 && v <= 1)) {
            throw ConfigError(std::string(name) + " must lie in [0,1]");
        }
    };
    rate(positive_rate, "positive_rate");
    rate(registration_rate, "registration_rate");
    rate(signal_strength, "signal_strength");
    rate(background_signal_rate, "background_signal_rate");
    rate(structured_strength, "structured_strength");
    if (!(length_boost >= 1)) {
        throw ConfigError("length_boost must be >= 1");
    }
    if (!(consults_mean >= 0)) {
        throw ConfigError("consults_mean must be >= 0");
    }
    if (vocab_size < 10 || signal_vocab_size == 0) {
        throw ConfigError("lexicons need at least 10 ordinary and 1 signal word");
    }
}

nlohmann::json GenConfig::to_json() const {
    return {{"n_children", n_children},
            {"positive_rate", positive_rate},
            {"registration_rate", registration_rate},
            {"signal_strength", signal_strength},
            {"length_boost", length_boost},
            {"consults_mean", consults_mean},
            {"vocab_size", vocab_size},
            {"signal_vocab_size", signal_vocab_size},
            {"background_signal_rate", background_signal_rate},
            {"structured_strength", structured_strength},
            {"seed", seed}};
}

GenConfig GenConfig::from_json(const nlohmann::json& j) {
    GenConfig c;
    c.n_children = j.value("n_children", c.n_children);
    c.positive_rate = j.value("positive_rate", c.positive_rate);
    c.registration_rate = j.value("registration_rate", c.registration_rate);
    c.signal_strength = j.value("signal_strength", c.signal_strength);
    c.length_boost = j.value("length_boost", c.length_boost);
    c.consults_mean = j.value("consults_mean", c.consults_mean);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.signal_vocab_size = j.value("signal_vocab_size", c.signal_vocab_size);
    c.background_signal_rate = j.value("background_signal_rate", c.background_signal_rate);
    c.structured_strength = j.value("structured_strength", c.structured_strength);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace {

using Rng = std::mt19937_64;

bool chance(Rng& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

std::string pad(int v, int width) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%0*d", width, v);
    return buf;
}

/// Pronounceable words that survive replacement, stopword removal and stemming unchanged.
std::vector<std::string> make_words(Rng& rng, std::size_t n, const Preprocessor& prep, std::set<std::string>& taken,
                                    const std::string& onset_set) {
    static const std::vector<std::string> vowels{"a", "e", "i", "o", "u", "aa", "oe", "ie", "ou", "ij"};
    static const std::vector<std::string> codas{"", "", "", "k", "l", "m", "n", "p", "r", "s", "t"};
    std::vector<std::string> onsets;
    for (char c : onset_set) {
        onsets.emplace_back(1, c);
    }
    std::vector<std::string> out;
    std::uniform_int_distribution<int> syllables(2, 3);
    while (out.size() < n) {
        std::string w;
        const int s = syllables(rng);
        for (int i = 0; i < s; ++i) {
            w += pick(rng, onsets);
            w += pick(rng, vowels);
        }
        w += pick(rng, codas);
        if (w.size() < 4 || taken.contains(w)) {
            continue;
        }
        const auto t = prep.tokens(w);
        if (t.size() != 1 || t[0] != w) {
            continue;
        }
        taken.insert(w);
        out.push_back(w);
    }
    return out;
}

struct Lexicon {
    std::vector<std::string> words;
    std::discrete_distribution<std::size_t> zipf;
    std::vector<std::string> signal;
};

const std::vector<std::string> kLocations{"CB Centrum", "CB Noord", "CB Oost", "CB Zuid", "CB West", "CB Haven"};
const std::vector<std::string> kConsultActions{"Consult 4 weken", "Consult 3 maanden", "Consult 6 maanden",
                                               "Consult 11 maanden", "Consult 14 maanden", "Consult 2 jaar",
                                               "Consult 3 jaar", "Consult 45 maanden", "Huisbezoek"};

std::string date_text(Rng& rng) {
    std::uniform_int_distribution<int> day(1, 28);
    std::uniform_int_distribution<int> month(1, 12);
    return pad(day(rng), 2) + "-" + pad(month(rng), 2) + "-20" + pad(std::uniform_int_distribution<int>(8, 20)(rng), 2);
}

/// One consult note of roughly `target` words.
std::string make_note(Rng& rng, Lexicon& lex, std::size_t target, std::size_t signal_tokens) {
    std::vector<std::string> sentences;
    std::size_t words = 0;
    auto w = [&] { return lex.words[lex.zipf(rng)]; };
    while (words < target) {
        std::string s;
        switch (std::uniform_int_distribution<int>(0, 9)(rng)) {
        case 0:
            s = "M " + w() + " " + w() + " " + w() + ".";
            words += 4;
            break;
        case 1:
            s = "K " + w() + " niet " + w() + ".";
            words += 4;
            break;
        case 2:
            s = "Gewicht " + std::to_string(std::uniform_int_distribution<int>(3000, 16000)(rng)) + " gram, lengte " +
                std::to_string(std::uniform_int_distribution<int>(48, 105)(rng)) + " cm.";
            words += 5;
            break;
        case 3:
            s = "Volgende afspraak op " + date_text(rng) + " om " +
                std::to_string(std::uniform_int_distribution<int>(8, 16)(rng)) + ":" +
                pad(std::uniform_int_distribution<int>(0, 3)(rng) * 15, 2) + " uur.";
            words += 6;
            break;
        case 4:
            s = (chance(rng, 0.5) ? "bv " : "kv ") + w() + " " + w() + ".";
            words += 3;
            break;
        default: {
            const int n = std::uniform_int_distribution<int>(3, 7)(rng);
            for (int i = 0; i < n; ++i) {
                s += (i ? " " : "") + w();
            }
            s += ".";
            words += static_cast<std::size_t>(n);
        }
        }
        sentences.push_back(std::move(s));
    }
    for (std::size_t k = 0; k < signal_tokens; ++k) {
        auto& s = sentences[std::uniform_int_distribution<std::size_t>(0, sentences.size() - 1)(rng)];
        s.insert(0, pick(rng, lex.signal) + " ");
    }
    std::string note;
    for (const auto& s : sentences) {
        if (!note.empty()) {
            note += ' ';
        }
        note += s;
    }
    if (!note.empty()) {
        note[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(note[0])));
    }
    return note;
}

const std::vector<ObservationCategory> kRiskCategories{
    ObservationCategory::dramatic_event,
    ObservationCategory::mothers_health,
    ObservationCategory::burden_vs_carrying_family,
    ObservationCategory::burden_vs_carrying_child,
    ObservationCategory::burden_vs_carrying_environment,
    ObservationCategory::burden_vs_carrying_parents,
};

const std::vector<std::string> kFindingValues{"zorg", "afwijkend", "verwezen", "besproken"};
const std::vector<std::string> kNoFindingValues{"geen bijzonderheden", "gb", "nee"};
const std::vector<std::string> kCountries{"Nederland", "Nederland", "Nederland", "Nederland", "Nederland",
                                          "Nederland", "Marokko",   "Turkije",   "Suriname",  "Polen"};

void add_structured(Rng& rng, ChildRecord& child, bool positive, double strength) {
    const std::string location = child.consults.empty() ? pick(rng, kLocations) : child.consults.front().location;
    auto add = [&](ObservationCategory c, std::string value) {
        child.structured_observations.push_back({c, std::move(value), location, "Registratie"});
    };
    for (auto c : all_observation_categories()) {
        switch (kind_of(c)) {
        case ObservationKind::count_with_findings: {
            const bool risk = std::find(kRiskCategories.begin(), kRiskCategories.end(), c) != kRiskCategories.end();
            const int rows = std::uniform_int_distribution<int>(0, 2)(rng);
            for (int r = 0; r < rows; ++r) {
                const double p = 0.08 + (risk && positive ? 0.45 * strength : 0.0);
                add(c, chance(rng, p) ? pick(rng, kFindingValues) : pick(rng, kNoFindingValues));
            }
            break;
        }
        case ObservationKind::count: {
            const double mean = 0.6 + (positive ? 2.0 * strength : 0.0);
            const int v = std::poisson_distribution<int>(mean)(rng);
            if (v > 0) {
                add(c, std::to_string(v));
            }
            break;
        }
        case ObservationKind::numeric: {
            const double age = std::normal_distribution<double>(31.0 - (positive ? 4.0 * strength : 0.0), 4.5)(rng);
            add(c, std::to_string(static_cast<int>(std::clamp(age, 16.0, 48.0))));
            break;
        }
        case ObservationKind::categorical:
            add(c, pick(rng, kCountries));
            break;
        }
    }
}

void add_bmi(Rng& rng, ChildRecord& child) {
    for (int k = 0; k < 3; ++k) {
        const int days = 60 + k * 400 + std::uniform_int_distribution<int>(0, 60)(rng);
        const double years = days / 365.25;
        BmiMeasurement m;
        m.date = add_days(child.birth_date, days);
        m.action_type = "Meting";
        m.age_years = std::round(years * 100) / 100;
        m.length_cm = std::round((55.0 + 25.0 * years + std::normal_distribution<double>(0, 2)(rng)) * 10) / 10;
        m.weight_kg = std::round((4.5 + 3.0 * years + std::normal_distribution<double>(0, 0.5)(rng)) * 100) / 100;
        m.bmi = m.weight_kg / ((m.length_cm / 100) * (m.length_cm / 100));
        child.bmi_series.push_back(m);
    }
}

} // namespace

GeneratedCorpus generate(const GenConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const Preprocessor prep(PrepConfig::dutch_defaults());

    GeneratedCorpus out;
    std::set<std::string> taken;
    Lexicon lex;
    lex.words = make_words(rng, config.vocab_size, prep, taken, "bdfghklmnprstvwz");
    lex.signal = make_words(rng, config.signal_vocab_size, prep, taken, "jxq");
    std::vector<double> weights(lex.words.size());
    for (std::size_t r = 0; r < weights.size(); ++r) {
        weights[r] = 1.0 / static_cast<double>(r + 1);
    }
    lex.zipf = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());

    const std::size_t n = config.n_children;
    const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.positive_rate));
    const auto n_reg = std::min(n_pos, static_cast<std::size_t>(std::llround(
                                           static_cast<double>(n) * config.positive_rate * config.registration_rate)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> truth(n, 0);
    std::vector<char> registered(n, 0);
    for (std::size_t k = 0; k < n_pos; ++k) {
        truth[order[k]] = 1;
        registered[order[k]] = k < n_reg;
    }

    const std::chrono::year_month_day epoch{std::chrono::year{2008}, std::chrono::month{1}, std::chrono::day{1}};
    const std::vector<double> interval_weights{0.5, 0.2, 0.15, 0.15};
    std::discrete_distribution<int> interval(interval_weights.begin(), interval_weights.end());
    std::poisson_distribution<int> consult_count(config.consults_mean);
    std::poisson_distribution<int> base_length(14);
    std::vector<ChildRecord> children;
    children.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const bool positive = truth[i] == 1;
        ChildRecord c;
        c.child_id = "C" + pad(static_cast<int>(i + 1), 6);
        c.birth_date = add_days(epoch, std::uniform_int_distribution<int>(0, 3650)(rng));
        c.sex = chance(rng, 0.5) ? Sex::male : Sex::female;

        const int consults = config.consults_mean > 0 ? std::min(consult_count(rng), 4 * 360) : 0;
        // Distinct days, so ingest never sees a duplicate consult.
        std::set<int> day_set;
        while (day_set.size() < static_cast<std::size_t>(consults)) {
            const int iv = interval(rng);
            day_set.insert(iv * 366 + std::uniform_int_distribution<int>(1, 360)(rng));
        }
        const std::vector<int> ages(day_set.begin(), day_set.end());
        const std::string home = pick(rng, kLocations);
        for (int days : ages) {
            std::size_t length = 6 + static_cast<std::size_t>(base_length(rng));
            if (positive) {
                length = static_cast<std::size_t>(std::llround(static_cast<double>(length) * config.length_boost));
            }
            std::size_t signal = 0;
            if (positive && chance(rng, config.signal_strength)) {
                signal = chance(rng, 0.5) ? 2 : 1;
            } else if (!positive && chance(rng, config.background_signal_rate)) {
                signal = 1;
            }
            ConsultNote note;
            note.location = chance(rng, 0.85) ? home : pick(rng, kLocations);
            note.action_type = pick(rng, kConsultActions);
            note.observation_date = add_days(c.birth_date, days);
            note.text = make_note(rng, lex, length, signal);
            c.consults.push_back(std::move(note));
        }

        c.relations.push_back({"moeder", "R" + pad(static_cast<int>(2 * i + 1), 7),
                               add_days(c.birth_date, -std::uniform_int_distribution<int>(20 * 365, 40 * 365)(rng))});
        if (chance(rng, 0.85)) {
            c.relations.push_back({"vader", "R" + pad(static_cast<int>(2 * i + 2), 7),
                                   add_days(c.birth_date,
                                            -std::uniform_int_distribution<int>(20 * 365, 45 * 365)(rng))});
        }
        const int siblings = std::poisson_distribution<int>(positive ? 1.0 + config.structured_strength : 1.0)(rng);
        for (int s = 0; s < siblings; ++s) {
            c.relations.push_back({chance(rng, 0.5) ? "broer" : "zus", "",
                                   add_days(c.birth_date, std::uniform_int_distribution<int>(-3000, 1500)(rng))});
        }
        add_bmi(rng, c);
        add_structured(rng, c, positive, config.structured_strength);
        c.attention = chance(rng, positive ? 0.05 + 0.4 * config.structured_strength : 0.05);
        if (registered[i]) {
            const Date when = c.consults.empty() ? add_days(c.birth_date, 200)
                                                 : c.consults[c.consults.size() / 2].observation_date;
            c.zsl_findings.push_back({when, "ZSL registratie", "zorgen sociale omgeving", "zorg"});
        }
        children.push_back(std::move(c));
    }
    for (auto& c : children) {
        for (auto& r : c.relations) {
            if (r.relative_id.empty()) {
                r.relative_id = "S" + c.child_id.substr(1) + "-" + pad(static_cast<int>(&r - c.relations.data()), 2);
            }
        }
    }
    out.corpus = Corpus(std::move(children));
    out.truth.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        // Corpus order equals generation order: ids ascend with i.
        out.truth[i] = truth[i];
    }
    out.lexicon = std::move(lex.words);
    out.signal_tokens = std::move(lex.signal);
    out.true_positives = n_pos;
    out.registered = n_reg;
    return out;
}

void write_generated(const GeneratedCorpus& generated, const GenConfig& config, const std::filesystem::path& dir) {
    export_corpus(generated.corpus, dir);
    Table truth{{"child_id", "true_label"}, {}};
    for (std::size_t i = 0; i < generated.corpus.size(); ++i) {
        truth.rows.push_back({generated.corpus[i].child_id, generated.truth[i] ? "1" : "0"});
    }
    write_table(dir / "ground_truth.csv", truth);
    const nlohmann::json manifest{{"config", config.to_json()},
                                  {"true_positives", generated.true_positives},
                                  {"registered", generated.registered},
                                  {"signal_tokens", generated.signal_tokens}};
    write_file(dir / "synth_manifest.json", manifest.dump(1) + "\n");
}

std::vector<int> read_ground_truth(const std::filesystem::path& path, const Corpus& corpus) {
    const Table t = read_table(path);
    const auto id = t.column("child_id");
    const auto label = t.column("true_label");
    if (!id || !label) {
        throw SchemaError(path.string(), !id ? "child_id" : "true_label", "missing column");
    }
    std::unordered_map<std::string, int> by_id;
    for (const auto& r : t.rows) {
        if (r.size() <= std::max(*id, *label)) {
            throw DataError(path.string() + ": short row");
        }
        by_id[r[*id]] = r[*label] == "1" ? 1 : 0;
    }
    std::vector<int> y;
    y.reserve(corpus.size());
    for (const auto& c : corpus.children()) {
        auto it = by_id.find(c.child_id);
        if (it == by_id.end()) {
            throw DataError(path.string() + ": no ground truth for " + c.child_id);
        }
        y.push_back(it->second);
    }
    return y;
}

} // namespace zsl
