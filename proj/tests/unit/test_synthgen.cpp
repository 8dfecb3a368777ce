#include "doctest.h"

#include "tmpdir.hpp"

#include "zsl/error.hpp"
#include "zsl/explore.hpp"
#include "zsl/synthgen.hpp"
#include "zsl/table.hpp"
#include "zsl/textprep.hpp"

#include <cmath>
#include <numeric>

using namespace zsl;
using zsl::testing::TempDir;

TEST_CASE("synthgen: defaults register exactly round(n * rate * registration) children, byte-stably") {
    GenConfig g;
    g.seed = 5;
    const auto a = generate(g);
    CHECK(a.corpus.size() == 13170);
    CHECK(a.true_positives == 659);
    CHECK(a.registered == 198);
    std::size_t derived = 0;
    for (const auto& c : a.corpus.children()) {
        derived += derive_label(c);
    }
    CHECK(derived == 198);

    TempDir d1("gen1");
    TempDir d2("gen2");
    write_generated(a, g, d1.path());
    write_generated(generate(g), g, d2.path());
    for (const auto& entry : std::filesystem::directory_iterator(d1.path())) {
        const auto name = entry.path().filename().string();
        INFO(name);
        CHECK(read_file(entry.path()) == read_file(d2 / name));
    }

    // Realized rates within 2% of the targets.
    const double consults = static_cast<double>(a.corpus.consult_count()) / static_cast<double>(a.corpus.size());
    CHECK(std::abs(consults - g.consults_mean) / g.consults_mean <= 0.02);
    const double rate = static_cast<double>(a.true_positives) / static_cast<double>(a.corpus.size());
    CHECK(std::abs(rate - g.positive_rate) / g.positive_rate <= 0.02);

    const auto b = generate([&] {
        auto h = g;
        h.seed = 6;
        return h;
    }());
    CHECK(b.truth != a.truth);
}

TEST_CASE("synthgen: files re-ingest to the same corpus; truth only in its own file") {
    GenConfig g;
    g.n_children = 400;
    g.positive_rate = 0.1;
    g.seed = 2;
    const auto gen = generate(g);
    TempDir dir("reingest");
    write_generated(gen, g, dir.path());
    const auto back = ingest_corpus(CorpusPaths::in_directory(dir.path()));
    CHECK(back.report.warnings.empty());
    CHECK(back.corpus == gen.corpus);
    CHECK(read_ground_truth(dir / "ground_truth.csv", back.corpus) == gen.truth);

    // No ingested table carries the ground-truth column.
    for (const auto* name : {"conclusions.csv", "bmi.csv", "family_relations.csv", "worries_zsl.csv",
                             "actions_zsl.csv", "findings_zsl.csv", "attention_child.csv"}) {
        const auto t = read_table(dir / name);
        CHECK_FALSE(t.column("true_label").has_value());
    }
    // Registered children are a subset of true positives.
    const auto labels = derive_labels(gen.corpus);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        REQUIRE(labels[i] <= gen.truth[i]);
    }
}

TEST_CASE("synthgen: no positives") {
    GenConfig g;
    g.n_children = 300;
    g.positive_rate = 0;
    const auto gen = generate(g);
    CHECK(gen.true_positives == 0);
    CHECK(gen.registered == 0);
    CHECK(std::accumulate(gen.truth.begin(), gen.truth.end(), 0) == 0);
    for (const auto& c : gen.corpus.children()) {
        REQUIRE(c.zsl_findings.empty());
    }
}

TEST_CASE("synthgen: lexicon survives preprocessing and signal tokens are reserved") {
    GenConfig g;
    g.n_children = 50;
    const auto gen = generate(g);
    const Preprocessor prep(PrepConfig::dutch_defaults());
    CHECK(gen.lexicon.size() == g.vocab_size);
    CHECK(gen.signal_tokens.size() == g.signal_vocab_size);
    for (const auto& w : gen.lexicon) {
        REQUIRE(prep.tokens(w) == std::vector<std::string>{w});
    }
    for (const auto& w : gen.signal_tokens) {
        REQUIRE(prep.tokens(w) == std::vector<std::string>{w});
        REQUIRE(std::find(gen.lexicon.begin(), gen.lexicon.end(), w) == gen.lexicon.end());
    }
}

TEST_CASE("synthgen: strong length signal is visible to the U test") {
    GenConfig g;
    g.n_children = 2000;
    g.positive_rate = 0.1;
    g.registration_rate = 1.0;
    g.signal_strength = 1.0;
    g.length_boost = 2.0;
    g.seed = 8;
    const auto gen = generate(g);
    CHECK(screen_feature(gen.corpus, ScreenFeature::avg_soc_length, 0).p_value < 0.001);
}

TEST_CASE("synthgen: config validation and JSON") {
    GenConfig g;
    g.positive_rate = 1.5;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g = GenConfig{};
    g.length_boost = 0.5;
    CHECK_THROWS_AS(g.validate(), ConfigError);
    g = GenConfig{};
    g.signal_strength = 0.6;
    g.seed = 99;
    const auto back = GenConfig::from_json(g.to_json());
    CHECK(back.to_json() == g.to_json());
}
