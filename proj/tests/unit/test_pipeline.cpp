#include "doctest.h"

#include "tmpdir.hpp"

#include "zsl/error.hpp"
#include "zsl/pipeline.hpp"
#include "zsl/synthgen.hpp"
#include "zsl/table.hpp"

#include <numeric>

using namespace zsl;
using zsl::testing::TempDir;

namespace {

struct Fitted {
    GeneratedCorpus gen;
    PreparedCorpus data;
    std::vector<std::size_t> rows;
    std::vector<int> y;
};

const Fitted& fitted() {
    static const Fitted f = [] {
        GenConfig g;
        g.n_children = 300;
        g.positive_rate = 0.15;
        g.registration_rate = 1.0;
        g.consults_mean = 5;
        g.seed = 4;
        Fitted out{generate(g), {}, {}, {}};
        out.data = prepare_corpus(out.gen.corpus, PrepConfig::dutch_defaults());
        out.rows.resize(out.data.size());
        std::iota(out.rows.begin(), out.rows.end(), 0);
        out.y = out.data.labels;
        return out;
    }();
    return f;
}

PipelineConfig ensemble_config() {
    PipelineConfig c;
    c.members.resize(2);
    c.members[0].selector = Selector::chi2;
    c.members[0].k_features = 50;
    c.members[0].model.algorithm = Algorithm::random_forest;
    c.members[0].model.rf_n_trees = 20;
    c.members[1].use_terms = false;
    c.members[1].include_structured = true;
    c.members[1].include_meta = true;
    c.members[1].model.algorithm = Algorithm::svm;
    c.members[1].model.svm_kernel = Kernel::rbf;
    c.weights = {0.6, 0.4};
    c.seed = 11;
    return c;
}

} // namespace

TEST_CASE("config: JSON round trip and validation") {
    const auto c = ensemble_config();
    const auto back = PipelineConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK_NOTHROW(back.validate());

    auto bad = c;
    bad.weights = {0.5, 0.6};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.members.resize(3);
    bad.weights = {0.2, 0.2, 0.6};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.threshold = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config: files resolve relative to the config") {
    TempDir dir("cfg");
    write_file(dir / "lists/stop.txt", "de\nhet\n# comment\n");
    write_file(dir / "lists/rules.csv", "pattern;replacement\n\\bZH\\b;ziekenhuis\n");
    write_file(dir / "p.json", R"({"prep": {"rules_file": "lists/rules.csv", "stopwords_file": "lists/stop.txt"},
                                   "members": [{"weighting": "bm25", "vocab_top_k": 100,
                                                "model": {"algorithm": "multinomial_nb"}}]})");
    const auto c = PipelineConfig::load(dir / "p.json");
    CHECK(c.prep.stopwords == std::unordered_set<std::string>{"de", "het"});
    REQUIRE(c.prep.rules.size() == 1);
    CHECK(c.prep.rules[0].replacement == "ziekenhuis");
    CHECK(c.members[0].scheme.kind == Weighting::bm25);
    CHECK(c.members[0].vocab_top_k == 100);
    CHECK(c.members[0].model.algorithm == Algorithm::multinomial_nb);

    write_file(dir / "bad.json", R"({"members": [{"model": {"algorithm": "svm", "svm_kernel": "sigmoid"}}]})");
    CHECK_THROWS_AS(PipelineConfig::load(dir / "bad.json"), ConfigError);
}

TEST_CASE("shipped configs load") {
    const std::filesystem::path root = std::filesystem::path(ZSL_TEST_DATA_DIR) / "../../data/configs";
    for (const auto* name : {"bench.json", "svm_best.json", "ensemble.json"}) {
        INFO(name);
        const auto c = PipelineConfig::load(root / name);
        CHECK_NOTHROW(c.validate());
        CHECK(c.prep.stopwords == dutch_stopwords());
    }
    const auto bench = PipelineConfig::load(root / "bench.json");
    CHECK(bench.members[0].scheme.kind == Weighting::count);
    CHECK(bench.members[0].vocab_top_k == 100);
    CHECK(bench.members[0].model.rf_n_trees == 100);
}

TEST_CASE("pipeline: scoring paths agree and artifacts round-trip") {
    const auto& f = fitted();
    auto model = fit_pipeline(ensemble_config(), f.data, f.rows, f.y, 11);
    model.set_model_version(3);
    const std::vector<std::size_t> some{0, 5, 17, 200};
    const auto rows = model.score_rows(f.data, some);
    const auto members = model.member_scores(f.data, some);
    REQUIRE(members.size() == 2);
    for (std::size_t i = 0; i < some.size(); ++i) {
        const auto& child = f.gen.corpus[some[i]];
        CHECK(rows[i] == doctest::Approx(0.6 * members[0][i] + 0.4 * members[1][i]).epsilon(1e-12));
        CHECK(model.score(f.data.docs[some[i]], child) == rows[i]);
        CHECK(model.score(child) == rows[i]);
        CHECK(rows[i] >= 0.0);
        CHECK(rows[i] <= 1.0);
    }

    TempDir dir("artifact");
    model.save(dir / "m.json");
    const auto loaded = PipelineModel::load(dir / "m.json");
    CHECK(loaded.model_version() == 3);
    CHECK(loaded.score_rows(f.data, some) == rows);
    loaded.save(dir / "m2.json");
    CHECK(read_file(dir / "m.json") == read_file(dir / "m2.json"));

    auto j = model.to_json();
    j["format_version"] = 99;
    CHECK_THROWS_AS(PipelineModel::from_json(j), DataError);
}

TEST_CASE("pipeline: same seed, same artifact; parallel fit matches serial") {
    const auto& f = fitted();
    const auto a = fit_pipeline(ensemble_config(), f.data, f.rows, f.y, 11, 1);
    const auto b = fit_pipeline(ensemble_config(), f.data, f.rows, f.y, 11, 4);
    CHECK(a.to_json().dump() == b.to_json().dump());
    const auto c = fit_pipeline(ensemble_config(), f.data, f.rows, f.y, 12, 1);
    CHECK(a.to_json().dump() != c.to_json().dump());
}

TEST_CASE("pipeline: ensemble weights (1, 0) reproduce the first member") {
    const auto& f = fitted();
    auto config = ensemble_config();
    config.weights = {1.0, 0.0};
    const auto model = fit_pipeline(config, f.data, f.rows, f.y, 1);
    const std::vector<std::size_t> some{1, 2, 3};
    const auto members = model.member_scores(f.data, some);
    CHECK(model.score_rows(f.data, some) == members[0]);
}
