// zslctl: command-line front end to the zsl library.

#include "zsl/corpus.hpp"
#include "zsl/error.hpp"
#include "zsl/eval.hpp"
#include "zsl/explore.hpp"
#include "zsl/parallel.hpp"
#include "zsl/pipeline.hpp"
#include "zsl/service.hpp"
#include "zsl/synthgen.hpp"
#include "zsl/table.hpp"

#include "CLI11.hpp"

#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace zsl;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kTraining = 4 };

struct Common {
    int jobs = 1;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out;
    std::string log_level = "warn";
};

void emit(const Json& j, const std::string& out_dir, const std::string& file) {
    const std::string text = j.dump(2) + "\n";
    if (!out_dir.empty()) {
        write_file(fs::path(out_dir) / file, text);
    }
    std::cout << text;
}

Corpus load_corpus(const std::string& dir) {
    auto r = ingest_corpus(CorpusPaths::in_directory(dir));
    for (const auto& w : r.report.warnings) {
        spdlog::warn("{}", w);
    }
    return std::move(r.corpus);
}

PipelineConfig load_config(const std::string& path, const Common& c) {
    PipelineConfig cfg = path.empty() ? PipelineConfig{} : PipelineConfig::load(path);
    if (c.seed_set) {
        cfg.seed = c.seed;
    }
    return cfg;
}

std::optional<std::size_t> train_count(long v) {
    if (v < 0) {
        return std::nullopt; // half the positives
    }
    return static_cast<std::size_t>(v);
}

Json ingest_report_json(const IngestReport& r) {
    return Json{{"skeleton_records", r.skeleton_records},
                {"duplicate_conclusions", r.duplicate_conclusions},
                {"bmi_recomputed", r.bmi_recomputed},
                {"consult_before_birth", r.consult_before_birth},
                {"finding_before_birth", r.finding_before_birth},
                {"conflicting_sex", r.conflicting_sex},
                {"unknown_categories", r.unknown_categories},
                {"warnings", r.warnings}};
}

Json utest_json(const UTestResult& r) {
    return Json{{"u_statistic", r.u_statistic},
                {"p_value", r.p_value},
                {"n_a", r.n_a},
                {"n_b", r.n_b},
                {"method", to_string(r.method)}};
}

HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) {
        g_server->stop();
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"zslctl: case-file classification toolkit"};
    app.require_subcommand(1);
    Common c;
    app.add_option("--jobs", c.jobs, "Worker threads")->check(CLI::Range(1, 1024));
    auto* seed_opt = app.add_option("--seed", c.seed, "Seed for every random choice");
    app.add_option("--out", c.out, "Output directory");
    app.add_option("--log-level", c.log_level, "trace, debug, info, warn, error")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    std::string corpus_dir;
    std::string config_path;
    std::string truth_path;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Read a corpus directory and report data issues");
    std::string salt;
    ingest->add_option("--corpus", corpus_dir, "Corpus directory")->required();
    ingest->add_option("--salt", salt, "Pseudonymize ids with this key before exporting to --out");

    // stats
    auto* stats = app.add_subcommand("stats", "Corpus statistics");
    std::size_t sample = 1000;
    stats->add_option("--corpus", corpus_dir)->required();
    stats->add_option("--sample", sample, "Consults sampled for lexical diversity");

    // cluster
    auto* cluster = app.add_subcommand("cluster", "k-means over tf-idf child vectors with an elbow curve");
    std::size_t k_min = 2, k_max = 10, top_vocab = 1000, top_m = 10, restarts = 10;
    bool cosine = false;
    cluster->add_option("--corpus", corpus_dir)->required();
    cluster->add_option("--k-min", k_min);
    cluster->add_option("--k-max", k_max);
    cluster->add_option("--vocab", top_vocab, "Most frequent terms used as dimensions");
    cluster->add_option("--top-terms", top_m);
    cluster->add_option("--restarts", restarts);
    cluster->add_flag("--cosine", cosine);

    // screen
    auto* screen = app.add_subcommand("screen", "Mann-Whitney U screening of a per-child feature");
    std::string feature = "avg_soc_length";
    std::string interval = "0-1";
    screen->add_option("--corpus", corpus_dir)->required();
    screen->add_option("--feature", feature)->check(CLI::IsMember({"avg_soc_length", "consult_count"}));
    screen->add_option("--interval", interval)->check(CLI::IsMember({"0-1", "1-2", "2-3", "3-4"}));
    screen->add_option("--ground-truth", truth_path, "Group by these labels instead of derived ones");

    // train
    auto* train = app.add_subcommand("train", "Fit a pipeline on an undersampled training split");
    long p_train = -1, n_train = -1;
    train->add_option("--corpus", corpus_dir)->required();
    train->add_option("--config", config_path, "Pipeline config (JSON)");
    train->add_option("--p-train", p_train, "Training positives; default half the positives");
    train->add_option("--n-train", n_train, "Training negatives; default equal to --p-train");

    // grid
    auto* grid = app.add_subcommand("grid", "Cross-validated grid search");
    std::string axes_path;
    std::size_t folds = 10;
    grid->add_option("--corpus", corpus_dir)->required();
    grid->add_option("--config", config_path);
    grid->add_option("--axes", axes_path, "Grid axes (JSON)")->required();
    grid->add_option("--folds", folds)->check(CLI::PositiveNumber);
    grid->add_option("--p-train", p_train);
    grid->add_option("--n-train", n_train);
    grid->add_option("--ground-truth", truth_path);

    // eval
    auto* eval = app.add_subcommand("eval", "Repeated undersampled splits");
    eval->add_option("--corpus", corpus_dir)->required();
    eval->add_option("--config", config_path);
    eval->add_option("--folds", folds)->check(CLI::PositiveNumber);
    eval->add_option("--p-train", p_train);
    eval->add_option("--n-train", n_train);
    eval->add_option("--ground-truth", truth_path, "Score test rows against these labels");

    // serve
    auto* serve = app.add_subcommand("serve", "HTTP prediction and feedback service");
    std::string service_config;
    std::string model_path;
    ServiceConfig svc;
    bool proxy = false;
    long port = -1;
    serve->add_option("--service-config", service_config, "Service settings (JSON)");
    serve->add_option("--model", model_path, "Pipeline artifact to activate when the registry is empty");
    serve->add_option("--corpus", corpus_dir, "Base corpus for retraining");
    serve->add_option("--config", config_path, "Pipeline config for retraining");
    serve->add_option("--port", port);
    serve->add_flag("--behind-tls-proxy", proxy, "Allow non-loopback binds; TLS terminates upstream");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    GenConfig gen;
    synth->add_option("--children", gen.n_children);
    synth->add_option("--positive-rate", gen.positive_rate);
    synth->add_option("--registration-rate", gen.registration_rate);
    synth->add_option("--signal-strength", gen.signal_strength);
    synth->add_option("--length-boost", gen.length_boost);
    synth->add_option("--consults-mean", gen.consults_mean);
    synth->add_option("--vocab-size", gen.vocab_size);
    synth->add_option("--signal-vocab-size", gen.signal_vocab_size);
    synth->add_option("--structured-strength", gen.structured_strength);

    // predict-file
    auto* pf = app.add_subcommand("predict-file", "Score /predict payloads from a JSONL file");
    std::string input_path;
    pf->add_option("--model", model_path)->required();
    pf->add_option("--input", input_path, "One predict payload per line")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }
    c.seed_set = seed_opt->count() > 0;
    spdlog::set_level(spdlog::level::from_str(c.log_level));
    set_jobs(c.jobs);

    try {
        if (ingest->parsed()) {
            auto r = ingest_corpus(CorpusPaths::in_directory(corpus_dir));
            if (!c.out.empty()) {
                export_corpus(salt.empty() ? r.corpus : deidentify(r.corpus, salt), c.out);
            }
            Json j = ingest_report_json(r.report);
            j["children"] = r.corpus.size();
            j["consults"] = r.corpus.consult_count();
            emit(j, c.out, "ingest_report.json");
        } else if (stats->parsed()) {
            const auto corpus = load_corpus(corpus_dir);
            const auto s = corpus_stats(corpus, sample, c.seed, dutch_stopwords());
            emit(Json{{"n_children", s.n_children},
                      {"n_consults", s.n_consults},
                      {"avg_consults_per_child", s.avg_consults_per_child},
                      {"avg_words_per_consult", s.avg_words_per_consult},
                      {"lexical_diversity_sampled", s.lexical_diversity_sampled},
                      {"lexical_diversity_sampled_no_stopwords", s.lexical_diversity_sampled_no_stopwords}},
                 c.out, "stats.json");
        } else if (cluster->parsed()) {
            if (k_min < 1 || k_max < k_min) {
                throw ArgumentError("need 1 <= --k-min <= --k-max");
            }
            const auto corpus = load_corpus(corpus_dir);
            const auto data = prepare_corpus(corpus, PrepConfig::dutch_defaults(), c.jobs);
            std::vector<const TermSequence*> docs;
            std::vector<const ChildRecord*> children;
            for (std::size_t i = 0; i < corpus.size(); ++i) {
                docs.push_back(&data.docs[i]);
                children.push_back(&corpus[i]);
            }
            FeatureSpaceOptions fo;
            fo.vocab_top_k = top_vocab;
            const auto space = fit_feature_space(docs, children, {}, fo, c.jobs);
            const auto X = assemble(space, docs, children, c.jobs);
            KMeansOptions ko;
            ko.seed = c.seed;
            ko.restarts = restarts;
            ko.cosine = cosine;
            ko.jobs = c.jobs;
            std::vector<std::size_t> ks;
            for (auto k = k_min; k <= k_max; ++k) {
                ks.push_back(k);
            }
            Json elbow = Json::array();
            for (const auto& p : elbow_curve(X, ks, ko)) {
                elbow.push_back(Json{{"k", p.k}, {"sse", p.sse}});
            }
            ko.k = k_max;
            const auto result = kmeans(X, ko);
            Json clusters = Json::array();
            const auto sizes = result.cluster_sizes();
            const auto terms = top_terms(result, X, top_m);
            for (std::size_t k = 0; k < result.k; ++k) {
                Json t = Json::array();
                for (const auto& r : terms[k]) {
                    t.push_back(Json{{"term", r.term}, {"weight", r.weight}});
                }
                clusters.push_back(Json{{"cluster", k}, {"size", sizes[k]}, {"top_terms", t}});
            }
            emit(Json{{"elbow", elbow}, {"k", result.k}, {"sse", result.sse}, {"clusters", clusters}}, c.out,
                 "clusters.json");
        } else if (screen->parsed()) {
            const auto corpus = load_corpus(corpus_dir);
            std::vector<int> labels;
            if (!truth_path.empty()) {
                labels = read_ground_truth(truth_path, corpus);
            }
            const auto r = screen_feature(corpus, parse_screen_feature(feature), parse_age_interval(interval), labels);
            Json j = utest_json(r);
            j["feature"] = feature;
            j["interval"] = interval;
            emit(j, c.out, "screen.json");
        } else if (train->parsed()) {
            const auto corpus = load_corpus(corpus_dir);
            const auto config = load_config(config_path, c);
            const auto data = prepare_corpus(corpus, config.prep, c.jobs);
            const std::size_t half =
                static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1)) / 2;
            const std::size_t pt = train_count(p_train).value_or(half);
            const std::size_t nt = train_count(n_train).value_or(pt);
            const auto plan = SamplingPlan::for_labels(data.labels, pt, nt, 0.0, config.seed);
            const auto split = undersample_split(data.labels, plan);
            std::vector<int> y;
            for (auto r : split.train) {
                y.push_back(data.labels[r]);
            }
            auto model = fit_pipeline(config, data, split.train, y, config.seed, c.jobs);
            model.set_model_version(1);
            const fs::path out = c.out.empty() ? fs::path(".") : fs::path(c.out);
            model.save(out / "model.json");
            std::cout << Json{{"model", (out / "model.json").string()},
                              {"training_rows", split.train.size()},
                              {"positives", pt},
                              {"negatives", nt}}
                             .dump(2)
                      << "\n";
        } else if (grid->parsed() || eval->parsed()) {
            const auto corpus = load_corpus(corpus_dir);
            const auto config = load_config(config_path, c);
            const auto data = prepare_corpus(corpus, config.prep, c.jobs);
            CvOptions o;
            o.folds = folds;
            o.p_train = train_count(p_train);
            o.n_train = n_train < 0 ? o.p_train : train_count(n_train);
            o.jobs = c.jobs;
            if (!truth_path.empty()) {
                o.evaluation_labels = read_ground_truth(truth_path, corpus);
            }
            if (eval->parsed()) {
                const auto r = cross_validate(data, config, o);
                emit(r.to_json(), c.out, "eval.json");
                if (!c.out.empty()) {
                    for (std::size_t f = 0; f < r.folds.size(); ++f) {
                        write_file(fs::path(c.out) / ("roc_fold" + std::to_string(f) + ".csv"),
                                   roc_csv(r.folds[f].roc));
                    }
                }
            } else {
                const auto axes = GridAxes::from_json(Json::parse(read_file(axes_path)));
                const auto cells = grid_search(data, config, axes, o);
                const auto table = grid_table(cells);
                std::cout << table;
                if (!c.out.empty()) {
                    write_file(fs::path(c.out) / "grid.csv", table);
                    write_file(fs::path(c.out) / "grid.json", grid_json(cells).dump(2) + "\n");
                }
            }
        } else if (serve->parsed()) {
            if (!service_config.empty()) {
                svc = ServiceConfig::from_json(Json::parse(read_file(service_config)));
            }
            svc.apply_environment();
            if (port >= 0) {
                svc.port = static_cast<int>(port);
            }
            svc.behind_tls_proxy = svc.behind_tls_proxy || proxy;
            svc.jobs = c.jobs;
            if (!c.out.empty()) {
                svc.state_dir = c.out;
            }
            std::optional<TrainingBase> base;
            if (!corpus_dir.empty()) {
                base = TrainingBase{std::make_shared<const Corpus>(load_corpus(corpus_dir)),
                                    load_config(config_path, c), {}};
            }
            Service service(svc, std::move(base));
            if (!service.registry().active() && !model_path.empty()) {
                service.registry().register_model(PipelineModel::load(model_path));
            }
            if (!service.registry().active()) {
                spdlog::warn("no model loaded; /predict answers 503 until a retrain succeeds");
            }
            service.start_scheduler();
            HttpServer server(service, svc);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.run();
            g_server = nullptr;
        } else if (synth->parsed()) {
            if (c.out.empty()) {
                throw ArgumentError("synth needs --out");
            }
            gen.seed = c.seed;
            const auto g = generate(gen);
            write_generated(g, gen, c.out);
            std::cout << Json{{"children", g.corpus.size()},
                              {"consults", g.corpus.consult_count()},
                              {"true_positives", g.true_positives},
                              {"registered", g.registered},
                              {"out", c.out}}
                             .dump(2)
                      << "\n";
        } else if (pf->parsed()) {
            const auto model = PipelineModel::load(model_path);
            std::ifstream in(input_path);
            if (!in) {
                throw DataError("cannot open " + input_path);
            }
            std::string line;
            std::size_t n = 0;
            std::ostringstream out;
            while (std::getline(in, line)) {
                ++n;
                if (line.empty()) {
                    continue;
                }
                Json input;
                try {
                    input = normalize_predict_payload(Json::parse(line));
                } catch (const Json::parse_error& e) {
                    throw DataError(input_path + ":" + std::to_string(n) + ": " + e.what());
                } catch (const ServiceError& e) {
                    throw DataError(input_path + ":" + std::to_string(n) + ": " + e.path() + ": " + e.what());
                }
                const double s = model.score(child_from_payload(input));
                out << Json{{"line", n}, {"score", s}, {"flagged", model.flagged(s)},
                            {"model_version", model.model_version()}}
                           .dump()
                    << "\n";
            }
            if (!c.out.empty()) {
                write_file(fs::path(c.out) / "predictions.jsonl", out.str());
            }
            std::cout << out.str();
        }
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        if (!e.diagnostics().empty()) {
            std::cerr << "  " << e.diagnostics() << "\n";
        }
        return kTraining;
    } catch (const SchemaError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kUsage;
    } catch (const ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsage;
    } catch (const Json::exception& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kData;
    }
    return kOk;
}
