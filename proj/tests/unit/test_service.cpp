#include "doctest.h"

#include "tmpdir.hpp"

#include "zsl/error.hpp"
#include "zsl/service.hpp"
#include "zsl/synthgen.hpp"
#include "zsl/table.hpp"

#include "httplib.h"

#include <barrier>
#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

using namespace zsl;
using zsl::testing::TempDir;

namespace {

struct World {
    std::shared_ptr<const Corpus> corpus;
    PipelineConfig config;
    PipelineModel model;
    std::vector<std::string> signal;
};

const World& world() {
    static const World w = [] {
        GenConfig g;
        g.n_children = 400;
        g.positive_rate = 0.15;
        g.registration_rate = 1.0;
        g.signal_strength = 0.8;
        g.consults_mean = 5;
        g.seed = 12;
        auto gen = generate(g);
        World out;
        out.corpus = std::make_shared<const Corpus>(std::move(gen.corpus));
        out.signal = gen.signal_tokens;
        out.config.members[0].selector = Selector::chi2;
        out.config.members[0].k_features = 100;
        out.config.members[0].model.algorithm = Algorithm::random_forest;
        out.config.members[0].model.rf_n_trees = 30;
        out.config.seed = 2;
        const auto data = prepare_corpus(*out.corpus, out.config.prep);
        std::vector<std::size_t> rows(data.size());
        std::iota(rows.begin(), rows.end(), 0);
        out.model = fit_pipeline(out.config, data, rows, data.labels, out.config.seed);
        return out;
    }();
    return w;
}

ServiceConfig service_config(const TempDir& dir) {
    ServiceConfig c;
    c.port = 0;
    c.state_dir = dir.path();
    return c;
}

TrainingBase base() {
    return TrainingBase{world().corpus, world().config, {}};
}

int status_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ServiceError& e) {
        return e.status();
    }
    return 200;
}

Json note_payload(const std::string& text) {
    return Json{{"socs", Json::array({text})}, {"structured", Json::array()}};
}

} // namespace

TEST_CASE("payload validation") {
    const Json ok = predict_payload((*world().corpus)[0]);
    CHECK_NOTHROW(normalize_predict_payload(ok));
    const auto child = child_from_payload(normalize_predict_payload(ok));
    CHECK(child.consults == (*world().corpus)[0].consults);
    CHECK(child.structured_observations == (*world().corpus)[0].structured_observations);

    auto with = [&](const std::function<void(Json&)>& edit) {
        Json p = ok;
        edit(p);
        return status_of([&] { normalize_predict_payload(p); });
    };
    CHECK(with([](Json& p) { p["name"] = "Jan"; }) == 422);
    CHECK(with([](Json& p) { p["meta"]["bsn"] = "123"; }) == 422);
    CHECK(with([](Json& p) { p["socs"][0]["email"] = "a@b"; }) == 422);
    CHECK(with([](Json& p) { p["favourite_colour"] = "blue"; }) == 400);
    CHECK(with([](Json& p) { p["socs"] = "text"; }) == 400);
    CHECK(with([](Json& p) { p["structured"][0]["category"] = "shoe_size"; }) == 400);
    CHECK(with([](Json& p) { p["meta"]["birth_date"] = "yesterday"; }) == 400);
    try {
        Json p = ok;
        p["socs"][1]["text"] = 5;
        normalize_predict_payload(p);
        FAIL("expected a schema error");
    } catch (const ServiceError& e) {
        CHECK(e.status() == 400);
        CHECK(e.path() == "$.socs[1].text");
    }
    CHECK(status_of([] { normalize_predict_payload(Json::array()); }) == 400);
    CHECK_NOTHROW(normalize_predict_payload(Json{{"socs", Json::array()}, {"structured", Json::array()}}));
}

TEST_CASE("service config: environment and bind policy") {
    ServiceConfig c;
    c.bind_address = "0.0.0.0";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.behind_tls_proxy = true;
    CHECK_NOTHROW(c.validate());

    setenv("ZSL_PORT", "9123", 1);
    setenv("ZSL_THRESHOLD", "0.3", 1);
    setenv("ZSL_RETRAIN_INTERVAL", "60", 1);
    ServiceConfig e;
    e.apply_environment();
    unsetenv("ZSL_PORT");
    unsetenv("ZSL_THRESHOLD");
    unsetenv("ZSL_RETRAIN_INTERVAL");
    CHECK(e.port == 9123);
    CHECK(e.threshold == 0.3);
    CHECK(e.retrain_interval == std::chrono::seconds(60));

    const auto j = ServiceConfig::from_json(Json{{"port", 0}, {"retrain_interval_seconds", 5}, {"threshold", 0.7}});
    CHECK(j.retrain_interval == std::chrono::seconds(5));
    CHECK(j.threshold == 0.7);
}

TEST_CASE("predict: write before respond, 503 without a model, empty input") {
    TempDir dir("predict");
    Service s(service_config(dir), std::nullopt);
    CHECK(status_of([&] { s.predict(note_payload("prima kind")); }) == 503);
    CHECK(s.health()["status"] == "no_model");

    s.registry().register_model(world().model);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < 50; ++i) {
        const auto r = s.predict(predict_payload((*world().corpus)[i]));
        const auto rec = s.prediction(r["prediction_id"]);
        REQUIRE(rec);
        CHECK(rec->score == r["score"].get<double>());
        CHECK(rec->flagged == (rec->score >= 0.5));
        CHECK(rec->model_version == 1);
        CHECK(rec->input.dump().find("\"C0") == std::string::npos);
        ids.insert(r["prediction_id"]);
    }
    CHECK(ids.size() == 50);
    CHECK(s.prediction_count() == 50);

    const auto empty = s.predict(Json{{"socs", Json::array()}, {"structured", Json::array()}});
    CHECK(empty["score"].get<double>() >= 0.0);

    std::string strong;
    for (const auto& t : world().signal) {
        strong += t + " ";
    }
    CHECK(s.predict(note_payload(strong))["flagged"] == true);
}

TEST_CASE("feedback: 404, latest wins, recovery") {
    TempDir dir("feedback");
    std::string id;
    {
        Service s(service_config(dir), std::nullopt);
        s.registry().register_model(world().model);
        id = s.predict(note_payload("prima kind"))["prediction_id"];
        CHECK(status_of([&] { s.feedback(Json{{"prediction_id", "p0"}, {"confirmed_label", true}}); }) == 404);
        CHECK(status_of([&] { s.feedback(Json{{"prediction_id", id}}); }) == 400);
        const auto ack = s.feedback(Json{{"prediction_id", id}, {"confirmed_label", true}, {"note", "klopt"}});
        CHECK(ack["status"] == "stored");
        s.feedback(Json{{"prediction_id", id}, {"confirmed_label", false}});
        CHECK(s.feedback_for(id)->confirmed_label == false);
    }
    // A dangling feedback line and a torn final prediction line, as after a crash.
    {
        std::ofstream fb(dir / "feedback.jsonl", std::ios::app);
        fb << FeedbackRecord{"p00000000deadbeef", true, "", "2026-01-01T00:00:00Z"}.to_json().dump() << "\n";
        std::ofstream pr(dir / "predictions.jsonl", std::ios::app);
        pr << "{\"id\": \"p1\", \"sco";
    }
    Service s(service_config(dir), std::nullopt);
    CHECK(s.prediction_count() == 1);
    REQUIRE(s.prediction(id));
    REQUIRE(s.feedback_for(id));
    CHECK(s.feedback_for(id)->confirmed_label == false);
    CHECK_FALSE(s.feedback_for("p00000000deadbeef"));
    CHECK(s.registry().active_version() == 1);
    const auto next = s.predict(note_payload("kind"))["prediction_id"].get<std::string>();
    CHECK(next != id);
    const auto lines = read_file(dir / "predictions.jsonl");
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 2);
}

TEST_CASE("journal: replay skips a torn tail") {
    TempDir dir("journal");
    {
        Journal j(dir / "j.jsonl");
        j.append(Json{{"a", 1}});
        j.append(Json{{"a", 2}});
    }
    {
        std::ofstream out(dir / "j.jsonl", std::ios::app);
        out << "{\"a\": 3";
    }
    Journal j(dir / "j.jsonl");
    CHECK(j.replay().size() == 2);
    j.append(Json{{"a", 4}});
    const auto all = j.replay();
    REQUIRE(all.size() == 3);
    CHECK(all[2]["a"] == 4);
}

TEST_CASE("registry: versions never reused, pointer survives restart") {
    TempDir dir("registry");
    {
        ModelRegistry r(dir.path());
        CHECK_FALSE(r.active());
        CHECK(r.register_model(world().model) == 1);
        CHECK(r.register_model(world().model) == 2);
        CHECK(r.active()->model_version() == 2);
    }
    ModelRegistry r(dir.path());
    CHECK(r.active_version() == 2);
    CHECK(r.next_version() == 3);
    CHECK(r.versions() == std::vector<std::uint64_t>{1, 2});
    CHECK(std::filesystem::exists(dir / "ACTIVE"));
}

TEST_CASE("retrain: feedback is folded in; failure keeps the old model") {
    TempDir dir("retrain");
    Service s(service_config(dir), base());
    const auto first = s.retrain();
    REQUIRE(first.status == RetrainStatus::trained);
    CHECK(first.version == 1);

    const auto r = s.predict(predict_payload((*world().corpus)[3]));
    s.feedback(Json{{"prediction_id", r["prediction_id"]}, {"confirmed_label", true}});
    const auto second = s.retrain();
    CHECK(second.status == RetrainStatus::trained);
    CHECK(s.registry().active_version() == 2);

    TempDir other("retrain-none");
    Service no_base(service_config(other), std::nullopt);
    no_base.registry().register_model(world().model);
    const auto failed = no_base.retrain();
    CHECK(failed.status == RetrainStatus::failed);
    CHECK(failed.version == 2);
    CHECK(no_base.registry().active_version() == 1);
}

TEST_CASE("retrain: overlapping calls are skipped") {
    TempDir dir("overlap");
    Service s(service_config(dir), base());
    std::barrier sync(2);
    RetrainOutcome a, b;
    std::thread t1([&] {
        sync.arrive_and_wait();
        a = s.retrain();
    });
    std::thread t2([&] {
        sync.arrive_and_wait();
        b = s.retrain();
    });
    t1.join();
    t2.join();
    const int trained = (a.status == RetrainStatus::trained) + (b.status == RetrainStatus::trained);
    const int skipped = (a.status == RetrainStatus::skipped) + (b.status == RetrainStatus::skipped);
    CHECK(trained >= 1);
    CHECK(trained + skipped == 2);
    CHECK(s.retrain_attempts() == static_cast<std::size_t>(trained));
}

TEST_CASE("scheduler: fires per interval, disabled at zero") {
    TempDir dir("scheduler");
    auto cfg = service_config(dir);
    cfg.retrain_interval = std::chrono::seconds(1);
    Service s(cfg, base());
    s.start_scheduler();
    std::this_thread::sleep_for(std::chrono::milliseconds(2600));
    s.stop_scheduler();
    CHECK(s.retrain_attempts() >= 1);
    CHECK(s.registry().active_version().has_value());

    TempDir off("scheduler-off");
    Service manual(service_config(off), base());
    manual.start_scheduler();
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    manual.stop_scheduler();
    CHECK(manual.retrain_attempts() == 0);
}

TEST_CASE("swap: concurrent predictions see only the old or the new version") {
    TempDir dir("swap");
    Service s(service_config(dir), base());
    s.registry().register_model(world().model);
    std::atomic<bool> done{false};
    std::vector<std::vector<std::uint64_t>> seen(8);
    std::vector<std::thread> clients;
    for (std::size_t t = 0; t < 8; ++t) {
        clients.emplace_back([&, t] {
            std::size_t i = t;
            while (!done.load() || seen[t].size() < 5) {
                const auto r = s.predict(predict_payload((*world().corpus)[i++ % world().corpus->size()]));
                seen[t].push_back(r["model_version"].get<std::uint64_t>());
            }
        });
    }
    const auto outcome = s.retrain();
    done = true;
    for (auto& c : clients) {
        c.join();
    }
    REQUIRE(outcome.status == RetrainStatus::trained);
    std::set<std::uint64_t> versions;
    for (const auto& v : seen) {
        CHECK(std::is_sorted(v.begin(), v.end()));
        versions.insert(v.begin(), v.end());
    }
    for (auto v : versions) {
        CHECK((v == 1 || v == 2));
    }
}

TEST_CASE("http: endpoints, status codes and bearer token") {
    TempDir dir("http");
    auto cfg = service_config(dir);
    cfg.bearer_token = "s3cret";
    Service s(cfg, std::nullopt);
    HttpServer server(s, cfg);
    const int port = server.start();
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    const httplib::Headers auth{{"Authorization", "Bearer s3cret"}};

    auto health = cli.Get("/healthz", auth);
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(Json::parse(health->body)["active_version"].is_null());

    auto unauth = cli.Post("/predict", note_payload("kind").dump(), "application/json");
    REQUIRE(unauth);
    CHECK(unauth->status == 401);

    auto no_model = cli.Post("/predict", auth, note_payload("kind").dump(), "application/json");
    REQUIRE(no_model);
    CHECK(no_model->status == 503);

    s.registry().register_model(world().model);
    auto ok = cli.Post("/predict", auth, predict_payload((*world().corpus)[0]).dump(), "application/json");
    REQUIRE(ok);
    CHECK(ok->status == 200);
    const auto body = Json::parse(ok->body);
    CHECK(body["model_version"] == 1);
    CHECK(s.prediction(body["prediction_id"]));

    auto malformed = cli.Post("/predict", auth, "{not json", "application/json");
    REQUIRE(malformed);
    CHECK(malformed->status == 400);

    auto ident = cli.Post("/predict", auth, Json{{"socs", Json::array()}, {"structured", Json::array()}, {"address", "x"}}.dump(),
                          "application/json");
    REQUIRE(ident);
    CHECK(ident->status == 422);

    auto missing = cli.Post("/feedback", auth, Json{{"prediction_id", "nope"}, {"confirmed_label", false}}.dump(),
                            "application/json");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    auto fb = cli.Post("/feedback", auth,
                       Json{{"prediction_id", body["prediction_id"]}, {"confirmed_label", false}}.dump(),
                       "application/json");
    REQUIRE(fb);
    CHECK(fb->status == 200);
    server.stop();
}
