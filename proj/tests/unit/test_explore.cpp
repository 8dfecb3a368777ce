#include "doctest.h"

#include "fixtures.hpp"

#include "zsl/error.hpp"
#include "zsl/explore.hpp"
#include "zsl/table.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace zsl;
using zsl::testing::dense_matrix;

namespace {

std::vector<double> parse_sample(const std::string& s) {
    std::istringstream in(s);
    std::vector<double> v;
    double x = 0;
    while (in >> x) {
        v.push_back(x);
    }
    return v;
}

FeatureMatrix blobs(std::mt19937_64& rng, std::size_t per_blob, std::vector<std::size_t>* truth) {
    std::normal_distribution<double> noise(0.0, 0.3);
    std::vector<std::vector<double>> rows;
    const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
    for (std::size_t b = 0; b < 3; ++b) {
        for (std::size_t i = 0; i < per_blob; ++i) {
            rows.push_back({centers[b][0] + noise(rng) + 0.01, centers[b][1] + noise(rng) + 0.01});
            if (truth) {
                truth->push_back(b);
            }
        }
    }
    return dense_matrix(rows);
}

double direct_sse(const FeatureMatrix& X, const ClusterResult& r) {
    double sse = 0;
    for (std::size_t i = 0; i < X.n_rows(); ++i) {
        const auto x = X.dense_row(i);
        const auto& c = r.centroids[r.assignments[i]];
        for (std::size_t j = 0; j < x.size(); ++j) {
            sse += (x[j] - c[j]) * (x[j] - c[j]);
        }
    }
    return sse;
}

} // namespace

TEST_CASE("kmeans: k = n gives zero SSE") {
    const auto X = dense_matrix({{1, 2}, {3, 4}, {5, 7}, {0, 1}});
    KMeansOptions o;
    o.k = 4;
    const auto r = kmeans(X, o);
    CHECK(r.sse == doctest::Approx(0.0));
    o.k = 5;
    CHECK_THROWS_AS(kmeans(X, o), ArgumentError);
}

TEST_CASE("kmeans: k = 1 is the column mean") {
    const auto X = dense_matrix({{1, 0}, {3, 2}, {5, 4}, {7, 2}});
    KMeansOptions o;
    o.k = 1;
    const auto r = kmeans(X, o);
    CHECK(r.centroids[0][0] == doctest::Approx(4.0));
    CHECK(r.centroids[0][1] == doctest::Approx(2.0));
    // Squared deviations: x {9,1,1,9}, y {4,0,4,0}.
    CHECK(r.sse == doctest::Approx(28.0));
}

TEST_CASE("kmeans: separated blobs are recovered") {
    std::mt19937_64 rng(1);
    std::vector<std::size_t> truth;
    const auto X = blobs(rng, 30, &truth);
    KMeansOptions o;
    o.k = 3;
    o.seed = 4;
    const auto r = kmeans(X, o);
    // Same partition up to relabeling.
    for (std::size_t i = 0; i < truth.size(); ++i) {
        for (std::size_t j = i + 1; j < truth.size(); ++j) {
            REQUIRE((truth[i] == truth[j]) == (r.assignments[i] == r.assignments[j]));
        }
    }
    CHECK(std::abs(direct_sse(X, r) - r.sse) <= 1e-6);
    for (std::size_t t = 1; t < r.sse_trace.size(); ++t) {
        CHECK(r.sse_trace[t] <= r.sse_trace[t - 1] + 1e-9);
    }
}

TEST_CASE("kmeans: deterministic, and parallel restarts match serial") {
    std::mt19937_64 rng(2);
    const auto X = blobs(rng, 25, nullptr);
    KMeansOptions o;
    o.k = 4;
    o.seed = 9;
    const auto a = kmeans(X, o);
    o.jobs = 4;
    const auto b = kmeans(X, o);
    CHECK(a.assignments == b.assignments);
    CHECK(a.sse == b.sse);
    CHECK(a.restart == b.restart);
}

TEST_CASE("assign_nearest: parallel equals serial") {
    std::mt19937_64 rng(3);
    const auto X = blobs(rng, 200, nullptr);
    const std::vector<std::vector<double>> centroids{{0, 0}, {10, 0}, {0, 10}, {5, 5}};
    std::vector<std::size_t> a(X.n_rows()), b(X.n_rows());
    const double sa = assign_nearest(X, centroids, a, 4);
    const double sb = assign_nearest_serial(X, centroids, b);
    CHECK(a == b);
    CHECK(sa == doctest::Approx(sb).epsilon(1e-12));
}

TEST_CASE("elbow: non-increasing and kinked at the true k") {
    std::mt19937_64 rng(5);
    const auto X = blobs(rng, 20, nullptr);
    KMeansOptions o;
    o.restarts = 5;
    o.seed = 1;
    const auto curve = elbow_curve(X, {1, 2, 3, 4, 5, 6}, o);
    REQUIRE(curve.size() == 6);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        CHECK(curve[i].sse <= curve[i - 1].sse + 1e-9);
    }
    const double drop_to_3 = curve[1].sse - curve[2].sse;
    const double drop_after_3 = curve[2].sse - curve[3].sse;
    CHECK(drop_to_3 > 10 * drop_after_3);
    CHECK(elbow_curve(X, {1}, o).size() == 1);
    const auto tiny = dense_matrix({{0, 1}, {1, 0}, {2, 2}});
    CHECK(elbow_curve(tiny, {3}, o)[0].sse == doctest::Approx(0.0));
}

TEST_CASE("top_terms") {
    ClusterResult r;
    r.k = 2;
    r.centroids = {{0, 1, 0}, {0.2, 0.5, 0.9}};
    const std::vector<std::string> names{"a", "b", "c"};
    const auto t = top_terms(r, names, 2);
    CHECK(t[0][0].term == "b");
    CHECK(t[1][0].term == "c");
    CHECK(t[1][1].term == "b");
    CHECK(t[1][1].weight == 0.5);
    CHECK(top_terms(r, names, 0)[0].empty());
}

TEST_CASE("mann_whitney_u: frozen oracle") {
    const auto table = read_table(std::string(ZSL_TEST_DATA_DIR) + "/mann_whitney_oracle.csv");
    REQUIRE(table.rows.size() == 27);
    for (const auto& row : table.rows) {
        const auto a = parse_sample(row[0]);
        const auto b = parse_sample(row[1]);
        const auto r = mann_whitney_u(a, b);
        INFO(row[0] << " | " << row[1]);
        CHECK(r.u_statistic == std::stod(row[2]));
        CHECK(std::abs(r.p_value - std::stod(row[3])) <= 1e-9);
        CHECK(to_string(r.method) == row[4]);
    }
}

TEST_CASE("mann_whitney_u: symmetry and range") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> a(1 + rng() % 20), b(1 + rng() % 20);
        for (auto& v : a) {
            v = static_cast<double>(rng() % 10);
        }
        for (auto& v : b) {
            v = static_cast<double>(rng() % 10);
        }
        const auto ab = mann_whitney_u(a, b);
        const auto ba = mann_whitney_u(b, a);
        const double prod = static_cast<double>(a.size() * b.size());
        REQUIRE(ab.u_statistic + ba.u_statistic == prod);
        REQUIRE(ab.u_statistic >= 0);
        REQUIRE(ab.u_statistic <= prod);
        REQUIRE(ab.p_value >= 0);
        REQUIRE(ab.p_value <= 1);
        REQUIRE(std::abs(ab.p_value - ba.p_value) <= 1e-12);
    }
    std::vector<double> same(200);
    for (std::size_t i = 0; i < same.size(); ++i) {
        same[i] = static_cast<double>(i % 37);
    }
    CHECK(mann_whitney_u(same, same).p_value > 0.98);
    CHECK_THROWS_AS(mann_whitney_u({}, same), ArgumentError);
}

TEST_CASE("mann_whitney_u: null calibration") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    int rejections = 0;
    const int trials = 2000;
    for (int t = 0; t < trials; ++t) {
        std::vector<double> a(30), b(40);
        for (auto& v : a) {
            v = z(rng);
        }
        for (auto& v : b) {
            v = z(rng);
        }
        rejections += mann_whitney_u(a, b).p_value < 0.05;
    }
    const double rate = static_cast<double>(rejections) / trials;
    CHECK(rate > 0.03);
    CHECK(rate < 0.07);
}

namespace {

ChildRecord screened_child(int id, bool positive, std::size_t length) {
    ChildRecord c;
    c.child_id = "S" + std::to_string(id);
    c.birth_date = parse_date("2010-01-01");
    for (int k = 0; k < 3; ++k) {
        c.consults.push_back({"x", std::to_string(k), add_days(c.birth_date, 30 + 100 * k), std::string(length, 'a')});
    }
    if (positive) {
        c.zsl_findings.push_back({add_days(c.birth_date, 500), "a", "b", "c"});
    }
    return c;
}

} // namespace

TEST_CASE("screen_feature") {
    std::vector<ChildRecord> kids;
    for (int i = 0; i < 40; ++i) {
        const bool pos = i < 10;
        kids.push_back(screened_child(i, pos, (pos ? 60 : 30) + static_cast<std::size_t>(i % 7)));
    }
    const Corpus corpus(kids);
    const auto r = screen_feature(corpus, ScreenFeature::avg_soc_length, 0);
    CHECK(r.n_a == 10);
    CHECK(r.n_b == 30);
    CHECK(r.p_value < 0.05);
    CHECK(r.u_statistic == 300.0);

    const auto count = screen_feature(corpus, ScreenFeature::consult_count, 0);
    CHECK(count.p_value > 0.05);

    // Children with no consult in the interval drop out of the average-length test.
    const auto later = screen_feature(corpus, ScreenFeature::consult_count, 2);
    CHECK(later.n_a == 10);
    CHECK_THROWS_AS(screen_feature(corpus, ScreenFeature::avg_soc_length, 2), ArgumentError);

    std::vector<int> none(corpus.size(), 0);
    CHECK_THROWS_AS(screen_feature(corpus, ScreenFeature::avg_soc_length, 0, none), ArgumentError);
    CHECK(parse_age_interval("2-3") == 2);
    CHECK_THROWS_AS(parse_age_interval("4-5"), ArgumentError);
}
