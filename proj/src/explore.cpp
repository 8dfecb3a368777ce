#include "zsl/explore.hpp"

#include "zsl/error.hpp"
#include "zsl/parallel.hpp"

#include "detail/utf8.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace zsl {

namespace {

double squared_norm(std::span<const double> v) {
    double s = 0;
    for (double x : v) {
        s += x * x;
    }
    return s;
}

double sparse_dot(std::span<const std::uint32_t> idx, std::span<const double> val, const std::vector<double>& dense) {
    double s = 0;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        s += val[k] * dense[idx[k]];
    }
    return s;
}

/// Exact squared distance, walking every coordinate.
double exact_distance(const FeatureMatrix& X, std::size_t r, const std::vector<double>& c) {
    const auto idx = X.row_indices(r);
    const auto val = X.row_values(r);
    double s = 0;
    std::size_t k = 0;
    for (std::size_t j = 0; j < c.size(); ++j) {
        double x = 0;
        if (k < idx.size() && idx[k] == j) {
            x = val[k++];
        }
        const double d = x - c[j];
        s += d * d;
    }
    return s;
}

FeatureMatrix normalized_rows(const FeatureMatrix& X) {
    FeatureMatrix out(X.columns());
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        SparseVector v = X.row(r);
        const double n = std::sqrt(squared_norm(v.values));
        if (n > 0) {
            for (auto& x : v.values) {
                x /= n;
            }
        }
        out.append_row(v);
    }
    return out;
}

struct Fast {
    std::vector<double> row_norms;

    explicit Fast(const FeatureMatrix& X) : row_norms(X.n_rows()) {
        for (std::size_t r = 0; r < X.n_rows(); ++r) {
            row_norms[r] = squared_norm(X.row_values(r));
        }
    }

    double distance(const FeatureMatrix& X, std::size_t r, const std::vector<double>& c, double c_norm) const {
        const double d = row_norms[r] + c_norm - 2.0 * sparse_dot(X.row_indices(r), X.row_values(r), c);
        return d > 0 ? d : 0.0;
    }
};

std::vector<double> row_as_centroid(const FeatureMatrix& X, std::size_t r) { return X.dense_row(r); }

std::vector<std::vector<double>> seed_plus_plus(const FeatureMatrix& X, const Fast& fast, std::size_t k,
                                                std::mt19937_64& rng) {
    const std::size_t n = X.n_rows();
    std::vector<std::vector<double>> centroids;
    std::vector<char> chosen(n, 0);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::size_t first = pick(rng);
    chosen[first] = 1;
    centroids.push_back(row_as_centroid(X, first));
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    while (centroids.size() < k) {
        const auto& c = centroids.back();
        const double cn = squared_norm(c);
        double total = 0;
        for (std::size_t r = 0; r < n; ++r) {
            d2[r] = std::min(d2[r], fast.distance(X, r, c, cn));
            if (!chosen[r]) {
                total += d2[r];
            }
        }
        std::size_t next = n;
        if (total > 0) {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t r = 0; r < n; ++r) {
                if (chosen[r]) {
                    continue;
                }
                next = r;
                target -= d2[r];
                if (target < 0 && d2[r] > 0) {
                    break;
                }
            }
        } else {
            // All remaining rows coincide with a centroid; take any unused one.
            std::vector<std::size_t> free;
            for (std::size_t r = 0; r < n; ++r) {
                if (!chosen[r]) {
                    free.push_back(r);
                }
            }
            next = free[std::uniform_int_distribution<std::size_t>(0, free.size() - 1)(rng)];
        }
        chosen[next] = 1;
        centroids.push_back(row_as_centroid(X, next));
    }
    return centroids;
}

struct LloydOutcome {
    std::vector<std::size_t> assignments;
    std::vector<std::vector<double>> centroids;
    double sse = 0;
    std::size_t iterations = 0;
    std::vector<double> trace;
};

LloydOutcome lloyd(const FeatureMatrix& X, std::vector<std::vector<double>> centroids, std::size_t max_iter) {
    const std::size_t n = X.n_rows();
    const std::size_t k = centroids.size();
    const std::size_t d = X.n_cols();
    const Fast fast(X);
    LloydOutcome out;
    out.assignments.assign(n, k);
    std::vector<std::size_t> assignments(n, 0);
    for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
        assign_nearest_serial(X, centroids, assignments);
        const bool changed = assignments != out.assignments;
        out.assignments = assignments;
        ++out.iterations;

        std::vector<std::vector<double>> next(k, std::vector<double>(d, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t r = 0; r < n; ++r) {
            const auto c = assignments[r];
            ++counts[c];
            const auto idx = X.row_indices(r);
            const auto val = X.row_values(r);
            for (std::size_t q = 0; q < idx.size(); ++q) {
                next[c][idx[q]] += val[q];
            }
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                continue;
            }
            for (auto& x : next[c]) {
                x /= static_cast<double>(counts[c]);
            }
        }
        // Empty clusters take the row farthest from its own centroid.
        std::vector<char> taken(n, 0);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] != 0) {
                continue;
            }
            double best = -1;
            std::size_t far = 0;
            for (std::size_t r = 0; r < n; ++r) {
                if (taken[r] || counts[assignments[r]] <= 1) {
                    continue;
                }
                const double dist = exact_distance(X, r, next[assignments[r]]);
                if (dist > best) {
                    best = dist;
                    far = r;
                }
            }
            taken[far] = 1;
            next[c] = X.dense_row(far);
        }
        centroids = std::move(next);
        out.trace.push_back(cluster_sse(X, centroids, assignments));
        if (!changed && it > 0) {
            break;
        }
    }
    out.centroids = std::move(centroids);
    out.sse = out.trace.back();
    return out;
}

ClusterResult to_result(LloydOutcome&& o, std::size_t restart) {
    ClusterResult r;
    r.k = o.centroids.size();
    r.assignments = std::move(o.assignments);
    r.centroids = std::move(o.centroids);
    r.sse = o.sse;
    r.iterations = o.iterations;
    r.restart = restart;
    r.sse_trace = std::move(o.trace);
    return r;
}

bool better(const ClusterResult& a, const ClusterResult& b) {
    return a.sse != b.sse ? a.sse < b.sse : a.restart < b.restart;
}

} // namespace

std::vector<std::size_t> ClusterResult::cluster_sizes() const {
    std::vector<std::size_t> sizes(k, 0);
    for (auto a : assignments) {
        ++sizes[a];
    }
    return sizes;
}

double assign_nearest_serial(const FeatureMatrix& X, const std::vector<std::vector<double>>& centroids,
                             std::vector<std::size_t>& assignments) {
    const Fast fast(X);
    std::vector<double> cn(centroids.size());
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        cn[c] = squared_norm(centroids[c]);
    }
    assignments.resize(X.n_rows());
    double sse = 0;
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            const double d = fast.distance(X, r, centroids[c], cn[c]);
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        assignments[r] = arg;
        sse += best;
    }
    return sse;
}

double assign_nearest(const FeatureMatrix& X, const std::vector<std::vector<double>>& centroids,
                      std::vector<std::size_t>& assignments, int jobs) {
    if (jobs <= 1) {
        return assign_nearest_serial(X, centroids, assignments);
    }
    const Fast fast(X);
    std::vector<double> cn(centroids.size());
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        cn[c] = squared_norm(centroids[c]);
    }
    assignments.resize(X.n_rows());
    std::vector<double> best_d(X.n_rows());
    const auto n = static_cast<long>(X.n_rows());
#pragma omp parallel for schedule(static) num_threads(jobs)
    for (long i = 0; i < n; ++i) {
        const auto r = static_cast<std::size_t>(i);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t c = 0; c < centroids.size(); ++c) {
            const double d = fast.distance(X, r, centroids[c], cn[c]);
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        assignments[r] = arg;
        best_d[r] = best;
    }
    // Serial reduction keeps the sum independent of the schedule.
    return std::accumulate(best_d.begin(), best_d.end(), 0.0);
}

double cluster_sse(const FeatureMatrix& X, const std::vector<std::vector<double>>& centroids,
                   std::span<const std::size_t> assignments) {
    double s = 0;
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        s += exact_distance(X, r, centroids[assignments[r]]);
    }
    return s;
}

ClusterResult kmeans(const FeatureMatrix& input, const KMeansOptions& options) {
    if (options.k < 1 || options.k > input.n_rows()) {
        throw ArgumentError("kmeans: k must be in [1, n_rows]");
    }
    const FeatureMatrix normalized = options.cosine ? normalized_rows(input) : FeatureMatrix{};
    const FeatureMatrix& X = options.cosine ? normalized : input;
    const std::size_t restarts = std::max<std::size_t>(options.restarts, 1);
    std::vector<ClusterResult> results(restarts);
    const auto nr = static_cast<long>(restarts);
#pragma omp parallel for schedule(dynamic) if (options.jobs > 1) num_threads(options.jobs > 1 ? options.jobs : 1)
    for (long i = 0; i < nr; ++i) {
        const auto r = static_cast<std::size_t>(i);
        std::mt19937_64 rng(derive_seed(options.seed, r));
        const Fast fast(X);
        auto seeds = seed_plus_plus(X, fast, options.k, rng);
        results[r] = to_result(lloyd(X, std::move(seeds), options.max_iter), r);
    }
    std::size_t best = 0;
    for (std::size_t r = 1; r < restarts; ++r) {
        if (better(results[r], results[best])) {
            best = r;
        }
    }
    return std::move(results[best]);
}

std::vector<ElbowPoint> elbow_curve(const FeatureMatrix& input, std::vector<std::size_t> k_range,
                                    const KMeansOptions& options) {
    std::sort(k_range.begin(), k_range.end());
    k_range.erase(std::unique(k_range.begin(), k_range.end()), k_range.end());
    const FeatureMatrix normalized = options.cosine ? normalized_rows(input) : FeatureMatrix{};
    const FeatureMatrix& X = options.cosine ? normalized : input;

    std::vector<ElbowPoint> curve;
    std::optional<ClusterResult> previous;
    for (auto k : k_range) {
        KMeansOptions o = options;
        o.k = k;
        o.cosine = false;
        ClusterResult fresh = kmeans(X, o);
        if (previous) {
            auto centroids = previous->centroids;
            auto assignments = previous->assignments;
            while (centroids.size() < k) {
                double best = -1;
                std::size_t far = 0;
                for (std::size_t r = 0; r < X.n_rows(); ++r) {
                    const double d = exact_distance(X, r, centroids[assignments[r]]);
                    if (d > best) {
                        best = d;
                        far = r;
                    }
                }
                centroids.push_back(X.dense_row(far));
                assign_nearest_serial(X, centroids, assignments);
            }
            ClusterResult warm = to_result(lloyd(X, std::move(centroids), options.max_iter), o.restarts);
            if (warm.sse < fresh.sse) {
                fresh = std::move(warm);
            }
        }
        curve.push_back({k, fresh.sse});
        previous = std::move(fresh);
    }
    return curve;
}

std::vector<std::vector<RankedTerm>> top_terms(const ClusterResult& result, std::span<const std::string> names,
                                               std::size_t m) {
    std::vector<std::vector<RankedTerm>> out;
    for (const auto& c : result.centroids) {
        if (c.size() != names.size()) {
            throw ArgumentError("top_terms: name count differs from centroid dimension");
        }
        const std::size_t take = std::min(m, c.size());
        std::vector<std::size_t> order(c.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                          [&](std::size_t a, std::size_t b) { return c[a] != c[b] ? c[a] > c[b] : a < b; });
        std::vector<RankedTerm> terms;
        for (std::size_t i = 0; i < take; ++i) {
            terms.push_back({names[order[i]], c[order[i]]});
        }
        out.push_back(std::move(terms));
    }
    return out;
}

std::vector<std::vector<RankedTerm>> top_terms(const ClusterResult& result, const FeatureMatrix& X, std::size_t m) {
    std::vector<std::string> names;
    for (const auto& c : X.columns()) {
        names.push_back(c.name);
    }
    return top_terms(result, names, m);
}

std::string_view to_string(UTestMethod m) { return m == UTestMethod::exact ? "exact" : "normal_approx"; }

namespace {

/// U for sample a by midranks; identical to the pairwise count with half ties.
double u_by_ranks(std::span<const double> a, std::span<const double> b, double* tie_term) {
    std::vector<std::pair<double, int>> pooled;
    pooled.reserve(a.size() + b.size());
    for (double x : a) {
        pooled.emplace_back(x, 0);
    }
    for (double x : b) {
        pooled.emplace_back(x, 1);
    }
    std::sort(pooled.begin(), pooled.end(), [](const auto& p, const auto& q) { return p.first < q.first; });
    double rank_sum_a = 0;
    double ties = 0;
    for (std::size_t i = 0; i < pooled.size();) {
        std::size_t j = i;
        while (j < pooled.size() && pooled[j].first == pooled[i].first) {
            ++j;
        }
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        const double t = static_cast<double>(j - i);
        ties += t * t * t - t;
        for (std::size_t q = i; q < j; ++q) {
            if (pooled[q].second == 0) {
                rank_sum_a += midrank;
            }
        }
        i = j;
    }
    if (tie_term) {
        *tie_term = ties;
    }
    const double na = static_cast<double>(a.size());
    return rank_sum_a - na * (na + 1.0) / 2.0;
}

double pair_u(const std::vector<double>& v, unsigned mask) {
    double u = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(mask >> i & 1U)) {
            continue;
        }
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (mask >> j & 1U) {
                continue;
            }
            u += v[i] > v[j] ? 1.0 : (v[i] == v[j] ? 0.5 : 0.0);
        }
    }
    return u;
}

} // namespace

UTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) {
        throw ArgumentError("mann_whitney_u: both samples need at least one value");
    }
    UTestResult r;
    r.n_a = a.size();
    r.n_b = b.size();
    double ties = 0;
    r.u_statistic = u_by_ranks(a, b, &ties);
    const double na = static_cast<double>(r.n_a);
    const double nb = static_cast<double>(r.n_b);
    const double mu = na * nb / 2.0;
    const double observed = std::abs(r.u_statistic - mu);

    if (r.n_a + r.n_b <= kExactUTestLimit) {
        r.method = UTestMethod::exact;
        std::vector<double> pooled(a.begin(), a.end());
        pooled.insert(pooled.end(), b.begin(), b.end());
        const unsigned n = static_cast<unsigned>(pooled.size());
        std::size_t total = 0;
        std::size_t extreme = 0;
        for (unsigned mask = 0; mask < (1U << n); ++mask) {
            if (static_cast<std::size_t>(std::popcount(mask)) != r.n_a) {
                continue;
            }
            ++total;
            if (std::abs(pair_u(pooled, mask) - mu) >= observed - 1e-9) {
                ++extreme;
            }
        }
        r.p_value = static_cast<double>(extreme) / static_cast<double>(total);
        return r;
    }

    r.method = UTestMethod::normal_approx;
    const double n = na + nb;
    const double variance = na * nb / 12.0 * ((n + 1.0) - ties / (n * (n - 1.0)));
    if (variance <= 0) {
        r.p_value = 1.0;
        return r;
    }
    const double z = std::max(0.0, observed - 0.5) / std::sqrt(variance);
    r.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return r;
}

std::string_view to_string(ScreenFeature f) {
    return f == ScreenFeature::avg_soc_length ? "avg_soc_length" : "consult_count";
}

ScreenFeature parse_screen_feature(std::string_view s) {
    if (s == "avg_soc_length") {
        return ScreenFeature::avg_soc_length;
    }
    if (s == "consult_count") {
        return ScreenFeature::consult_count;
    }
    throw ArgumentError("unknown screening feature '" + std::string(s) + "'");
}

int parse_age_interval(std::string_view s) {
    for (int lo = 0; lo < static_cast<int>(kAgeIntervals); ++lo) {
        if (s == std::to_string(lo) + "-" + std::to_string(lo + 1)) {
            return lo;
        }
    }
    throw ArgumentError("age interval must be one of 0-1, 1-2, 2-3, 3-4");
}

std::optional<double> child_feature(const ChildRecord& child, ScreenFeature feature, int interval) {
    std::size_t count = 0;
    std::size_t chars = 0;
    for (const auto& n : child.consults) {
        const double age = years_between(child.birth_date, n.observation_date);
        if (age >= interval && age < interval + 1) {
            ++count;
            chars += detail::utf8_decode(n.text).size();
        }
    }
    if (feature == ScreenFeature::consult_count) {
        return static_cast<double>(count);
    }
    if (count == 0) {
        return std::nullopt;
    }
    return static_cast<double>(chars) / static_cast<double>(count);
}

UTestResult screen_feature(const Corpus& corpus, ScreenFeature feature, int interval, std::span<const int> labels) {
    if (interval < 0 || interval >= static_cast<int>(kAgeIntervals)) {
        throw ArgumentError("screen_feature: interval out of range");
    }
    std::vector<int> derived;
    if (labels.empty()) {
        derived = derive_labels(corpus);
        labels = derived;
    }
    if (labels.size() != corpus.size()) {
        throw ArgumentError("screen_feature: label count differs from corpus size");
    }
    std::vector<double> pos;
    std::vector<double> neg;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (auto v = child_feature(corpus[i], feature, interval)) {
            (labels[i] == 1 ? pos : neg).push_back(*v);
        }
    }
    if (pos.empty() || neg.empty()) {
        throw ArgumentError("screen_feature: a label group has no children with consults in the interval");
    }
    return mann_whitney_u(pos, neg);
}

} // namespace zsl
