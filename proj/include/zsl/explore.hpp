#pragma once

#include "zsl/corpus.hpp"
#include "zsl/vectorize.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace zsl {

struct ClusterResult {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;
    std::vector<std::vector<double>> centroids;
    double sse = 0;
    std::size_t iterations = 0;
    std::size_t restart = 0;          ///< index of the winning restart
    std::vector<double> sse_trace;    ///< SSE after every Lloyd iteration of the winning restart

    std::vector<std::size_t> cluster_sizes() const;
};

struct KMeansOptions {
    std::size_t k = 8;
    std::uint64_t seed = 0;
    std::size_t restarts = 10;
    std::size_t max_iter = 300;
    bool cosine = false; ///< cluster L2-normalized rows instead of raw rows
    int jobs = 1;        ///< restarts run in parallel when > 1
};

/// k-means++ seeding, Lloyd iterations, best restart by (sse, restart index).
ClusterResult kmeans(const FeatureMatrix& X, const KMeansOptions& options);

/// Nearest-centroid assignment kernel; returns the SSE of the assignment.
double assign_nearest(const FeatureMatrix& X, const std::vector<std::vector<double>>& centroids,
                      std::vector<std::size_t>& assignments, int jobs);
double assign_nearest_serial(const FeatureMatrix& X, const std::vector<std::vector<double>>& centroids,
                             std::vector<std::size_t>& assignments);

/// Sum of squared distances of rows to their assigned centroid.
double cluster_sse(const FeatureMatrix& X, const std::vector<std::vector<double>>& centroids,
                   std::span<const std::size_t> assignments);

struct ElbowPoint {
    std::size_t k = 0;
    double sse = 0;
};

/// Each k after the first also tries a warm start from the previous solution
/// plus farthest points, so the curve never increases.
std::vector<ElbowPoint> elbow_curve(const FeatureMatrix& X, std::vector<std::size_t> k_range,
                                    const KMeansOptions& options);

struct RankedTerm {
    std::string term;
    double weight = 0;
};

/// Per centroid, the m columns with the largest coordinates (ties: lower column).
std::vector<std::vector<RankedTerm>> top_terms(const ClusterResult& result, std::span<const std::string> names,
                                               std::size_t m);
std::vector<std::vector<RankedTerm>> top_terms(const ClusterResult& result, const FeatureMatrix& X, std::size_t m);

enum class UTestMethod { exact, normal_approx };
std::string_view to_string(UTestMethod m);

struct UTestResult {
    double u_statistic = 0;
    double p_value = 1;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    UTestMethod method = UTestMethod::exact;
};

inline constexpr std::size_t kExactUTestLimit = 12;

/// U counts pairs with a > b plus half the ties. Two-sided p: exact permutation
/// distribution when n_a + n_b <= 12, otherwise the tie-corrected normal
/// approximation with continuity correction.
UTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

enum class ScreenFeature { avg_soc_length, consult_count };
std::string_view to_string(ScreenFeature f);
ScreenFeature parse_screen_feature(std::string_view s);

/// Age interval [lo, lo+1) years with lo in {0,1,2,3}; parses "0-1" .. "3-4".
int parse_age_interval(std::string_view s);

/// Per-child feature over consults in the interval; nullopt when the average
/// is undefined (no consults there).
std::optional<double> child_feature(const ChildRecord& child, ScreenFeature feature, int interval);

/// Splits children by `labels` (derived labels when empty) and tests the
/// positive group against the negative group.
UTestResult screen_feature(const Corpus& corpus, ScreenFeature feature, int interval,
                           std::span<const int> labels = {});

} // namespace zsl
