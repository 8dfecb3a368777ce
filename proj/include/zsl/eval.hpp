#pragma once

#include "zsl/pipeline.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace zsl {

struct SamplingPlan {
    std::size_t p_prime = 0;
    std::size_t n_prime = 0;
    std::size_t p_train = 325;
    std::size_t n_train = 325;
    double neg_test_fraction = 0.5;
    std::uint64_t seed = 0;

    std::size_t n_test() const;
    std::size_t p_test() const { return p_prime - p_train; }
    /// Throws ArgumentError when the counts cannot be drawn.
    void validate() const;

    /// Population counts taken from `labels`.
    static SamplingPlan for_labels(std::span<const int> labels, std::size_t p_train, std::size_t n_train,
                                   double neg_test_fraction = 0.5, std::uint64_t seed = 0);
};

struct Split {
    std::vector<std::size_t> train; ///< ascending
    std::vector<std::size_t> test;  ///< ascending
};

/// Plan counts must match the labels. Logs a warning when no positive test row remains.
Split undersample_split(std::span<const int> labels, const SamplingPlan& plan);

struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

struct RocPoint {
    double fpr = 0;
    double tpr = 0;
    bool operator==(const RocPoint&) const = default;
};

struct MetricReport {
    double precision = 0;
    double recall = 0;
    double accuracy = 0;
    double balanced_accuracy = 0;
    double f1 = 0;
    double auc = 0;
    std::vector<RocPoint> roc;
    ConfusionMatrix cm;
    std::vector<std::string> undefined; ///< metrics whose 0/0 was reported as 0

    Json to_json(bool with_roc = false) const;
};

/// Fills the five threshold metrics; auc and roc stay untouched.
MetricReport metrics(const ConfusionMatrix& cm);

struct RocResult {
    std::vector<RocPoint> points;
    double auc = 0;
    bool defined = true; ///< false when one class is absent; auc is then 0
};

/// One vertex per distinct score, scores descending; trapezoidal area.
RocResult roc_auc(std::span<const int> y_true, std::span<const double> scores);

/// Threshold metrics plus ROC/AUC.
MetricReport evaluate_scores(std::span<const int> y_true, std::span<const double> scores, double threshold);

struct CvOptions {
    std::size_t folds = 10;
    /// nullopt: half the positives in the population, for both classes.
    std::optional<std::size_t> p_train = 325;
    std::optional<std::size_t> n_train = 325;
    double neg_test_fraction = 0.5;
    /// Labels used to score the test rows; the derived labels when empty.
    std::vector<int> evaluation_labels;
    int jobs = 1;
};

struct MetricSummary {
    MetricReport mean;
    MetricReport stdev; ///< sample standard deviation; 0 for one fold
};

struct CvResult {
    std::vector<MetricReport> folds;
    MetricSummary summary;
    /// Per-member metrics, averaged over folds, when the pipeline has two members.
    std::vector<MetricSummary> members;

    Json to_json() const;
};

/// Folds are independent undersampled splits with seeds config.seed + i; the
/// whole pipeline is refit on each fold's training rows.
CvResult cross_validate(const PreparedCorpus& data, const PipelineConfig& config, const CvOptions& options);

MetricSummary summarize(std::span<const MetricReport> reports);

struct GridAxes {
    std::vector<Algorithm> algorithms{Algorithm::svm};
    std::vector<Weighting> weightings{Weighting::tfidf_augmented};
    std::vector<Selector> selectors{Selector::chi2};
    std::vector<std::size_t> k_features{1000};
    std::vector<double> svm_C{1.0};
    std::vector<Kernel> kernels{Kernel::linear};

    Json to_json() const;
    static GridAxes from_json(const Json& j);
};

struct GridCell {
    Algorithm algorithm{};
    Weighting weighting{};
    Selector selector{};
    std::size_t k_features = 0;
    double svm_C = 1;
    Kernel kernel{};
    MetricSummary result;
    std::string error; ///< set when the cell's configuration could not be trained
};

/// Cartesian product in axis order; C and kernel only vary for the SVM.
/// `base` supplies preprocessing, remaining hyperparameters and the seed.
std::vector<GridCell> grid_search(const PreparedCorpus& data, const PipelineConfig& base, const GridAxes& axes,
                                  const CvOptions& options);

std::string grid_table(std::span<const GridCell> cells);
Json grid_json(std::span<const GridCell> cells);

/// Two-column CSV "fpr;tpr".
std::string roc_csv(std::span<const RocPoint> roc);

} // namespace zsl
