#pragma once

#include "zsl/vectorize.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace zsl {

enum class Algorithm { bernoulli_nb, multinomial_nb, random_forest, svm };
enum class Kernel { linear, poly, rbf };

std::string_view to_string(Algorithm a);
Algorithm parse_algorithm(std::string_view s);
std::string_view to_string(Kernel k);
Kernel parse_kernel(std::string_view s);

struct ModelSpec {
    Algorithm algorithm = Algorithm::random_forest;
    double nb_alpha = 1.0;
    std::size_t rf_n_trees = 100;               ///< 0: one tree per feature column
    std::optional<std::size_t> rf_max_features; ///< default max(1, floor(sqrt(n_cols)))
    bool rf_bootstrap = true;
    Kernel svm_kernel = Kernel::linear;
    double svm_C = 1.0;
    int poly_degree = 3;
    std::optional<double> rbf_gamma;            ///< also the poly scale; default 1/n_cols
    double svm_tolerance = 1e-3;
    std::size_t svm_max_iter = 0;               ///< 0: max(10^7, 100 n)
    bool svm_trace_objective = false;
    std::uint64_t seed = 0;

    /// Throws ConfigError for values outside each field's domain.
    void validate() const;

    Json to_json() const;
    static ModelSpec from_json(const Json& j);
    bool operator==(const ModelSpec&) const = default;
};

struct NaiveBayesParams {
    bool bernoulli = true;
    std::array<double, 2> prior{};                   ///< [neg, pos]
    std::array<std::vector<double>, 2> likelihood;   ///< P(feature | class), per column

    bool operator==(const NaiveBayesParams&) const = default;
};

/// Flat binary tree; leaves have feature == -1.
struct DecisionTree {
    std::vector<std::int32_t> feature;
    std::vector<double> threshold;
    std::vector<std::int32_t> left;
    std::vector<std::int32_t> right;
    std::vector<double> vote; ///< leaf vote: 1, 0, or 0.5 on a tie

    std::size_t size() const { return feature.size(); }
    std::size_t depth() const;
    /// Feature value <= threshold goes left.
    double predict(std::span<const double> dense) const;
    bool operator==(const DecisionTree&) const = default;
};

struct ForestParams {
    std::vector<DecisionTree> trees;
    bool operator==(const ForestParams&) const = default;
};

struct SvmDiagnostics {
    std::size_t iterations = 0;
    double gap = 0;                    ///< max violating-pair gap at exit
    double max_kkt_residual = 0;
    std::size_t n_support = 0;
    std::size_t n_bounded = 0;         ///< support vectors with alpha == C
    std::vector<double> dual_objective; ///< per iteration, when traced

    std::string summary() const;
    bool operator==(const SvmDiagnostics&) const = default;
};

struct SvmParams {
    Kernel kernel = Kernel::linear;
    double gamma = 1;
    int degree = 3;
    std::vector<SparseVector> support_vectors;
    std::vector<double> coef;      ///< alpha_i * y_i of each support vector
    std::vector<double> alpha;     ///< alpha of every training row, for KKT checks
    double C = 1;
    double rho = 0;                ///< decision = sum coef_i K(sv_i, x) - rho
    std::vector<double> w;         ///< explicit weights for the linear kernel
    double platt_a = 0;
    double platt_b = 0;
    SvmDiagnostics diagnostics;

    bool operator==(const SvmParams&) const = default;
};

/// A fitted scorer; immutable and safe to share.
class TrainedModel {
public:
    using Params = std::variant<NaiveBayesParams, ForestParams, SvmParams>;

    TrainedModel() = default;
    TrainedModel(ModelSpec spec, std::size_t n_features, Params params)
        : spec_(std::move(spec)), n_features_(n_features), params_(std::move(params)) {}

    const ModelSpec& spec() const { return spec_; }
    std::size_t n_features() const { return n_features_; }
    const Params& params() const { return params_; }
    std::uint64_t model_version() const { return model_version_; }
    void set_model_version(std::uint64_t v) { model_version_ = v; }

    /// Positive-class confidence in [0, 1].
    double score(const SparseVector& x) const;
    std::vector<double> score_all(const FeatureMatrix& X, int jobs = 1) const;
    bool predict(const SparseVector& x, double threshold = 0.5) const { return score(x) >= threshold; }

    /// Raw SVM margin; throws for other algorithms.
    double decision_value(const SparseVector& x) const;

    Json to_json() const;
    static TrainedModel from_json(const Json& j);
    bool operator==(const TrainedModel&) const = default;

private:
    ModelSpec spec_;
    std::size_t n_features_ = 0;
    Params params_;
    std::uint64_t model_version_ = 0;
};

TrainedModel train_bernoulli_nb(const FeatureMatrix& X, std::span<const int> y, double alpha);
/// Throws ConfigError on negative feature values.
TrainedModel train_multinomial_nb(const FeatureMatrix& X, std::span<const int> y, double alpha);
/// Trees are independent given their derived seeds, so `jobs` never changes the forest.
TrainedModel train_random_forest(const FeatureMatrix& X, std::span<const int> y, const ModelSpec& spec, int jobs = 1);
/// SMO with second-order working-set selection; throws TrainingError with
/// diagnostics when the iteration budget runs out.
TrainedModel train_svm(const FeatureMatrix& X, std::span<const int> y, const ModelSpec& spec, int jobs = 1);
/// Dispatches on spec.algorithm. Labels are 0/1.
TrainedModel train_model(const FeatureMatrix& X, std::span<const int> y, const ModelSpec& spec, int jobs = 1);

double gini(std::size_t n_neg, std::size_t n_pos);

double kernel_value(Kernel kernel, double gamma, int degree, const SparseVector& a, const SparseVector& b);
double sparse_dot(const SparseVector& a, const SparseVector& b);

/// Full n x n Gram matrix, row-major. The parallel version must equal the serial one.
std::vector<double> gram_matrix(const std::vector<SparseVector>& rows, Kernel kernel, double gamma, int degree,
                                int jobs);
std::vector<double> gram_matrix_serial(const std::vector<SparseVector>& rows, Kernel kernel, double gamma, int degree);

/// Two-parameter logistic calibration P = 1 / (1 + exp(A f + B)), Newton's
/// method with backtracking on smoothed targets.
std::pair<double, double> fit_platt(std::span<const double> decision, std::span<const int> y);

/// KKT residual of every training row given the fitted model.
std::vector<double> kkt_residuals(const TrainedModel& svm, const FeatureMatrix& X, std::span<const int> y);

/// Weighted soft vote.
double ensemble_score(std::span<const double> scores, std::span<const double> weights);

/// Two members scoring different feature spaces: text and structured.
struct EnsembleModel {
    TrainedModel member_a;
    TrainedModel member_b;
    double weight_a = 0.5;
    double weight_b = 0.5;

    double score(const SparseVector& x_unstructured, const SparseVector& x_structured) const;
};

} // namespace zsl
