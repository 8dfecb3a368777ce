#include "zsl/learn.hpp"

#include "zsl/error.hpp"
#include "zsl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace zsl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::size_t kFullGramLimit = 3000;

std::array<std::size_t, 2> class_counts(std::span<const int> y) {
    std::array<std::size_t, 2> n{};
    for (int v : y) {
        if (v != 0 && v != 1) {
            throw ArgumentError("labels must be 0 or 1");
        }
        ++n[static_cast<std::size_t>(v)];
    }
    return n;
}

void require_two_classes(const FeatureMatrix& X, std::span<const int> y, std::string_view who) {
    if (y.size() != X.n_rows()) {
        throw ArgumentError(std::string(who) + ": label count differs from row count");
    }
    const auto n = class_counts(y);
    if (n[0] == 0 || n[1] == 0) {
        throw TrainingError(std::string(who) + ": training data holds a single class");
    }
}

/// P(pos) from two class log-joints, stable for infinities.
double posterior(double log_pos, double log_neg) {
    if (log_pos == -kInf && log_neg == -kInf) {
        return 0.5;
    }
    if (log_pos >= log_neg) {
        return 1.0 / (1.0 + std::exp(log_neg - log_pos));
    }
    const double e = std::exp(log_pos - log_neg);
    return e / (1.0 + e);
}

double safe_log(double v) { return v > 0 ? std::log(v) : -kInf; }

Json sparse_to_json(const SparseVector& v) { return Json{{"i", v.indices}, {"v", v.values}}; }

SparseVector sparse_from_json(const Json& j) {
    SparseVector v;
    v.indices = j.at("i").get<std::vector<std::uint32_t>>();
    v.values = j.at("v").get<std::vector<double>>();
    if (v.indices.size() != v.values.size()) {
        throw DataError("model artifact: sparse vector arrays differ in length");
    }
    return v;
}

double sigmoid_platt(double f, double a, double b) {
    const double fApB = f * a + b;
    if (fApB >= 0) {
        return std::exp(-fApB) / (1.0 + std::exp(-fApB));
    }
    return 1.0 / (1.0 + std::exp(fApB));
}

} // namespace

std::string_view to_string(Algorithm a) {
    switch (a) {
    case Algorithm::bernoulli_nb: return "bernoulli_nb";
    case Algorithm::multinomial_nb: return "multinomial_nb";
    case Algorithm::random_forest: return "random_forest";
    case Algorithm::svm: return "svm";
    }
    return "?";
}

Algorithm parse_algorithm(std::string_view s) {
    for (auto a : {Algorithm::bernoulli_nb, Algorithm::multinomial_nb, Algorithm::random_forest, Algorithm::svm}) {
        if (to_string(a) == s) {
            return a;
        }
    }
    throw ConfigError("unknown algorithm '" + std::string(s) + "'");
}

std::string_view to_string(Kernel k) {
    switch (k) {
    case Kernel::linear: return "linear";
    case Kernel::poly: return "poly";
    case Kernel::rbf: return "rbf";
    }
    return "?";
}

Kernel parse_kernel(std::string_view s) {
    for (auto k : {Kernel::linear, Kernel::poly, Kernel::rbf}) {
        if (to_string(k) == s) {
            return k;
        }
    }
    throw ConfigError("unknown kernel '" + std::string(s) + "'");
}

void ModelSpec::validate() const {
    switch (algorithm) {
    case Algorithm::bernoulli_nb:
    case Algorithm::multinomial_nb:
        if (!(nb_alpha >= 0) || !std::isfinite(nb_alpha)) {
            throw ConfigError("nb_alpha must be >= 0");
        }
        break;
    case Algorithm::random_forest:
        if (rf_max_features && *rf_max_features == 0) {
            throw ConfigError("rf_max_features must be >= 1");
        }
        break;
    case Algorithm::svm:
        if (!(svm_C > 0) || !std::isfinite(svm_C)) {
            throw ConfigError("svm_C must be > 0");
        }
        if (poly_degree < 1) {
            throw ConfigError("poly_degree must be >= 1");
        }
        if (rbf_gamma && !(*rbf_gamma > 0)) {
            throw ConfigError("rbf_gamma must be > 0");
        }
        if (!(svm_tolerance > 0)) {
            throw ConfigError("svm_tolerance must be > 0");
        }
        break;
    }
}

Json ModelSpec::to_json() const {
    Json j{{"algorithm", to_string(algorithm)},
           {"nb_alpha", nb_alpha},
           {"rf_n_trees", rf_n_trees},
           {"rf_bootstrap", rf_bootstrap},
           {"svm_kernel", to_string(svm_kernel)},
           {"svm_C", svm_C},
           {"poly_degree", poly_degree},
           {"svm_tolerance", svm_tolerance},
           {"svm_max_iter", svm_max_iter},
           {"svm_trace_objective", svm_trace_objective},
           {"seed", seed}};
    j["rf_max_features"] = rf_max_features ? Json(*rf_max_features) : Json(nullptr);
    j["rbf_gamma"] = rbf_gamma ? Json(*rbf_gamma) : Json(nullptr);
    return j;
}

ModelSpec ModelSpec::from_json(const Json& j) {
    ModelSpec s;
    s.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
    s.nb_alpha = j.value("nb_alpha", s.nb_alpha);
    s.rf_n_trees = j.value("rf_n_trees", s.rf_n_trees);
    s.rf_bootstrap = j.value("rf_bootstrap", s.rf_bootstrap);
    s.svm_kernel = parse_kernel(j.value("svm_kernel", std::string(to_string(s.svm_kernel))));
    s.svm_C = j.value("svm_C", s.svm_C);
    s.poly_degree = j.value("poly_degree", s.poly_degree);
    s.svm_tolerance = j.value("svm_tolerance", s.svm_tolerance);
    s.svm_max_iter = j.value("svm_max_iter", s.svm_max_iter);
    s.svm_trace_objective = j.value("svm_trace_objective", s.svm_trace_objective);
    s.seed = j.value("seed", s.seed);
    if (j.contains("rf_max_features") && !j["rf_max_features"].is_null()) {
        s.rf_max_features = j["rf_max_features"].get<std::size_t>();
    }
    if (j.contains("rbf_gamma") && !j["rbf_gamma"].is_null()) {
        s.rbf_gamma = j["rbf_gamma"].get<double>();
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------- naive Bayes

TrainedModel train_bernoulli_nb(const FeatureMatrix& X, std::span<const int> y, double alpha) {
    require_two_classes(X, y, "bernoulli_nb");
    ModelSpec spec;
    spec.algorithm = Algorithm::bernoulli_nb;
    spec.nb_alpha = alpha;
    spec.validate();
    const auto n = class_counts(y);
    const std::size_t d = X.n_cols();
    std::array<std::vector<double>, 2> present{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        const auto idx = X.row_indices(r);
        const auto val = X.row_values(r);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (val[k] > 0) {
                present[static_cast<std::size_t>(y[r])][idx[k]] += 1.0;
            }
        }
    }
    NaiveBayesParams p;
    p.bernoulli = true;
    const double total = static_cast<double>(n[0] + n[1]);
    for (std::size_t c = 0; c < 2; ++c) {
        p.prior[c] = static_cast<double>(n[c]) / total;
        p.likelihood[c].resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            p.likelihood[c][j] = (present[c][j] + alpha) / (static_cast<double>(n[c]) + 2.0 * alpha);
        }
    }
    return TrainedModel(spec, d, std::move(p));
}

TrainedModel train_multinomial_nb(const FeatureMatrix& X, std::span<const int> y, double alpha) {
    require_two_classes(X, y, "multinomial_nb");
    ModelSpec spec;
    spec.algorithm = Algorithm::multinomial_nb;
    spec.nb_alpha = alpha;
    spec.validate();
    const auto n = class_counts(y);
    const std::size_t d = X.n_cols();
    std::array<std::vector<double>, 2> mass{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    std::array<double, 2> total_mass{};
    for (std::size_t r = 0; r < X.n_rows(); ++r) {
        const auto idx = X.row_indices(r);
        const auto val = X.row_values(r);
        const auto c = static_cast<std::size_t>(y[r]);
        for (std::size_t k = 0; k < idx.size(); ++k) {
            if (val[k] < 0) {
                throw ConfigError("multinomial_nb: negative feature value in column '" +
                                  X.columns()[idx[k]].name + "'");
            }
            mass[c][idx[k]] += val[k];
            total_mass[c] += val[k];
        }
    }
    NaiveBayesParams p;
    p.bernoulli = false;
    const double rows = static_cast<double>(n[0] + n[1]);
    for (std::size_t c = 0; c < 2; ++c) {
        p.prior[c] = static_cast<double>(n[c]) / rows;
        p.likelihood[c].resize(d);
        const double denom = total_mass[c] + alpha * static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            p.likelihood[c][j] = denom > 0 ? (mass[c][j] + alpha) / denom : 0.0;
        }
    }
    return TrainedModel(spec, d, std::move(p));
}

namespace {

double score_nb(const NaiveBayesParams& p, const SparseVector& x, std::size_t d) {
    std::array<double, 2> lj{safe_log(p.prior[0]), safe_log(p.prior[1])};
    if (p.bernoulli) {
        std::size_t k = 0;
        for (std::size_t j = 0; j < d; ++j) {
            while (k < x.indices.size() && x.indices[k] < j) {
                ++k;
            }
            const bool present = k < x.indices.size() && x.indices[k] == j && x.values[k] > 0;
            for (std::size_t c = 0; c < 2; ++c) {
                const double q = p.likelihood[c][j];
                lj[c] += present ? safe_log(q) : safe_log(1.0 - q);
            }
        }
    } else {
        for (std::size_t k = 0; k < x.indices.size(); ++k) {
            const auto j = x.indices[k];
            if (j >= d || x.values[k] == 0) {
                continue;
            }
            for (std::size_t c = 0; c < 2; ++c) {
                const double l = safe_log(p.likelihood[c][j]);
                lj[c] += l == -kInf ? -kInf : x.values[k] * l;
            }
        }
    }
    return posterior(lj[1], lj[0]);
}

} // namespace

// -------------------------------------------------------------- random forest

double gini(std::size_t n_neg, std::size_t n_pos) {
    const double n = static_cast<double>(n_neg + n_pos);
    if (n == 0) {
        return 0.0;
    }
    const double p = static_cast<double>(n_pos) / n;
    const double q = static_cast<double>(n_neg) / n;
    return 1.0 - p * p - q * q;
}

std::size_t DecisionTree::depth() const {
    if (feature.empty()) {
        return 0;
    }
    std::vector<std::pair<std::int32_t, std::size_t>> stack{{0, 1}};
    std::size_t best = 0;
    while (!stack.empty()) {
        auto [node, d] = stack.back();
        stack.pop_back();
        best = std::max(best, d);
        if (feature[static_cast<std::size_t>(node)] >= 0) {
            stack.emplace_back(left[static_cast<std::size_t>(node)], d + 1);
            stack.emplace_back(right[static_cast<std::size_t>(node)], d + 1);
        }
    }
    return best;
}

double DecisionTree::predict(std::span<const double> dense) const {
    std::size_t node = 0;
    while (feature[node] >= 0) {
        const auto f = static_cast<std::size_t>(feature[node]);
        const double v = f < dense.size() ? dense[f] : 0.0;
        node = static_cast<std::size_t>(v <= threshold[node] ? left[node] : right[node]);
    }
    return vote[node];
}

namespace {

struct ColumnMajor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // data[c * rows + r]

    explicit ColumnMajor(const FeatureMatrix& X) : rows(X.n_rows()), cols(X.n_cols()), data(rows * cols, 0.0) {
        for (std::size_t r = 0; r < rows; ++r) {
            const auto idx = X.row_indices(r);
            const auto val = X.row_values(r);
            for (std::size_t k = 0; k < idx.size(); ++k) {
                data[idx[k] * rows + r] = val[k];
            }
        }
    }
    double at(std::size_t r, std::size_t c) const { return data[c * rows + r]; }
};

DecisionTree grow_tree(const ColumnMajor& X, std::span<const int> y, std::size_t mtry, bool bootstrap,
                       std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t n = X.rows;
    std::vector<std::size_t> sample(n);
    if (bootstrap) {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (auto& s : sample) {
            s = pick(rng);
        }
    } else {
        std::iota(sample.begin(), sample.end(), std::size_t{0});
    }

    DecisionTree tree;
    auto add_node = [&] {
        tree.feature.push_back(-1);
        tree.threshold.push_back(0.0);
        tree.left.push_back(-1);
        tree.right.push_back(-1);
        tree.vote.push_back(0.0);
        return static_cast<std::int32_t>(tree.feature.size() - 1);
    };

    struct Work {
        std::int32_t node;
        std::vector<std::size_t> rows;
    };
    std::vector<Work> stack;
    stack.push_back({add_node(), std::move(sample)});
    std::vector<std::size_t> features(X.cols);
    std::iota(features.begin(), features.end(), std::size_t{0});
    std::vector<std::pair<double, int>> column;

    while (!stack.empty()) {
        Work w = std::move(stack.back());
        stack.pop_back();
        const auto node = static_cast<std::size_t>(w.node);
        std::size_t pos = 0;
        for (auto r : w.rows) {
            pos += static_cast<std::size_t>(y[r]);
        }
        const std::size_t m = w.rows.size();
        const std::size_t neg = m - pos;
        tree.vote[node] = pos * 2 > m ? 1.0 : (pos * 2 < m ? 0.0 : 0.5);
        if (m < 2 || pos == 0 || neg == 0) {
            continue;
        }
        const double parent = gini(neg, pos);

        double best_decrease = -kInf;
        std::size_t best_feature = 0;
        double best_threshold = 0;
        std::size_t evaluated = 0;
        // Draw features without replacement until mtry non-constant ones were scored.
        for (std::size_t drawn = 0; drawn < X.cols && evaluated < mtry; ++drawn) {
            std::uniform_int_distribution<std::size_t> pick(drawn, X.cols - 1);
            std::swap(features[drawn], features[pick(rng)]);
            const std::size_t f = features[drawn];
            column.clear();
            double lo = kInf;
            double hi = -kInf;
            for (auto r : w.rows) {
                const double v = X.at(r, f);
                column.emplace_back(v, y[r]);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (lo == hi) {
                continue;
            }
            ++evaluated;
            std::sort(column.begin(), column.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            std::size_t left_pos = 0;
            for (std::size_t i = 0; i + 1 < m; ++i) {
                left_pos += static_cast<std::size_t>(column[i].second);
                if (column[i].first == column[i + 1].first) {
                    continue;
                }
                const std::size_t nl = i + 1;
                const std::size_t nr = m - nl;
                const std::size_t right_pos = pos - left_pos;
                const double child = (static_cast<double>(nl) * gini(nl - left_pos, left_pos) +
                                      static_cast<double>(nr) * gini(nr - right_pos, right_pos)) /
                                     static_cast<double>(m);
                const double decrease = parent - child;
                if (decrease > best_decrease) {
                    best_decrease = decrease;
                    best_feature = f;
                    best_threshold = column[i].first + (column[i + 1].first - column[i].first) / 2.0;
                }
            }
        }
        if (evaluated == 0) {
            continue;
        }
        std::vector<std::size_t> left_rows;
        std::vector<std::size_t> right_rows;
        for (auto r : w.rows) {
            (X.at(r, best_feature) <= best_threshold ? left_rows : right_rows).push_back(r);
        }
        const std::int32_t l = add_node();
        const std::int32_t rgt = add_node();
        tree.feature[node] = static_cast<std::int32_t>(best_feature);
        tree.threshold[node] = best_threshold;
        tree.left[node] = l;
        tree.right[node] = rgt;
        stack.push_back({rgt, std::move(right_rows)});
        stack.push_back({l, std::move(left_rows)});
    }
    return tree;
}

} // namespace

TrainedModel train_random_forest(const FeatureMatrix& X, std::span<const int> y, const ModelSpec& spec, int jobs) {
    require_two_classes(X, y, "random_forest");
    spec.validate();
    const std::size_t d = X.n_cols();
    if (d == 0) {
        throw TrainingError("random_forest: no feature columns");
    }
    const std::size_t n_trees = spec.rf_n_trees == 0 ? d : spec.rf_n_trees;
    const std::size_t mtry = std::min(
        d, spec.rf_max_features.value_or(std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(double(d))))));
    const ColumnMajor cm(X);
    ForestParams p;
    p.trees.resize(n_trees);
    const auto nt = static_cast<long>(n_trees);
#pragma omp parallel for schedule(dynamic) if (jobs > 1) num_threads(jobs > 1 ? jobs : 1)
    for (long t = 0; t < nt; ++t) {
        p.trees[static_cast<std::size_t>(t)] =
            grow_tree(cm, y, mtry, spec.rf_bootstrap, derive_seed(spec.seed, static_cast<std::uint64_t>(t)));
    }
    ModelSpec stored = spec;
    stored.algorithm = Algorithm::random_forest;
    stored.rf_n_trees = n_trees;
    return TrainedModel(stored, d, std::move(p));
}

// ----------------------------------------------------------------------- SVM

double sparse_dot(const SparseVector& a, const SparseVector& b) {
    double s = 0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.indices.size() && j < b.indices.size()) {
        if (a.indices[i] == b.indices[j]) {
            s += a.values[i++] * b.values[j++];
        } else if (a.indices[i] < b.indices[j]) {
            ++i;
        } else {
            ++j;
        }
    }
    return s;
}

double kernel_value(Kernel kernel, double gamma, int degree, const SparseVector& a, const SparseVector& b) {
    switch (kernel) {
    case Kernel::linear:
        return sparse_dot(a, b);
    case Kernel::poly:
        return std::pow(gamma * sparse_dot(a, b) + 1.0, degree);
    case Kernel::rbf: {
        const double d2 = sparse_dot(a, a) + sparse_dot(b, b) - 2.0 * sparse_dot(a, b);
        return std::exp(-gamma * std::max(0.0, d2));
    }
    }
    return 0.0;
}

std::vector<double> gram_matrix_serial(const std::vector<SparseVector>& rows, Kernel kernel, double gamma,
                                       int degree) {
    const std::size_t n = rows.size();
    std::vector<double> K(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = kernel_value(kernel, gamma, degree, rows[i], rows[j]);
            K[i * n + j] = v;
            K[j * n + i] = v;
        }
    }
    return K;
}

std::vector<double> gram_matrix(const std::vector<SparseVector>& rows, Kernel kernel, double gamma, int degree,
                                int jobs) {
    if (jobs <= 1) {
        return gram_matrix_serial(rows, kernel, gamma, degree);
    }
    const std::size_t n = rows.size();
    std::vector<double> K(n * n);
    const auto ln = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic, 8) num_threads(jobs)
    for (long li = 0; li < ln; ++li) {
        const auto i = static_cast<std::size_t>(li);
        for (std::size_t j = i; j < n; ++j) {
            const double v = kernel_value(kernel, gamma, degree, rows[i], rows[j]);
            K[i * n + j] = v;
            K[j * n + i] = v;
        }
    }
    return K;
}

std::pair<double, double> fit_platt(std::span<const double> dec, std::span<const int> y) {
    if (dec.size() != y.size()) {
        throw ArgumentError("fit_platt: size mismatch");
    }
    double prior1 = 0;
    double prior0 = 0;
    for (int v : y) {
        (v == 1 ? prior1 : prior0) += 1;
    }
    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);
    std::vector<double> t(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        t[i] = y[i] == 1 ? hi : lo;
    }
    double A = 0.0;
    double B = std::log((prior0 + 1.0) / (prior1 + 1.0));
    auto objective = [&](double a, double b) {
        double f = 0;
        for (std::size_t i = 0; i < dec.size(); ++i) {
            const double fApB = dec[i] * a + b;
            if (fApB >= 0) {
                f += t[i] * fApB + std::log1p(std::exp(-fApB));
            } else {
                f += (t[i] - 1.0) * fApB + std::log1p(std::exp(fApB));
            }
        }
        return f;
    };
    double fval = objective(A, B);
    constexpr int kMaxIter = 100;
    constexpr double kMinStep = 1e-10;
    constexpr double kSigma = 1e-12;
    for (int it = 0; it < kMaxIter; ++it) {
        double h11 = kSigma;
        double h22 = kSigma;
        double h21 = 0;
        double g1 = 0;
        double g2 = 0;
        for (std::size_t i = 0; i < dec.size(); ++i) {
            const double fApB = dec[i] * A + B;
            double p;
            double q;
            if (fApB >= 0) {
                p = std::exp(-fApB) / (1.0 + std::exp(-fApB));
                q = 1.0 / (1.0 + std::exp(-fApB));
            } else {
                p = 1.0 / (1.0 + std::exp(fApB));
                q = std::exp(fApB) / (1.0 + std::exp(fApB));
            }
            const double d2 = p * q;
            h11 += dec[i] * dec[i] * d2;
            h22 += d2;
            h21 += dec[i] * d2;
            const double d1 = t[i] - p;
            g1 += dec[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) {
            break;
        }
        const double det = h11 * h22 - h21 * h21;
        const double dA = -(h22 * g1 - h21 * g2) / det;
        const double dB = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * dA + g2 * dB;
        double step = 1.0;
        while (step >= kMinStep) {
            const double nA = A + step * dA;
            const double nB = B + step * dB;
            const double nf = objective(nA, nB);
            if (nf < fval + 0.0001 * step * gd) {
                A = nA;
                B = nB;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if (step < kMinStep) {
            break;
        }
    }
    return {A, B};
}

std::string SvmDiagnostics::summary() const {
    std::ostringstream s;
    s << "iterations=" << iterations << " gap=" << gap << " max_kkt_residual=" << max_kkt_residual
      << " n_support=" << n_support << " n_bounded=" << n_bounded;
    if (!dual_objective.empty()) {
        s << " dual_objective=" << dual_objective.back();
    }
    return s.str();
}

namespace {

/// Kernel rows either from a precomputed Gram matrix or on demand.
class KernelSource {
public:
    KernelSource(const std::vector<SparseVector>& rows, Kernel kernel, double gamma, int degree, int jobs)
        : rows_(rows), kernel_(kernel), gamma_(gamma), degree_(degree), n_(rows.size()) {
        if (n_ <= kFullGramLimit) {
            full_ = gram_matrix(rows, kernel, gamma, degree, jobs);
        }
        diag_.resize(n_);
        for (std::size_t i = 0; i < n_; ++i) {
            diag_[i] = full_.empty() ? kernel_value(kernel, gamma, degree, rows[i], rows[i]) : full_[i * n_ + i];
        }
    }

    std::span<const double> row(std::size_t i, std::vector<double>& scratch) const {
        if (!full_.empty()) {
            return {full_.data() + i * n_, n_};
        }
        scratch.resize(n_);
        for (std::size_t j = 0; j < n_; ++j) {
            scratch[j] = kernel_value(kernel_, gamma_, degree_, rows_[i], rows_[j]);
        }
        return scratch;
    }

    double diag(std::size_t i) const { return diag_[i]; }

private:
    const std::vector<SparseVector>& rows_;
    Kernel kernel_;
    double gamma_;
    int degree_;
    std::size_t n_;
    std::vector<double> full_;
    std::vector<double> diag_;
};

} // namespace

TrainedModel train_svm(const FeatureMatrix& X, std::span<const int> labels, const ModelSpec& spec, int jobs) {
    require_two_classes(X, labels, "svm");
    spec.validate();
    const std::size_t n = X.n_rows();
    const std::size_t d = X.n_cols();
    const double C = spec.svm_C;
    const double gamma = spec.rbf_gamma.value_or(d > 0 ? 1.0 / static_cast<double>(d) : 1.0);

    std::vector<SparseVector> rows(n);
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = X.row(i);
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = labels[i] == 1 ? 1.0 : -1.0;
    }
    const KernelSource K(rows, spec.svm_kernel, gamma, spec.poly_degree, jobs);

    std::vector<double> alpha(n, 0.0);
    std::vector<double> G(n, -1.0);
    const double eps = spec.svm_tolerance;
    const std::size_t max_iter = spec.svm_max_iter > 0 ? spec.svm_max_iter : std::max<std::size_t>(10'000'000, 100 * n);
    constexpr double kTau = 1e-12;

    SvmDiagnostics diag;
    auto dual_objective = [&] {
        double s = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s += alpha[i] * (G[i] - 1.0);
        }
        return -0.5 * s;
    };
    auto is_upper = [&](std::size_t t) { return alpha[t] >= C; };
    auto is_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

    std::vector<double> scratch_i;
    std::vector<double> scratch_j;
    bool converged = false;
    std::size_t iter = 0;
    double gap = kInf;
    while (iter < max_iter) {
        // Second-order working-set selection.
        double Gmax = -kInf;
        double Gmax2 = -kInf;
        std::int64_t ii = -1;
        std::int64_t jj = -1;
        double obj_diff_min = kInf;
        for (std::size_t t = 0; t < n; ++t) {
            if (y[t] > 0) {
                if (!is_upper(t) && -G[t] >= Gmax) {
                    Gmax = -G[t];
                    ii = static_cast<std::int64_t>(t);
                }
            } else if (!is_lower(t) && G[t] >= Gmax) {
                Gmax = G[t];
                ii = static_cast<std::int64_t>(t);
            }
        }
        if (ii < 0) {
            gap = 0;
            converged = true;
            break;
        }
        const auto i = static_cast<std::size_t>(ii);
        const auto Ki = K.row(i, scratch_i);
        for (std::size_t t = 0; t < n; ++t) {
            const double Qit = y[i] * y[t] * Ki[t];
            if (y[t] > 0) {
                if (!is_lower(t)) {
                    const double grad_diff = Gmax + G[t];
                    Gmax2 = std::max(Gmax2, G[t]);
                    if (grad_diff > 0) {
                        double quad = K.diag(i) + K.diag(t) - 2.0 * y[i] * Qit;
                        quad = quad > 0 ? quad : kTau;
                        const double obj_diff = -(grad_diff * grad_diff) / quad;
                        if (obj_diff <= obj_diff_min) {
                            jj = static_cast<std::int64_t>(t);
                            obj_diff_min = obj_diff;
                        }
                    }
                }
            } else if (!is_upper(t)) {
                const double grad_diff = Gmax - G[t];
                Gmax2 = std::max(Gmax2, -G[t]);
                if (grad_diff > 0) {
                    double quad = K.diag(i) + K.diag(t) + 2.0 * y[i] * Qit;
                    quad = quad > 0 ? quad : kTau;
                    const double obj_diff = -(grad_diff * grad_diff) / quad;
                    if (obj_diff <= obj_diff_min) {
                        jj = static_cast<std::int64_t>(t);
                        obj_diff_min = obj_diff;
                    }
                }
            }
        }
        gap = Gmax + Gmax2;
        if (gap < eps || jj < 0) {
            converged = true;
            break;
        }
        const auto j = static_cast<std::size_t>(jj);
        const auto Kj = K.row(j, scratch_j);
        const double Qij = y[i] * y[j] * Ki[j];
        const double old_ai = alpha[i];
        const double old_aj = alpha[j];

        if (y[i] != y[j]) {
            double quad = K.diag(i) + K.diag(j) + 2.0 * Qij;
            quad = quad > 0 ? quad : kTau;
            const double delta = (-G[i] - G[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0) {
                if (alpha[j] < 0) {
                    alpha[j] = 0;
                    alpha[i] = diff;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = -diff;
            }
            if (diff > 0) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = C - diff;
                }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            double quad = K.diag(i) + K.diag(j) - 2.0 * Qij;
            quad = quad > 0 ? quad : kTau;
            const double delta = (G[i] - G[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) {
                    alpha[i] = C;
                    alpha[j] = sum - C;
                }
            } else if (alpha[j] < 0) {
                alpha[j] = 0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) {
                    alpha[j] = C;
                    alpha[i] = sum - C;
                }
            } else if (alpha[i] < 0) {
                alpha[i] = 0;
                alpha[j] = sum;
            }
        }
        const double dai = alpha[i] - old_ai;
        const double daj = alpha[j] - old_aj;
        for (std::size_t t = 0; t < n; ++t) {
            G[t] += y[i] * y[t] * Ki[t] * dai + y[j] * y[t] * Kj[t] * daj;
        }
        ++iter;
        if (spec.svm_trace_objective) {
            diag.dual_objective.push_back(dual_objective());
        }
    }
    diag.iterations = iter;
    diag.gap = gap;

    // Bias: mean over free vectors, otherwise the midpoint of the feasible interval.
    double ub = kInf;
    double lb = -kInf;
    double sum_free = 0;
    std::size_t n_free = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double yG = y[t] * G[t];
        if (is_upper(t)) {
            if (y[t] < 0) {
                ub = std::min(ub, yG);
            } else {
                lb = std::max(lb, yG);
            }
        } else if (is_lower(t)) {
            if (y[t] > 0) {
                ub = std::min(ub, yG);
            } else {
                lb = std::max(lb, yG);
            }
        } else {
            ++n_free;
            sum_free += yG;
        }
    }
    const double rho = n_free > 0 ? sum_free / static_cast<double>(n_free) : (ub + lb) / 2.0;

    SvmParams p;
    p.kernel = spec.svm_kernel;
    p.gamma = gamma;
    p.degree = spec.poly_degree;
    p.rho = rho;
    p.C = C;
    p.alpha = alpha;
    for (std::size_t t = 0; t < n; ++t) {
        const double m = G[t] - y[t] * rho; // y f(x) - 1
        double r = 0;
        if (is_lower(t)) {
            r = std::max(0.0, -m);
        } else if (is_upper(t)) {
            r = std::max(0.0, m);
            ++diag.n_bounded;
        } else {
            r = std::abs(m);
        }
        diag.max_kkt_residual = std::max(diag.max_kkt_residual, r);
        if (alpha[t] > 0) {
            p.support_vectors.push_back(rows[t]);
            p.coef.push_back(alpha[t] * y[t]);
        }
    }
    diag.n_support = p.support_vectors.size();
    if (!converged) {
        throw TrainingError("svm: no convergence within " + std::to_string(max_iter) + " iterations",
                            diag.summary());
    }
    if (p.kernel == Kernel::linear) {
        p.w.assign(d, 0.0);
        for (std::size_t s = 0; s < p.support_vectors.size(); ++s) {
            const auto& sv = p.support_vectors[s];
            for (std::size_t k = 0; k < sv.indices.size(); ++k) {
                p.w[sv.indices[k]] += p.coef[s] * sv.values[k];
            }
        }
    }
    // Training margins from the dual gradient: f(x_t) = y_t (G_t + 1) - rho.
    std::vector<double> margins(n);
    for (std::size_t t = 0; t < n; ++t) {
        margins[t] = y[t] * (G[t] + 1.0) - rho;
    }
    std::tie(p.platt_a, p.platt_b) = fit_platt(margins, labels);
    p.diagnostics = std::move(diag);
    ModelSpec stored = spec;
    stored.algorithm = Algorithm::svm;
    return TrainedModel(stored, d, std::move(p));
}

TrainedModel train_model(const FeatureMatrix& X, std::span<const int> y, const ModelSpec& spec, int jobs) {
    spec.validate();
    switch (spec.algorithm) {
    case Algorithm::bernoulli_nb: {
        auto m = train_bernoulli_nb(X, y, spec.nb_alpha);
        return TrainedModel(spec, m.n_features(), m.params());
    }
    case Algorithm::multinomial_nb: {
        auto m = train_multinomial_nb(X, y, spec.nb_alpha);
        return TrainedModel(spec, m.n_features(), m.params());
    }
    case Algorithm::random_forest:
        return train_random_forest(X, y, spec, jobs);
    case Algorithm::svm:
        return train_svm(X, y, spec, jobs);
    }
    throw ConfigError("unknown algorithm");
}

double TrainedModel::decision_value(const SparseVector& x) const {
    const auto* p = std::get_if<SvmParams>(&params_);
    if (!p) {
        throw ArgumentError("decision_value: not an SVM");
    }
    if (!p->w.empty()) {
        double s = 0;
        for (std::size_t k = 0; k < x.indices.size(); ++k) {
            if (x.indices[k] < p->w.size()) {
                s += p->w[x.indices[k]] * x.values[k];
            }
        }
        return s - p->rho;
    }
    double s = 0;
    for (std::size_t i = 0; i < p->support_vectors.size(); ++i) {
        s += p->coef[i] * kernel_value(p->kernel, p->gamma, p->degree, p->support_vectors[i], x);
    }
    return s - p->rho;
}

double TrainedModel::score(const SparseVector& x) const {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, NaiveBayesParams>) {
                return score_nb(p, x, n_features_);
            } else if constexpr (std::is_same_v<T, ForestParams>) {
                std::vector<double> dense(n_features_, 0.0);
                for (std::size_t k = 0; k < x.indices.size(); ++k) {
                    if (x.indices[k] < n_features_) {
                        dense[x.indices[k]] = x.values[k];
                    }
                }
                double votes = 0;
                for (const auto& t : p.trees) {
                    votes += t.predict(dense);
                }
                return p.trees.empty() ? 0.5 : votes / static_cast<double>(p.trees.size());
            } else {
                return sigmoid_platt(decision_value(x), p.platt_a, p.platt_b);
            }
        },
        params_);
}

std::vector<double> TrainedModel::score_all(const FeatureMatrix& X, int jobs) const {
    std::vector<double> out(X.n_rows());
    const auto n = static_cast<long>(X.n_rows());
#pragma omp parallel for schedule(dynamic, 64) if (jobs > 1) num_threads(jobs > 1 ? jobs : 1)
    for (long i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = score(X.row(static_cast<std::size_t>(i)));
    }
    return out;
}

std::vector<double> kkt_residuals(const TrainedModel& model, const FeatureMatrix& X, std::span<const int> y) {
    const auto* p = std::get_if<SvmParams>(&model.params());
    if (!p) {
        throw ArgumentError("kkt_residuals: not an SVM");
    }
    if (p->alpha.size() != X.n_rows() || y.size() != X.n_rows()) {
        throw ArgumentError("kkt_residuals: X must be the training matrix");
    }
    std::vector<double> r(X.n_rows());
    for (std::size_t i = 0; i < X.n_rows(); ++i) {
        const double yi = y[i] == 1 ? 1.0 : -1.0;
        const double m = yi * model.decision_value(X.row(i)) - 1.0;
        if (p->alpha[i] <= 0) {
            r[i] = std::max(0.0, -m);
        } else if (p->alpha[i] >= p->C) {
            r[i] = std::max(0.0, m);
        } else {
            r[i] = std::abs(m);
        }
    }
    return r;
}

double ensemble_score(std::span<const double> scores, std::span<const double> weights) {
    if (scores.size() != weights.size() || scores.empty()) {
        throw ArgumentError("ensemble_score: need one weight per member");
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9 || std::any_of(weights.begin(), weights.end(), [](double w) { return w < 0; })) {
        throw ConfigError("ensemble weights must be non-negative and sum to 1");
    }
    double s = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        s += weights[i] * scores[i];
    }
    return s;
}

double EnsembleModel::score(const SparseVector& x_unstructured, const SparseVector& x_structured) const {
    const double scores[2] = {member_a.score(x_unstructured), member_b.score(x_structured)};
    const double weights[2] = {weight_a, weight_b};
    return ensemble_score(scores, weights);
}

// ------------------------------------------------------------ serialization

Json TrainedModel::to_json() const {
    Json j{{"format", "zsl-model"}, {"format_version", 1}, {"spec", spec_.to_json()},
           {"n_features", n_features_}, {"model_version", model_version_}};
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, NaiveBayesParams>) {
                j["params"] = Json{{"bernoulli", p.bernoulli},
                                   {"prior", p.prior},
                                   {"likelihood_neg", p.likelihood[0]},
                                   {"likelihood_pos", p.likelihood[1]}};
            } else if constexpr (std::is_same_v<T, ForestParams>) {
                Json trees = Json::array();
                for (const auto& t : p.trees) {
                    trees.push_back(Json{{"feature", t.feature},
                                         {"threshold", t.threshold},
                                         {"left", t.left},
                                         {"right", t.right},
                                         {"vote", t.vote}});
                }
                j["params"] = Json{{"trees", trees}};
            } else {
                Json svs = Json::array();
                for (const auto& sv : p.support_vectors) {
                    svs.push_back(sparse_to_json(sv));
                }
                j["params"] = Json{{"kernel", to_string(p.kernel)},
                                   {"gamma", p.gamma},
                                   {"degree", p.degree},
                                   {"support_vectors", svs},
                                   {"coef", p.coef},
                                   {"alpha", p.alpha},
                                   {"C", p.C},
                                   {"rho", p.rho},
                                   {"w", p.w},
                                   {"platt_a", p.platt_a},
                                   {"platt_b", p.platt_b},
                                   {"diagnostics",
                                    Json{{"iterations", p.diagnostics.iterations},
                                         {"gap", p.diagnostics.gap},
                                         {"max_kkt_residual", p.diagnostics.max_kkt_residual},
                                         {"n_support", p.diagnostics.n_support},
                                         {"n_bounded", p.diagnostics.n_bounded}}}};
            }
        },
        params_);
    return j;
}

TrainedModel TrainedModel::from_json(const Json& j) {
    if (j.value("format", std::string{}) != "zsl-model") {
        throw DataError("not a model artifact");
    }
    if (j.at("format_version").get<int>() != 1) {
        throw DataError("unsupported model artifact version");
    }
    ModelSpec spec = ModelSpec::from_json(j.at("spec"));
    const auto n_features = j.at("n_features").get<std::size_t>();
    const Json& pj = j.at("params");
    Params params;
    switch (spec.algorithm) {
    case Algorithm::bernoulli_nb:
    case Algorithm::multinomial_nb: {
        NaiveBayesParams p;
        p.bernoulli = pj.at("bernoulli").get<bool>();
        p.prior = pj.at("prior").get<std::array<double, 2>>();
        p.likelihood[0] = pj.at("likelihood_neg").get<std::vector<double>>();
        p.likelihood[1] = pj.at("likelihood_pos").get<std::vector<double>>();
        if (p.likelihood[0].size() != n_features || p.likelihood[1].size() != n_features) {
            throw DataError("model artifact: likelihood length differs from n_features");
        }
        params = std::move(p);
        break;
    }
    case Algorithm::random_forest: {
        ForestParams p;
        for (const auto& tj : pj.at("trees")) {
            DecisionTree t;
            t.feature = tj.at("feature").get<std::vector<std::int32_t>>();
            t.threshold = tj.at("threshold").get<std::vector<double>>();
            t.left = tj.at("left").get<std::vector<std::int32_t>>();
            t.right = tj.at("right").get<std::vector<std::int32_t>>();
            t.vote = tj.at("vote").get<std::vector<double>>();
            const auto m = t.feature.size();
            if (m == 0 || t.threshold.size() != m || t.left.size() != m || t.right.size() != m || t.vote.size() != m) {
                throw DataError("model artifact: malformed tree");
            }
            for (std::size_t k = 0; k < m; ++k) {
                if (t.feature[k] >= 0 &&
                    (static_cast<std::size_t>(t.feature[k]) >= n_features || t.left[k] <= static_cast<std::int32_t>(k) ||
                     t.right[k] <= static_cast<std::int32_t>(k) || static_cast<std::size_t>(t.left[k]) >= m ||
                     static_cast<std::size_t>(t.right[k]) >= m)) {
                    throw DataError("model artifact: malformed tree node");
                }
            }
            p.trees.push_back(std::move(t));
        }
        params = std::move(p);
        break;
    }
    case Algorithm::svm: {
        SvmParams p;
        p.kernel = parse_kernel(pj.at("kernel").get<std::string>());
        p.gamma = pj.at("gamma").get<double>();
        p.degree = pj.at("degree").get<int>();
        for (const auto& sv : pj.at("support_vectors")) {
            p.support_vectors.push_back(sparse_from_json(sv));
        }
        p.coef = pj.at("coef").get<std::vector<double>>();
        p.alpha = pj.at("alpha").get<std::vector<double>>();
        p.C = pj.at("C").get<double>();
        p.rho = pj.at("rho").get<double>();
        p.w = pj.at("w").get<std::vector<double>>();
        p.platt_a = pj.at("platt_a").get<double>();
        p.platt_b = pj.at("platt_b").get<double>();
        const Json& dj = pj.at("diagnostics");
        p.diagnostics.iterations = dj.at("iterations").get<std::size_t>();
        p.diagnostics.gap = dj.at("gap").get<double>();
        p.diagnostics.max_kkt_residual = dj.at("max_kkt_residual").get<double>();
        p.diagnostics.n_support = dj.at("n_support").get<std::size_t>();
        p.diagnostics.n_bounded = dj.at("n_bounded").get<std::size_t>();
        if (p.coef.size() != p.support_vectors.size()) {
            throw DataError("model artifact: coefficient count differs from support vectors");
        }
        params = std::move(p);
        break;
    }
    }
    TrainedModel m(std::move(spec), n_features, std::move(params));
    m.model_version_ = j.at("model_version").get<std::uint64_t>();
    return m;
}

} // namespace zsl
