#include "zsl/eval.hpp"

#include "zsl/error.hpp"
#include "zsl/parallel.hpp"
#include "zsl/table.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace zsl {

std::size_t SamplingPlan::n_test() const {
    return static_cast<std::size_t>(std::floor(neg_test_fraction * static_cast<double>(n_prime - n_train)));
}

void SamplingPlan::validate() const {
    if (p_train > p_prime) {
        throw ArgumentError("sampling plan: p_train " + std::to_string(p_train) + " exceeds the " +
                            std::to_string(p_prime) + " positives");
    }
    if (n_train > n_prime) {
        throw ArgumentError("sampling plan: n_train " + std::to_string(n_train) + " exceeds the " +
                            std::to_string(n_prime) + " negatives");
    }
    if (!(neg_test_fraction >= 0 && neg_test_fraction <= 1)) {
        throw ArgumentError("sampling plan: neg_test_fraction must lie in [0,1]");
    }
}

SamplingPlan SamplingPlan::for_labels(std::span<const int> labels, std::size_t p_train, std::size_t n_train,
                                      double neg_test_fraction, std::uint64_t seed) {
    SamplingPlan plan;
    plan.p_prime = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    plan.n_prime = labels.size() - plan.p_prime;
    plan.p_train = p_train;
    plan.n_train = n_train;
    plan.neg_test_fraction = neg_test_fraction;
    plan.seed = seed;
    return plan;
}

namespace {

// Moves k uniformly chosen elements to the front.
void partial_shuffle(std::vector<std::size_t>& v, std::size_t k, std::mt19937_64& rng) {
    for (std::size_t i = 0; i < k && i + 1 < v.size(); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
        std::swap(v[i], v[pick(rng)]);
    }
}

} // namespace

Split undersample_split(std::span<const int> labels, const SamplingPlan& plan) {
    plan.validate();
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (labels[i] == 1 ? pos : neg).push_back(i);
    }
    if (pos.size() != plan.p_prime || neg.size() != plan.n_prime) {
        throw ArgumentError("sampling plan: population counts differ from the labels");
    }
    std::mt19937_64 rng(plan.seed);
    const std::size_t n_test = plan.n_test();
    partial_shuffle(pos, plan.p_train, rng);
    partial_shuffle(neg, plan.n_train + n_test, rng);

    Split s;
    s.train.assign(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(plan.p_train));
    s.train.insert(s.train.end(), neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(plan.n_train));
    s.test.assign(pos.begin() + static_cast<std::ptrdiff_t>(plan.p_train), pos.end());
    s.test.insert(s.test.end(), neg.begin() + static_cast<std::ptrdiff_t>(plan.n_train),
                  neg.begin() + static_cast<std::ptrdiff_t>(plan.n_train + n_test));
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    if (plan.p_test() == 0) {
        spdlog::warn("sampling plan leaves no positive test rows");
    }
    return s;
}

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
    if (y_true.size() != y_pred.size()) {
        throw ArgumentError("confusion: size mismatch");
    }
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] == 1) {
            ++(y_pred[i] == 1 ? cm.tp : cm.fn);
        } else {
            ++(y_pred[i] == 1 ? cm.fp : cm.tn);
        }
    }
    return cm;
}

MetricReport metrics(const ConfusionMatrix& cm) {
    MetricReport r;
    r.cm = cm;
    auto ratio = [&](double num, double den, const char* name) {
        if (den == 0) {
            r.undefined.emplace_back(name);
            return 0.0;
        }
        return num / den;
    };
    const double tp = static_cast<double>(cm.tp);
    const double fp = static_cast<double>(cm.fp);
    const double tn = static_cast<double>(cm.tn);
    const double fn = static_cast<double>(cm.fn);
    r.precision = ratio(tp, tp + fp, "precision");
    r.recall = ratio(tp, tp + fn, "recall");
    r.accuracy = ratio(tp + tn, tp + fp + tn + fn, "accuracy");
    const double tnr = ratio(tn, tn + fp, "specificity");
    r.balanced_accuracy = (r.recall + tnr) / 2.0;
    r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall, "f1");
    return r;
}

RocResult roc_auc(std::span<const int> y_true, std::span<const double> scores) {
    if (y_true.size() != scores.size()) {
        throw ArgumentError("roc_auc: size mismatch");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const auto n_pos = static_cast<double>(std::count(y_true.begin(), y_true.end(), 1));
    const double n_neg = static_cast<double>(y_true.size()) - n_pos;

    RocResult r;
    r.defined = n_pos > 0 && n_neg > 0;
    r.points.push_back({0, 0});
    double tp = 0;
    double fp = 0;
    double area = 0; // in units of pairs
    for (std::size_t k = 0; k < order.size();) {
        const double s = scores[order[k]];
        const double tp0 = tp;
        const double fp0 = fp;
        for (; k < order.size() && scores[order[k]] == s; ++k) {
            (y_true[order[k]] == 1 ? tp : fp) += 1;
        }
        area += (fp - fp0) * (tp + tp0) / 2.0;
        r.points.push_back({n_neg > 0 ? fp / n_neg : 0.0, n_pos > 0 ? tp / n_pos : 0.0});
    }
    if (r.points.back() != RocPoint{1, 1}) {
        r.points.push_back({1, 1});
    }
    r.auc = r.defined ? area / (n_pos * n_neg) : 0.0;
    return r;
}

MetricReport evaluate_scores(std::span<const int> y_true, std::span<const double> scores, double threshold) {
    std::vector<int> pred(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        pred[i] = scores[i] >= threshold ? 1 : 0;
    }
    MetricReport r = metrics(confusion(y_true, pred));
    auto roc = roc_auc(y_true, scores);
    r.auc = roc.auc;
    r.roc = std::move(roc.points);
    if (!roc.defined) {
        r.undefined.emplace_back("auc");
    }
    return r;
}

namespace {

Json metric_fields(const MetricReport& r) {
    return Json{{"precision", r.precision}, {"recall", r.recall},   {"accuracy", r.accuracy},
                {"balanced_accuracy", r.balanced_accuracy}, {"f1", r.f1}, {"auc", r.auc}};
}

Json summary_json(const MetricSummary& s) {
    return Json{{"mean", metric_fields(s.mean)}, {"stdev", metric_fields(s.stdev)}};
}

} // namespace

Json MetricReport::to_json(bool with_roc) const {
    Json j = metric_fields(*this);
    j["confusion"] = Json{{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
    j["undefined"] = undefined;
    if (with_roc) {
        Json pts = Json::array();
        for (const auto& p : roc) {
            pts.push_back(Json::array({p.fpr, p.tpr}));
        }
        j["roc"] = pts;
    }
    return j;
}

MetricSummary summarize(std::span<const MetricReport> reports) {
    MetricSummary s;
    if (reports.empty()) {
        return s;
    }
    constexpr double MetricReport::*fields[] = {&MetricReport::precision, &MetricReport::recall,
                                                &MetricReport::accuracy, &MetricReport::balanced_accuracy,
                                                &MetricReport::f1, &MetricReport::auc};
    const double n = static_cast<double>(reports.size());
    for (auto f : fields) {
        double mean = 0;
        for (const auto& r : reports) {
            mean += r.*f;
        }
        mean /= n;
        double ss = 0;
        for (const auto& r : reports) {
            ss += (r.*f - mean) * (r.*f - mean);
        }
        s.mean.*f = mean;
        s.stdev.*f = reports.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    }
    return s;
}

Json CvResult::to_json() const {
    Json j = summary_json(summary);
    Json f = Json::array();
    for (const auto& r : folds) {
        f.push_back(r.to_json());
    }
    j["folds"] = f;
    if (!members.empty()) {
        Json m = Json::array();
        for (const auto& s : members) {
            m.push_back(summary_json(s));
        }
        j["members"] = m;
    }
    return j;
}

namespace {

[[noreturn]] void rethrow_with_fold(std::exception_ptr e, std::size_t fold) {
    const std::string prefix = "fold " + std::to_string(fold) + ": ";
    try {
        std::rethrow_exception(e);
    } catch (const TrainingError& t) {
        throw TrainingError(prefix + t.what(), t.diagnostics());
    } catch (const ConfigError& t) {
        throw ConfigError(prefix + t.what());
    } catch (const ArgumentError& t) {
        throw ArgumentError(prefix + t.what());
    } catch (const DataError& t) {
        throw DataError(prefix + t.what());
    } catch (const std::exception& t) {
        throw Error(prefix + t.what());
    }
}

std::size_t half_positives(std::span<const int> labels) {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)) / 2;
}

} // namespace

CvResult cross_validate(const PreparedCorpus& data, const PipelineConfig& config, const CvOptions& options) {
    config.validate();
    if (options.folds == 0) {
        throw ArgumentError("cross_validate: folds must be >= 1");
    }
    const std::span<const int> train_labels = data.labels;
    const std::span<const int> eval_labels =
        options.evaluation_labels.empty() ? train_labels : std::span<const int>(options.evaluation_labels);
    if (eval_labels.size() != data.size()) {
        throw ArgumentError("cross_validate: evaluation labels differ in length from the corpus");
    }
    const std::size_t p_train = options.p_train.value_or(half_positives(train_labels));
    const std::size_t n_train = options.n_train.value_or(half_positives(train_labels));
    const std::size_t n_members = config.members.size();

    CvResult result;
    result.folds.resize(options.folds);
    std::vector<std::vector<MetricReport>> member_reports(n_members, std::vector<MetricReport>(options.folds));
    std::vector<std::exception_ptr> errors(options.folds);

    const int jobs = options.jobs;
    const auto n_folds = static_cast<long>(options.folds);
#pragma omp parallel for schedule(dynamic) if (jobs > 1) num_threads(jobs > 1 ? jobs : 1)
    for (long lf = 0; lf < n_folds; ++lf) {
        const auto fold = static_cast<std::size_t>(lf);
        try {
            const std::uint64_t seed = config.seed + fold;
            const auto plan =
                SamplingPlan::for_labels(train_labels, p_train, n_train, options.neg_test_fraction, seed);
            const Split split = undersample_split(train_labels, plan);
            std::vector<int> y_train;
            for (auto r : split.train) {
                y_train.push_back(train_labels[r]);
            }
            const auto model = fit_pipeline(config, data, split.train, y_train, seed, 1);
            const auto per_member = model.member_scores(data, split.test, 1);
            std::vector<int> y_test;
            for (auto r : split.test) {
                y_test.push_back(eval_labels[r]);
            }
            std::vector<double> scores(split.test.size());
            std::vector<double> s(n_members);
            for (std::size_t i = 0; i < scores.size(); ++i) {
                for (std::size_t m = 0; m < n_members; ++m) {
                    s[m] = per_member[m][i];
                }
                scores[i] = ensemble_score(s, config.weights);
            }
            result.folds[fold] = evaluate_scores(y_test, scores, config.threshold);
            if (n_members > 1) {
                for (std::size_t m = 0; m < n_members; ++m) {
                    member_reports[m][fold] = evaluate_scores(y_test, per_member[m], config.threshold);
                }
            }
        } catch (...) {
            errors[fold] = std::current_exception();
        }
    }
    for (std::size_t f = 0; f < errors.size(); ++f) {
        if (errors[f]) {
            rethrow_with_fold(errors[f], f);
        }
    }
    result.summary = summarize(result.folds);
    if (n_members > 1) {
        for (const auto& reports : member_reports) {
            result.members.push_back(summarize(reports));
        }
    }
    return result;
}

Json GridAxes::to_json() const {
    Json j;
    for (auto a : algorithms) {
        j["algorithm"].push_back(to_string(a));
    }
    for (auto w : weightings) {
        j["weighting"].push_back(to_string(w));
    }
    for (auto s : selectors) {
        j["selector"].push_back(to_string(s));
    }
    j["k_features"] = k_features;
    j["svm_C"] = svm_C;
    for (auto k : kernels) {
        j["kernel"].push_back(to_string(k));
    }
    return j;
}

GridAxes GridAxes::from_json(const Json& j) {
    GridAxes g;
    auto strings = [&](const char* key) {
        std::vector<std::string> v;
        if (j.contains(key)) {
            for (const auto& e : j[key]) {
                v.push_back(e.get<std::string>());
            }
        }
        return v;
    };
    if (j.contains("algorithm")) {
        g.algorithms.clear();
        for (const auto& s : strings("algorithm")) {
            g.algorithms.push_back(parse_algorithm(s));
        }
    }
    if (j.contains("weighting")) {
        g.weightings.clear();
        for (const auto& s : strings("weighting")) {
            g.weightings.push_back(parse_weighting(s));
        }
    }
    if (j.contains("selector")) {
        g.selectors.clear();
        for (const auto& s : strings("selector")) {
            g.selectors.push_back(parse_selector(s));
        }
    }
    if (j.contains("k_features")) {
        g.k_features = j["k_features"].get<std::vector<std::size_t>>();
    }
    if (j.contains("svm_C")) {
        g.svm_C = j["svm_C"].get<std::vector<double>>();
    }
    if (j.contains("kernel")) {
        g.kernels.clear();
        for (const auto& s : strings("kernel")) {
            g.kernels.push_back(parse_kernel(s));
        }
    }
    if (g.algorithms.empty() || g.weightings.empty() || g.selectors.empty() || g.k_features.empty() ||
        g.svm_C.empty() || g.kernels.empty()) {
        throw ConfigError("grid axes must not be empty");
    }
    return g;
}

std::vector<GridCell> grid_search(const PreparedCorpus& data, const PipelineConfig& base, const GridAxes& axes,
                                  const CvOptions& options) {
    std::vector<GridCell> cells;
    for (auto algo : axes.algorithms) {
        const bool svm = algo == Algorithm::svm;
        const std::vector<double> cs = svm ? axes.svm_C : std::vector<double>{axes.svm_C.front()};
        const std::vector<Kernel> ks = svm ? axes.kernels : std::vector<Kernel>{axes.kernels.front()};
        for (auto w : axes.weightings) {
            for (auto sel : axes.selectors) {
                for (auto k : axes.k_features) {
                    for (double c : cs) {
                        for (auto kern : ks) {
                            cells.push_back(GridCell{algo, w, sel, k, c, kern, {}, {}});
                        }
                    }
                }
            }
        }
    }
    for (auto& cell : cells) {
        PipelineConfig config = base;
        MemberConfig member = base.members.front();
        member.model.algorithm = cell.algorithm;
        member.model.svm_C = cell.svm_C;
        member.model.svm_kernel = cell.kernel;
        member.scheme.kind = cell.weighting;
        member.selector = cell.selector;
        member.k_features = cell.selector == Selector::none ? 0 : cell.k_features;
        if (cell.selector == Selector::none) {
            member.vocab_top_k = cell.k_features;
        }
        config.members = {member};
        config.weights = {1.0};
        try {
            cell.result = cross_validate(data, config, options).summary;
        } catch (const Error& e) {
            cell.error = e.what();
            spdlog::warn("grid cell {}/{}/{}/{} failed: {}", to_string(cell.algorithm), to_string(cell.weighting),
                         to_string(cell.selector), cell.k_features, e.what());
        }
    }
    return cells;
}

std::string grid_table(std::span<const GridCell> cells) {
    Table t;
    t.header = {"algorithm", "weighting", "selector", "k_features", "svm_C", "kernel",
                "accuracy",  "recall",    "auc",      "auc_stdev",  "error"};
    auto num = [](double v) {
        if (std::isnan(v)) {
            return std::string();
        }
        std::ostringstream s;
        s.precision(4);
        s << std::fixed << v;
        return s.str();
    };
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (const auto& c : cells) {
        const bool svm = c.algorithm == Algorithm::svm;
        const bool ok = c.error.empty();
        t.rows.push_back({std::string(to_string(c.algorithm)), std::string(to_string(c.weighting)),
                          std::string(to_string(c.selector)), std::to_string(c.k_features),
                          svm ? num(c.svm_C) : "", svm ? std::string(to_string(c.kernel)) : "",
                          num(ok ? c.result.mean.accuracy : nan), num(ok ? c.result.mean.recall : nan),
                          num(ok ? c.result.mean.auc : nan), num(ok ? c.result.stdev.auc : nan), c.error});
    }
    std::ostringstream out;
    write_table(out, t);
    return out.str();
}

Json grid_json(std::span<const GridCell> cells) {
    Json arr = Json::array();
    for (const auto& c : cells) {
        Json j{{"algorithm", to_string(c.algorithm)}, {"weighting", to_string(c.weighting)},
               {"selector", to_string(c.selector)},   {"k_features", c.k_features},
               {"svm_C", c.svm_C},                    {"kernel", to_string(c.kernel)}};
        j.update(summary_json(c.result));
        if (!c.error.empty()) {
            j["error"] = c.error;
        }
        arr.push_back(j);
    }
    return arr;
}

std::string roc_csv(std::span<const RocPoint> roc) {
    Table t;
    t.header = {"fpr", "tpr"};
    for (const auto& p : roc) {
        std::ostringstream a;
        std::ostringstream b;
        a.precision(17);
        b.precision(17);
        a << p.fpr;
        b << p.tpr;
        t.rows.push_back({a.str(), b.str()});
    }
    std::ostringstream out;
    write_table(out, t);
    return out.str();
}

} // namespace zsl
