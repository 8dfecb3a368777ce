// Serial reference vs OpenMP kernels on a synthetic corpus.
//   bench_kernels --benchmark_filter=Gram

#include "zsl/explore.hpp"
#include "zsl/learn.hpp"
#include "zsl/parallel.hpp"
#include "zsl/pipeline.hpp"
#include "zsl/synthgen.hpp"

#include <benchmark/benchmark.h>
#include <omp.h>

#include <numeric>

using namespace zsl;

namespace {

struct Fixture {
    GeneratedCorpus gen;
    PreparedCorpus data;
    std::vector<std::string> texts;
    FeatureMatrix X;
    std::vector<SparseVector> rows;
    std::vector<int> y;
};

const Fixture& fixture() {
    static const Fixture f = [] {
        GenConfig g;
        g.n_children = 1500;
        g.positive_rate = 0.1;
        g.seed = 1;
        Fixture out;
        out.gen = generate(g);
        out.data = prepare_corpus(out.gen.corpus, PrepConfig::dutch_defaults(), max_jobs());
        for (const auto& c : out.gen.corpus.children()) {
            for (const auto& n : c.consults) {
                out.texts.push_back(n.text);
            }
        }
        std::vector<const TermSequence*> docs;
        std::vector<const ChildRecord*> kids;
        for (std::size_t i = 0; i < out.data.size(); ++i) {
            docs.push_back(&out.data.docs[i]);
            kids.push_back(&out.gen.corpus[i]);
        }
        FeatureSpaceOptions o;
        o.vocab_top_k = 1000;
        const auto space = fit_feature_space(docs, kids, out.data.labels, o);
        out.X = assemble(space, docs, kids);
        for (std::size_t r = 0; r < out.X.n_rows(); ++r) {
            out.rows.push_back(out.X.row(r));
        }
        out.y = out.gen.truth;
        return out;
    }();
    return f;
}

int threads(const benchmark::State& state) {
    return state.range(0) == 0 ? 1 : omp_get_num_procs();
}

void label(benchmark::State& state) {
    state.SetLabel(state.range(0) == 0 ? "serial" : "parallel x" + std::to_string(omp_get_num_procs()));
}

void BM_Gram(benchmark::State& state) {
    const auto& f = fixture();
    const std::vector<SparseVector> rows(f.rows.begin(), f.rows.begin() + 800);
    for (auto _ : state) {
        auto g = state.range(0) == 0 ? gram_matrix_serial(rows, Kernel::rbf, 0.001, 3)
                                     : gram_matrix(rows, Kernel::rbf, 0.001, 3, threads(state));
        benchmark::DoNotOptimize(g.data());
    }
    label(state);
}

void BM_RandomForest(benchmark::State& state) {
    const auto& f = fixture();
    ModelSpec spec;
    spec.algorithm = Algorithm::random_forest;
    spec.rf_n_trees = 64;
    spec.seed = 3;
    for (auto _ : state) {
        auto m = train_random_forest(f.X, f.y, spec, threads(state));
        benchmark::DoNotOptimize(m);
    }
    label(state);
}

void BM_KMeansAssign(benchmark::State& state) {
    const auto& f = fixture();
    std::vector<std::vector<double>> centroids;
    for (std::size_t k = 0; k < 10; ++k) {
        centroids.push_back(f.X.dense_row(k * 97));
    }
    std::vector<std::size_t> assignment(f.X.n_rows());
    for (auto _ : state) {
        const double sse = state.range(0) == 0 ? assign_nearest_serial(f.X, centroids, assignment)
                                               : assign_nearest(f.X, centroids, assignment, threads(state));
        benchmark::DoNotOptimize(sse);
    }
    label(state);
}

void BM_Preprocess(benchmark::State& state) {
    const auto& f = fixture();
    const Preprocessor prep(PrepConfig::dutch_defaults());
    const std::vector<std::string_view> views(f.texts.begin(), f.texts.begin() + 5000);
    for (auto _ : state) {
        auto out = preprocess_all(prep, views, threads(state));
        benchmark::DoNotOptimize(out.data());
    }
    label(state);
}

} // namespace

BENCHMARK(BM_Gram)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RandomForest)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_KMeansAssign)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Preprocess)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
