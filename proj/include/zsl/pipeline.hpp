#pragma once

#include "zsl/learn.hpp"
#include "zsl/textprep.hpp"
#include "zsl/vectorize.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace zsl {

Json prep_to_json(const PrepConfig& prep);
/// Missing keys fall back to PrepConfig::dutch_defaults().
PrepConfig prep_from_json(const Json& j);

/// One feature space plus one classifier.
struct MemberConfig {
    bool use_terms = true;
    WeightScheme scheme;
    std::optional<std::size_t> vocab_top_k;
    std::size_t min_df = 1;
    Selector selector = Selector::none;
    std::size_t k_features = 0;
    bool include_meta = false;
    bool include_structured = false;
    ModelSpec model;

    FeatureSpaceOptions feature_options(const PrepConfig& prep) const;
    Json to_json() const;
    static MemberConfig from_json(const Json& j);
    bool operator==(const MemberConfig&) const = default;
};

/// The declarative pipeline consumed by train, grid, eval and serve.
struct PipelineConfig {
    PrepConfig prep = PrepConfig::dutch_defaults();
    std::vector<MemberConfig> members{MemberConfig{}};
    std::vector<double> weights{1.0};
    double threshold = 0.5;
    std::uint64_t seed = 0;

    /// Throws ConfigError: 1 or 2 members, one weight each summing to 1,
    /// threshold in [0,1], valid member specs.
    void validate() const;

    Json to_json() const;
    static PipelineConfig from_json(const Json& j);
    /// Reads a JSON config; relative "rules_file"/"stopwords_file" entries
    /// resolve against the config's directory.
    static PipelineConfig load(const std::filesystem::path& path);
};

/// Children's preprocessed documents: a child's consults concatenated.
struct PreparedCorpus {
    const Corpus* corpus = nullptr;
    std::vector<TermSequence> docs;
    std::vector<int> labels; ///< derived labels

    std::size_t size() const { return docs.size(); }
};

PreparedCorpus prepare_corpus(const Corpus& corpus, const PrepConfig& prep, int jobs = 1);
TermSequence child_document(const ChildRecord& child, const Preprocessor& prep);

/// A fitted pipeline; this is the served and saved artifact.
class PipelineModel {
public:
    PipelineModel() = default;
    PipelineModel(PipelineConfig config, std::vector<FeatureSpace> spaces, std::vector<TrainedModel> models);

    const PipelineConfig& config() const { return config_; }
    const std::vector<FeatureSpace>& spaces() const { return spaces_; }
    const std::vector<TrainedModel>& models() const { return models_; }
    std::uint64_t model_version() const { return model_version_; }
    void set_model_version(std::uint64_t v);

    double score(const TermSequence& doc, const ChildRecord& child) const;
    /// Preprocesses the child's consult texts with the frozen text config.
    double score(const ChildRecord& child) const;
    /// Per-member scores for the given rows, then the weighted vote.
    std::vector<double> score_rows(const PreparedCorpus& data, std::span<const std::size_t> rows,
                                   int jobs = 1) const;
    std::vector<std::vector<double>> member_scores(const PreparedCorpus& data, std::span<const std::size_t> rows,
                                                   int jobs = 1) const;
    bool flagged(double score) const { return score >= config_.threshold; }

    Json to_json() const;
    static PipelineModel from_json(const Json& j);
    void save(const std::filesystem::path& path) const;
    static PipelineModel load(const std::filesystem::path& path);

private:
    PipelineConfig config_;
    std::vector<FeatureSpace> spaces_;
    std::vector<TrainedModel> models_;
    std::uint64_t model_version_ = 0;
    std::shared_ptr<const Preprocessor> prep_;
};

/// Fits every member on the given rows. Member m's model seed is derive_seed(seed, m).
PipelineModel fit_pipeline(const PipelineConfig& config, const PreparedCorpus& data,
                           std::span<const std::size_t> rows, std::span<const int> labels, std::uint64_t seed,
                           int jobs = 1);

/// Fits on explicit documents; used by the service's retraining job.
PipelineModel fit_pipeline(const PipelineConfig& config, std::span<const TermSequence* const> docs,
                           std::span<const ChildRecord* const> children, std::span<const int> labels,
                           std::uint64_t seed, int jobs = 1);

} // namespace zsl
