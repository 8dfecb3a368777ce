#pragma once

#include "zsl/corpus.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace zsl {

struct GenConfig {
    std::size_t n_children = 13170;
    double positive_rate = 0.05;
    double registration_rate = 0.30;   ///< share of true positives carrying a ZSL finding
    double signal_strength = 0.5;      ///< per-consult chance a true positive's note carries signal tokens
    double length_boost = 1.0;         ///< note length multiplier for true positives
    double consults_mean = 14.8;
    std::size_t vocab_size = 2000;
    std::size_t signal_vocab_size = 40;
    double background_signal_rate = 0.02; ///< per-consult chance for other children
    double structured_strength = 0.5;     ///< shift of structured observations for true positives
    std::uint64_t seed = 0;

    /// Throws ConfigError on rates outside [0,1], length_boost < 1 or empty lexicons.
    void validate() const;
    nlohmann::json to_json() const;
    static GenConfig from_json(const nlohmann::json& j);
};

struct GeneratedCorpus {
    Corpus corpus;
    std::vector<int> truth;                 ///< aligned with corpus order
    std::vector<std::string> lexicon;       ///< ordinary words, frequency rank order
    std::vector<std::string> signal_tokens; ///< reserved, disjoint from the lexicon
    std::size_t true_positives = 0;
    std::size_t registered = 0;
};

/// Every lexicon word passes the default text pipeline unchanged.
GeneratedCorpus generate(const GenConfig& config);

/// Writes the delimited corpus layout, ground_truth.csv (child_id;true_label)
/// and synth_manifest.json (config and reserved tokens).
void write_generated(const GeneratedCorpus& generated, const GenConfig& config, const std::filesystem::path& dir);

/// Ground-truth labels aligned with `corpus`; throws DataError on a missing child.
std::vector<int> read_ground_truth(const std::filesystem::path& path, const Corpus& corpus);

} // namespace zsl
