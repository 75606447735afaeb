#pragma once

#include "duallaat/data.hpp"
#include "duallaat/tensor.hpp"

#include <json.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace duallaat {

// Version-1 codes are tagged V9, version-2 codes V10.
struct SynthConfig {
    std::size_t n_concepts = 400;
    double overlap_fraction = 0.25;  // concepts coded in both versions
    double zipf_s = 1.3;
    std::size_t n_docs_v1 = 600;
    std::size_t n_docs_v2 = 600;
    double noise_rate = 0.5;  // fraction of note tokens that are filler
    std::uint64_t seed = 7;
    bool reword = true;           // shared concepts get synonym-substituted V2 descriptions
    bool disjoint_vocab = false;  // every version draws its tokens from its own lexicon
    std::size_t signal_tokens = 3;
    std::size_t filler_vocab = 300;
    double concepts_per_doc_mean = 14;
    double concepts_per_doc_sd = 8;
    std::size_t concepts_per_doc_max = 40;
    double train_fraction = 0.73;
    double val_fraction = 0.11;

    void validate() const;
};

nlohmann::ordered_json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(SynthConfig base, const nlohmann::json& j);

struct Concept {
    std::size_t id = 0;
    // Indexed by version slot (0 = V1, 1 = V2); identical unless the lexicons are disjoint.
    std::array<std::vector<std::string>, 2> signal;
    std::array<std::vector<std::string>, 2> synonyms;  // one per signal word
    std::optional<CodeIndex> v1_code;
    std::optional<CodeIndex> v2_code;
    double prevalence = 0;
};

struct SynthCorpus {
    Corpus corpus;
    std::vector<Concept> concepts;
};

// Pure function of the config. Throws UsageError for an insane config and
// DataError when more than 5% of documents end up with no gold code.
SynthCorpus generate(const SynthConfig& config);

// Normalized Zipf(s) probabilities for ranks 1..n.
std::vector<double> zipf_probabilities(std::size_t n, double s);

}  // namespace duallaat
