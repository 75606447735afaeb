#pragma once

#include "duallaat/checkpoint.hpp"
#include "duallaat/data.hpp"
#include "duallaat/metrics.hpp"
#include "duallaat/model.hpp"

#include <optional>
#include <vector>

namespace duallaat {

// Token ids for every document (by position) and every registry code (by index).
struct EncodedCorpus {
    std::vector<TokenSeq> notes;
    std::vector<TokenSeq> codes;
};

EncodedCorpus encode_corpus(const Corpus& corpus, const Vocabulary& vocab, const ModelConfig& model);
std::vector<TokenSeq> encode_descriptions(const CodeRegistry& registry, const Vocabulary& vocab,
                                          const ModelConfig& model);

// Probabilities for every note against every code. Codes are processed in
// slices of at most chunk_size; each column only depends on its own code.
ScoreMatrix score_documents(const ModelConfig& cfg, const ModelParams<double>& params,
                            const std::vector<TokenSeq>& notes, const std::vector<TokenSeq>& codes,
                            std::size_t chunk_size);

struct ThresholdSpec {
    bool tuned = false;
    double value = 0.5;
};

ThresholdSpec parse_threshold(const std::string& s);

struct EvaluateOptions {
    std::vector<StratumKind> strata{StratumKind::Frequent, StratumKind::Rare, StratumKind::Full};
    ThresholdSpec threshold;
    std::optional<Version> version;  // default: every version with test notes
    std::size_t chunk_size = 0;      // default: the trained label space size
};

// Strata come from whole-database counts over every split of `corpus`.
// Frequent/full keep every test note; rare keeps notes with at least one
// rare gold code. A tuned threshold is fitted on the matching val rows.
EvalReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, const EvaluateOptions& options);

}  // namespace duallaat
