#pragma once

#include "duallaat/model.hpp"
#include "duallaat/text.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>

namespace duallaat {

struct TrainConfig {
    double learning_rate = 0.001;
    std::int64_t warmup_steps = 2000;
    double weight_decay = 0.001;
    int epochs = 10;
    std::size_t batch_size = 32;
    std::size_t label_space_size = 8192;
    std::uint64_t seed = 1;
    double clip_norm = 5.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

struct RunConfig {
    std::string preset = "paper";
    ModelConfig model;  // vocab_size is filled in once the vocabulary exists
    TrainConfig train;
    SkipGramConfig embeddings;
    std::size_t min_count = kDefaultMinCount;
    std::int64_t rare_threshold = 10;

    void validate() const;
};

// "paper": the published hyperparameters for the chosen encoder family.
// "desk": a small configuration that trains on a laptop CPU in minutes.
RunConfig make_preset(const std::string& name, EncoderKind kind);

EncoderKind parse_encoder_kind(const std::string& s);
std::string to_string(EncoderKind k);

nlohmann::ordered_json to_json(const RunConfig& config);
// Overlays the keys present in j onto base.
RunConfig merge_json(RunConfig base, const nlohmann::json& j);

}  // namespace duallaat
