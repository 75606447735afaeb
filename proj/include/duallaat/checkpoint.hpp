#pragma once

#include "duallaat/config.hpp"
#include "duallaat/model.hpp"
#include "duallaat/text.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace duallaat {

// Binary layout, all integers little-endian:
//   bytes 0..7   magic "DLAATCKP"
//   u32          format version (kCheckpointFormat)
//   u64          header length H
//   H bytes      UTF-8 JSON header: config, vocabulary tokens and hash, rng
//                state, counters, and an "arrays" directory of
//                {name, dtype "f64", shape [rows, cols], offset, nbytes}
//   payload      arrays back to back, column-major float64; offsets are
//                relative to the start of the payload
inline constexpr std::uint32_t kCheckpointFormat = 1;

struct OptimizerState {
    ModelParams<double> first_moment;
    ModelParams<double> second_moment;
};

struct Checkpoint {
    RunConfig config;
    Vocabulary vocab;
    ModelParams<double> params;
    std::optional<OptimizerState> optimizer;
    std::string rng_state;  // textual engine state, empty before training
    int epoch = 0;
    std::int64_t step = 0;
    double threshold = 0.5;
    double best_val_micro_f1 = -1;
    int best_epoch = -1;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string rng_state(const Rng& rng);
Rng rng_from_state(const std::string& state);

}  // namespace duallaat
