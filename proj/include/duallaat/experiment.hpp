#pragma once

#include "duallaat/config.hpp"
#include "duallaat/metrics.hpp"
#include "duallaat/synthgen.hpp"

#include <json.hpp>

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace duallaat {

struct MixingConfig {
    SynthConfig synth;
    RunConfig run;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    bool tuned_threshold = true;
    bool pretrain_embeddings = true;  // skip-gram over the union of both versions' training notes
};

// Frozen desk study: half the generator's default concepts and 400 notes per
// version, desk CNN preset, seeds 1-3.
MixingConfig desk_mixing_config();

// The same study on a corpus with no shared concepts and per-version lexicons.
MixingConfig control_config(MixingConfig c);

struct ArmScores {
    double micro_f1 = 0;
    double p_at_8 = 0;
    double map = 0;
};

struct SeedResult {
    std::uint64_t seed = 0;
    // stratum name ("rare", "frequent") -> scores
    std::map<std::string, ArmScores> target_only;
    std::map<std::string, ArmScores> mixed;
};

struct DeltaSummary {
    double mean = 0;
    double standard_error = 0;  // of the mean, over seeds
    std::vector<double> per_seed;
};

struct MixingReport {
    std::vector<SeedResult> seeds;
    // stratum -> metric ("micro_f1", "p_at_8", "map") -> mixed minus target-only
    std::map<std::string, std::map<std::string, DeltaSummary>> deltas;
};

// Per seed: generate the corpus, build one vocabulary and one embedding table
// from the union of both versions' training notes, then train a V2-only and
// a V1+V2 model and evaluate both on the V2 test set.
MixingReport mixing_experiment(const MixingConfig& config,
                               const std::function<void(const std::string&)>& progress = {});

nlohmann::ordered_json to_json(const MixingReport& r);

// Positive at the two-sided 95% level, Student's t over seeds.
bool significant_gain(const DeltaSummary& d);

// Two-sided 95% critical value of Student's t for small degrees of freedom.
double t_critical_95(std::size_t dof);

}  // namespace duallaat
