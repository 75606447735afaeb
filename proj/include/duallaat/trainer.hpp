#pragma once

#include "duallaat/checkpoint.hpp"
#include "duallaat/config.hpp"
#include "duallaat/data.hpp"
#include "duallaat/text.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace duallaat {

// Linear warmup to base_lr over warmup steps, then linear decay to zero at total.
double scheduled_lr(double base_lr, std::int64_t step, std::int64_t warmup, std::int64_t total);

// Mean binary cross-entropy over probabilities, clamped to [eps, 1 - eps]
// and evaluated in logit space.
double bce_loss(const Matrix<double>& probabilities, const Matrix<double>& targets, double eps = 1e-12);

// Decoupled weight decay followed by a bias-corrected adaptive-moment step.
void adam_step(ModelParams<double>& params, const ModelParams<double>& grad, OptimizerState& state,
               const ModelConfig& model, const TrainConfig& train, double lr, std::int64_t step);

// Scales grad in place when its global norm exceeds max_norm; returns the pre-clip norm.
double clip_gradient(ModelParams<double>& grad, const ModelConfig& model, double max_norm);

struct EpochRecord {
    int epoch = 0;
    std::int64_t step = 0;
    double loss = 0;
    double lr = 0;
    double val_micro_f1 = 0;
    std::size_t clipped_steps = 0;
    double seconds = 0;
};

std::string epoch_record_json(const EpochRecord& r);

struct TrainOptions {
    std::optional<EmbeddingTable> embeddings;
    const Checkpoint* resume = nullptr;
    int stop_after_epoch = -1;  // stop early (for resumable runs); total schedule unchanged
    bool validate = true;
    std::function<void(const EpochRecord&, const Checkpoint& last, bool improved)> on_epoch;
};

struct TrainResult {
    Checkpoint last;
    std::optional<Checkpoint> best;  // best validation micro F1 seen by this run
    std::vector<EpochRecord> log;
    ParameterCount parameters;
    double seconds = 0;
};

// Trains on the train split of every version in the corpus; the val split
// drives model selection. Throws NumericalError on a non-finite loss.
TrainResult train(const Corpus& corpus, const Vocabulary& vocab, const RunConfig& config,
                  const TrainOptions& options = {});

}  // namespace duallaat
