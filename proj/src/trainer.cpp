#include "duallaat/trainer.hpp"

#include "duallaat/batcher.hpp"
#include "duallaat/error.hpp"
#include "duallaat/evaluate.hpp"
#include "duallaat/metrics.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <map>

namespace duallaat {

double scheduled_lr(double base_lr, std::int64_t step, std::int64_t warmup, std::int64_t total)
{
    if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    if (total <= warmup) return base_lr;
    const double remaining = static_cast<double>(std::max<std::int64_t>(0, total - step));
    return base_lr * remaining / static_cast<double>(total - warmup);
}

double bce_loss(const Matrix<double>& probabilities, const Matrix<double>& targets, double eps)
{
    if (probabilities.rows() != targets.rows() || probabilities.cols() != targets.cols()) {
        throw std::invalid_argument("prediction and target shapes differ");
    }
    if (probabilities.hasNaN() || targets.hasNaN()) throw NumericalError("NaN in loss inputs");
    if (probabilities.size() == 0) return 0;
    double sum = 0;
    for (Index i = 0; i < probabilities.size(); ++i) {
        const double p = std::clamp(probabilities.data()[i], eps, 1.0 - eps);
        sum += bce_with_logit(std::log(p) - std::log1p(-p), targets.data()[i]);
    }
    return sum / static_cast<double>(probabilities.size());
}

namespace {

template <typename F>
void zip_params(ModelParams<double>& a, const ModelParams<double>& b, const ModelConfig& cfg, F&& f)
{
    std::vector<Matrix<double>*> left;
    visit_params(a, cfg, [&](const std::string&, Matrix<double>& m) { left.push_back(&m); });
    std::size_t i = 0;
    visit_params(b, cfg, [&](const std::string& name, const Matrix<double>& m) { f(name, *left[i++], m); });
}

void zero(ModelParams<double>& p, const ModelConfig& cfg)
{
    visit_params(p, cfg, [](const std::string&, Matrix<double>& m) { m.setZero(); });
}

}  // namespace

void adam_step(ModelParams<double>& params, const ModelParams<double>& grad, OptimizerState& state,
               const ModelConfig& model, const TrainConfig& train, double lr, std::int64_t step)
{
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(train.beta1, t);
    const double c2 = 1.0 - std::pow(train.beta2, t);
    std::vector<Matrix<double>*> m1, m2;
    visit_params(state.first_moment, model, [&](const std::string&, Matrix<double>& m) { m1.push_back(&m); });
    visit_params(state.second_moment, model, [&](const std::string&, Matrix<double>& m) { m2.push_back(&m); });
    std::size_t i = 0;
    zip_params(params, grad, model, [&](const std::string&, Matrix<double>& p, const Matrix<double>& g) {
        auto& m = *m1[i];
        auto& v = *m2[i];
        ++i;
        if (train.weight_decay > 0) p *= 1.0 - lr * train.weight_decay;
        m = train.beta1 * m + (1.0 - train.beta1) * g;
        v = train.beta2 * v + (1.0 - train.beta2) * g.cwiseAbs2();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + train.epsilon);
    });
    params.embedding.row(0).setZero();
}

double clip_gradient(ModelParams<double>& grad, const ModelConfig& model, double max_norm)
{
    double sq = 0;
    visit_params(grad, model, [&](const std::string&, const Matrix<double>& m) { sq += m.squaredNorm(); });
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const double s = max_norm / norm;
        visit_params(grad, model, [&](const std::string&, Matrix<double>& m) { m *= s; });
    }
    return norm;
}

std::string epoch_record_json(const EpochRecord& r)
{
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["step"] = r.step;
    j["loss"] = r.loss;
    j["lr"] = r.lr;
    j["val"] = {{"micro_f1", r.val_micro_f1}};
    j["clipped_steps"] = r.clipped_steps;
    j["seconds"] = r.seconds;
    return j.dump();
}

namespace {

// Micro F1 at 0.5 over all val notes, each scored against its version's full pool.
double validation_micro_f1(const ModelConfig& cfg, const ModelParams<double>& params, const Corpus& corpus,
                           const EncodedCorpus& enc, std::size_t chunk)
{
    std::map<Version, std::vector<std::size_t>> by_version;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        if (corpus.documents[i].split == Split::Val) by_version[corpus.documents[i].version].push_back(i);
    }
    double tp = 0, fp = 0, fn = 0;
    for (const auto& [v, idx] : by_version) {
        const auto pool = corpus.registry.codes_of(v);
        std::vector<TokenSeq> notes, codes;
        std::vector<const Document*> docs;
        for (auto i : idx) {
            notes.push_back(enc.notes[i]);
            docs.push_back(&corpus.documents[i]);
        }
        for (auto c : pool) codes.push_back(enc.codes[static_cast<std::size_t>(c)]);
        const auto scores = score_documents(cfg, params, notes, codes, chunk);
        const auto targets = batch_targets(docs, pool);
        for (Index k = 0; k < scores.size(); ++k) {
            const bool pred = scores.data()[k] >= 0.5;
            const bool gold = targets.data()[k] > 0.5;
            tp += pred && gold;
            fp += pred && !gold;
            fn += !pred && gold;
        }
    }
    const double denom = 2 * tp + fp + fn;
    return denom > 0 ? 2 * tp / denom : 0.0;
}

}  // namespace

TrainResult train(const Corpus& corpus, const Vocabulary& vocab, const RunConfig& config_in,
                  const TrainOptions& options)
{
    using Clock = std::chrono::steady_clock;
    const auto started = Clock::now();

    RunConfig config = config_in;
    config.model.vocab_size = static_cast<Index>(vocab.size());
    config.validate();
    const auto& mcfg = config.model;
    const auto& tcfg = config.train;

    std::vector<const Document*> training;
    bool has_val = false;
    for (const auto& d : corpus.documents) {
        if (d.split == Split::Train) training.push_back(&d);
        has_val = has_val || d.split == Split::Val;
    }
    if (training.empty()) throw DataError("corpus has no training documents");
    if (options.validate && !has_val) throw DataError("corpus has no validation documents");

    const auto enc = encode_corpus(corpus, vocab, mcfg);
    std::map<const Document*, std::size_t> doc_index;
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) doc_index[&corpus.documents[i]] = i;

    Batcher batcher(training, corpus.registry, {tcfg.batch_size, tcfg.label_space_size});
    const auto steps_per_epoch = static_cast<std::int64_t>(batcher.batches_per_epoch());
    const std::int64_t total_steps = steps_per_epoch * tcfg.epochs;

    TrainResult result;
    Checkpoint& state = result.last;
    Rng rng(tcfg.seed);
    if (options.resume) {
        state = *options.resume;
        if (state.vocab.hash() != vocab.hash()) throw DataError("resume checkpoint was trained with another vocabulary");
        if (!state.optimizer) throw DataError("resume checkpoint carries no optimizer state");
        state.config = config;
        rng = rng_from_state(state.rng_state);
    } else {
        state.config = config;
        state.vocab = vocab;
        state.params = init_params<double>(mcfg, rng, options.embeddings);
        state.optimizer = OptimizerState{zero_params<double>(mcfg), zero_params<double>(mcfg)};
        state.rng_state = rng_state(rng);
    }
    result.parameters = count_parameters(mcfg);

    auto grad = zero_params<double>(mcfg);
    const int last_epoch = options.stop_after_epoch >= 0 ? std::min(options.stop_after_epoch, tcfg.epochs) : tcfg.epochs;
    while (state.epoch < last_epoch) {
        const auto epoch_start = Clock::now();
        EpochRecord rec;
        rec.epoch = state.epoch + 1;
        double loss_sum = 0;
        const auto batches = batcher.epoch(rng);
        for (const auto& batch : batches) {
            std::vector<TokenSeq> notes, codes;
            notes.reserve(batch.documents.size());
            for (const auto* d : batch.documents) notes.push_back(enc.notes[doc_index.at(d)]);
            codes.reserve(batch.label_space.size());
            for (auto c : batch.label_space.codes) codes.push_back(enc.codes[static_cast<std::size_t>(c)]);

            zero(grad, mcfg);
            const double loss =
                loss_and_gradient(mcfg, state.params, notes, codes, batch.targets, Mode::Train, &rng, grad);
            if (!std::isfinite(loss)) {
                throw NumericalError("training diverged at step " + std::to_string(state.step) +
                                     " (non-finite loss); the last completed epoch's checkpoint is intact");
            }
            if (clip_gradient(grad, mcfg, tcfg.clip_norm) > tcfg.clip_norm) ++rec.clipped_steps;
            rec.lr = scheduled_lr(tcfg.learning_rate, state.step, tcfg.warmup_steps, total_steps);
            adam_step(state.params, grad, *state.optimizer, mcfg, tcfg, rec.lr, state.step);
            ++state.step;
            loss_sum += loss;
        }
        ++state.epoch;
        rec.step = state.step;
        rec.loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());

        bool improved = false;
        if (options.validate) {
            rec.val_micro_f1 = validation_micro_f1(mcfg, state.params, corpus, enc, tcfg.label_space_size);
            if (rec.val_micro_f1 > state.best_val_micro_f1) {
                state.best_val_micro_f1 = rec.val_micro_f1;
                state.best_epoch = state.epoch;
                improved = true;
            }
        }
        state.rng_state = rng_state(rng);
        rec.seconds = std::chrono::duration<double>(Clock::now() - epoch_start).count();
        if (improved) {
            result.best = state;
            result.best->optimizer.reset();
        }
        result.log.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec, state, improved);
    }
    if (!options.validate || (!result.best && !options.resume)) {
        result.best = state;
        result.best->optimizer.reset();
    }
    result.seconds = std::chrono::duration<double>(Clock::now() - started).count();
    return result;
}

}  // namespace duallaat
