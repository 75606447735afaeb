#include "duallaat/error.hpp"
#include "duallaat/trainer.hpp"
#include "helpers.hpp"
#include "small_run.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace duallaat;

namespace {

bool same_params(const ModelParams<double>& a, const ModelParams<double>& b, const ModelConfig& cfg)
{
    std::vector<const Matrix<double>*> left;
    visit_params(a, cfg, [&](const std::string&, const Matrix<double>& m) { left.push_back(&m); });
    std::size_t i = 0;
    bool same = true;
    visit_params(b, cfg, [&](const std::string&, const Matrix<double>& m) {
        const auto& l = *left[i++];
        same = same && l.rows() == m.rows() && l.cols() == m.cols() && l == m;
    });
    return same;
}

ModelConfig scalar_config()
{
    ModelConfig c;
    c.vocab_size = 3;
    c.embedding_dim = 2;
    c.encoder.kind = EncoderKind::Cnn;
    c.encoder.cnn_filters = 2;
    c.encoder.cnn_width = 1;
    c.heads = 1;
    return c;
}

}  // namespace

TEST_CASE("learning-rate schedule: linear warmup, peak, linear decay to zero")
{
    CHECK(scheduled_lr(1e-3, 0, 2000, 10000) == 0.0);
    CHECK(scheduled_lr(1e-3, 1000, 2000, 10000) == doctest::Approx(5e-4));
    CHECK(scheduled_lr(1e-3, 2000, 2000, 10000) == doctest::Approx(1e-3));
    CHECK(scheduled_lr(1e-3, 6000, 2000, 10000) == doctest::Approx(5e-4));
    CHECK(scheduled_lr(1e-3, 10000, 2000, 10000) == 0.0);
    CHECK(scheduled_lr(1e-3, 12000, 2000, 10000) == 0.0);
    double prev = 0;
    for (std::int64_t s = 0; s <= 2000; s += 100) {
        CHECK(scheduled_lr(1e-3, s, 2000, 10000) >= prev);
        prev = scheduled_lr(1e-3, s, 2000, 10000);
    }
    // Runs shorter than the warmup never leave it.
    CHECK(scheduled_lr(1e-3, 50, 2000, 100) == doctest::Approx(2.5e-5));
}

TEST_CASE("binary cross-entropy: reference values, clamping, and NaN")
{
    Matrix<double> p(1, 2), y(1, 2);
    p << 0.8, 0.3;
    y << 1, 0;
    CHECK(bce_loss(p, y) == doctest::Approx(-(std::log(0.8) + std::log(0.7)) / 2).epsilon(1e-12));
    p << 1.0, 0.0;
    CHECK(bce_loss(p, y) < 1e-10);
    y << 0, 1;
    const double clamped = bce_loss(p, y);
    CHECK(std::isfinite(clamped));
    CHECK(clamped == doctest::Approx(-std::log(1e-12)).epsilon(1e-6));
    p(0, 0) = std::nan("");
    CHECK_THROWS_AS(bce_loss(p, y), NumericalError);
}

TEST_CASE("one optimizer step matches the closed form")
{
    const auto cfg = scalar_config();
    auto params = zero_params<double>(cfg);
    visit_params(params, cfg, [](const std::string&, Matrix<double>& m) { m.setConstant(2.0); });
    auto grad = zero_params<double>(cfg);
    visit_params(grad, cfg, [](const std::string&, Matrix<double>& m) { m.setConstant(0.5); });
    OptimizerState state{zero_params<double>(cfg), zero_params<double>(cfg)};
    TrainConfig t;
    t.weight_decay = 0.1;
    const double lr = 0.01;
    adam_step(params, grad, state, cfg, t, lr, 0);
    // Bias-corrected moments equal g and g^2 on the first step.
    const double expected = 2.0 * (1 - lr * 0.1) - lr * 0.5 / (0.5 + t.epsilon);
    CHECK(params.classifier.bias(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(params.heads[0].w_note(1, 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(params.embedding.row(0).isZero(0));
    CHECK(state.first_moment.classifier.bias(0, 0) == doctest::Approx(0.05));
    CHECK(state.second_moment.classifier.bias(0, 0) == doctest::Approx(0.001 * 0.25));
}

TEST_CASE("gradient clipping rescales to the global norm only when above it")
{
    const auto cfg = scalar_config();
    auto grad = zero_params<double>(cfg);
    grad.classifier.bias(0, 0) = 3;
    grad.classifier.weight(0, 0) = 4;
    CHECK(clip_gradient(grad, cfg, 10) == doctest::Approx(5));
    CHECK(grad.classifier.bias(0, 0) == 3);
    CHECK(clip_gradient(grad, cfg, 1) == doctest::Approx(5));
    CHECK(grad.classifier.bias(0, 0) == doctest::Approx(0.6));
    CHECK(grad.classifier.weight(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("rng state survives a text round trip")
{
    Rng a(123);
    a.discard(17);
    Rng b = rng_from_state(rng_state(a));
    CHECK(a() == b());
    CHECK_THROWS(rng_from_state("not a state"));
}

TEST_CASE("training is deterministic, logs each epoch, and reduces the loss")
{
    const auto data = generate(testing::tiny_synth());
    const auto cfg = testing::tiny_run();
    const auto vocab = build_vocab(data.corpus.documents, data.corpus.registry, cfg.min_count);
    int calls = 0;
    TrainOptions opts;
    opts.on_epoch = [&](const EpochRecord& r, const Checkpoint& last, bool) {
        ++calls;
        CHECK(last.epoch == r.epoch);
    };
    const auto a = train(data.corpus, vocab, cfg, opts);
    const auto b = train(data.corpus, vocab, cfg);
    CHECK(calls == cfg.train.epochs);
    REQUIRE(a.log.size() == 4);
    CHECK(a.log.back().loss < a.log.front().loss);
    CHECK(a.last.epoch == 4);
    CHECK(a.best.has_value());
    CHECK(same_params(a.last.params, b.last.params, a.last.config.model));
    for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.parameters.total() == parameter_count(a.last.params, a.last.config.model));
    CHECK_FALSE(a.best->optimizer.has_value());

    const auto j = nlohmann::json::parse(epoch_record_json(a.log[0]));
    for (const char* k : {"epoch", "step", "loss", "lr", "clipped_steps"}) CHECK(j.contains(k));
    CHECK(j["val"].contains("micro_f1"));

    auto other = cfg;
    other.train.seed = 99;
    const auto c = train(data.corpus, vocab, other);
    CHECK_FALSE(same_params(a.last.params, c.last.params, a.last.config.model));
}

TEST_CASE("stopping and resuming reproduces an uninterrupted run bit for bit")
{
    for (auto kind : {EncoderKind::Cnn, EncoderKind::Rnn}) {
        CAPTURE(to_string(kind));
        const auto data = generate(testing::tiny_synth(8));
        const auto cfg = testing::tiny_run(kind);
        const auto vocab = build_vocab(data.corpus.documents, data.corpus.registry, cfg.min_count);
        const auto full = train(data.corpus, vocab, cfg);

        testing::TempDir dir;
        TrainOptions first;
        first.stop_after_epoch = 2;
        const auto half = train(data.corpus, vocab, cfg, first);
        CHECK(half.last.epoch == 2);
        save_checkpoint(half.last, dir / "half.ckpt");
        const auto loaded = load_checkpoint(dir / "half.ckpt");
        TrainOptions second;
        second.resume = &loaded;
        const auto resumed = train(data.corpus, vocab, cfg, second);
        CHECK(resumed.last.epoch == 4);
        CHECK(resumed.last.step == full.last.step);
        CHECK(same_params(resumed.last.params, full.last.params, full.last.config.model));
        CHECK(resumed.log.back().loss == full.log.back().loss);
    }
}

TEST_CASE("resume refuses a checkpoint built over a different vocabulary")
{
    const auto data = generate(testing::tiny_synth());
    const auto cfg = testing::tiny_run();
    const auto vocab = build_vocab(data.corpus.documents, data.corpus.registry, cfg.min_count);
    TrainOptions first;
    first.stop_after_epoch = 1;
    const auto half = train(data.corpus, vocab, cfg, first);
    const auto other_vocab = build_vocab(data.corpus.documents, data.corpus.registry, 3);
    TrainOptions second;
    second.resume = &half.last;
    CHECK_THROWS_AS(train(data.corpus, other_vocab, cfg, second), DataError);
}

TEST_CASE("checkpoints round trip exactly and reject damage")
{
    const auto data = generate(testing::tiny_synth());
    auto cfg = testing::tiny_run(EncoderKind::Rnn);
    cfg.train.epochs = 1;
    const auto vocab = build_vocab(data.corpus.documents, data.corpus.registry, cfg.min_count);
    const auto r = train(data.corpus, vocab, cfg);
    testing::TempDir dir;
    save_checkpoint(r.last, dir / "a.ckpt");
    const auto back = load_checkpoint(dir / "a.ckpt");
    CHECK(same_params(back.params, r.last.params, r.last.config.model));
    REQUIRE(back.optimizer.has_value());
    CHECK(same_params(back.optimizer->second_moment, r.last.optimizer->second_moment, r.last.config.model));
    CHECK(back.vocab.hash() == vocab.hash());
    CHECK(back.rng_state == r.last.rng_state);
    CHECK(back.step == r.last.step);
    CHECK(to_json(back.config).dump() == to_json(r.last.config).dump());

    const auto bytes = testing::read_file(dir / "a.ckpt");
    testing::write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), DataError);
    auto bad = bytes;
    bad[0] = 'X';
    testing::write_file(dir / "magic.ckpt", bad);
    CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
}

TEST_CASE("presets and JSON overlays")
{
    const auto paper = make_preset("paper", EncoderKind::Cnn);
    CHECK(paper.model.encoder.cnn_filters == 256);
    CHECK(paper.model.encoder.cnn_width == 10);
    CHECK(paper.train.learning_rate == 1e-3);
    CHECK(paper.train.label_space_size == 8192);
    const auto rnn = make_preset("paper", EncoderKind::Rnn);
    CHECK(rnn.model.encoder.output_dim() == 1024);
    CHECK_THROWS_AS(make_preset("huge", EncoderKind::Cnn), UsageError);
    CHECK_THROWS_AS(parse_encoder_kind("lstm"), UsageError);

    auto merged = merge_json(paper, nlohmann::json::parse(R"({"train": {"epochs": 3}, "model": {"heads": 2}})"));
    CHECK(merged.train.epochs == 3);
    CHECK(merged.model.heads == 2);
    CHECK(merged.train.learning_rate == paper.train.learning_rate);
    const auto again = merge_json(make_preset("desk", EncoderKind::Rnn), to_json(merged));
    CHECK(to_json(again).dump() == to_json(merged).dump());
    auto broken = paper;
    broken.train.learning_rate = -1;
    CHECK_THROWS_AS(broken.validate(), UsageError);
}
