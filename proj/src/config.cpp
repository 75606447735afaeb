#include "duallaat/config.hpp"

#include "duallaat/error.hpp"

namespace duallaat {

using nlohmann::json;
using nlohmann::ordered_json;

void TrainConfig::validate() const
{
    if (!(learning_rate > 0)) throw UsageError("learning rate must be positive");
    if (warmup_steps < 0) throw UsageError("warmup steps must be non-negative");
    if (weight_decay < 0) throw UsageError("weight decay must be non-negative");
    if (epochs < 0) throw UsageError("epochs must be non-negative");
    if (batch_size == 0 || label_space_size == 0) throw UsageError("batch and label space sizes must be positive");
    if (!(clip_norm > 0)) throw UsageError("clip norm must be positive");
}

void RunConfig::validate() const
{
    train.validate();
    model.encoder.validate();
    if (model.embedding_dim <= 0 || model.heads <= 0) throw UsageError("model dimensions must be positive");
    if (model.embedding_dim != embeddings.dim) {
        throw UsageError("embedding pretraining dimension must equal the model embedding dimension");
    }
    if (min_count == 0) throw UsageError("min_count must be at least 1");
    if (rare_threshold <= 0) throw UsageError("rare threshold must be positive");
}

EncoderKind parse_encoder_kind(const std::string& s)
{
    if (s == "cnn") return EncoderKind::Cnn;
    if (s == "rnn") return EncoderKind::Rnn;
    throw UsageError("unknown encoder '" + s + "' (expected cnn or rnn)");
}

std::string to_string(EncoderKind k)
{
    return k == EncoderKind::Cnn ? "cnn" : "rnn";
}

RunConfig make_preset(const std::string& name, EncoderKind kind)
{
    RunConfig c;
    c.preset = name;
    c.model.encoder.kind = kind;
    if (name == "paper") {
        c.model.embedding_dim = 100;
        c.model.encoder.cnn_filters = 256;
        c.model.encoder.cnn_width = 10;
        c.model.encoder.rnn_hidden = 512;
        c.model.encoder.rnn_layers = 1;
        c.model.encoder.bidirectional = true;
        c.model.encoder.dropout = kind == EncoderKind::Cnn ? 0.2 : 0.3;
        c.model.heads = 8;
        c.model.max_note_tokens = 4000;
        c.model.max_code_tokens = 48;
        c.train.learning_rate = 0.001;
        c.train.warmup_steps = 2000;
        c.train.weight_decay = kind == EncoderKind::Cnn ? 0.0 : 0.001;
        c.train.epochs = 20;
        c.train.batch_size = 32;
        c.train.label_space_size = 8192;
        c.embeddings.dim = 100;
        c.embeddings.epochs = 1;
    } else if (name == "desk") {
        c.model.embedding_dim = 32;
        c.model.encoder.cnn_filters = 64;
        c.model.encoder.cnn_width = 5;
        c.model.encoder.rnn_hidden = 32;
        c.model.encoder.rnn_layers = 1;
        c.model.encoder.bidirectional = true;
        c.model.encoder.dropout = 0.1;
        c.model.heads = 4;
        c.model.max_note_tokens = 4000;
        c.model.max_code_tokens = 48;
        c.train.learning_rate = 0.01;
        c.train.warmup_steps = 50;
        c.train.weight_decay = kind == EncoderKind::Cnn ? 0.0 : 0.001;
        c.train.epochs = 20;
        c.train.batch_size = 16;
        c.train.label_space_size = 256;
        c.embeddings.dim = 32;
        c.embeddings.epochs = 5;
        c.min_count = 1;
    } else {
        throw UsageError("unknown preset '" + name + "' (expected paper or desk)");
    }
    return c;
}

ordered_json to_json(const RunConfig& c)
{
    ordered_json j;
    j["preset"] = c.preset;
    const auto& e = c.model.encoder;
    j["model"] = {
        {"vocab_size", c.model.vocab_size},
        {"embedding_dim", c.model.embedding_dim},
        {"encoder", to_string(e.kind)},
        {"cnn_filters", e.cnn_filters},
        {"cnn_width", e.cnn_width},
        {"rnn_hidden", e.rnn_hidden},
        {"rnn_layers", e.rnn_layers},
        {"bidirectional", e.bidirectional},
        {"rnn_hidden_is_total", e.rnn_hidden_is_total},
        {"dropout", e.dropout},
        {"shared_dim", c.model.shared_dim},
        {"heads", c.model.heads},
        {"max_note_tokens", c.model.max_note_tokens},
        {"max_code_tokens", c.model.max_code_tokens},
    };
    const auto& t = c.train;
    j["train"] = {
        {"learning_rate", t.learning_rate},
        {"warmup_steps", t.warmup_steps},
        {"weight_decay", t.weight_decay},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"label_space_size", t.label_space_size},
        {"seed", t.seed},
        {"clip_norm", t.clip_norm},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon},
    };
    const auto& s = c.embeddings;
    j["embeddings"] = {
        {"dim", s.dim},
        {"window", s.window},
        {"negatives", s.negatives},
        {"epochs", s.epochs},
        {"learning_rate", s.learning_rate},
        {"seed", s.seed},
    };
    j["min_count"] = c.min_count;
    j["rare_threshold"] = c.rare_threshold;
    return j;
}

namespace {

template <typename T>
void take(const json& j, const char* key, T& out)
{
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig merge_json(RunConfig c, const json& j)
{
    try {
        if (j.contains("preset")) {
            const auto kind = j.contains("model") && j["model"].contains("encoder")
                                  ? parse_encoder_kind(j["model"]["encoder"].get<std::string>())
                                  : c.model.encoder.kind;
            const auto name = j["preset"].get<std::string>();
            if (name != c.preset || kind != c.model.encoder.kind) c = make_preset(name, kind);
        }
        if (j.contains("model")) {
            const auto& m = j["model"];
            auto& e = c.model.encoder;
            if (m.contains("encoder")) e.kind = parse_encoder_kind(m["encoder"].get<std::string>());
            take(m, "vocab_size", c.model.vocab_size);
            if (m.contains("embedding_dim")) {
                // Pretrained vectors must fit the table; an explicit embeddings.dim below still wins.
                take(m, "embedding_dim", c.model.embedding_dim);
                c.embeddings.dim = c.model.embedding_dim;
            }
            take(m, "cnn_filters", e.cnn_filters);
            take(m, "cnn_width", e.cnn_width);
            take(m, "rnn_hidden", e.rnn_hidden);
            take(m, "rnn_layers", e.rnn_layers);
            take(m, "bidirectional", e.bidirectional);
            take(m, "rnn_hidden_is_total", e.rnn_hidden_is_total);
            take(m, "dropout", e.dropout);
            take(m, "shared_dim", c.model.shared_dim);
            take(m, "heads", c.model.heads);
            take(m, "max_note_tokens", c.model.max_note_tokens);
            take(m, "max_code_tokens", c.model.max_code_tokens);
        }
        if (j.contains("train")) {
            const auto& t = j["train"];
            take(t, "learning_rate", c.train.learning_rate);
            take(t, "warmup_steps", c.train.warmup_steps);
            take(t, "weight_decay", c.train.weight_decay);
            take(t, "epochs", c.train.epochs);
            take(t, "batch_size", c.train.batch_size);
            take(t, "label_space_size", c.train.label_space_size);
            take(t, "seed", c.train.seed);
            take(t, "clip_norm", c.train.clip_norm);
            take(t, "beta1", c.train.beta1);
            take(t, "beta2", c.train.beta2);
            take(t, "epsilon", c.train.epsilon);
        }
        if (j.contains("embeddings")) {
            const auto& s = j["embeddings"];
            take(s, "dim", c.embeddings.dim);
            take(s, "window", c.embeddings.window);
            take(s, "negatives", c.embeddings.negatives);
            take(s, "epochs", c.embeddings.epochs);
            take(s, "learning_rate", c.embeddings.learning_rate);
            take(s, "seed", c.embeddings.seed);
        }
        take(j, "min_count", c.min_count);
        take(j, "rare_threshold", c.rare_threshold);
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad configuration value: ") + e.what());
    }
    return c;
}

}  // namespace duallaat
