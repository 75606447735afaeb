#include "duallaat/checkpoint.hpp"
#include "duallaat/config.hpp"
#include "duallaat/data.hpp"
#include "duallaat/error.hpp"
#include "duallaat/evaluate.hpp"
#include "duallaat/experiment.hpp"
#include "duallaat/synthgen.hpp"
#include "duallaat/text.hpp"
#include "duallaat/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace duallaat;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

json read_json_file(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const auto tmp = fs::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << text;
    }
    fs::rename(tmp, path);
}

std::vector<std::string> split_list(const std::vector<std::string>& items)
{
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) out.push_back(part);
        }
    }
    return out;
}

// Layered configuration: preset defaults < config file < flags.
struct RunFlags {
    std::optional<std::string> preset;
    std::optional<std::string> encoder;
    std::optional<std::string> config_file;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<std::size_t> label_space_size;
    std::optional<std::size_t> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::size_t> min_count;

    void add_to(CLI::App* app, bool training_flags)
    {
        app->add_option("--preset", preset, "desk or paper (default desk)");
        app->add_option("--encoder", encoder, "cnn or rnn (default cnn)");
        app->add_option("--config", config_file, "JSON config file; flags override it");
        app->add_option("--seed", seed, "random seed");
        app->add_option("--min-count", min_count, "vocabulary frequency cutoff");
        if (training_flags) {
            app->add_option("--epochs", epochs, "training epochs");
            app->add_option("--label-space-size", label_space_size, "codes per training batch");
            app->add_option("--batch-size", batch_size, "notes per training batch");
            app->add_option("--lr", learning_rate, "peak learning rate");
        }
    }

    json file() const { return config_file ? read_json_file(*config_file) : json::object(); }

    RunConfig resolve() const
    {
        const json j = file();
        std::string name = "desk";
        std::string kind = "cnn";
        if (j.contains("preset")) name = j["preset"].get<std::string>();
        if (j.contains("model") && j["model"].contains("encoder")) kind = j["model"]["encoder"].get<std::string>();
        if (preset) name = *preset;
        if (encoder) kind = *encoder;
        json overlay = j;
        overlay.erase("preset");
        if (overlay.contains("model")) overlay["model"].erase("encoder");
        RunConfig c = merge_json(make_preset(name, parse_encoder_kind(kind)), overlay);
        if (seed) {
            c.train.seed = *seed;
            c.embeddings.seed = *seed;
        }
        if (epochs) c.train.epochs = *epochs;
        if (label_space_size) c.train.label_space_size = *label_space_size;
        if (batch_size) c.train.batch_size = *batch_size;
        if (learning_rate) c.train.learning_rate = *learning_rate;
        if (min_count) c.min_count = *min_count;
        c.validate();
        return c;
    }
};

struct DataFlags {
    std::vector<std::string> sources;
    std::string codes;

    void add_to(CLI::App* app, const char* sources_name = "--sources,--corpus")
    {
        app->add_option(sources_name, sources, "record files (comma-separated or repeated)")->required();
        app->add_option("--codes", codes, "code registry TSV")->required();
    }

    Corpus load() const
    {
        const auto names = split_list(sources);
        std::vector<fs::path> paths(names.begin(), names.end());
        return load_dataset(paths, codes);
    }
};

std::vector<TokenSeq> pretraining_sentences(const Corpus& corpus, const Vocabulary& vocab)
{
    std::vector<TokenSeq> s;
    for (const auto& d : corpus.documents) {
        if (d.split == Split::Train) s.push_back(vocab.encode_text(d.text));
    }
    for (const auto& e : corpus.registry.entries()) s.push_back(vocab.encode_text(e.description));
    return s;
}

// ---- generate ----

struct GenerateArgs {
    std::string out = "data";
    std::optional<std::string> config_file;
    std::optional<std::uint64_t> seed;
    std::optional<double> overlap;
    std::optional<double> zipf;
    std::optional<double> noise;
    std::optional<std::size_t> concepts;
    std::optional<std::size_t> docs_v1;
    std::optional<std::size_t> docs_v2;
    std::string preset = "desk";
    bool disjoint_vocab = false;
    bool no_reword = false;
};

SynthConfig resolve_synth(const GenerateArgs& a, SynthConfig c = {})
{
    if (a.preset != "desk" && a.preset != "paper") throw UsageError("unknown preset '" + a.preset + "'");
    if (a.config_file) {
        const auto j = read_json_file(*a.config_file);
        if (j.contains("synth")) c = synth_config_from_json(c, j["synth"]);
    }
    if (a.seed) c.seed = *a.seed;
    if (a.overlap) c.overlap_fraction = *a.overlap;
    if (a.zipf) c.zipf_s = *a.zipf;
    if (a.noise) c.noise_rate = *a.noise;
    if (a.concepts) c.n_concepts = *a.concepts;
    if (a.docs_v1) c.n_docs_v1 = *a.docs_v1;
    if (a.docs_v2) c.n_docs_v2 = *a.docs_v2;
    if (a.disjoint_vocab) c.disjoint_vocab = true;
    if (a.no_reword) c.reword = false;
    c.validate();
    return c;
}

void cmd_generate(const GenerateArgs& a)
{
    const auto config = resolve_synth(a);
    const auto synth = generate(config);
    const fs::path dir = a.out;
    fs::create_directories(dir);
    const auto& corpus = synth.corpus;
    save_corpus(corpus.documents, corpus.registry, dir / "corpus.jsonl");
    save_registry(corpus.registry, dir / "codes.tsv");
    std::vector<Document> v1, v2;
    for (const auto& d : corpus.documents) (d.version == Version::V9 ? v1 : v2).push_back(d);
    save_corpus(v1, corpus.registry, dir / "v1.jsonl");
    save_corpus(v2, corpus.registry, dir / "v2.jsonl");
    ordered_json meta;
    meta["synth"] = to_json(config);
    std::size_t shared = 0;
    for (const auto& c : synth.concepts) shared += c.v1_code && c.v2_code;
    meta["shared_concepts"] = shared;
    write_text(dir / "generate_config.json", meta.dump(2) + "\n");
    std::cout << "wrote " << corpus.documents.size() << " documents and " << corpus.registry.size()
              << " codes to " << dir.string() << "\n";
}

// ---- pretrain-embeddings ----

void cmd_pretrain(const RunFlags& flags, const DataFlags& data, const std::string& out)
{
    const auto config = flags.resolve();
    const auto corpus = data.load();
    const auto vocab = build_vocab(corpus.documents, corpus.registry, config.min_count);
    const auto result = pretrain_embeddings(pretraining_sentences(corpus, vocab), vocab, config.embeddings);
    save_embeddings(result.table, vocab, out);
    ordered_json meta;
    meta["config"] = to_json(config);
    meta["vocab_size"] = vocab.size();
    meta["vocab_hash"] = vocab.hash();
    meta["epoch_loss"] = result.epoch_loss;
    write_text(out + ".json", meta.dump(2) + "\n");
    std::cout << "vocabulary " << vocab.size() << " tokens, final loss "
              << (result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back()) << "\n";
}

// ---- train ----

struct TrainArgs {
    std::string out = "run";
    std::optional<std::string> embeddings;
    std::optional<std::string> resume;
    bool pretrain = false;
};

void cmd_train(const RunFlags& flags, const DataFlags& data, const TrainArgs& a)
{
    auto config = flags.resolve();
    const auto corpus = data.load();
    const auto vocab = build_vocab(corpus.documents, corpus.registry, config.min_count);

    TrainOptions opts;
    if (a.embeddings) {
        auto loaded = load_embeddings(*a.embeddings);
        if (loaded.vocab.hash() != vocab.hash()) {
            throw DataError("embedding vocabulary (hash " + std::to_string(loaded.vocab.hash()) +
                            ") conflicts with the corpus vocabulary (hash " + std::to_string(vocab.hash()) +
                            "); pretrain embeddings on the same sources and min_count");
        }
        if (loaded.table.cols() != config.model.embedding_dim) {
            throw DataError("embedding dimension " + std::to_string(loaded.table.cols()) +
                            " differs from the configured " + std::to_string(config.model.embedding_dim));
        }
        opts.embeddings = std::move(loaded.table);
    } else if (a.pretrain) {
        std::cerr << "pretraining embeddings\n";
        opts.embeddings = pretrain_embeddings(pretraining_sentences(corpus, vocab), vocab, config.embeddings).table;
    }
    std::optional<Checkpoint> resume;
    if (a.resume) {
        resume = load_checkpoint(*a.resume);
        opts.resume = &*resume;
    }

    const fs::path dir = a.out;
    fs::create_directories(dir);
    std::ofstream log(dir / "metrics.jsonl", a.resume ? std::ios::app : std::ios::trunc);
    opts.on_epoch = [&](const EpochRecord& rec, const Checkpoint& last, bool improved) {
        log << epoch_record_json(rec) << "\n" << std::flush;
        save_checkpoint(last, dir / "last.ckpt");
        if (improved) {
            Checkpoint best = last;
            best.optimizer.reset();
            save_checkpoint(best, dir / "best.ckpt");
        }
        std::cerr << "epoch " << rec.epoch << " loss " << rec.loss << " val micro F1 " << rec.val_micro_f1 << " ("
                  << rec.seconds << " s)\n";
    };

    config.model.vocab_size = static_cast<Index>(vocab.size());
    const auto result = train(corpus, vocab, config, opts);
    save_checkpoint(result.last, dir / "last.ckpt");
    if (result.best && !fs::exists(dir / "best.ckpt")) save_checkpoint(*result.best, dir / "best.ckpt");
    write_text(dir / "config.json", to_json(result.last.config).dump(2) + "\n");
    std::cout << "trained " << result.parameters.total() << " parameters for " << result.last.epoch
              << " epochs in " << result.seconds << " s; checkpoints in " << dir.string() << "\n";
}

// ---- evaluate ----

struct EvaluateArgs {
    std::string checkpoint;
    std::vector<std::string> strata{"frequent", "rare", "full"};
    std::string threshold = "0.5";
    std::optional<std::string> version;
    std::optional<std::string> out;
};

void cmd_evaluate(const DataFlags& data, const EvaluateArgs& a)
{
    const auto ckpt = load_checkpoint(a.checkpoint);
    const auto corpus = data.load();
    EvaluateOptions opts;
    opts.strata.clear();
    for (const auto& s : split_list(a.strata)) opts.strata.push_back(parse_stratum(s));
    opts.threshold = parse_threshold(a.threshold);
    if (a.version) opts.version = parse_version(*a.version);
    const auto report = evaluate(ckpt, corpus, opts);
    ordered_json config = to_json(ckpt.config);
    config["threshold"] = a.threshold;
    config["checkpoint"] = a.checkpoint;
    const auto text = report_json(report, config.dump());
    if (a.out) write_text(*a.out, text + "\n");
    std::cout << report_text(report);
}

// ---- predict ----

struct PredictArgs {
    std::string checkpoint;
    std::string notes;
    std::string codes;
    std::size_t top_k = 15;
    std::optional<std::string> out;
};

void cmd_predict(const PredictArgs& a)
{
    const auto ckpt = load_checkpoint(a.checkpoint);
    const auto registry = load_registry(a.codes);
    if (registry.empty()) throw DataError("registry " + a.codes + " has no codes");
    const auto& cfg = ckpt.config.model;

    std::ifstream in(a.notes);
    if (!in) throw DataError("cannot open notes file " + a.notes);
    const bool jsonl = fs::path(a.notes).extension() == ".jsonl";
    std::vector<std::string> ids;
    std::vector<TokenSeq> notes;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.empty()) continue;
        std::string id = std::to_string(n);
        std::string text = line;
        if (jsonl) {
            try {
                const auto j = json::parse(line);
                text = j.at("text").get<std::string>();
                if (j.contains("doc_id")) id = j["doc_id"].get<std::string>();
            } catch (const json::exception& e) {
                throw DataError("notes line " + std::to_string(n) + ": " + e.what());
            }
        }
        auto tokens = ckpt.vocab.encode_text(text, static_cast<std::size_t>(cfg.max_note_tokens));
        if (tokens.empty()) throw DataError("note " + id + " has no tokens");
        ids.push_back(id);
        notes.push_back(std::move(tokens));
    }
    const auto codes = encode_descriptions(registry, ckpt.vocab, cfg);
    const auto chunk = ckpt.config.train.label_space_size;
    const auto scores = score_documents(cfg, ckpt.params, notes, codes, chunk);

    std::ostringstream out;
    const auto k = std::min(a.top_k, registry.size());
    for (std::size_t i = 0; i < notes.size(); ++i) {
        std::vector<std::size_t> order(registry.size());
        for (std::size_t j = 0; j < order.size(); ++j) order[j] = j;
        // Registry order is (version, code_id), so ties resolve independently of input order.
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            return scores(static_cast<Index>(i), static_cast<Index>(x)) > scores(static_cast<Index>(i), static_cast<Index>(y));
        });
        ordered_json j;
        j["doc_id"] = ids[i];
        j["predictions"] = ordered_json::array();
        for (std::size_t r = 0; r < k; ++r) {
            const auto& e = registry[static_cast<CodeIndex>(order[r])];
            j["predictions"].push_back({{"code_id", e.code_id},
                                        {"version", std::string(to_string(e.version))},
                                        {"probability", scores(static_cast<Index>(i), static_cast<Index>(order[r]))}});
        }
        out << j.dump() << "\n";
    }
    if (a.out) {
        write_text(*a.out, out.str());
    } else {
        std::cout << out.str();
    }
}

// ---- mixing-experiment ----

struct MixingArgs {
    std::vector<std::uint64_t> seeds{1, 2, 3};
    bool control = false;
    std::optional<std::string> out;
};

void cmd_mixing(const RunFlags& flags, const GenerateArgs& gen, const MixingArgs& a)
{
    MixingConfig mc = desk_mixing_config();
    mc.run = flags.resolve();
    mc.synth = resolve_synth(gen, mc.synth);
    mc.seeds = a.seeds;
    if (a.control) mc = control_config(mc);
    const auto report = mixing_experiment(mc, [](const std::string& m) { std::cerr << m << "\n"; });
    ordered_json j;
    j["config"] = to_json(mc.run);
    j["synth"] = to_json(mc.synth);
    j["control"] = a.control;
    j["report"] = to_json(report);
    if (a.out) write_text(*a.out, j.dump(2) + "\n");
    for (const auto& [stratum, metrics] : report.deltas) {
        for (const auto& [metric, d] : metrics) {
            std::cout << stratum << " " << metric << " delta mean " << d.mean << " se " << d.standard_error << "\n";
        }
    }
}

// ---- params ----

void cmd_params(const RunFlags& flags, const std::vector<std::size_t>& vocab_sizes)
{
    auto config = flags.resolve();
    std::cout << "encoder " << to_string(config.model.encoder.kind) << ", heads " << config.model.heads << "\n";
    std::cout << "vocab_size  embedding  encoders  attention  classifier  total\n";
    for (auto v : vocab_sizes) {
        config.model.vocab_size = static_cast<Index>(v);
        const auto p = count_parameters(config.model);
        std::cout << v << "  " << p.embedding << "  " << p.note_encoder + p.code_encoder << "  " << p.attention
                  << "  " << p.classifier << "  " << p.total() << "\n";
    }
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"DualLAAT: dual-encoder label-wise attention for clinical code assignment"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate_cmd = app.add_subcommand("generate", "write a synthetic two-version corpus");
    auto add_synth_flags = [&](CLI::App* c, bool with_common) {
        if (with_common) {
            c->add_option("--preset", gen.preset, "desk or paper");
            c->add_option("--seed", gen.seed, "generator seed");
            c->add_option("--config", gen.config_file, "JSON config file with a \"synth\" section");
        }
        c->add_option("--overlap", gen.overlap, "fraction of concepts coded in both versions");
        c->add_option("--zipf", gen.zipf, "Zipf exponent of concept prevalence");
        c->add_option("--noise", gen.noise, "fraction of filler tokens");
        c->add_option("--concepts", gen.concepts, "number of latent concepts");
        c->add_option("--docs-v1", gen.docs_v1, "V1 (V9-tagged) documents");
        c->add_option("--docs-v2", gen.docs_v2, "V2 (V10-tagged) documents");
        c->add_flag("--disjoint-vocab", gen.disjoint_vocab, "separate lexicons per version");
        c->add_flag("--no-reword", gen.no_reword, "keep shared descriptions identical across versions");
    };
    add_synth_flags(generate_cmd, true);
    generate_cmd->add_option("--out", gen.out, "output directory");

    RunFlags pre_flags;
    DataFlags pre_data;
    std::string emb_out = "embeddings.txt";
    auto* pretrain_cmd = app.add_subcommand("pretrain-embeddings", "skip-gram embeddings over training notes");
    pre_flags.add_to(pretrain_cmd, false);
    pre_data.add_to(pretrain_cmd);
    pretrain_cmd->add_option("--out", emb_out, "embedding text file");

    RunFlags train_flags;
    DataFlags train_data;
    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_flags.add_to(train_cmd, true);
    train_data.add_to(train_cmd);
    train_cmd->add_option("--embeddings", train_args.embeddings, "pretrained embedding file");
    train_cmd->add_flag("--pretrain-embeddings", train_args.pretrain, "pretrain embeddings before training");
    train_cmd->add_option("--resume", train_args.resume, "continue from a checkpoint");
    train_cmd->add_option("--out", train_args.out, "output directory");

    DataFlags eval_data;
    EvaluateArgs eval_args;
    auto* eval_cmd = app.add_subcommand("evaluate", "stratified evaluation on the test split");
    eval_data.add_to(eval_cmd);
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--strata", eval_args.strata, "frequent,rare,full");
    eval_cmd->add_option("--threshold", eval_args.threshold, "tuned or a number");
    eval_cmd->add_option("--version", eval_args.version, "V9 or V10 (default: every version with test notes)");
    eval_cmd->add_option("--out", eval_args.out, "JSON report file");
    std::optional<std::uint64_t> eval_seed;
    eval_cmd->add_option("--seed", eval_seed, "accepted for uniformity; evaluation draws no randomness");

    PredictArgs predict_args;
    auto* predict_cmd = app.add_subcommand("predict", "rank any registry's codes for each note");
    predict_cmd->add_option("--checkpoint", predict_args.checkpoint, "checkpoint file")->required();
    predict_cmd->add_option("--notes", predict_args.notes, "plain text (one note per line) or .jsonl")->required();
    predict_cmd->add_option("--codes", predict_args.codes, "code registry TSV")->required();
    predict_cmd->add_option("--top-k", predict_args.top_k, "codes listed per note");
    predict_cmd->add_option("--out", predict_args.out, "JSONL output file");
    std::optional<std::uint64_t> predict_seed;
    predict_cmd->add_option("--seed", predict_seed, "accepted for uniformity; prediction draws no randomness");

    RunFlags mix_flags;
    MixingArgs mix_args;
    auto* mix_cmd = app.add_subcommand("mixing-experiment", "V2-only versus V1+V2 training on synthetic data");
    mix_flags.add_to(mix_cmd, true);
    add_synth_flags(mix_cmd, false);
    mix_cmd->add_option("--seeds", mix_args.seeds, "seeds, one run pair each")->delimiter(',');
    mix_cmd->add_flag("--control", mix_args.control, "no shared concepts and disjoint lexicons");
    mix_cmd->add_option("--out", mix_args.out, "JSON report file");

    RunFlags param_flags;
    std::vector<std::size_t> vocab_sizes{50000, 100000, 140000, 200000};
    auto* params_cmd = app.add_subcommand("params", "trainable parameter counts by vocabulary size");
    param_flags.add_to(params_cmd, false);
    params_cmd->add_option("--vocab-size", vocab_sizes, "vocabulary sizes")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*generate_cmd) cmd_generate(gen);
        if (*pretrain_cmd) cmd_pretrain(pre_flags, pre_data, emb_out);
        if (*train_cmd) cmd_train(train_flags, train_data, train_args);
        if (*eval_cmd) cmd_evaluate(eval_data, eval_args);
        if (*predict_cmd) cmd_predict(predict_args);
        if (*mix_cmd) {
            if (mix_flags.seed) throw UsageError("mixing-experiment takes --seeds");
            cmd_mixing(mix_flags, gen, mix_args);
        }
        if (*params_cmd) {
            if (param_flags.preset == std::nullopt) param_flags.preset = "paper";
            cmd_params(param_flags, vocab_sizes);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
