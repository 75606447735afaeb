#include "duallaat/evaluate.hpp"

#include "duallaat/batcher.hpp"
#include "duallaat/error.hpp"

#include <algorithm>
#include <iostream>
#include <set>

namespace duallaat {

std::vector<TokenSeq> encode_descriptions(const CodeRegistry& registry, const Vocabulary& vocab,
                                          const ModelConfig& model)
{
    std::vector<TokenSeq> codes;
    codes.reserve(registry.size());
    for (const auto& e : registry.entries()) {
        auto ids = vocab.encode_text(e.description, static_cast<std::size_t>(model.max_code_tokens));
        if (ids.empty()) throw DataError("code " + e.code_id + " has a description without tokens");
        codes.push_back(std::move(ids));
    }
    return codes;
}

EncodedCorpus encode_corpus(const Corpus& corpus, const Vocabulary& vocab, const ModelConfig& model)
{
    EncodedCorpus enc;
    enc.notes.reserve(corpus.documents.size());
    for (const auto& d : corpus.documents) {
        enc.notes.push_back(vocab.encode_text(d.text, static_cast<std::size_t>(model.max_note_tokens)));
    }
    enc.codes = encode_descriptions(corpus.registry, vocab, model);
    return enc;
}

ScoreMatrix score_documents(const ModelConfig& cfg, const ModelParams<double>& params,
                            const std::vector<TokenSeq>& notes, const std::vector<TokenSeq>& codes,
                            std::size_t chunk_size)
{
    const auto n_notes = static_cast<Index>(notes.size());
    const auto n_codes = static_cast<Index>(codes.size());
    ScoreMatrix out(n_notes, n_codes);
    if (n_notes == 0 || n_codes == 0) return out;
    if (chunk_size == 0) chunk_size = codes.size();

    std::vector<CodeQueries<double>> chunks;
    std::vector<Index> starts;
    for (std::size_t s = 0; s < codes.size(); s += chunk_size) {
        const auto e = std::min(codes.size(), s + chunk_size);
        std::vector<TokenSeq> slice(codes.begin() + static_cast<std::ptrdiff_t>(s),
                                    codes.begin() + static_cast<std::ptrdiff_t>(e));
        auto side = encode_side(cfg, params.embedding, params.code_encoder, slice, cfg.max_code_tokens, Mode::Eval,
                                nullptr, false);
        chunks.push_back(code_queries(params, side.hidden));
        starts.push_back(static_cast<Index>(s));
    }

    constexpr std::size_t kNoteBatch = 64;
    for (std::size_t s = 0; s < notes.size(); s += kNoteBatch) {
        const auto e = std::min(notes.size(), s + kNoteBatch);
        std::vector<TokenSeq> slice(notes.begin() + static_cast<std::ptrdiff_t>(s),
                                    notes.begin() + static_cast<std::ptrdiff_t>(e));
        auto side = encode_side(cfg, params.embedding, params.note_encoder, slice, cfg.max_note_tokens, Mode::Eval,
                                nullptr, false);
        for (Index i = 0; i < side.hidden.count(); ++i) {
            const auto row = static_cast<Index>(s) + i;
            for (std::size_t c = 0; c < chunks.size(); ++c) {
                const auto logits = score_note(params, side.hidden.sequence(i), chunks[c]);
                out.row(row).segment(starts[c], logits.size()) = sigmoid(logits.array()).matrix().transpose();
            }
        }
    }
    return out;
}

ThresholdSpec parse_threshold(const std::string& s)
{
    if (s == "tuned") return {true, 0.5};
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return {false, v};
    } catch (const std::exception&) {
        throw UsageError("threshold must be 'tuned' or a number, got '" + s + "'");
    }
}

EvalReport evaluate(const Checkpoint& ckpt, const Corpus& corpus, const EvaluateOptions& options)
{
    const auto& cfg = ckpt.config.model;
    const auto chunk = options.chunk_size ? options.chunk_size : ckpt.config.train.label_space_size;

    std::set<Version> versions;
    if (options.version) {
        versions.insert(*options.version);
    } else {
        for (const auto& d : corpus.documents) {
            if (d.split == Split::Test) versions.insert(d.version);
        }
    }

    EvalReport report;
    for (const auto v : versions) {
        std::vector<Document> database;
        for (const auto& d : corpus.documents) {
            if (d.version == v) database.push_back(d);
        }
        if (database.empty()) throw DataError("no documents of version " + std::string(to_string(v)));
        const auto strata = compute_strata(database, ckpt.config.rare_threshold);
        const std::vector<CodeIndex> full(strata.full.begin(), strata.full.end());

        auto encode_split = [&](Split split) {
            std::vector<const Document*> docs;
            std::vector<TokenSeq> notes;
            for (const auto& d : database) {
                if (d.split != split) continue;
                docs.push_back(&d);
                notes.push_back(ckpt.vocab.encode_text(d.text, static_cast<std::size_t>(cfg.max_note_tokens)));
            }
            return std::make_pair(docs, notes);
        };
        const auto [test_docs, test_notes] = encode_split(Split::Test);
        if (test_docs.empty()) throw DataError("no test notes of version " + std::string(to_string(v)));

        std::vector<TokenSeq> descriptions;
        for (auto c : full) {
            auto ids = ckpt.vocab.encode_text(corpus.registry[c].description, static_cast<std::size_t>(cfg.max_code_tokens));
            if (ids.empty()) throw DataError("code " + corpus.registry[c].code_id + " has a description without tokens");
            descriptions.push_back(std::move(ids));
        }
        const ScoreMatrix test_scores = score_documents(cfg, ckpt.params, test_notes, descriptions, chunk);

        std::vector<const Document*> val_docs;
        ScoreMatrix val_scores;
        if (options.threshold.tuned) {
            auto [docs, notes] = encode_split(Split::Val);
            val_docs = std::move(docs);
            val_scores = score_documents(cfg, ckpt.params, notes, descriptions, chunk);
        }

        for (const auto kind : options.strata) {
            const auto& codes = stratum_codes(strata, kind);
            const std::string name = std::string(to_string(v)) + "/" + std::string(to_string(kind));
            if (codes.empty()) {
                std::cerr << "warning: stratum " << name << " has no codes; section omitted\n";
                continue;
            }
            std::vector<Index> cols;
            std::vector<CodeIndex> col_codes;
            std::vector<std::string> tie_keys;
            for (std::size_t j = 0; j < full.size(); ++j) {
                if (codes.count(full[j])) {
                    cols.push_back(static_cast<Index>(j));
                    col_codes.push_back(full[j]);
                    tie_keys.push_back(corpus.registry[full[j]].code_id);
                }
            }
            auto select_rows = [&](const std::vector<const Document*>& docs) {
                std::vector<Index> rows;
                for (std::size_t i = 0; i < docs.size(); ++i) {
                    const bool any = std::any_of(docs[i]->gold.begin(), docs[i]->gold.end(),
                                                 [&](CodeIndex c) { return codes.count(c) > 0; });
                    if (kind != StratumKind::Rare || any) rows.push_back(static_cast<Index>(i));
                }
                return rows;
            };
            auto subset = [](const std::vector<const Document*>& docs, const std::vector<Index>& rows) {
                std::vector<const Document*> out;
                for (auto r : rows) out.push_back(docs[static_cast<std::size_t>(r)]);
                return out;
            };

            const auto rows = select_rows(test_docs);
            if (rows.empty()) {
                std::cerr << "warning: stratum " << name << " has no test notes; section omitted\n";
                continue;
            }
            const ScoreMatrix scores = test_scores(rows, cols);
            const TargetMatrix targets = batch_targets(subset(test_docs, rows), col_codes);

            double threshold = options.threshold.value;
            if (options.threshold.tuned) {
                const auto vrows = select_rows(val_docs);
                if (vrows.empty()) {
                    std::cerr << "warning: no validation notes for " << name << "; using threshold 0.5\n";
                    threshold = 0.5;
                } else {
                    const ScoreMatrix vs = val_scores(vrows, cols);
                    threshold = tune_threshold(vs, batch_targets(subset(val_docs, vrows), col_codes));
                }
            }
            report.strata.push_back(score_stratum(name, scores, targets, threshold, tie_keys));
        }
    }
    return report;
}

}  // namespace duallaat
