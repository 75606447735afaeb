#pragma once

#include "duallaat/attention.hpp"
#include "duallaat/encoders.hpp"
#include "duallaat/error.hpp"
#include "duallaat/tensor.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace duallaat {

struct ModelConfig {
    Index vocab_size = 0;
    Index embedding_dim = 100;
    EncoderConfig encoder;  // same family for notes and codes, separate weights
    Index shared_dim = 0;   // 0: same as the encoder output dimension
    Index heads = 1;
    Index max_note_tokens = 4000;
    Index max_code_tokens = 48;

    Index note_dim() const { return encoder.output_dim(); }
    Index code_dim() const { return encoder.output_dim(); }
    Index shared() const { return shared_dim > 0 ? shared_dim : note_dim(); }

    void validate() const
    {
        encoder.validate();
        if (vocab_size < 2) throw UsageError("vocabulary must hold at least the reserved tokens");
        if (embedding_dim <= 0 || heads <= 0 || shared() <= 0) {
            throw UsageError("model dimensions and head count must be positive");
        }
        if (max_note_tokens <= 0 || max_code_tokens <= 0) throw UsageError("token limits must be positive");
    }
};

template <typename Scalar>
struct ModelParams {
    Matrix<Scalar> embedding;  // vocab x d_emb, row 0 (PAD) stays zero
    EncoderParams<Scalar> note_encoder;
    EncoderParams<Scalar> code_encoder;
    std::vector<AttentionHead<Scalar>> heads;
    Classifier<Scalar> classifier;
};

// Calls f(name, array) for every trainable array in a fixed order. Works on
// const and non-const parameter sets alike.
template <typename P, typename F>
void visit_params(P& p, const ModelConfig& cfg, F&& f)
{
    f(std::string("embedding"), p.embedding);
    visit_encoder(p.note_encoder, cfg.encoder, "note_encoder", f);
    visit_encoder(p.code_encoder, cfg.encoder, "code_encoder", f);
    for (std::size_t m = 0; m < p.heads.size(); ++m) {
        f("heads." + std::to_string(m) + ".w_note", p.heads[m].w_note);
        f("heads." + std::to_string(m) + ".w_code", p.heads[m].w_code);
    }
    f(std::string("classifier.weight"), p.classifier.weight);
    f(std::string("classifier.bias"), p.classifier.bias);
}

struct ParameterCount {
    Index embedding = 0;
    Index note_encoder = 0;
    Index code_encoder = 0;
    Index attention = 0;
    Index classifier = 0;
    Index total() const { return embedding + note_encoder + code_encoder + attention + classifier; }
};

// Closed-form count from the configuration; nothing is allocated, so this
// works for benchmark-scale vocabularies.
inline ParameterCount count_parameters(const ModelConfig& cfg)
{
    ParameterCount c;
    c.embedding = cfg.vocab_size * cfg.embedding_dim;
    for (const auto& [r, k] : encoder_shapes(cfg.encoder, cfg.embedding_dim)) c.note_encoder += r * k;
    c.code_encoder = c.note_encoder;
    c.attention = cfg.heads * (cfg.shared() * cfg.note_dim() + cfg.code_dim() * cfg.shared());
    c.classifier = cfg.heads * cfg.note_dim() + 1;
    return c;
}

template <typename Scalar>
ModelParams<Scalar> zero_params(const ModelConfig& cfg)
{
    ModelParams<Scalar> p;
    p.embedding = Matrix<Scalar>::Zero(cfg.vocab_size, cfg.embedding_dim);
    p.note_encoder = zero_encoder<Scalar>(cfg.encoder, cfg.embedding_dim);
    p.code_encoder = zero_encoder<Scalar>(cfg.encoder, cfg.embedding_dim);
    for (Index m = 0; m < cfg.heads; ++m) {
        p.heads.push_back({Matrix<Scalar>::Zero(cfg.shared(), cfg.note_dim()),
                           Matrix<Scalar>::Zero(cfg.code_dim(), cfg.shared())});
    }
    p.classifier.weight = Matrix<Scalar>::Zero(cfg.heads * cfg.note_dim(), 1);
    p.classifier.bias = Matrix<Scalar>::Zero(1, 1);
    return p;
}

template <typename Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, Rng& rng,
                                const std::optional<Matrix<double>>& pretrained = std::nullopt)
{
    cfg.validate();
    auto p = zero_params<Scalar>(cfg);
    if (pretrained) {
        if (pretrained->rows() != cfg.vocab_size || pretrained->cols() != cfg.embedding_dim) {
            throw DataError("pretrained embedding shape does not match the model configuration");
        }
        // Skip-gram vectors are much smaller than unit scale; rescaling them to
        // unit RMS keeps the bilinear attention scores out of the flat region.
        const auto rows = pretrained->bottomRows(pretrained->rows() - 1);
        const double rms = std::sqrt(rows.squaredNorm() / static_cast<double>(std::max<Index>(1, rows.size())));
        p.embedding = (rms > 0 ? *pretrained / rms : *pretrained).template cast<Scalar>();
    } else {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < p.embedding.size(); ++i) p.embedding.data()[i] = static_cast<Scalar>(normal(rng));
    }
    p.embedding.row(0).setZero();
    p.note_encoder = init_encoder<Scalar>(cfg.encoder, cfg.embedding_dim, rng);
    p.code_encoder = init_encoder<Scalar>(cfg.encoder, cfg.embedding_dim, rng);
    for (auto& head : p.heads) {
        const auto bound = std::sqrt(Scalar(6) / static_cast<Scalar>(head.w_note.rows() + head.w_note.cols()));
        fill_uniform(head.w_note, bound, rng);
        fill_uniform(head.w_code, bound, rng);
    }
    fill_uniform(p.classifier.weight, Scalar(1) / std::sqrt(static_cast<Scalar>(p.classifier.weight.rows())), rng);
    return p;
}

template <typename Scalar>
Index parameter_count(const ModelParams<Scalar>& p, const ModelConfig& cfg)
{
    Index n = 0;
    visit_params(p, cfg, [&](const std::string&, const auto& a) { n += a.size(); });
    return n;
}

// Encoded side of one sequence family (notes or codes) with what backward needs.
template <typename Scalar>
struct EncodedSide {
    Embedded<Scalar> embedded;
    EncoderCache<Scalar> cache;
    Packed<Scalar> hidden;
};

template <typename Scalar>
EncodedSide<Scalar> encode_side(const ModelConfig& cfg, const Matrix<Scalar>& table,
                                const EncoderParams<Scalar>& enc, const std::vector<TokenSeq>& seqs,
                                Index max_tokens, Mode mode, Rng* rng, bool keep_cache)
{
    std::vector<TokenSeq> clipped;
    clipped.reserve(seqs.size());
    for (const auto& s : seqs) {
        const auto n = std::min<std::size_t>(s.size(), static_cast<std::size_t>(max_tokens));
        clipped.emplace_back(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n));
    }
    EncodedSide<Scalar> side;
    side.embedded = embed(table, clipped);
    side.hidden = encode(cfg.encoder, enc, side.embedded.packed, mode, rng, keep_cache ? &side.cache : nullptr);
    return side;
}

// Code-side quantities shared by every note: pooled codes and per-head queries.
template <typename Scalar>
struct CodeQueries {
    Matrix<Scalar> pooled;              // |L| x d_code
    std::vector<Matrix<Scalar>> query;  // per head, |L| x d_shared, after tanh
};

template <typename Scalar>
CodeQueries<Scalar> code_queries(const ModelParams<Scalar>& p, const Packed<Scalar>& code_hidden)
{
    CodeQueries<Scalar> q;
    q.pooled = mean_pool(code_hidden);
    for (const auto& head : p.heads) q.query.push_back((q.pooled * head.w_code).array().tanh().matrix());
    return q;
}

// Per-note attention state for one head.
template <typename Scalar>
struct HeadState {
    Matrix<Scalar> key;           // d_shared x T
    Matrix<Scalar> attention;     // |L| x T
    Vector<Scalar> token_score;   // T, classifier slice applied to each token column
};

// logits = sum over heads of A u + b, where u_t = w_m . h_t. Algebraically
// equal to classifier(J_mha) without forming J.
template <typename Scalar, typename NoteBlock>
Vector<Scalar> score_note(const ModelParams<Scalar>& p, const NoteBlock& note_hidden,
                          const CodeQueries<Scalar>& codes, std::vector<HeadState<Scalar>>* states = nullptr)
{
    const Index d_note = note_hidden.rows();
    Vector<Scalar> logits = Vector<Scalar>::Constant(codes.pooled.rows(), p.classifier.bias(0, 0));
    if (states) states->resize(p.heads.size());
    for (std::size_t m = 0; m < p.heads.size(); ++m) {
        HeadState<Scalar> st;
        st.key = (p.heads[m].w_note * note_hidden).array().tanh().matrix();
        st.attention.noalias() = codes.query[m] * st.key;
        softmax_rows(st.attention);
        st.token_score.noalias() =
            note_hidden.transpose() * p.classifier.weight.col(0).segment(static_cast<Index>(m) * d_note, d_note);
        logits.noalias() += st.attention * st.token_score;
        if (states) (*states)[m] = std::move(st);
    }
    return logits;
}

// N x |L| logits, evaluation mode.
template <typename Scalar>
Matrix<Scalar> forward_logits(const ModelConfig& cfg, const ModelParams<Scalar>& p,
                              const std::vector<TokenSeq>& notes, const std::vector<TokenSeq>& codes)
{
    auto note_side = encode_side(cfg, p.embedding, p.note_encoder, notes, cfg.max_note_tokens, Mode::Eval, nullptr, false);
    auto code_side = encode_side(cfg, p.embedding, p.code_encoder, codes, cfg.max_code_tokens, Mode::Eval, nullptr, false);
    const auto queries = code_queries(p, code_side.hidden);
    Matrix<Scalar> logits(static_cast<Index>(notes.size()), static_cast<Index>(codes.size()));
    for (Index i = 0; i < note_side.hidden.count(); ++i) {
        logits.row(i) = score_note(p, note_side.hidden.sequence(i), queries).transpose();
    }
    return logits;
}

// PredictionMatrix: N x |L| probabilities, evaluation mode.
template <typename Scalar>
Matrix<Scalar> forward(const ModelConfig& cfg, const ModelParams<Scalar>& p, const std::vector<TokenSeq>& notes,
                       const std::vector<TokenSeq>& codes)
{
    return sigmoid(forward_logits(cfg, p, notes, codes).array()).matrix();
}

// Full intermediate view for a single note through the stand-alone attend()
// and classify() path.
template <typename Scalar>
DualAttentionOutput<Scalar> forward_detailed(const ModelConfig& cfg, const ModelParams<Scalar>& p,
                                             const TokenSeq& note, const std::vector<TokenSeq>& codes)
{
    auto note_side = encode_side(cfg, p.embedding, p.note_encoder, {note}, cfg.max_note_tokens, Mode::Eval, nullptr, false);
    auto code_side = encode_side(cfg, p.embedding, p.code_encoder, codes, cfg.max_code_tokens, Mode::Eval, nullptr, false);
    const Matrix<Scalar> pooled = mean_pool(code_side.hidden);
    const Mask valid = Mask::Constant(note_side.hidden.total(), true);
    auto out = attend(note_side.hidden.data, pooled, p.heads, valid);
    classify(out, p.classifier);
    return out;
}

// Numerically stable binary cross-entropy on a logit.
template <typename Scalar>
Scalar bce_with_logit(Scalar z, Scalar y)
{
    return std::max(z, Scalar(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
}

// Mean binary cross-entropy over all N x |L| cells; gradients are accumulated
// into grad (which must be shaped like p). Train mode applies dropout drawn from rng.
template <typename Scalar>
Scalar loss_and_gradient(const ModelConfig& cfg, const ModelParams<Scalar>& p, const std::vector<TokenSeq>& notes,
                         const std::vector<TokenSeq>& codes, const Matrix<Scalar>& targets, Mode mode, Rng* rng,
                         ModelParams<Scalar>& grad)
{
    const auto n_notes = static_cast<Index>(notes.size());
    const auto n_codes = static_cast<Index>(codes.size());
    if (targets.rows() != n_notes || targets.cols() != n_codes) throw std::invalid_argument("target shape mismatch");

    auto note_side = encode_side(cfg, p.embedding, p.note_encoder, notes, cfg.max_note_tokens, mode, rng, true);
    auto code_side = encode_side(cfg, p.embedding, p.code_encoder, codes, cfg.max_code_tokens, mode, rng, true);
    const auto queries = code_queries(p, code_side.hidden);

    const Index d_note = cfg.note_dim();
    const Scalar scale = Scalar(1) / static_cast<Scalar>(n_notes * n_codes);
    Matrix<Scalar> d_note_hidden(note_side.hidden.data.rows(), note_side.hidden.total());
    std::vector<Matrix<Scalar>> d_query;
    for (const auto& q : queries.query) d_query.push_back(Matrix<Scalar>::Zero(q.rows(), q.cols()));

    Scalar loss = 0;
    std::vector<HeadState<Scalar>> states;
    Vector<Scalar> g(n_codes);
    for (Index i = 0; i < n_notes; ++i) {
        const auto hidden = note_side.hidden.sequence(i);
        const Vector<Scalar> logits = score_note(p, hidden, queries, &states);
        for (Index l = 0; l < n_codes; ++l) {
            const Scalar z = logits(l);
            const Scalar y = targets(i, l);
            loss += bce_with_logit(z, y);
            g(l) = (sigmoid(z) - y) * scale;
        }
        grad.classifier.bias(0, 0) += g.sum();

        Matrix<Scalar> d_hidden = Matrix<Scalar>::Zero(hidden.rows(), hidden.cols());
        for (std::size_t m = 0; m < states.size(); ++m) {
            const auto& st = states[m];
            const auto& head = p.heads[m];
            const Index seg = static_cast<Index>(m) * d_note;
            const Vector<Scalar> expected = st.attention * st.token_score;  // A u
            const Vector<Scalar> d_score = st.attention.transpose() * g;     // du
            grad.classifier.weight.col(0).segment(seg, d_note).noalias() += hidden * d_score;
            d_hidden.noalias() += p.classifier.weight.col(0).segment(seg, d_note) * d_score.transpose();

            // Softmax backward with dA = g u^T.
            Matrix<Scalar> d_logit_scores =
                (st.attention.array() *
                 (st.token_score.transpose().replicate(n_codes, 1) - expected.replicate(1, hidden.cols())).array())
                    .matrix();
            d_logit_scores = g.asDiagonal() * d_logit_scores;

            d_query[m].noalias() += d_logit_scores * st.key.transpose();
            const Matrix<Scalar> d_key_pre =
                ((queries.query[m].transpose() * d_logit_scores).array() * (Scalar(1) - st.key.array().square()))
                    .matrix();
            grad.heads[m].w_note.noalias() += d_key_pre * hidden.transpose();
            d_hidden.noalias() += head.w_note.transpose() * d_key_pre;
        }
        d_note_hidden.middleCols(note_side.hidden.offsets[i], hidden.cols()) = d_hidden;
    }

    Matrix<Scalar> d_pooled = Matrix<Scalar>::Zero(queries.pooled.rows(), queries.pooled.cols());
    for (std::size_t m = 0; m < p.heads.size(); ++m) {
        const Matrix<Scalar> d_pre =
            (d_query[m].array() * (Scalar(1) - queries.query[m].array().square())).matrix();
        grad.heads[m].w_code.noalias() += queries.pooled.transpose() * d_pre;
        d_pooled.noalias() += d_pre * p.heads[m].w_code.transpose();
    }
    const Matrix<Scalar> d_code_hidden = mean_pool_backward(code_side.hidden.offsets, d_pooled);
    const Matrix<Scalar> d_code_emb = encode_backward(cfg.encoder, p.code_encoder, code_side.hidden.offsets,
                                                      code_side.cache, d_code_hidden, grad.code_encoder);
    const Matrix<Scalar> d_note_emb = encode_backward(cfg.encoder, p.note_encoder, note_side.hidden.offsets,
                                                      note_side.cache, d_note_hidden, grad.note_encoder);

    auto scatter = [&](const Embedded<Scalar>& emb, const Matrix<Scalar>& d) {
        for (Index c = 0; c < d.cols(); ++c) {
            const auto id = emb.ids[static_cast<std::size_t>(c)];
            if (id != 0) grad.embedding.row(id) += d.col(c).transpose();
        }
    };
    scatter(note_side.embedded, d_note_emb);
    scatter(code_side.embedded, d_code_emb);
    return loss * scale;
}

}  // namespace duallaat
