#pragma once

#include "duallaat/error.hpp"
#include "duallaat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace duallaat {

enum class EncoderKind { Cnn, Rnn };

struct EncoderConfig {
    EncoderKind kind = EncoderKind::Rnn;
    Index cnn_filters = 256;
    Index cnn_width = 10;
    Index rnn_hidden = 512;
    Index rnn_layers = 1;
    bool bidirectional = true;
    // When set, rnn_hidden is the concatenated width rather than per direction.
    bool rnn_hidden_is_total = false;
    double dropout = 0.3;

    Index direction_hidden() const
    {
        return (rnn_hidden_is_total && bidirectional) ? rnn_hidden / 2 : rnn_hidden;
    }
    Index directions() const { return bidirectional ? 2 : 1; }
    Index output_dim() const
    {
        return kind == EncoderKind::Cnn ? cnn_filters : direction_hidden() * directions();
    }

    void validate() const
    {
        if (kind == EncoderKind::Cnn && (cnn_filters <= 0 || cnn_width <= 0)) {
            throw UsageError("convolution filters and width must be positive");
        }
        if (kind == EncoderKind::Rnn && (direction_hidden() <= 0 || rnn_layers <= 0)) {
            throw UsageError("recurrent hidden size and layer count must be positive");
        }
        if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
    }
};

// Variable-length sequences stored back to back: sequence i occupies columns
// [offsets[i], offsets[i+1]) of data. There is no padding anywhere.
template <typename Scalar>
struct Packed {
    Matrix<Scalar> data;
    std::vector<Index> offsets{0};

    Index count() const { return static_cast<Index>(offsets.size()) - 1; }
    Index total() const { return offsets.back(); }
    Index length(Index i) const { return offsets[i + 1] - offsets[i]; }
    Index max_length() const
    {
        Index m = 0;
        for (Index i = 0; i < count(); ++i) m = std::max(m, length(i));
        return m;
    }
    auto sequence(Index i) { return data.middleCols(offsets[i], length(i)); }
    auto sequence(Index i) const { return data.middleCols(offsets[i], length(i)); }
};

// Lookup result keeps the token ids so gradients can be scattered back.
template <typename Scalar>
struct Embedded {
    Packed<Scalar> packed;
    TokenSeq ids;
};

// PAD ids are padding and are dropped; a sequence with nothing left is an error.
template <typename Scalar>
Embedded<Scalar> embed(const Matrix<Scalar>& table, const std::vector<TokenSeq>& sequences,
                       TokenId pad = 0)
{
    Embedded<Scalar> out;
    out.packed.offsets.reserve(sequences.size() + 1);
    for (const auto& seq : sequences) {
        Index kept = 0;
        for (auto id : seq) {
            if (id == pad) continue;
            if (id < 0 || id >= table.rows()) throw DataError("token id out of vocabulary range");
            out.ids.push_back(id);
            ++kept;
        }
        if (kept == 0) throw DataError("sequence has no non-padding tokens");
        out.packed.offsets.push_back(out.packed.offsets.back() + kept);
    }
    out.packed.data.resize(table.cols(), static_cast<Index>(out.ids.size()));
    for (Index c = 0; c < out.packed.data.cols(); ++c) {
        out.packed.data.col(c) = table.row(out.ids[static_cast<std::size_t>(c)]).transpose();
    }
    return out;
}

template <typename Scalar>
struct ConvParams {
    Matrix<Scalar> weight;  // filters x (width * input_dim), tap-major blocks
    Matrix<Scalar> bias;    // filters x 1
};

// Gate rows are stacked in (reset, update, candidate) order.
template <typename Scalar>
struct GruParams {
    Matrix<Scalar> w_input;   // 3H x D
    Matrix<Scalar> w_hidden;  // 3H x H
    Matrix<Scalar> b_input;   // 3H x 1
    Matrix<Scalar> b_hidden;  // 3H x 1
};

template <typename Scalar>
struct EncoderParams {
    ConvParams<Scalar> conv;
    std::vector<GruParams<Scalar>> gru;  // layer-major, forward direction first
};

template <typename P, typename F>
void visit_encoder(P& p, const EncoderConfig& cfg, const std::string& prefix, F&& f)
{
    if (cfg.kind == EncoderKind::Cnn) {
        f(prefix + ".conv.weight", p.conv.weight);
        f(prefix + ".conv.bias", p.conv.bias);
        return;
    }
    for (std::size_t i = 0; i < p.gru.size(); ++i) {
        const auto layer = static_cast<Index>(i) / cfg.directions();
        const bool reverse = static_cast<Index>(i) % cfg.directions() == 1;
        const auto name = prefix + ".gru." + std::to_string(layer) + (reverse ? ".reverse" : ".forward");
        f(name + ".w_input", p.gru[i].w_input);
        f(name + ".w_hidden", p.gru[i].w_hidden);
        f(name + ".b_input", p.gru[i].b_input);
        f(name + ".b_hidden", p.gru[i].b_hidden);
    }
}

// Weight shapes without materializing anything.
inline std::vector<std::pair<Index, Index>> encoder_shapes(const EncoderConfig& cfg, Index input_dim)
{
    std::vector<std::pair<Index, Index>> shapes;
    if (cfg.kind == EncoderKind::Cnn) {
        shapes.emplace_back(cfg.cnn_filters, cfg.cnn_width * input_dim);
        shapes.emplace_back(cfg.cnn_filters, 1);
        return shapes;
    }
    const Index h = cfg.direction_hidden();
    Index d = input_dim;
    for (Index layer = 0; layer < cfg.rnn_layers; ++layer) {
        for (Index dir = 0; dir < cfg.directions(); ++dir) {
            shapes.emplace_back(3 * h, d);
            shapes.emplace_back(3 * h, h);
            shapes.emplace_back(3 * h, 1);
            shapes.emplace_back(3 * h, 1);
        }
        d = h * cfg.directions();
    }
    return shapes;
}

template <typename Scalar>
EncoderParams<Scalar> zero_encoder(const EncoderConfig& cfg, Index input_dim)
{
    EncoderParams<Scalar> p;
    const auto shapes = encoder_shapes(cfg, input_dim);
    if (cfg.kind == EncoderKind::Cnn) {
        p.conv.weight = Matrix<Scalar>::Zero(shapes[0].first, shapes[0].second);
        p.conv.bias = Matrix<Scalar>::Zero(shapes[1].first, 1);
        return p;
    }
    for (std::size_t i = 0; i < shapes.size(); i += 4) {
        GruParams<Scalar> g;
        g.w_input = Matrix<Scalar>::Zero(shapes[i].first, shapes[i].second);
        g.w_hidden = Matrix<Scalar>::Zero(shapes[i + 1].first, shapes[i + 1].second);
        g.b_input = Matrix<Scalar>::Zero(shapes[i + 2].first, 1);
        g.b_hidden = Matrix<Scalar>::Zero(shapes[i + 3].first, 1);
        p.gru.push_back(std::move(g));
    }
    return p;
}

template <typename Scalar>
void fill_uniform(Matrix<Scalar>& m, Scalar bound, Rng& rng)
{
    std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every array.
template <typename Scalar>
EncoderParams<Scalar> init_encoder(const EncoderConfig& cfg, Index input_dim, Rng& rng)
{
    auto p = zero_encoder<Scalar>(cfg, input_dim);
    if (cfg.kind == EncoderKind::Cnn) {
        const auto bound = Scalar(1) / std::sqrt(static_cast<Scalar>(p.conv.weight.cols()));
        fill_uniform(p.conv.weight, bound, rng);
        fill_uniform(p.conv.bias, bound, rng);
        return p;
    }
    const auto bound = Scalar(1) / std::sqrt(static_cast<Scalar>(cfg.direction_hidden()));
    for (auto& g : p.gru) {
        fill_uniform(g.w_input, bound, rng);
        fill_uniform(g.w_hidden, bound, rng);
        fill_uniform(g.b_input, bound, rng);
        fill_uniform(g.b_hidden, bound, rng);
    }
    return p;
}

template <typename Scalar>
struct GruDirectionCache {
    Matrix<Scalar> reset, update, candidate, hidden_candidate, previous;  // H x total
};

template <typename Scalar>
struct EncoderCache {
    Matrix<Scalar> input_mask;   // CNN dropout, scaled keep mask
    Matrix<Scalar> output_mask;  // RNN dropout, scaled keep mask
    Matrix<Scalar> columns;      // im2col of the convolution input
    Matrix<Scalar> activation;   // tanh output of the convolution
    std::vector<Matrix<Scalar>> layer_inputs;
    std::vector<Matrix<Scalar>> layer_outputs;
    std::vector<GruDirectionCache<Scalar>> directions;
};

namespace detail {

template <typename Scalar>
Matrix<Scalar> dropout_mask(Index rows, Index cols, double rate, Rng& rng)
{
    Matrix<Scalar> mask(rows, cols);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto keep = static_cast<Scalar>(1.0 / (1.0 - rate));
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = u(rng) >= rate ? keep : Scalar(0);
    return mask;
}

// Copies tap k of every position into rows [k*d, (k+1)*d) of the column
// matrix; out-of-sequence taps stay zero ("same" padding).
template <typename Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& in, const std::vector<Index>& offsets, Index width)
{
    const Index d = in.rows();
    const Index left = (width - 1) / 2;
    Matrix<Scalar> cols = Matrix<Scalar>::Zero(width * d, in.cols());
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const Index off = offsets[s];
        const Index len = offsets[s + 1] - off;
        for (Index k = 0; k < width; ++k) {
            const Index t0 = std::max<Index>(0, left - k);
            const Index t1 = std::min<Index>(len, len + left - k);
            if (t1 > t0) {
                cols.block(k * d, off + t0, d, t1 - t0) = in.middleCols(off + t0 + k - left, t1 - t0);
            }
        }
    }
    return cols;
}

template <typename Scalar>
Matrix<Scalar> col2im(const Matrix<Scalar>& cols, const std::vector<Index>& offsets, Index width, Index d)
{
    const Index left = (width - 1) / 2;
    Matrix<Scalar> out = Matrix<Scalar>::Zero(d, cols.cols());
    for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
        const Index off = offsets[s];
        const Index len = offsets[s + 1] - off;
        for (Index k = 0; k < width; ++k) {
            const Index t0 = std::max<Index>(0, left - k);
            const Index t1 = std::min<Index>(len, len + left - k);
            if (t1 > t0) {
                out.middleCols(off + t0 + k - left, t1 - t0) += cols.block(k * d, off + t0, d, t1 - t0);
            }
        }
    }
    return out;
}

// Sequence order by descending length so active sequences form a prefix at
// every time step.
inline std::vector<Index> length_order(const std::vector<Index>& offsets)
{
    std::vector<Index> order(offsets.size() - 1);
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return offsets[a + 1] - offsets[a] > offsets[b + 1] - offsets[b];
    });
    return order;
}

struct StepIndex {
    std::vector<Index> order;
    std::vector<Index> lengths;  // in order
    Index max_len = 0;

    explicit StepIndex(const std::vector<Index>& offsets) : order(length_order(offsets))
    {
        for (auto s : order) lengths.push_back(offsets[s + 1] - offsets[s]);
        max_len = lengths.empty() ? 0 : lengths.front();
    }
    Index active(Index t) const
    {
        Index k = 0;
        while (k < static_cast<Index>(lengths.size()) && lengths[k] > t) ++k;
        return k;
    }
};

template <typename Scalar>
Matrix<Scalar> gru_direction_forward(const GruParams<Scalar>& p, const Matrix<Scalar>& x,
                                     const std::vector<Index>& offsets, bool reverse,
                                     GruDirectionCache<Scalar>* cache)
{
    const Index h = p.w_hidden.cols();
    const Index total = x.cols();
    Matrix<Scalar> gi = p.w_input * x;
    gi.colwise() += p.b_input.col(0);

    Matrix<Scalar> out(h, total);
    if (cache) {
        cache->reset.resize(h, total);
        cache->update.resize(h, total);
        cache->candidate.resize(h, total);
        cache->hidden_candidate.resize(h, total);
        cache->previous.resize(h, total);
    }
    const StepIndex steps(offsets);
    Matrix<Scalar> state = Matrix<Scalar>::Zero(h, static_cast<Index>(steps.order.size()));
    std::vector<Index> pos;
    Matrix<Scalar> gx, gh;
    for (Index t = 0; t < steps.max_len; ++t) {
        const Index k = steps.active(t);
        pos.resize(static_cast<std::size_t>(k));
        gx.resize(3 * h, k);
        for (Index j = 0; j < k; ++j) {
            const Index s = steps.order[j];
            pos[j] = reverse ? offsets[s] + steps.lengths[j] - 1 - t : offsets[s] + t;
            gx.col(j) = gi.col(pos[j]);
        }
        auto prev = state.leftCols(k);
        gh.noalias() = p.w_hidden * prev;
        gh.colwise() += p.b_hidden.col(0);
        const Matrix<Scalar> r = sigmoid(gx.topRows(h).array() + gh.topRows(h).array()).matrix();
        const Matrix<Scalar> z = sigmoid(gx.middleRows(h, h).array() + gh.middleRows(h, h).array()).matrix();
        const Matrix<Scalar> n =
            (gx.bottomRows(h).array() + r.array() * gh.bottomRows(h).array()).tanh().matrix();
        const Matrix<Scalar> next = ((Scalar(1) - z.array()) * n.array() + z.array() * prev.array()).matrix();
        for (Index j = 0; j < k; ++j) {
            out.col(pos[j]) = next.col(j);
            if (cache) {
                cache->reset.col(pos[j]) = r.col(j);
                cache->update.col(pos[j]) = z.col(j);
                cache->candidate.col(pos[j]) = n.col(j);
                cache->hidden_candidate.col(pos[j]) = gh.col(j).tail(h);
                cache->previous.col(pos[j]) = prev.col(j);
            }
        }
        state.leftCols(k) = next;
    }
    return out;
}

// Accumulates parameter gradients into grad and returns d loss / d x.
template <typename Scalar>
Matrix<Scalar> gru_direction_backward(const GruParams<Scalar>& p, const Matrix<Scalar>& x,
                                      const std::vector<Index>& offsets, bool reverse,
                                      const GruDirectionCache<Scalar>& cache,
                                      const Matrix<Scalar>& d_out, GruParams<Scalar>& grad)
{
    const Index h = p.w_hidden.cols();
    const Index total = x.cols();
    const StepIndex steps(offsets);
    Matrix<Scalar> d_gi = Matrix<Scalar>::Zero(3 * h, total);
    Matrix<Scalar> d_state = Matrix<Scalar>::Zero(h, static_cast<Index>(steps.order.size()));
    std::vector<Index> pos;
    Matrix<Scalar> dh, r, z, n, hn, prev, d_gh;
    for (Index t = steps.max_len - 1; t >= 0; --t) {
        const Index k = steps.active(t);
        pos.resize(static_cast<std::size_t>(k));
        dh.resize(h, k);
        r.resize(h, k);
        z.resize(h, k);
        n.resize(h, k);
        hn.resize(h, k);
        prev.resize(h, k);
        for (Index j = 0; j < k; ++j) {
            const Index s = steps.order[j];
            pos[j] = reverse ? offsets[s] + steps.lengths[j] - 1 - t : offsets[s] + t;
            dh.col(j) = d_out.col(pos[j]) + d_state.col(j);
            r.col(j) = cache.reset.col(pos[j]);
            z.col(j) = cache.update.col(pos[j]);
            n.col(j) = cache.candidate.col(pos[j]);
            hn.col(j) = cache.hidden_candidate.col(pos[j]);
            prev.col(j) = cache.previous.col(pos[j]);
        }
        const auto one = Scalar(1);
        const Matrix<Scalar> dn_pre = (dh.array() * (one - z.array()) * (one - n.array().square())).matrix();
        const Matrix<Scalar> dz_pre =
            (dh.array() * (prev.array() - n.array()) * z.array() * (one - z.array())).matrix();
        const Matrix<Scalar> dr_pre = (dn_pre.array() * hn.array() * r.array() * (one - r.array())).matrix();

        d_gh.resize(3 * h, k);
        d_gh.topRows(h) = dr_pre;
        d_gh.middleRows(h, h) = dz_pre;
        d_gh.bottomRows(h) = (dn_pre.array() * r.array()).matrix();

        grad.w_hidden.noalias() += d_gh * prev.transpose();
        grad.b_hidden.col(0) += d_gh.rowwise().sum();
        Matrix<Scalar> d_prev = (dh.array() * z.array()).matrix();
        d_prev.noalias() += p.w_hidden.transpose() * d_gh;
        for (Index j = 0; j < k; ++j) {
            d_gi.col(pos[j]).head(2 * h) = d_gh.col(j).head(2 * h);
            d_gi.col(pos[j]).tail(h) = dn_pre.col(j);
        }
        d_state.leftCols(k) = d_prev;
    }
    grad.w_input.noalias() += d_gi * x.transpose();
    grad.b_input.col(0) += d_gi.rowwise().sum();
    return p.w_input.transpose() * d_gi;
}

}  // namespace detail

// CNN: "same"-padded convolution + tanh, dropout on the inputs.
// RNN: stacked (bi)GRU, dropout on the outputs. One output column per input
// token. Passing a cache records what encode_backward needs.
template <typename Scalar>
Packed<Scalar> encode(const EncoderConfig& cfg, const EncoderParams<Scalar>& p,
                      const Packed<Scalar>& input, Mode mode, Rng* rng,
                      EncoderCache<Scalar>* cache = nullptr)
{
    const bool drop = mode == Mode::Train && cfg.dropout > 0.0;
    if (drop && !rng) throw UsageError("training-mode encoding needs a random generator");
    Packed<Scalar> out;
    out.offsets = input.offsets;

    if (cfg.kind == EncoderKind::Cnn) {
        Matrix<Scalar> x = input.data;
        if (drop) {
            Matrix<Scalar> mask = detail::dropout_mask<Scalar>(x.rows(), x.cols(), cfg.dropout, *rng);
            x.array() *= mask.array();
            if (cache) cache->input_mask = std::move(mask);
        }
        Matrix<Scalar> cols = detail::im2col(x, input.offsets, cfg.cnn_width);
        out.data.noalias() = p.conv.weight * cols;
        out.data.colwise() += p.conv.bias.col(0);
        out.data = out.data.array().tanh().matrix();
        if (cache) {
            cache->columns = std::move(cols);
            cache->activation = out.data;
        }
        return out;
    }

    const Index h = cfg.direction_hidden();
    const Index dirs = cfg.directions();
    Matrix<Scalar> layer_in = input.data;
    if (cache) {
        cache->layer_inputs.clear();
        cache->directions.assign(p.gru.size(), {});
    }
    for (Index layer = 0; layer < cfg.rnn_layers; ++layer) {
        Matrix<Scalar> layer_out(h * dirs, layer_in.cols());
        for (Index dir = 0; dir < dirs; ++dir) {
            const auto idx = static_cast<std::size_t>(layer * dirs + dir);
            layer_out.middleRows(dir * h, h) = detail::gru_direction_forward(
                p.gru[idx], layer_in, input.offsets, dir == 1, cache ? &cache->directions[idx] : nullptr);
        }
        if (cache) cache->layer_inputs.push_back(std::move(layer_in));
        layer_in = std::move(layer_out);
    }
    if (drop) {
        Matrix<Scalar> mask = detail::dropout_mask<Scalar>(layer_in.rows(), layer_in.cols(), cfg.dropout, *rng);
        layer_in.array() *= mask.array();
        if (cache) cache->output_mask = std::move(mask);
    } else if (cache) {
        cache->output_mask.resize(0, 0);
    }
    out.data = std::move(layer_in);
    return out;
}

template <typename Scalar>
Matrix<Scalar> encode_backward(const EncoderConfig& cfg, const EncoderParams<Scalar>& p,
                               const std::vector<Index>& offsets, const EncoderCache<Scalar>& cache,
                               const Matrix<Scalar>& d_out, EncoderParams<Scalar>& grad)
{
    if (cfg.kind == EncoderKind::Cnn) {
        const Matrix<Scalar> d_pre =
            (d_out.array() * (Scalar(1) - cache.activation.array().square())).matrix();
        grad.conv.weight.noalias() += d_pre * cache.columns.transpose();
        grad.conv.bias.col(0) += d_pre.rowwise().sum();
        const Matrix<Scalar> d_cols = p.conv.weight.transpose() * d_pre;
        const Index d_in = p.conv.weight.cols() / cfg.cnn_width;
        Matrix<Scalar> d_in_mat = detail::col2im(d_cols, offsets, cfg.cnn_width, d_in);
        if (cache.input_mask.size() > 0) d_in_mat.array() *= cache.input_mask.array();
        return d_in_mat;
    }

    const Index h = cfg.direction_hidden();
    const Index dirs = cfg.directions();
    Matrix<Scalar> d_layer = d_out;
    if (cache.output_mask.size() > 0) d_layer.array() *= cache.output_mask.array();
    for (Index layer = cfg.rnn_layers - 1; layer >= 0; --layer) {
        const auto& x = cache.layer_inputs[static_cast<std::size_t>(layer)];
        Matrix<Scalar> d_x = Matrix<Scalar>::Zero(x.rows(), x.cols());
        for (Index dir = 0; dir < dirs; ++dir) {
            const auto idx = static_cast<std::size_t>(layer * dirs + dir);
            d_x += detail::gru_direction_backward(p.gru[idx], x, offsets, dir == 1, cache.directions[idx],
                                                  Matrix<Scalar>(d_layer.middleRows(dir * h, h)), grad.gru[idx]);
        }
        d_layer = std::move(d_x);
    }
    return d_layer;
}

// Mean over each sequence's columns; row i of the result is sequence i.
template <typename Scalar>
Matrix<Scalar> mean_pool(const Packed<Scalar>& hidden)
{
    Matrix<Scalar> pooled(hidden.count(), hidden.data.rows());
    for (Index i = 0; i < hidden.count(); ++i) {
        pooled.row(i) = hidden.sequence(i).rowwise().mean().transpose();
    }
    return pooled;
}

template <typename Scalar>
Matrix<Scalar> mean_pool_backward(const std::vector<Index>& offsets, const Matrix<Scalar>& d_pooled)
{
    Matrix<Scalar> d_hidden(d_pooled.cols(), offsets.back());
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        const Index len = offsets[i + 1] - offsets[i];
        const auto row = d_pooled.row(static_cast<Index>(i)).transpose() / static_cast<Scalar>(len);
        for (Index c = offsets[i]; c < offsets[i + 1]; ++c) d_hidden.col(c) = row;
    }
    return d_hidden;
}

template <typename Scalar>
struct NoteEncoding {
    Matrix<Scalar> hidden;  // d_note x t_note, columns past valid_len are zero
    Index valid_len = 0;
};

// Single-note view over a padded (d_emb x t_note) input: only the first
// valid_len columns are read.
template <typename Scalar>
NoteEncoding<Scalar> encode_note(const Matrix<Scalar>& embedded, Index valid_len, const EncoderConfig& cfg,
                                 const EncoderParams<Scalar>& p, Mode mode, Rng* rng = nullptr)
{
    if (valid_len <= 0 || valid_len > embedded.cols()) throw DataError("note has no valid tokens");
    Packed<Scalar> in;
    in.data = embedded.leftCols(valid_len);
    in.offsets = {0, valid_len};
    auto out = encode(cfg, p, in, mode, rng);
    NoteEncoding<Scalar> enc;
    enc.valid_len = valid_len;
    enc.hidden = Matrix<Scalar>::Zero(out.data.rows(), embedded.cols());
    enc.hidden.leftCols(valid_len) = out.data;
    return enc;
}

}  // namespace duallaat
