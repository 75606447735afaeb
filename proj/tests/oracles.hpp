#pragma once

// Slow, loop-only reference implementations. They share no code with the
// library beyond the parameter containers they read from.

#include "duallaat/metrics.hpp"
#include "duallaat/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <cstdio>
#include <optional>
#include <string>
#include <set>
#include <vector>

namespace oracle {

using duallaat::Index;
using Mat = std::vector<std::vector<double>>;  // row-major [row][col]

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat to_rows(const duallaat::Matrix<double>& m)
{
    Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

// tokens: T x d. Weight row f holds taps back to back, tap k covering input
// position t + k - (width-1)/2. Returns T x F.
inline Mat conv_tanh(const Mat& x, const duallaat::Matrix<double>& w, const duallaat::Matrix<double>& b, Index width)
{
    const auto t_len = static_cast<Index>(x.size());
    const Index d = x.empty() ? 0 : static_cast<Index>(x[0].size());
    const Index left = (width - 1) / 2;
    Mat out(x.size(), std::vector<double>(static_cast<std::size_t>(w.rows())));
    for (Index t = 0; t < t_len; ++t) {
        for (Index f = 0; f < w.rows(); ++f) {
            double acc = b(f, 0);
            for (Index k = 0; k < width; ++k) {
                const Index src = t + k - left;
                if (src < 0 || src >= t_len) continue;
                for (Index j = 0; j < d; ++j) acc += w(f, k * d + j) * x[src][j];
            }
            out[t][f] = std::tanh(acc);
        }
    }
    return out;
}

// One GRU direction, gates (r, z, n):
//   r = s(W_ir x + b_ir + W_hr h + b_hr)
//   z = s(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//   h' = (1 - z) * n + z * h
inline Mat gru(const Mat& x, const duallaat::GruParams<double>& p, bool reverse)
{
    const Index h = p.w_hidden.cols();
    const auto t_len = static_cast<Index>(x.size());
    std::vector<double> state(static_cast<std::size_t>(h), 0.0);
    Mat out(x.size(), std::vector<double>(static_cast<std::size_t>(h)));
    for (Index step = 0; step < t_len; ++step) {
        const Index t = reverse ? t_len - 1 - step : step;
        auto pre = [&](Index row, bool hidden_part) {
            double acc = 0;
            if (hidden_part) {
                acc = p.b_hidden(row, 0);
                for (Index j = 0; j < h; ++j) acc += p.w_hidden(row, j) * state[j];
            } else {
                acc = p.b_input(row, 0);
                for (Index j = 0; j < p.w_input.cols(); ++j) acc += p.w_input(row, j) * x[t][j];
            }
            return acc;
        };
        std::vector<double> next(static_cast<std::size_t>(h));
        for (Index u = 0; u < h; ++u) {
            const double r = sig(pre(u, false) + pre(u, true));
            const double z = sig(pre(h + u, false) + pre(h + u, true));
            const double n = std::tanh(pre(2 * h + u, false) + r * pre(2 * h + u, true));
            next[u] = (1 - z) * n + z * state[u];
        }
        state = next;
        out[t] = next;
    }
    return out;
}

inline Mat encode(const duallaat::EncoderConfig& cfg, const duallaat::EncoderParams<double>& p, Mat x)
{
    if (cfg.kind == duallaat::EncoderKind::Cnn) return conv_tanh(x, p.conv.weight, p.conv.bias, cfg.cnn_width);
    std::size_t idx = 0;
    for (Index layer = 0; layer < cfg.rnn_layers; ++layer) {
        Mat fwd = gru(x, p.gru[idx++], false);
        if (cfg.bidirectional) {
            Mat bwd = gru(x, p.gru[idx++], true);
            for (std::size_t t = 0; t < fwd.size(); ++t) fwd[t].insert(fwd[t].end(), bwd[t].begin(), bwd[t].end());
        }
        x = std::move(fwd);
    }
    return x;
}

inline Mat lookup(const duallaat::Matrix<double>& table, const duallaat::TokenSeq& ids)
{
    Mat x;
    for (auto id : ids) {
        if (id == 0) continue;
        std::vector<double> row(static_cast<std::size_t>(table.cols()));
        for (Index j = 0; j < table.cols(); ++j) row[j] = table(id, j);
        x.push_back(row);
    }
    return x;
}

// Probabilities of one note against every code, straight from the defining
// formulas: per head, A = softmax_t(tanh(h_code W_code) . tanh(W_note h_t)),
// J = sum_t A h_t, heads stacked, y = sigmoid(w . J + b).
inline std::vector<double> forward(const duallaat::ModelConfig& cfg, const duallaat::ModelParams<double>& p,
                                   const duallaat::TokenSeq& note, const std::vector<duallaat::TokenSeq>& codes)
{
    const Mat hn = encode(cfg.encoder, p.note_encoder, lookup(p.embedding, note));
    const std::size_t t_len = hn.size();
    const std::size_t dn = hn[0].size();
    std::vector<double> probs;
    for (const auto& code : codes) {
        const Mat hc = encode(cfg.encoder, p.code_encoder, lookup(p.embedding, code));
        std::vector<double> pooled(hc[0].size(), 0.0);
        for (const auto& row : hc)
            for (std::size_t j = 0; j < row.size(); ++j) pooled[j] += row[j] / static_cast<double>(hc.size());

        std::vector<double> joint;
        for (const auto& head : p.heads) {
            const Index ds = head.w_note.rows();
            std::vector<double> q(static_cast<std::size_t>(ds));
            for (Index s = 0; s < ds; ++s) {
                double acc = 0;
                for (std::size_t j = 0; j < pooled.size(); ++j) acc += pooled[j] * head.w_code(static_cast<Index>(j), s);
                q[s] = std::tanh(acc);
            }
            std::vector<double> score(t_len);
            for (std::size_t t = 0; t < t_len; ++t) {
                double acc = 0;
                for (Index s = 0; s < ds; ++s) {
                    double k = 0;
                    for (std::size_t j = 0; j < dn; ++j) k += head.w_note(s, static_cast<Index>(j)) * hn[t][j];
                    acc += q[s] * std::tanh(k);
                }
                score[t] = acc;
            }
            const double peak = *std::max_element(score.begin(), score.end());
            double z = 0;
            for (auto& v : score) z += (v = std::exp(v - peak));
            for (std::size_t j = 0; j < dn; ++j) {
                double acc = 0;
                for (std::size_t t = 0; t < t_len; ++t) acc += score[t] / z * hn[t][j];
                joint.push_back(acc);
            }
        }
        double logit = p.classifier.bias(0, 0);
        for (std::size_t j = 0; j < joint.size(); ++j) logit += p.classifier.weight(static_cast<Index>(j), 0) * joint[j];
        probs.push_back(sig(logit));
    }
    return probs;
}

// ---- metrics ----

struct Counts {
    double tp = 0, fp = 0, fn = 0;
};

inline double f1(const Counts& c)
{
    const double d = 2 * c.tp + c.fp + c.fn;
    return d == 0 ? 0.0 : 2 * c.tp / d;
}

inline double micro_f1(const Mat& s, const Mat& y, double thr)
{
    Counts c;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s[i].size(); ++j) {
            const bool p = s[i][j] >= thr, g = y[i][j] > 0.5;
            c.tp += p && g;
            c.fp += p && !g;
            c.fn += !p && g;
        }
    return f1(c);
}

inline double macro_f1(const Mat& s, const Mat& y, double thr)
{
    double sum = 0;
    int n = 0;
    for (std::size_t j = 0; j < (s.empty() ? 0 : s[0].size()); ++j) {
        Counts c;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const bool p = s[i][j] >= thr, g = y[i][j] > 0.5;
            c.tp += p && g;
            c.fp += p && !g;
            c.fn += !p && g;
        }
        if (c.tp + c.fp + c.fn == 0) continue;
        sum += f1(c);
        ++n;
    }
    return n ? sum / n : 0.0;
}

// Probability that a random positive outscores a random negative, ties count half.
inline std::optional<double> pair_auc(const std::vector<double>& s, const std::vector<bool>& y)
{
    double wins = 0, pairs = 0;
    for (std::size_t a = 0; a < s.size(); ++a) {
        if (!y[a]) continue;
        for (std::size_t b = 0; b < s.size(); ++b) {
            if (y[b]) continue;
            pairs += 1;
            wins += s[a] > s[b] ? 1.0 : s[a] == s[b] ? 0.5 : 0.0;
        }
    }
    if (pairs == 0) return std::nullopt;
    return wins / pairs;
}

inline std::optional<double> micro_auc(const Mat& s, const Mat& y)
{
    std::vector<double> flat;
    std::vector<bool> labels;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s[i].size(); ++j) {
            flat.push_back(s[i][j]);
            labels.push_back(y[i][j] > 0.5);
        }
    return pair_auc(flat, labels);
}

inline std::optional<double> macro_auc(const Mat& s, const Mat& y)
{
    double sum = 0;
    int n = 0;
    for (std::size_t j = 0; j < (s.empty() ? 0 : s[0].size()); ++j) {
        std::vector<double> col;
        std::vector<bool> labels;
        for (std::size_t i = 0; i < s.size(); ++i) {
            col.push_back(s[i][j]);
            labels.push_back(y[i][j] > 0.5);
        }
        if (auto a = pair_auc(col, labels)) {
            sum += *a;
            ++n;
        }
    }
    if (!n) return std::nullopt;
    return sum / n;
}

// Ranked column indices of one row: score descending, then tie key ascending.
inline std::vector<std::size_t> ranking(const std::vector<double>& s, const std::vector<std::string>& keys)
{
    std::vector<std::size_t> idx(s.size());
    std::iota(idx.begin(), idx.end(), 0);
    // Selection sort keeps the oracle free of comparator subtleties.
    for (std::size_t a = 0; a < idx.size(); ++a) {
        std::size_t best = a;
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const auto x = idx[b], y = idx[best];
            if (s[x] > s[y] || (s[x] == s[y] && keys[x] < keys[y])) best = b;
        }
        std::swap(idx[a], idx[best]);
    }
    return idx;
}

struct Ranking {
    std::map<int, double> p_at;
    double r_precision = 0, map = 0;
    int notes = 0;
};

inline Ranking ranking_metrics(const Mat& s, const Mat& y, const std::vector<int>& ks, std::vector<std::string> keys)
{
    Ranking out;
    if (s.empty()) return out;
    if (keys.empty()) {
        for (std::size_t j = 0; j < s[0].size(); ++j) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08zu", j);
            keys.push_back(buf);
        }
    }
    for (int k : ks) out.p_at[k] = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        int gold = 0;
        for (double v : y[i]) gold += v > 0.5;
        if (gold == 0) continue;
        ++out.notes;
        const auto order = ranking(s[i], keys);
        for (int k : ks) {
            int hit = 0;
            for (int r = 0; r < k && r < static_cast<int>(order.size()); ++r) hit += y[i][order[r]] > 0.5;
            out.p_at[k] += static_cast<double>(hit) / k;
        }
        int hit = 0;
        for (int r = 0; r < gold; ++r) hit += y[i][order[r]] > 0.5;
        out.r_precision += static_cast<double>(hit) / gold;
        double ap = 0;
        int seen = 0;
        for (std::size_t r = 0; r < order.size(); ++r) {
            if (y[i][order[r]] > 0.5) {
                ++seen;
                ap += static_cast<double>(seen) / static_cast<double>(r + 1);
            }
        }
        out.map += ap / gold;
    }
    if (out.notes) {
        for (auto& [k, v] : out.p_at) v /= out.notes;
        out.r_precision /= out.notes;
        out.map /= out.notes;
    }
    return out;
}

// ---- gradients ----

// Central differences of f over every entry of every parameter array.
inline duallaat::ModelParams<double> numeric_gradient(const duallaat::ModelConfig& cfg,
                                                      duallaat::ModelParams<double> p,
                                                      const std::function<double(const duallaat::ModelParams<double>&)>& f,
                                                      double eps = 1e-3)
{
    auto grad = duallaat::zero_params<double>(cfg);
    std::vector<duallaat::Matrix<double>*> gs;
    duallaat::visit_params(grad, cfg, [&](const std::string&, duallaat::Matrix<double>& m) { gs.push_back(&m); });
    std::vector<duallaat::Matrix<double>*> ps;
    duallaat::visit_params(p, cfg, [&](const std::string&, duallaat::Matrix<double>& m) { ps.push_back(&m); });
    for (std::size_t a = 0; a < ps.size(); ++a) {
        for (Index i = 0; i < ps[a]->size(); ++i) {
            double& v = ps[a]->data()[i];
            const double orig = v;
            v = orig + eps;
            const double up = f(p);
            v = orig - eps;
            const double down = f(p);
            v = orig;
            gs[a]->data()[i] = (up - down) / (2 * eps);
        }
    }
    return grad;
}

}  // namespace oracle
