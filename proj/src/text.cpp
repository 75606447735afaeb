#include "duallaat/text.hpp"

#include "duallaat/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace duallaat {

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c < 128 && std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens)
{
    tokens_.reserve(tokens.size() + 2);
    tokens_.emplace_back(kPadToken);
    tokens_.emplace_back(kUnkToken);
    ids_.emplace(kPadToken, kPad);
    ids_.emplace(kUnkToken, kUnk);
    for (const auto& t : tokens) {
        const auto id = static_cast<TokenId>(tokens_.size());
        if (!ids_.emplace(t, id).second) throw DataError("duplicate vocabulary token '" + t + "'");
        tokens_.push_back(t);
    }
}

TokenId Vocabulary::id(std::string_view token) const
{
    auto it = ids_.find(std::string(token));
    if (it == ids_.end() || it->second == kPad) return kUnk;
    return it->second;
}

TokenSeq Vocabulary::encode(const std::vector<std::string>& tokens, std::size_t max_len) const
{
    const auto n = max_len == 0 ? tokens.size() : std::min(tokens.size(), max_len);
    TokenSeq ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = id(tokens[i]);
    return ids;
}

TokenSeq Vocabulary::encode_text(std::string_view text, std::size_t max_len) const
{
    return encode(tokenize(text), max_len);
}

std::vector<std::string> Vocabulary::decode(const TokenSeq& ids) const
{
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (auto i : ids) out.push_back(token(i));
    return out;
}

std::uint64_t Vocabulary::hash() const
{
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](unsigned char c) {
        h ^= c;
        h *= 1099511628211ULL;
    };
    for (const auto& t : tokens_) {
        for (char c : t) mix(static_cast<unsigned char>(c));
        mix(0);
    }
    return h;
}

Vocabulary build_vocab(const std::vector<Document>& documents, const CodeRegistry& registry,
                       std::size_t min_count)
{
    std::map<std::string, std::size_t> counts;
    for (const auto& d : documents) {
        if (d.split != Split::Train) continue;
        for (auto& t : tokenize(d.text)) ++counts[std::move(t)];
    }
    for (const auto& e : registry.entries()) {
        for (auto& t : tokenize(e.description)) ++counts[std::move(t)];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : counts) {
        if (n >= min_count) kept.emplace_back(tok, n);
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (auto& [tok, n] : kept) tokens.push_back(tok);
    return Vocabulary(tokens);
}

namespace {

constexpr double kMaxExp = 30.0;

double log_sigmoid(double x)
{
    return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

}  // namespace

PretrainResult pretrain_embeddings(const std::vector<TokenSeq>& corpus, const Vocabulary& vocab,
                                   const SkipGramConfig& config)
{
    const auto vocab_size = static_cast<Index>(vocab.size());
    const Index dim = config.dim;
    if (dim <= 0) throw UsageError("embedding dimension must be positive");

    std::vector<double> counts(static_cast<std::size_t>(vocab_size), 0.0);
    std::size_t train_words = 0;
    for (const auto& seq : corpus) {
        for (auto id : seq) {
            if (id > Vocabulary::kUnk) {
                counts[static_cast<std::size_t>(id)] += 1;
                ++train_words;
            }
        }
    }
    if (train_words == 0) throw DataError("cannot pretrain embeddings on an empty corpus");

    // Unigram^0.75 noise distribution as a cumulative table.
    std::vector<double> cumulative(counts.size(), 0.0);
    double acc = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        acc += std::pow(counts[i], 0.75);
        cumulative[i] = acc;
    }
    Rng rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw_negative = [&]() {
        const double u = unit(rng) * acc;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        auto idx = static_cast<TokenId>(std::distance(cumulative.begin(), it));
        return std::min<TokenId>(idx, static_cast<TokenId>(vocab_size - 1));
    };

    // Row-major storage so each token's vector is contiguous.
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor input(vocab_size, dim);
    RowMajor output = RowMajor::Zero(vocab_size, dim);
    std::uniform_real_distribution<double> init(-0.5 / static_cast<double>(dim),
                                                0.5 / static_cast<double>(dim));
    for (Index i = 0; i < input.size(); ++i) input.data()[i] = init(rng);

    PretrainResult result;
    const double total = static_cast<double>(train_words) * config.epochs;
    double processed = 0;
    Eigen::RowVectorXd grad_center(dim);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0;
        std::size_t pairs = 0;
        for (const auto& raw : corpus) {
            TokenSeq seq;
            for (auto id : raw) {
                if (id > Vocabulary::kUnk) seq.push_back(id);
            }
            const auto n = static_cast<long>(seq.size());
            for (long pos = 0; pos < n; ++pos) {
                const double lr = std::max(config.learning_rate * (1.0 - processed / total),
                                           config.learning_rate * config.min_learning_rate_ratio);
                processed += 1;
                const TokenId center = seq[static_cast<std::size_t>(pos)];
                const long lo = std::max(0L, pos - config.window);
                const long hi = std::min(n - 1, pos + config.window);
                for (long ctx = lo; ctx <= hi; ++ctx) {
                    if (ctx == pos) continue;
                    const TokenId context = seq[static_cast<std::size_t>(ctx)];
                    grad_center.setZero();
                    auto v = input.row(center);
                    for (int k = 0; k <= config.negatives; ++k) {
                        const TokenId target = k == 0 ? context : draw_negative();
                        if (k > 0 && target == context) continue;
                        const double label = k == 0 ? 1.0 : 0.0;
                        auto u = output.row(target);
                        const double score = std::clamp(v.dot(u), -kMaxExp, kMaxExp);
                        loss_sum -= label > 0 ? log_sigmoid(score) : log_sigmoid(-score);
                        const double g = (label - 1.0 / (1.0 + std::exp(-score))) * lr;
                        grad_center += g * u;
                        u += g * v;
                    }
                    input.row(center) += grad_center;
                    ++pairs;
                }
            }
        }
        result.epoch_loss.push_back(pairs ? loss_sum / static_cast<double>(pairs) : 0.0);
    }

    result.table = input;
    std::normal_distribution<double> unit_scale(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
    for (Index i = 0; i < vocab_size; ++i) {
        if (i > Vocabulary::kUnk && counts[static_cast<std::size_t>(i)] > 0) continue;
        for (Index j = 0; j < dim; ++j) result.table(i, j) = unit_scale(rng);
    }
    result.table.row(Vocabulary::kPad).setZero();
    return result;
}

void save_embeddings(const EmbeddingTable& table, const Vocabulary& vocab,
                     const std::filesystem::path& path)
{
    if (static_cast<std::size_t>(table.rows()) != vocab.size()) {
        throw DataError("embedding rows do not match vocabulary size");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << table.rows() << ' ' << table.cols() << '\n';
    out << std::setprecision(17);
    for (Index i = 0; i < table.rows(); ++i) {
        out << vocab.token(static_cast<TokenId>(i));
        for (Index j = 0; j < table.cols(); ++j) out << ' ' << table(i, j);
        out << '\n';
    }
}

LoadedEmbeddings load_embeddings(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embeddings " + path.string());
    Index rows = 0, cols = 0;
    if (!(in >> rows >> cols) || rows < 2 || cols <= 0) {
        throw DataError(path.string() + ": bad header, expected '<vocab_size> <dim>'");
    }
    EmbeddingTable table(rows, cols);
    std::vector<std::string> tokens;
    for (Index i = 0; i < rows; ++i) {
        std::string tok;
        if (!(in >> tok)) throw DataError(path.string() + ": truncated at row " + std::to_string(i));
        for (Index j = 0; j < cols; ++j) {
            if (!(in >> table(i, j))) {
                throw DataError(path.string() + ": bad value at row " + std::to_string(i));
            }
        }
        if (i == Vocabulary::kPad && tok != Vocabulary::kPadToken) {
            throw DataError(path.string() + ": first row must be " + std::string(Vocabulary::kPadToken));
        }
        if (i == Vocabulary::kUnk && tok != Vocabulary::kUnkToken) {
            throw DataError(path.string() + ": second row must be " + std::string(Vocabulary::kUnkToken));
        }
        if (i > Vocabulary::kUnk) tokens.push_back(tok);
    }
    if (!table.allFinite()) throw DataError(path.string() + ": non-finite embedding values");
    table.row(Vocabulary::kPad).setZero();
    return {Vocabulary(tokens), std::move(table)};
}

}  // namespace duallaat
