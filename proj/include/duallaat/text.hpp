#pragma once

#include "duallaat/data.hpp"
#include "duallaat/tensor.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace duallaat {

// Lowercased maximal runs of ASCII letters and digits.
std::vector<std::string> tokenize(std::string_view text);

class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kUnk = 1;
    static constexpr std::string_view kPadToken = "<pad>";
    static constexpr std::string_view kUnkToken = "<unk>";

    Vocabulary();
    // Tokens in id order, excluding the two reserved ones.
    explicit Vocabulary(const std::vector<std::string>& tokens);

    std::size_t size() const { return tokens_.size(); }
    TokenId id(std::string_view token) const;
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    TokenSeq encode(const std::vector<std::string>& tokens, std::size_t max_len = 0) const;
    TokenSeq encode_text(std::string_view text, std::size_t max_len = 0) const;
    std::vector<std::string> decode(const TokenSeq& ids) const;

    // FNV-1a over the id-ordered token list.
    std::uint64_t hash() const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

constexpr std::size_t kDefaultMinCount = 3;

// Counts tokens of train-split notes and of every code description. Kept
// tokens are ordered by (count desc, token asc).
Vocabulary build_vocab(const std::vector<Document>& documents, const CodeRegistry& registry,
                       std::size_t min_count = kDefaultMinCount);

using EmbeddingTable = Matrix<double>;  // vocab_size x dim, row 0 is PAD

struct SkipGramConfig {
    Index dim = 100;
    int window = 5;
    int negatives = 5;
    int epochs = 1;
    double learning_rate = 0.025;
    double min_learning_rate_ratio = 1e-4;
    std::uint64_t seed = 13;
};

struct PretrainResult {
    EmbeddingTable table;
    std::vector<double> epoch_loss;  // mean negative log-likelihood per training pair
};

// Skip-gram with negative sampling over the given token sequences. Tokens
// that never occur get a random unit-scale row; the PAD row is zero.
PretrainResult pretrain_embeddings(const std::vector<TokenSeq>& corpus, const Vocabulary& vocab,
                                   const SkipGramConfig& config);

// Text format: "<vocab_size> <dim>" then one "token v1 ... vdim" line per row.
void save_embeddings(const EmbeddingTable& table, const Vocabulary& vocab,
                     const std::filesystem::path& path);

struct LoadedEmbeddings {
    Vocabulary vocab;
    EmbeddingTable table;
};
LoadedEmbeddings load_embeddings(const std::filesystem::path& path);

}  // namespace duallaat
