#include "duallaat/error.hpp"
#include "duallaat/text.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace duallaat;
using testing::doc;

TEST_CASE("tokenizer lowercases alphanumeric runs")
{
    CHECK(tokenize("Acute MI, type 2") == std::vector<std::string>{"acute", "mi", "type", "2"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("  ...  ").empty());
    CHECK(tokenize("E11.9 pt's") == std::vector<std::string>{"e11", "9", "pt", "s"});
}

TEST_CASE("tokenizing a token list again is the identity")
{
    for (const auto& t : tokenize("Chest pain; r/o MI x3 days, BP 140/90")) {
        CHECK(tokenize(t) == std::vector<std::string>{t});
    }
}

TEST_CASE("vocabulary keeps train tokens and descriptions at min_count, ordered by count")
{
    CodeRegistry reg({{"A", Version::V10, "alpha beta"}});
    std::vector<Document> docs{doc("1", "beta gamma gamma", {0}), doc("2", "gamma delta", {0}),
                               doc("3", "leak leak leak leak", {0}, Split::Test)};
    const auto v = build_vocab(docs, reg, 1);
    CHECK(v.token(0) == "<pad>");
    CHECK(v.token(1) == "<unk>");
    CHECK(v.token(2) == "gamma");  // 3
    CHECK(v.token(3) == "beta");   // 2
    CHECK(v.token(4) == "alpha");  // 1, then alphabetical
    CHECK(v.token(5) == "delta");
    CHECK(v.id("leak") == Vocabulary::kUnk);  // test split never counted

    const auto v2 = build_vocab(docs, reg, 2);
    CHECK(v2.size() == 4);
    CHECK(v2.id("alpha") == Vocabulary::kUnk);
    CHECK(v2.id("beta") != Vocabulary::kUnk);
}

TEST_CASE("encode and decode invert each other and truncate")
{
    Vocabulary v({"a", "b", "c"});
    const auto ids = v.encode_text("c a b z");
    CHECK(ids == TokenSeq{4, 2, 3, Vocabulary::kUnk});
    CHECK(v.encode(v.decode({2, 3, 4})) == TokenSeq{2, 3, 4});
    CHECK(v.encode_text("a b c a b c", 4).size() == 4);
    CHECK(v.hash() == Vocabulary({"a", "b", "c"}).hash());
    CHECK(v.hash() != Vocabulary({"a", "c", "b"}).hash());
}

TEST_CASE("skip-gram pulls co-occurring tokens together and keeps PAD at zero")
{
    // "x y" always appear side by side; "p q" likewise; the two pairs never meet.
    std::vector<std::string> tokens{"x", "y", "p", "q"};
    for (int i = 0; i < 30; ++i) tokens.push_back("f" + std::to_string(i));
    Vocabulary v(tokens);
    std::vector<TokenSeq> corpus;
    Rng rng(3);
    for (int n = 0; n < 400; ++n) {
        TokenSeq s;
        for (int k = 0; k < 6; ++k) s.push_back(static_cast<TokenId>(6 + uniform_index(rng, 30)));
        s.insert(s.begin() + static_cast<std::ptrdiff_t>(uniform_index(rng, 6)), {n % 2 ? v.id("x") : v.id("p"),
                                                                                 n % 2 ? v.id("y") : v.id("q")});
        corpus.push_back(s);
    }
    SkipGramConfig cfg;
    cfg.dim = 16;
    cfg.epochs = 3;
    const auto r = pretrain_embeddings(corpus, v, cfg);
    auto cosine = [&](const std::string& a, const std::string& b) {
        const auto u = r.table.row(v.id(a)), w = r.table.row(v.id(b));
        return u.dot(w) / (u.norm() * w.norm());
    };
    CHECK(cosine("x", "y") > cosine("x", "q"));
    CHECK(cosine("p", "q") > cosine("p", "y"));
    CHECK(r.table.row(0).isZero(0));
    CHECK(r.table.allFinite());
}

TEST_CASE("skip-gram loss does not increase across epochs on a fixed corpus")
{
    Vocabulary v({"a", "b", "c", "d", "e", "f"});
    std::vector<TokenSeq> corpus;
    for (int n = 0; n < 200; ++n) corpus.push_back({2, 3, 4, 2, 3, 4, 5, 6, 7, 5, 6, 7});
    SkipGramConfig cfg;
    cfg.dim = 8;
    cfg.epochs = 5;
    const auto r = pretrain_embeddings(corpus, v, cfg);
    REQUIRE(r.epoch_loss.size() == 5);
    for (std::size_t e = 1; e < r.epoch_loss.size(); ++e) CHECK(r.epoch_loss[e] <= r.epoch_loss[e - 1] + 1e-6);
}

TEST_CASE("pretraining an empty corpus is an error and unseen tokens get random rows")
{
    Vocabulary v({"a", "b"});
    CHECK_THROWS_AS(pretrain_embeddings({}, v, {}), DataError);
    SkipGramConfig cfg;
    cfg.dim = 4;
    const auto r = pretrain_embeddings({{2, 2, 2, 2}}, v, cfg);
    CHECK(r.table.row(3).norm() > 0);  // "b" never occurs
}

TEST_CASE("embedding text files round trip and check reserved rows")
{
    testing::TempDir dir;
    Vocabulary v({"tok"});
    Matrix<double> t(3, 2);
    t << 0, 0, 0.5, -1.25, 3, 1e-7;
    save_embeddings(t, v, dir / "e.txt");
    const auto back = load_embeddings(dir / "e.txt");
    CHECK(back.vocab.hash() == v.hash());
    CHECK((back.table - t).cwiseAbs().maxCoeff() == 0.0);
    CHECK(testing::read_file(dir / "e.txt").rfind("3 2\n", 0) == 0);

    testing::write_file(dir / "bad.txt", "2 1\nfoo 0\n<unk> 0\n");
    CHECK_THROWS_AS(load_embeddings(dir / "bad.txt"), DataError);
}
