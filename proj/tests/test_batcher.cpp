#include "duallaat/batcher.hpp"
#include "duallaat/error.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace duallaat;
using testing::doc;

namespace {

// 20 V9 codes and 30 V10 codes.
CodeRegistry registry()
{
    std::vector<CodeEntry> e;
    for (int i = 0; i < 20; ++i) e.push_back({"9-" + std::to_string(100 + i), Version::V9, "old " + std::to_string(i)});
    for (int i = 0; i < 30; ++i) e.push_back({"X" + std::to_string(100 + i), Version::V10, "new " + std::to_string(i)});
    return CodeRegistry(std::move(e));
}

std::vector<Document> documents(const CodeRegistry& r)
{
    const auto v9 = r.codes_of(Version::V9);
    const auto v10 = r.codes_of(Version::V10);
    std::vector<Document> docs;
    for (int i = 0; i < 23; ++i) {
        const auto& pool = i % 3 == 0 ? v9 : v10;
        const auto v = i % 3 == 0 ? Version::V9 : Version::V10;
        std::vector<CodeIndex> gold{pool[static_cast<std::size_t>(i) % pool.size()],
                                    pool[static_cast<std::size_t>(i * 7 + 3) % pool.size()]};
        std::sort(gold.begin(), gold.end());
        gold.erase(std::unique(gold.begin(), gold.end()), gold.end());
        docs.push_back(doc("d" + std::to_string(i), "w", gold, Split::Train, v));
    }
    return docs;
}

std::vector<const Document*> pointers(const std::vector<Document>& docs)
{
    std::vector<const Document*> out;
    for (const auto& d : docs) out.push_back(&d);
    return out;
}

}  // namespace

TEST_CASE("every epoch covers each training note once in version-pure batches")
{
    const auto reg = registry();
    const auto docs = documents(reg);
    Batcher b(pointers(docs), reg, {4, 12});
    Rng rng(3);
    for (int epoch = 0; epoch < 3; ++epoch) {
        const auto batches = b.epoch(rng);
        CHECK(batches.size() == b.batches_per_epoch());
        std::map<const Document*, int> seen;
        for (const auto& batch : batches) {
            CHECK(batch.documents.size() <= 4);
            const auto& ls = batch.label_space;
            CHECK(ls.size() == 12);
            CHECK(ls.pos_count + ls.neg_count == ls.size());
            CHECK(std::set<CodeIndex>(ls.codes.begin(), ls.codes.end()).size() == ls.size());
            const auto pool = b.pool(ls.version);
            std::set<CodeIndex> gold;
            for (const auto* d : batch.documents) {
                ++seen[d];
                CHECK(d->version == ls.version);
                gold.insert(d->gold.begin(), d->gold.end());
            }
            CHECK(gold.size() == ls.pos_count);
            for (auto c : ls.codes) CHECK(std::binary_search(pool.begin(), pool.end(), c));
            for (auto c : gold) CHECK(std::find(ls.codes.begin(), ls.codes.end(), c) != ls.codes.end());
            for (std::size_t i = 0; i < batch.documents.size(); ++i)
                for (std::size_t j = 0; j < ls.size(); ++j) {
                    const auto& g = batch.documents[i]->gold;
                    const bool is_gold = std::find(g.begin(), g.end(), ls.codes[j]) != g.end();
                    CHECK(batch.targets(static_cast<Index>(i), static_cast<Index>(j)) == (is_gold ? 1.0 : 0.0));
                }
        }
        CHECK(seen.size() == docs.size());
        for (const auto& [d, n] : seen) CHECK(n == 1);
    }
}

TEST_CASE("batching is reproducible from the seed and changes across epochs")
{
    const auto reg = registry();
    const auto docs = documents(reg);
    Batcher b(pointers(docs), reg, {5, 10});
    Rng r1(42), r2(42);
    const auto a = b.epoch(r1);
    const auto c = b.epoch(r2);
    REQUIRE(a.size() == c.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].documents == c[i].documents);
        CHECK(a[i].label_space.codes == c[i].label_space.codes);
    }
    const auto next = b.epoch(r1);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].documents != next[i].documents;
    CHECK(differs);
}

TEST_CASE("negatives are uniform over the non-gold pool")
{
    const auto reg = registry();
    const auto pool = reg.codes_of(Version::V10);
    auto d = doc("a", "w", {pool[0], pool[1]});
    const std::vector<const Document*> batch{&d};
    Rng rng(9);
    std::map<CodeIndex, int> hits;
    std::map<std::size_t, int> first_slot_gold;
    const int trials = 20000;
    for (int t = 0; t < trials; ++t) {
        const auto ls = build_label_space(batch, pool, 8, rng);
        REQUIRE(ls.pos_count == 2);
        for (auto c : ls.codes) ++hits[c];
        ++first_slot_gold[ls.codes[0] == pool[0] || ls.codes[0] == pool[1]];
    }
    CHECK(hits[pool[0]] == trials);
    // 6 of 28 negatives per draw: expected rate 3/14 for each.
    const double expected = trials * 6.0 / 28.0;
    for (std::size_t i = 2; i < pool.size(); ++i) CHECK(std::abs(hits[pool[i]] - expected) < 5 * std::sqrt(expected));
    // Positions are shuffled: gold lands in the first slot about 2/8 of the time.
    CHECK(std::abs(first_slot_gold[1] - trials / 4.0) < 5 * std::sqrt(trials * 0.25 * 0.75));
}

TEST_CASE("small pools shrink the label space to the pool")
{
    const auto reg = registry();
    const auto pool = reg.codes_of(Version::V9);
    auto d = doc("a", "w", {pool[3]}, Split::Train, Version::V9);
    Rng rng(1);
    const auto ls = build_label_space({&d}, pool, 100, rng);
    CHECK(ls.size() == pool.size());
    auto sorted = ls.codes;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == pool);
}

TEST_CASE("label space errors")
{
    const auto reg = registry();
    const auto pool = reg.codes_of(Version::V10);
    auto a = doc("a", "w", {pool[0], pool[1], pool[2]});
    auto b = doc("b", "w", {reg.codes_of(Version::V9)[0]}, Split::Train, Version::V9);
    Rng rng(1);
    CHECK_THROWS_AS(build_label_space({&a}, pool, 2, rng), UsageError);
    CHECK_THROWS_AS(build_label_space({&a, &b}, pool, 10, rng), DataError);
    CHECK_THROWS_AS(build_label_space({}, pool, 10, rng), DataError);
    CHECK_THROWS_AS(Batcher({}, reg, {4, 8}), DataError);
    CHECK_THROWS_AS(Batcher({&a}, reg, {0, 8}), UsageError);
}
