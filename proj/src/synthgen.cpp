#include "duallaat/synthgen.hpp"

#include "duallaat/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

namespace duallaat {

void SynthConfig::validate() const
{
    auto fraction = [](double x, const char* name) {
        if (!(x >= 0 && x <= 1)) throw UsageError(std::string(name) + " must lie in [0, 1]");
    };
    fraction(overlap_fraction, "overlap_fraction");
    fraction(train_fraction, "train_fraction");
    fraction(val_fraction, "val_fraction");
    if (!(noise_rate >= 0 && noise_rate < 1)) throw UsageError("noise_rate must lie in [0, 1)");
    if (train_fraction + val_fraction > 1) throw UsageError("train and val fractions exceed 1");
    if (n_concepts == 0) throw UsageError("n_concepts must be positive");
    if (n_docs_v1 + n_docs_v2 == 0) throw UsageError("at least one document is required");
    if (!(zipf_s > 0)) throw UsageError("zipf_s must be positive");
    if (signal_tokens == 0) throw UsageError("signal_tokens must be positive");
    if (noise_rate > 0 && filler_vocab == 0) throw UsageError("filler_vocab must be positive when noise_rate > 0");
    if (!(concepts_per_doc_mean >= 1) || !(concepts_per_doc_sd >= 0) || concepts_per_doc_max == 0) {
        throw UsageError("concepts per document must be at least 1");
    }
}

nlohmann::ordered_json to_json(const SynthConfig& c)
{
    return {{"n_concepts", c.n_concepts},
            {"overlap_fraction", c.overlap_fraction},
            {"zipf_s", c.zipf_s},
            {"n_docs_v1", c.n_docs_v1},
            {"n_docs_v2", c.n_docs_v2},
            {"noise_rate", c.noise_rate},
            {"seed", c.seed},
            {"reword", c.reword},
            {"disjoint_vocab", c.disjoint_vocab},
            {"signal_tokens", c.signal_tokens},
            {"filler_vocab", c.filler_vocab},
            {"concepts_per_doc_mean", c.concepts_per_doc_mean},
            {"concepts_per_doc_sd", c.concepts_per_doc_sd},
            {"concepts_per_doc_max", c.concepts_per_doc_max},
            {"train_fraction", c.train_fraction},
            {"val_fraction", c.val_fraction}};
}

SynthConfig synth_config_from_json(SynthConfig c, const nlohmann::json& j)
{
    auto take = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    take("n_concepts", c.n_concepts);
    take("overlap_fraction", c.overlap_fraction);
    take("zipf_s", c.zipf_s);
    take("n_docs_v1", c.n_docs_v1);
    take("n_docs_v2", c.n_docs_v2);
    take("noise_rate", c.noise_rate);
    take("seed", c.seed);
    take("reword", c.reword);
    take("disjoint_vocab", c.disjoint_vocab);
    take("signal_tokens", c.signal_tokens);
    take("filler_vocab", c.filler_vocab);
    take("concepts_per_doc_mean", c.concepts_per_doc_mean);
    take("concepts_per_doc_sd", c.concepts_per_doc_sd);
    take("concepts_per_doc_max", c.concepts_per_doc_max);
    take("train_fraction", c.train_fraction);
    take("val_fraction", c.val_fraction);
    return c;
}

std::vector<double> zipf_probabilities(std::size_t n, double s)
{
    std::vector<double> p(n);
    for (std::size_t k = 0; k < n; ++k) p[k] = std::pow(static_cast<double>(k + 1), -s);
    const double z = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& x : p) x /= z;
    return p;
}

namespace {

// Pronounceable lowercase words, unique across the whole generator.
class Lexicon {
public:
    explicit Lexicon(Rng& rng) : rng_(rng) {}

    std::string fresh()
    {
        static constexpr char kOnset[] = "bdfgklmnprstvz";
        static constexpr char kVowel[] = "aeiou";
        for (;;) {
            const auto syllables = 2 + uniform_index(rng_, 2);
            std::string w;
            for (std::size_t i = 0; i < syllables; ++i) {
                w += kOnset[uniform_index(rng_, sizeof(kOnset) - 1)];
                w += kVowel[uniform_index(rng_, sizeof(kVowel) - 1)];
            }
            if (used_.insert(w).second) return w;
        }
    }

    std::vector<std::string> fresh(std::size_t n)
    {
        std::vector<std::string> out(n);
        for (auto& w : out) w = fresh();
        return out;
    }

private:
    Rng& rng_;
    std::set<std::string> used_;
};

std::string v1_code_id(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%03zu.%02zu", 1 + i / 100, i % 100);
    return buf;
}

std::string v2_code_id(std::size_t i)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%c%02zu.%zu", static_cast<char>('A' + (i / 100) % 26), i % 100, i / 2600);
    return buf;
}

std::string join(const std::vector<std::string>& words)
{
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

// Weighted sampling of k items without replacement (exponential keys).
std::vector<std::size_t> sample_concepts(const std::vector<double>& weights, std::size_t k, Rng& rng)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::pair<double, std::size_t>> keys(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        double u = unit(rng);
        while (u <= 0) u = unit(rng);
        keys[i] = {std::log(u) / weights[i], i};
    }
    k = std::min(k, keys.size());
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(k), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = keys[i].second;
    return out;
}

}  // namespace

SynthCorpus generate(const SynthConfig& config)
{
    config.validate();
    Rng rng(config.seed);
    Lexicon lexicon(rng);
    const std::size_t n = config.n_concepts;
    const auto prevalence = zipf_probabilities(n, config.zipf_s);

    // Version coverage: a uniformly chosen overlap_fraction of concepts is shared,
    // the rest alternate between V1-only and V2-only.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    const auto n_shared = static_cast<std::size_t>(std::llround(config.overlap_fraction * static_cast<double>(n)));
    std::vector<int> coverage(n);  // 0 shared, 1 V1 only, 2 V2 only
    for (std::size_t i = 0; i < n; ++i) coverage[order[i]] = i < n_shared ? 0 : 1 + static_cast<int>((i - n_shared) % 2);

    SynthCorpus out;
    out.concepts.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& c = out.concepts[i];
        c.id = i;
        c.prevalence = prevalence[i];
        c.signal[0] = lexicon.fresh(config.signal_tokens);
        c.synonyms[0] = lexicon.fresh(config.signal_tokens);
        if (config.disjoint_vocab) {
            c.signal[1] = lexicon.fresh(config.signal_tokens);
            c.synonyms[1] = lexicon.fresh(config.signal_tokens);
        } else {
            c.signal[1] = c.signal[0];
            c.synonyms[1] = c.synonyms[0];
        }
    }
    std::array<std::vector<std::string>, 2> filler;
    filler[0] = lexicon.fresh(config.filler_vocab);
    filler[1] = config.disjoint_vocab ? lexicon.fresh(config.filler_vocab) : filler[0];

    std::vector<CodeEntry> entries;
    std::vector<std::pair<std::size_t, Version>> entry_concept;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& c = out.concepts[i];
        if (coverage[i] != 2) {
            entries.push_back({v1_code_id(i), Version::V9, join(c.signal[0])});
            entry_concept.emplace_back(i, Version::V9);
        }
        if (coverage[i] != 1) {
            auto words = c.signal[1];
            if (coverage[i] == 0 && config.reword) {
                std::vector<std::size_t> swap(words.size());
                std::iota(swap.begin(), swap.end(), 0);
                shuffle(swap, rng);
                const auto n_swap = 1 + uniform_index(rng, words.size());
                for (std::size_t s = 0; s < n_swap; ++s) words[swap[s]] = c.synonyms[1][swap[s]];
            }
            entries.push_back({v2_code_id(i), Version::V10, join(words)});
            entry_concept.emplace_back(i, Version::V10);
        }
    }
    out.corpus.registry = CodeRegistry(entries);
    for (const auto& [i, v] : entry_concept) {
        const auto idx = *out.corpus.registry.find({v == Version::V9 ? v1_code_id(i) : v2_code_id(i), v});
        (v == Version::V9 ? out.concepts[i].v1_code : out.concepts[i].v2_code) = idx;
    }

    std::normal_distribution<double> doc_size(config.concepts_per_doc_mean, config.concepts_per_doc_sd);
    std::bernoulli_distribution use_synonym(0.5);
    const std::size_t max_k = std::min(config.concepts_per_doc_max, n);

    std::size_t empty_first_draws = 0;
    std::size_t total_docs = 0;
    for (int slot = 0; slot < 2; ++slot) {
        const Version v = slot == 0 ? Version::V9 : Version::V10;
        const std::size_t n_docs = slot == 0 ? config.n_docs_v1 : config.n_docs_v2;
        total_docs += n_docs;
        std::vector<Document> docs;
        for (std::size_t d = 0; d < n_docs; ++d) {
            Document doc;
            doc.version = v;
            char id[32];
            std::snprintf(id, sizeof id, "%s-%06zu", slot == 0 ? "v1" : "v2", d);
            doc.doc_id = id;
            std::vector<std::size_t> picked;
            // Redraw a concept set that yields no code in this version; the
            // rate of such first draws is bounded below.
            for (int attempt = 0;; ++attempt) {
                const auto k = static_cast<std::size_t>(
                    std::clamp(std::llround(doc_size(rng)), 1LL, static_cast<long long>(max_k)));
                picked = sample_concepts(prevalence, k, rng);
                doc.gold.clear();
                for (auto c : picked) {
                    const auto& code = slot == 0 ? out.concepts[c].v1_code : out.concepts[c].v2_code;
                    if (code) doc.gold.push_back(*code);
                }
                if (!doc.gold.empty()) break;
                if (attempt == 0) ++empty_first_draws;
                if (attempt > 1000) throw DataError("no concept set with a code in this version could be drawn");
            }
            std::sort(doc.gold.begin(), doc.gold.end());

            std::vector<std::vector<std::string>> pieces;
            std::size_t signal_count = 0;
            for (auto c : picked) {
                auto words = out.concepts[c].signal[static_cast<std::size_t>(slot)];
                for (std::size_t w = 0; w < words.size(); ++w) {
                    if (use_synonym(rng)) words[w] = out.concepts[c].synonyms[static_cast<std::size_t>(slot)][w];
                }
                signal_count += words.size();
                pieces.push_back(std::move(words));
            }
            const auto n_filler = static_cast<std::size_t>(
                std::llround(config.noise_rate * static_cast<double>(signal_count) / (1.0 - config.noise_rate)));
            const auto& fill = filler[static_cast<std::size_t>(slot)];
            for (std::size_t f = 0; f < n_filler; ++f) pieces.push_back({fill[uniform_index(rng, fill.size())]});
            shuffle(pieces, rng);
            std::vector<std::string> tokens;
            for (const auto& p : pieces) tokens.insert(tokens.end(), p.begin(), p.end());
            doc.text = join(tokens);
            docs.push_back(std::move(doc));
        }

        std::vector<std::size_t> idx(docs.size());
        std::iota(idx.begin(), idx.end(), 0);
        shuffle(idx, rng);
        const auto n_train = static_cast<std::size_t>(std::llround(config.train_fraction * static_cast<double>(n_docs)));
        const auto n_val = static_cast<std::size_t>(std::llround(config.val_fraction * static_cast<double>(n_docs)));
        for (std::size_t r = 0; r < idx.size(); ++r) {
            docs[idx[r]].split = r < n_train ? Split::Train : r < n_train + n_val ? Split::Val : Split::Test;
        }
        for (auto& d : docs) out.corpus.documents.push_back(std::move(d));
    }

    if (static_cast<double>(empty_first_draws) > 0.05 * static_cast<double>(total_docs)) {
        throw DataError(std::to_string(empty_first_draws) + " of " + std::to_string(total_docs) +
                        " documents drew no code of their version; raise overlap_fraction or "
                        "concepts_per_doc_mean");
    }
    std::sort(out.corpus.documents.begin(), out.corpus.documents.end(),
              [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
    validate_corpus(out.corpus);
    return out;
}

}  // namespace duallaat
