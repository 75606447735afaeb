#include "duallaat/batcher.hpp"

#include "duallaat/error.hpp"

#include <algorithm>
#include <iostream>
#include <set>

namespace duallaat {

LabelSpace build_label_space(const std::vector<const Document*>& batch_docs,
                             const std::vector<CodeIndex>& code_pool, std::size_t label_space_size, Rng& rng)
{
    if (batch_docs.empty()) throw DataError("cannot build a label space for an empty batch");
    LabelSpace ls;
    ls.version = batch_docs.front()->version;

    std::set<CodeIndex> positives;
    for (const auto* d : batch_docs) {
        if (d->version != ls.version) throw DataError("batch mixes code versions");
        positives.insert(d->gold.begin(), d->gold.end());
    }
    std::size_t target = label_space_size;
    if (code_pool.size() < target) {
        std::cerr << "warning: code pool (" << code_pool.size() << ") is smaller than the label space size ("
                  << label_space_size << "); using the whole pool\n";
        target = code_pool.size();
    }
    if (positives.size() > target) {
        throw UsageError("batch has " + std::to_string(positives.size()) +
                         " distinct gold codes but the label space holds " + std::to_string(target) +
                         "; raise the label space size or lower the batch size");
    }

    std::vector<CodeIndex> candidates;
    candidates.reserve(code_pool.size());
    for (auto c : code_pool) {
        if (!positives.count(c)) candidates.push_back(c);
    }
    const std::size_t need = target - positives.size();
    if (need > candidates.size()) throw DataError("code pool does not contain the batch's gold codes");
    // Partial Fisher-Yates: the first `need` slots are a uniform sample.
    for (std::size_t i = 0; i < need; ++i) {
        const auto j = i + uniform_index(rng, candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
    }
    ls.codes.assign(positives.begin(), positives.end());
    ls.codes.insert(ls.codes.end(), candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(need));
    ls.pos_count = positives.size();
    ls.neg_count = need;
    shuffle(ls.codes, rng);
    return ls;
}

Matrix<double> batch_targets(const std::vector<const Document*>& docs, const std::vector<CodeIndex>& codes)
{
    Matrix<double> t = Matrix<double>::Zero(static_cast<Index>(docs.size()), static_cast<Index>(codes.size()));
    for (std::size_t i = 0; i < docs.size(); ++i) {
        for (std::size_t j = 0; j < codes.size(); ++j) {
            if (std::binary_search(docs[i]->gold.begin(), docs[i]->gold.end(), codes[j])) {
                t(static_cast<Index>(i), static_cast<Index>(j)) = 1.0;
            }
        }
    }
    return t;
}

Batcher::Batcher(std::vector<const Document*> training, const CodeRegistry& registry, BatcherConfig config)
    : config_(config)
{
    if (config_.batch_size == 0 || config_.label_space_size == 0) {
        throw UsageError("batch size and label space size must be positive");
    }
    if (training.empty()) throw DataError("no training documents");
    for (const auto* d : training) by_version_[d->version].push_back(d);
    for (const auto& [v, docs] : by_version_) {
        pools_[v] = registry.codes_of(v);
        auto& size = space_size_[v];
        size = std::min(config_.label_space_size, pools_[v].size());
        if (size < config_.label_space_size) {
            std::cerr << "warning: " << to_string(v) << " code pool (" << size
                      << ") is smaller than the label space size (" << config_.label_space_size
                      << "); using the whole pool\n";
        }
    }
}

std::size_t Batcher::batches_per_epoch() const
{
    std::size_t n = 0;
    for (const auto& [v, docs] : by_version_) n += (docs.size() + config_.batch_size - 1) / config_.batch_size;
    return n;
}

std::vector<Batch> Batcher::epoch(Rng& rng) const
{
    std::vector<std::vector<const Document*>> groups;
    for (const auto& [v, docs] : by_version_) {
        auto order = docs;
        shuffle(order, rng);
        for (std::size_t i = 0; i < order.size(); i += config_.batch_size) {
            const auto end = std::min(order.size(), i + config_.batch_size);
            groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                                order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    shuffle(groups, rng);

    std::vector<Batch> batches;
    batches.reserve(groups.size());
    for (auto& g : groups) {
        Batch b;
        const auto v = g.front()->version;
        b.label_space = build_label_space(g, pools_.at(v), space_size_.at(v), rng);
        b.targets = batch_targets(g, b.label_space.codes);
        b.documents = std::move(g);
        batches.push_back(std::move(b));
    }
    return batches;
}

}  // namespace duallaat
