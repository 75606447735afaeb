#pragma once

#include "duallaat/data.hpp"
#include "duallaat/tensor.hpp"

#include <map>
#include <vector>

namespace duallaat {

struct LabelSpace {
    std::vector<CodeIndex> codes;  // shuffled positives + negatives, one version
    std::size_t pos_count = 0;
    std::size_t neg_count = 0;
    Version version = Version::V10;

    std::size_t size() const { return codes.size(); }
};

struct Batch {
    std::vector<const Document*> documents;
    LabelSpace label_space;
    Matrix<double> targets;  // documents x label_space, 1 where the code is gold
};

constexpr std::size_t kDefaultBatchSize = 32;
constexpr std::size_t kDefaultLabelSpaceSize = 8192;

// Positives are the batch's deduplicated gold codes; negatives are drawn
// uniformly without replacement from the rest of the pool. A pool smaller
// than label_space_size shrinks the label space to the pool.
LabelSpace build_label_space(const std::vector<const Document*>& batch_docs,
                             const std::vector<CodeIndex>& code_pool, std::size_t label_space_size,
                             Rng& rng);

Matrix<double> batch_targets(const std::vector<const Document*>& docs, const std::vector<CodeIndex>& codes);

struct BatcherConfig {
    std::size_t batch_size = kDefaultBatchSize;
    std::size_t label_space_size = kDefaultLabelSpaceSize;
};

// Version-pure batches over a fixed training set, globally shuffled per epoch.
class Batcher {
public:
    Batcher(std::vector<const Document*> training, const CodeRegistry& registry, BatcherConfig config);

    std::vector<Batch> epoch(Rng& rng) const;
    std::size_t batches_per_epoch() const;
    const std::vector<CodeIndex>& pool(Version v) const { return pools_.at(v); }

private:
    std::map<Version, std::vector<const Document*>> by_version_;
    std::map<Version, std::vector<CodeIndex>> pools_;
    std::map<Version, std::size_t> space_size_;
    BatcherConfig config_;
};

}  // namespace duallaat
