#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace duallaat {

// Tag of the coding system a code or note belongs to. V9/V10 are the
// ICD-9/ICD-10 instances; nothing downstream depends on the ordinal.
enum class Version : std::uint8_t { V9, V10 };
enum class Split : std::uint8_t { Train, Val, Test };

std::string_view to_string(Version v);
std::string_view to_string(Split s);
Version parse_version(std::string_view s);
Split parse_split(std::string_view s);

using CodeIndex = std::int32_t;

struct CodeKey {
    std::string code_id;
    Version version = Version::V10;

    auto operator<=>(const CodeKey&) const = default;
};

struct CodeEntry {
    std::string code_id;
    Version version = Version::V10;
    std::string description;

    CodeKey key() const { return {code_id, version}; }
};

// Codes ordered by (version, code_id); an index is stable for the registry's lifetime.
class CodeRegistry {
public:
    CodeRegistry() = default;
    explicit CodeRegistry(std::vector<CodeEntry> entries);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const CodeEntry& operator[](CodeIndex i) const { return entries_[static_cast<std::size_t>(i)]; }
    const std::vector<CodeEntry>& entries() const { return entries_; }

    std::optional<CodeIndex> find(const CodeKey& key) const;
    std::vector<CodeIndex> codes_of(Version v) const;

private:
    std::vector<CodeEntry> entries_;
    std::map<CodeKey, CodeIndex> index_;
};

struct Document {
    std::string doc_id;
    std::string text;
    std::vector<CodeIndex> gold;  // sorted, unique registry indices
    Split split = Split::Train;
    Version version = Version::V10;
};

struct Corpus {
    std::vector<Document> documents;
    CodeRegistry registry;
};

// Field names of the record stream, for exports that label them differently.
struct DatasetSchema {
    std::string doc_id = "doc_id";
    std::string text = "text";
    std::string codes = "codes";
    std::string version = "version";
    std::string split = "split";
};

CodeRegistry load_registry(const std::filesystem::path& path);
void save_registry(const CodeRegistry& registry, const std::filesystem::path& path);

// Reads one or more record streams against a shared registry. Documents are
// ordered by doc_id; a referenced code missing from the registry is an error.
Corpus load_dataset(const std::vector<std::filesystem::path>& corpus_paths,
                    const std::filesystem::path& registry_path,
                    const DatasetSchema& schema = {});
Corpus load_dataset(const std::filesystem::path& corpus_path,
                    const std::filesystem::path& registry_path,
                    const DatasetSchema& schema = {});

void save_corpus(const std::vector<Document>& documents, const CodeRegistry& registry,
                 const std::filesystem::path& path);

// Throws DataError if any document violates version purity or carries a
// dangling code index.
void validate_corpus(const Corpus& corpus);

struct CodeStratum {
    std::set<CodeIndex> frequent;
    std::set<CodeIndex> rare;
    std::set<CodeIndex> full;
    std::map<CodeIndex, std::int64_t> counts;
};

constexpr std::int64_t kDefaultRareThreshold = 10;

// Counts over every split of one database; documents must share one version.
CodeStratum compute_strata(const std::vector<Document>& documents,
                           std::int64_t threshold = kDefaultRareThreshold);

enum class StratumKind { Frequent, Rare, Full };
std::string_view to_string(StratumKind k);
StratumKind parse_stratum(std::string_view s);
const std::set<CodeIndex>& stratum_codes(const CodeStratum& stratum, StratumKind kind);

struct StratumStats {
    std::size_t code_count = 0;
    std::size_t note_count = 0;       // notes with at least one code in the stratum
    std::size_t total_notes = 0;
    double median = 0, q1 = 0, q3 = 0;
    double mean = 0, stddev = 0;      // population standard deviation
};

StratumStats stratum_stats(const std::vector<Document>& documents,
                           const std::set<CodeIndex>& codes);

std::vector<const Document*> select_split(const std::vector<Document>& documents, Split split);

}  // namespace duallaat
