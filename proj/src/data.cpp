#include "duallaat/data.hpp"

#include "duallaat/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace duallaat {

using nlohmann::json;

std::string_view to_string(Version v)
{
    return v == Version::V9 ? "V9" : "V10";
}

std::string_view to_string(Split s)
{
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "train";
}

Version parse_version(std::string_view s)
{
    if (s == "V9") return Version::V9;
    if (s == "V10") return Version::V10;
    throw DataError("unknown version tag '" + std::string(s) + "'");
}

Split parse_split(std::string_view s)
{
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw DataError("unknown split '" + std::string(s) + "'");
}

CodeRegistry::CodeRegistry(std::vector<CodeEntry> entries) : entries_(std::move(entries))
{
    std::sort(entries_.begin(), entries_.end(),
              [](const CodeEntry& a, const CodeEntry& b) { return a.key() < b.key(); });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.description.empty()) {
            throw DataError("code " + e.code_id + " (" + std::string(to_string(e.version)) +
                            ") has an empty description");
        }
        if (!index_.emplace(e.key(), static_cast<CodeIndex>(i)).second) {
            throw DataError("duplicate registry entry for code " + e.code_id + " (" +
                            std::string(to_string(e.version)) + ")");
        }
    }
}

std::optional<CodeIndex> CodeRegistry::find(const CodeKey& key) const
{
    auto it = index_.find(key);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::vector<CodeIndex> CodeRegistry::codes_of(Version v) const
{
    std::vector<CodeIndex> out;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].version == v) out.push_back(static_cast<CodeIndex>(i));
    }
    return out;
}

CodeRegistry load_registry(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open registry " + path.string());
    std::vector<CodeEntry> entries;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto t1 = line.find('\t');
        const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string::npos) {
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": expected version<TAB>code_id<TAB>description");
        }
        CodeEntry e;
        try {
            e.version = parse_version(line.substr(0, t1));
        } catch (const DataError& err) {
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + err.what());
        }
        e.code_id = line.substr(t1 + 1, t2 - t1 - 1);
        e.description = line.substr(t2 + 1);
        entries.push_back(std::move(e));
    }
    return CodeRegistry(std::move(entries));
}

void save_registry(const CodeRegistry& registry, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& e : registry.entries()) {
        out << to_string(e.version) << '\t' << e.code_id << '\t' << e.description << '\n';
    }
}

namespace {

struct RawRecord {
    Document doc;
    std::vector<std::string> codes;
};

RawRecord parse_record(const std::string& line, const DatasetSchema& schema)
{
    const json j = json::parse(line);
    RawRecord r;
    r.doc.doc_id = j.at(schema.doc_id).get<std::string>();
    r.doc.text = j.at(schema.text).get<std::string>();
    r.doc.version = parse_version(j.at(schema.version).get<std::string>());
    r.doc.split = parse_split(j.at(schema.split).get<std::string>());
    r.codes = j.at(schema.codes).get<std::vector<std::string>>();
    return r;
}

}  // namespace

Corpus load_dataset(const std::vector<std::filesystem::path>& corpus_paths,
                    const std::filesystem::path& registry_path, const DatasetSchema& schema)
{
    Corpus corpus;
    corpus.registry = load_registry(registry_path);

    std::set<std::string> missing;
    for (const auto& path : corpus_paths) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open corpus " + path.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            RawRecord rec;
            try {
                rec = parse_record(line, schema);
            } catch (const std::exception& e) {
                throw DataError(path.string() + ":" + std::to_string(line_no) +
                                ": malformed record: " + e.what());
            }
            for (const auto& code : rec.codes) {
                auto idx = corpus.registry.find({code, rec.doc.version});
                if (!idx) {
                    missing.insert(code + " (" + std::string(to_string(rec.doc.version)) + ")");
                    continue;
                }
                rec.doc.gold.push_back(*idx);
            }
            std::sort(rec.doc.gold.begin(), rec.doc.gold.end());
            rec.doc.gold.erase(std::unique(rec.doc.gold.begin(), rec.doc.gold.end()),
                               rec.doc.gold.end());
            corpus.documents.push_back(std::move(rec.doc));
        }
    }
    if (!missing.empty()) {
        std::string msg = "codes without a registry description:";
        for (const auto& m : missing) msg += " " + m;
        throw DataError(msg);
    }
    std::stable_sort(corpus.documents.begin(), corpus.documents.end(),
                     [](const Document& a, const Document& b) { return a.doc_id < b.doc_id; });
    validate_corpus(corpus);
    return corpus;
}

Corpus load_dataset(const std::filesystem::path& corpus_path,
                    const std::filesystem::path& registry_path, const DatasetSchema& schema)
{
    return load_dataset(std::vector<std::filesystem::path>{corpus_path}, registry_path, schema);
}

void save_corpus(const std::vector<Document>& documents, const CodeRegistry& registry,
                 const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& d : documents) {
        nlohmann::ordered_json codes = nlohmann::ordered_json::array();
        for (auto c : d.gold) codes.push_back(registry[c].code_id);
        nlohmann::ordered_json j;
        j["doc_id"] = d.doc_id;
        j["text"] = d.text;
        j["codes"] = std::move(codes);
        j["version"] = to_string(d.version);
        j["split"] = to_string(d.split);
        out << j.dump() << '\n';
    }
}

void validate_corpus(const Corpus& corpus)
{
    const auto n_codes = static_cast<CodeIndex>(corpus.registry.size());
    for (const auto& d : corpus.documents) {
        for (auto c : d.gold) {
            if (c < 0 || c >= n_codes) {
                throw DataError("document " + d.doc_id + " references an unknown code index");
            }
            if (corpus.registry[c].version != d.version) {
                throw DataError("document " + d.doc_id + " mixes code versions");
            }
        }
        if (d.split == Split::Train && d.gold.empty()) {
            throw DataError("training document " + d.doc_id + " has no gold codes");
        }
    }
}

CodeStratum compute_strata(const std::vector<Document>& documents, std::int64_t threshold)
{
    if (documents.empty()) throw DataError("cannot compute strata of an empty corpus");
    const Version v = documents.front().version;
    CodeStratum s;
    for (const auto& d : documents) {
        if (d.version != v) throw DataError("strata must be computed over one code version");
        for (auto c : d.gold) ++s.counts[c];
    }
    for (const auto& [code, count] : s.counts) {
        s.full.insert(code);
        (count >= threshold ? s.frequent : s.rare).insert(code);
    }
    return s;
}

std::string_view to_string(StratumKind k)
{
    switch (k) {
    case StratumKind::Frequent: return "frequent";
    case StratumKind::Rare: return "rare";
    case StratumKind::Full: return "full";
    }
    return "full";
}

StratumKind parse_stratum(std::string_view s)
{
    if (s == "frequent") return StratumKind::Frequent;
    if (s == "rare") return StratumKind::Rare;
    if (s == "full") return StratumKind::Full;
    throw UsageError("unknown stratum '" + std::string(s) + "'");
}

const std::set<CodeIndex>& stratum_codes(const CodeStratum& stratum, StratumKind kind)
{
    switch (kind) {
    case StratumKind::Frequent: return stratum.frequent;
    case StratumKind::Rare: return stratum.rare;
    case StratumKind::Full: return stratum.full;
    }
    return stratum.full;
}

namespace {

// Linear interpolation between order statistics.
double quantile(const std::vector<double>& sorted, double q)
{
    if (sorted.empty()) return 0;
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

StratumStats stratum_stats(const std::vector<Document>& documents, const std::set<CodeIndex>& codes)
{
    if (documents.empty()) throw DataError("cannot summarize an empty corpus");
    StratumStats st;
    st.code_count = codes.size();
    st.total_notes = documents.size();
    std::vector<double> per_note;
    for (const auto& d : documents) {
        const auto n = std::count_if(d.gold.begin(), d.gold.end(),
                                     [&](CodeIndex c) { return codes.count(c) > 0; });
        if (n > 0) per_note.push_back(static_cast<double>(n));
    }
    st.note_count = per_note.size();
    if (per_note.empty()) return st;
    std::sort(per_note.begin(), per_note.end());
    st.median = quantile(per_note, 0.5);
    st.q1 = quantile(per_note, 0.25);
    st.q3 = quantile(per_note, 0.75);
    double sum = 0;
    for (double x : per_note) sum += x;
    st.mean = sum / static_cast<double>(per_note.size());
    double ss = 0;
    for (double x : per_note) ss += (x - st.mean) * (x - st.mean);
    st.stddev = std::sqrt(ss / static_cast<double>(per_note.size()));
    return st;
}

std::vector<const Document*> select_split(const std::vector<Document>& documents, Split split)
{
    std::vector<const Document*> out;
    for (const auto& d : documents) {
        if (d.split == split) out.push_back(&d);
    }
    return out;
}

}  // namespace duallaat
