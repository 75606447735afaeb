#include "duallaat/checkpoint.hpp"

#include "duallaat/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace duallaat {

using nlohmann::json;
using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'L', 'A', 'A', 'T', 'C', 'K', 'P'};

template <typename T>
void write_pod(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in)
{
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated checkpoint");
    return v;
}

std::string hex64(std::uint64_t v)
{
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

template <typename F>
void visit_all(const Checkpoint& c, F&& f)
{
    visit_params(c.params, c.config.model, [&](const std::string& n, const auto& a) { f("param/" + n, a); });
    if (c.optimizer) {
        visit_params(c.optimizer->first_moment, c.config.model,
                     [&](const std::string& n, const auto& a) { f("adam_m/" + n, a); });
        visit_params(c.optimizer->second_moment, c.config.model,
                     [&](const std::string& n, const auto& a) { f("adam_v/" + n, a); });
    }
}

}  // namespace

std::string rng_state(const Rng& rng)
{
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng rng_from_state(const std::string& state)
{
    Rng rng;
    std::istringstream is(state);
    is >> rng;
    if (!is) throw DataError("corrupt random generator state");
    return rng;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path)
{
    ordered_json header;
    header["format_version"] = kCheckpointFormat;
    header["config"] = to_json(c.config);
    header["vocab_hash"] = hex64(c.vocab.hash());
    header["vocab"] = c.vocab.tokens();
    header["rng_state"] = c.rng_state;
    header["epoch"] = c.epoch;
    header["step"] = c.step;
    header["threshold"] = c.threshold;
    header["best_val_micro_f1"] = c.best_val_micro_f1;
    header["best_epoch"] = c.best_epoch;
    header["has_optimizer"] = c.optimizer.has_value();
    ordered_json arrays = ordered_json::array();
    std::uint64_t offset = 0;
    visit_all(c, [&](const std::string& name, const Matrix<double>& a) {
        const auto nbytes = static_cast<std::uint64_t>(a.size()) * sizeof(double);
        arrays.push_back({{"name", name}, {"dtype", "f64"}, {"shape", {a.rows(), a.cols()}},
                          {"offset", offset}, {"nbytes", nbytes}});
        offset += nbytes;
    });
    header["arrays"] = std::move(arrays);
    const std::string text = header.dump();

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write checkpoint " + path.string());
        out.write(kMagic, sizeof(kMagic));
        write_pod<std::uint32_t>(out, kCheckpointFormat);
        write_pod<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        visit_all(c, [&](const std::string&, const Matrix<double>& a) {
            out.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
        });
        if (!out) throw DataError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw DataError(path.string() + " is not a checkpoint");
    }
    const auto format = read_pod<std::uint32_t>(in);
    if (format != kCheckpointFormat) throw DataError("unsupported checkpoint format " + std::to_string(format));
    const auto header_len = read_pod<std::uint64_t>(in);
    std::string text(header_len, '\0');
    if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw DataError("truncated checkpoint header");
    const json header = json::parse(text);
    const auto payload_start = static_cast<std::uint64_t>(in.tellg());

    Checkpoint c;
    c.config = merge_json(make_preset(header["config"]["preset"].get<std::string>(),
                                      parse_encoder_kind(header["config"]["model"]["encoder"].get<std::string>())),
                          header["config"]);
    auto tokens = header["vocab"].get<std::vector<std::string>>();
    if (tokens.size() < 2) throw DataError("checkpoint vocabulary is missing its reserved tokens");
    c.vocab = Vocabulary(std::vector<std::string>(tokens.begin() + 2, tokens.end()));
    if (hex64(c.vocab.hash()) != header["vocab_hash"].get<std::string>()) {
        throw DataError("checkpoint vocabulary hash mismatch");
    }
    c.rng_state = header["rng_state"].get<std::string>();
    c.epoch = header["epoch"].get<int>();
    c.step = header["step"].get<std::int64_t>();
    c.threshold = header["threshold"].get<double>();
    c.best_val_micro_f1 = header["best_val_micro_f1"].get<double>();
    c.best_epoch = header["best_epoch"].get<int>();

    c.params = zero_params<double>(c.config.model);
    if (header["has_optimizer"].get<bool>()) {
        c.optimizer = OptimizerState{zero_params<double>(c.config.model), zero_params<double>(c.config.model)};
    }
    std::map<std::string, json> directory;
    for (const auto& a : header["arrays"]) directory[a["name"].get<std::string>()] = a;
    std::size_t expected = 0;
    auto fill = [&](const std::string& name, Matrix<double>& a) {
        auto it = directory.find(name);
        if (it == directory.end()) throw DataError("checkpoint is missing array " + name);
        const auto& entry = it->second;
        const auto shape = entry["shape"].get<std::vector<Index>>();
        if (shape.size() != 2 || shape[0] != a.rows() || shape[1] != a.cols()) {
            throw DataError("checkpoint array " + name + " has an unexpected shape");
        }
        in.seekg(static_cast<std::streamoff>(payload_start + entry["offset"].get<std::uint64_t>()));
        if (!in.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)))) {
            throw DataError("truncated checkpoint payload for " + name);
        }
        ++expected;
    };
    visit_params(c.params, c.config.model, [&](const std::string& n, Matrix<double>& a) { fill("param/" + n, a); });
    if (c.optimizer) {
        visit_params(c.optimizer->first_moment, c.config.model,
                     [&](const std::string& n, Matrix<double>& a) { fill("adam_m/" + n, a); });
        visit_params(c.optimizer->second_moment, c.config.model,
                     [&](const std::string& n, Matrix<double>& a) { fill("adam_v/" + n, a); });
    }
    if (expected != directory.size()) throw DataError("checkpoint holds arrays this model does not know");
    return c;
}

}  // namespace duallaat
