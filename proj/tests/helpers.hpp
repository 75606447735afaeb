#pragma once

#include "duallaat/data.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

namespace testing {

// Fresh scratch directory under the system temp dir, removed on destruction.
struct TempDir {
    std::filesystem::path path;
    TempDir()
    {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("duallaat_test_" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline void write_file(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline duallaat::Document doc(std::string id, std::string text, std::vector<duallaat::CodeIndex> gold,
                              duallaat::Split split = duallaat::Split::Train,
                              duallaat::Version v = duallaat::Version::V10)
{
    duallaat::Document d;
    d.doc_id = std::move(id);
    d.text = std::move(text);
    d.gold = std::move(gold);
    d.split = split;
    d.version = v;
    return d;
}

}  // namespace testing
