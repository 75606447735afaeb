#include "helpers.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdio>
#include <sstream>
#include <sys/wait.h>

using nlohmann::json;

namespace {

struct Run {
    int status = -1;
    std::string out;
};

Run cli(const std::string& args)
{
    const std::string cmd = std::string(DUALLAAT_CLI) + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe);
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) r.out.append(buf, n);
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::vector<json> jsonl(const std::string& text)
{
    std::vector<json> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) rows.push_back(json::parse(line));
    return rows;
}

const char* kTinyConfig = R"({
  "model": {"embedding_dim": 8, "cnn_filters": 8, "cnn_width": 3, "heads": 2, "max_note_tokens": 64},
  "train": {"epochs": 2, "batch_size": 8, "warmup_steps": 2},
  "min_count": 1
})";

}  // namespace

TEST_CASE("generate, train, evaluate, and predict from the command line")
{
    testing::TempDir dir;
    const auto d = dir.path.string();
    REQUIRE(cli("generate --concepts 40 --docs-v1 40 --docs-v2 40 --seed 5 --out " + d + "/data").status == 0);
    for (const char* f : {"corpus.jsonl", "codes.tsv", "v1.jsonl", "v2.jsonl", "generate_config.json"})
        CHECK(std::filesystem::exists(dir / ("data/" + std::string(f))));
    const auto first = jsonl(testing::read_file(dir / "data/corpus.jsonl")).front();
    CHECK(first.contains("doc_id"));
    CHECK(first["codes"].is_array());

    testing::write_file(dir / "tiny.json", kTinyConfig);
    const std::string data = " --sources " + d + "/data/corpus.jsonl --codes " + d + "/data/codes.tsv";
    const auto trained = cli("train" + data + " --config " + d + "/tiny.json --seed 3 --out " + d + "/run");
    REQUIRE(trained.status == 0);
    for (const char* f : {"last.ckpt", "best.ckpt", "metrics.jsonl", "config.json"})
        CHECK(std::filesystem::exists(dir / ("run/" + std::string(f))));
    const auto log = jsonl(testing::read_file(dir / "run/metrics.jsonl"));
    CHECK(log.size() == 2);
    const auto saved = json::parse(testing::read_file(dir / "run/config.json"));
    CHECK(saved["model"]["heads"] == 2);
    CHECK(saved["train"]["seed"] == 3);

    const auto eval = cli("evaluate" + data + " --checkpoint " + d + "/run/last.ckpt --strata rare,full --version V10 "
                          "--threshold tuned --out " + d + "/report.json");
    REQUIRE(eval.status == 0);
    const auto report = json::parse(testing::read_file(dir / "report.json"));
    REQUIRE(report["strata"].size() == 2);
    CHECK(report["strata"][0]["stratum"] == "V10/rare");
    CHECK(report["strata"][1]["stratum"] == "V10/full");
    CHECK(report["config"]["model"]["heads"] == 2);
    CHECK(eval.out.find("V10/full") != std::string::npos);

    testing::write_file(dir / "notes.txt", "some words here\nand other words\n");
    const auto pred = cli("predict --checkpoint " + d + "/run/last.ckpt --notes " + d + "/notes.txt --codes " + d +
                          "/data/codes.tsv --top-k 5");
    REQUIRE(pred.status == 0);
    const auto rows = jsonl(pred.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0]["doc_id"] == "1");
    REQUIRE(rows[0]["predictions"].size() == 5);
    double prev = 1.0;
    for (const auto& p : rows[0]["predictions"]) {
        const double v = p["probability"];
        CHECK(v > 0);
        CHECK(v <= prev);
        prev = v;
    }

    // Resuming a finished run with more epochs extends the log.
    const auto resumed = cli("train" + data + " --config " + d + "/tiny.json --seed 3 --epochs 3 --resume " + d +
                             "/run/last.ckpt --out " + d + "/run");
    CHECK(resumed.status == 0);
    CHECK(jsonl(testing::read_file(dir / "run/metrics.jsonl")).size() == 3);
}

TEST_CASE("exit codes distinguish usage errors from data errors")
{
    testing::TempDir dir;
    const auto d = dir.path.string();
    CHECK(cli("").status == 1);
    CHECK(cli("frobnicate").status == 1);
    CHECK(cli("generate --overlap 2 --out " + d).status == 1);
    CHECK(cli("train --sources " + d + "/missing.jsonl --codes " + d + "/missing.tsv --out " + d).status == 2);
    testing::write_file(dir / "codes.tsv", "V10\tA01\tsomething\n");
    testing::write_file(dir / "bad.jsonl", "{not json\n");
    CHECK(cli("train --sources " + d + "/bad.jsonl --codes " + d + "/codes.tsv --out " + d).status == 2);
    CHECK(cli("evaluate --sources " + d + "/bad.jsonl --codes " + d + "/codes.tsv --checkpoint " + d + "/none.ckpt")
              .status == 2);
}

TEST_CASE("params reports counts for each vocabulary size")
{
    const auto r = cli("params --preset paper --encoder cnn --vocab-size 1000,2000");
    REQUIRE(r.status == 0);
    CHECK(r.out.find("1000") != std::string::npos);
    CHECK(r.out.find("2000") != std::string::npos);
}
