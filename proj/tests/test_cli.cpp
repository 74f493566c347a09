#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

// End-to-end checks through the installed binary: ingest -> validate -> stats
// -> split -> train -> evaluate -> recommend, plus exit codes and rerun
// determinism.

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run(const std::string& args) {
    const std::string cmd = std::string(BOOKREC_CLI_PATH) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CmdResult result;
    char buf[4096];
    while (size_t n = fread(buf, 1, sizeof(buf), pipe)) result.output.append(buf, n);
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// small but fully-featured corpus: authors, categories, publishers, books
// with Bangla numerals, reviews with ratings/dates/PII, one duplicate URL
void write_toy_corpus(const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "records.jsonl");
    auto line = [&](const json& j) { out << j.dump() << "\n"; };

    for (int a = 0; a < 4; ++a)
        line({{"source_url", "http://x/a/" + std::to_string(a)},
              {"kind", "author"},
              {"payload", {{"id", "A" + std::to_string(a)}, {"name", "Author"}}}});
    for (int c = 0; c < 3; ++c)
        line({{"source_url", "http://x/c/" + std::to_string(c)},
              {"kind", "category"},
              {"payload", {{"id", "C" + std::to_string(c)}, {"name", "Cat"}}}});
    line({{"source_url", "http://x/p/0"},
          {"kind", "publisher"},
          {"payload", {{"id", "P0"}, {"name", "Press"}}}});

    for (int b = 0; b < 12; ++b) {
        line({{"source_url", "http://x/b/" + std::to_string(b)},
              {"kind", "book"},
              {"payload",
               {{"id", "B" + std::to_string(b)},
                {"title", "Boi " + std::to_string(b)},
                {"summary", "khub sundor ekta boi"},
                {"price", "\xe0\xa7\xa7,\xe0\xa7\xa8\xe0\xa7\xab\xe0\xa7\xa6"},
                {"pages", std::to_string(90 + 25 * b)},
                {"avg_rating", "4.2"},
                {"author_ids", json::array({"A" + std::to_string(b % 4)})},
                {"category_ids", json::array({"C" + std::to_string(b % 3)})},
                {"publisher_ids", json::array({"P0"})}}}});
    }
    // duplicate URL: dropped by dedup
    line({{"source_url", "http://x/b/0"},
          {"kind", "book"},
          {"payload", {{"id", "B99"}, {"title", "dup"}}}});

    int rid = 0;
    for (int u = 0; u < 8; ++u) {
        for (int k = 0; k < 3 + (u % 3); ++k) {
            int b = (u + 2 * k + u % 2) % 12;
            line({{"source_url", "http://x/r/" + std::to_string(rid)},
                  {"kind", "review"},
                  {"payload",
                   {{"id", "R" + std::to_string(rid)},
                    {"user_id", "raw-user-" + std::to_string(u)},
                    {"book_id", "B" + std::to_string(b)},
                    {"rating", std::to_string((rid % 6))},
                    {"text", rid % 2 ? "darun legeche" : "excellent read indeed"},
                    {"date", "2023-05-" + std::string(rid % 28 < 9 ? "0" : "") +
                                 std::to_string(1 + rid % 28)},
                    {"verified", rid % 2 ? "true" : "false"},
                    {"email", "pii@example.com"}}}});
            ++rid;
        }
    }
}

struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / "bookrec_cli_test";
        fs::remove_all(root);
        fs::create_directories(root);
        write_toy_corpus(root / "raw");
    }
    ~Workspace() { fs::remove_all(root); }
    std::string p(const std::string& rel) const { return (root / rel).string(); }
};

}  // namespace

TEST_CASE("full pipeline through the CLI") {
    Workspace ws;

    auto ingest = run("ingest --raw " + ws.p("raw") + " --out " + ws.p("data"));
    INFO(ingest.output);
    REQUIRE(ingest.exit_code == 0);
    CHECK(ingest.output.find("\"duplicates_total\": 1") != std::string::npos);
    CHECK(fs::exists(ws.p("data/books.jsonl")));
    CHECK(fs::exists(ws.p("data/interactions.tsv")));
    CHECK(fs::exists(ws.p("data/ingest_report.json")));

    // anonymization remove PII and issues sequential ids
    auto users = slurp(ws.p("data/users.jsonl"));
    CHECK(users.find("USER000001") != std::string::npos);
    CHECK(slurp(ws.p("data/reviews.jsonl")).find("pii@example.com") == std::string::npos);

    auto validate = run("validate --data " + ws.p("data"));
    REQUIRE(validate.exit_code == 0);
    CHECK(validate.output.find("valid: 0 violations") != std::string::npos);

    auto stats = run("stats --data " + ws.p("data") + " --json " + ws.p("profile.json"));
    REQUIRE(stats.exit_code == 0);
    CHECK(stats.output.find("Metadata completeness") != std::string::npos);
    CHECK(stats.output.find("Rating frequency distribution") != std::string::npos);
    CHECK(fs::exists(ws.p("profile.json")));

    auto split = run("split --data " + ws.p("data") + " --out " + ws.p("split.json") +
                     " --seed 11");
    REQUIRE(split.exit_code == 0);

    auto train = run("train --data " + ws.p("data") + " --split " + ws.p("split.json") +
                     " --model popularity --out " + ws.p("pop.ckpt"));
    INFO(train.output);
    REQUIRE(train.exit_code == 0);
    CHECK(fs::exists(ws.p("pop.ckpt")));
    CHECK(fs::exists(ws.p("pop.ckpt.manifest.json")));

    auto eval1 = run("evaluate --data " + ws.p("data") + " --split " + ws.p("split.json") +
                     " --checkpoint " + ws.p("pop.ckpt") + " --out " + ws.p("report1.json"));
    INFO(eval1.output);
    REQUIRE(eval1.exit_code == 0);
    auto eval2 = run("evaluate --data " + ws.p("data") + " --split " + ws.p("split.json") +
                     " --checkpoint " + ws.p("pop.ckpt") + " --out " + ws.p("report2.json"));
    REQUIRE(eval2.exit_code == 0);
    CHECK(slurp(ws.p("report1.json")) == slurp(ws.p("report2.json")));  // byte-identical

    auto rec = run("recommend --checkpoint " + ws.p("pop.ckpt") + " --data " + ws.p("data") +
                   " --split " + ws.p("split.json") + " --user USER000001 --n 3");
    INFO(rec.output);
    REQUIRE(rec.exit_code == 0);
    CHECK(rec.output.find("1. ") != std::string::npos);

    auto rec_bad = run("recommend --checkpoint " + ws.p("pop.ckpt") + " --data " + ws.p("data") +
                       " --split " + ws.p("split.json") + " --user NOBODY --n 3");
    CHECK(rec_bad.exit_code == 1);

    auto exp = run("export-embeddings --data " + ws.p("data") + " --out " + ws.p("emb.tsv") +
                   " --hash-dim 16");
    REQUIRE(exp.exit_code == 0);
    auto emb = slurp(ws.p("emb.tsv"));
    CHECK(emb.rfind("dim=16", 0) == 0);

    // train/evaluate a feature model through the same path
    auto train2 = run("train --data " + ws.p("data") + " --split " + ws.p("split.json") +
                      " --model content --out " + ws.p("content.ckpt") +
                      " --set features.tfidf_min_df=0 --set features.tfidf_max_df=1" +
                      " --set features.hash_dim=16");
    INFO(train2.output);
    REQUIRE(train2.exit_code == 0);
    auto export2 = run("export-embeddings --data " + ws.p("data") + " --checkpoint " +
                       ws.p("pop.ckpt") + " --out " + ws.p("emb2.tsv"));
    CHECK(export2.exit_code == 1);  // popularity has no embedding tensor
}

TEST_CASE("validate exits 2 on a corrupted dataset") {
    Workspace ws;
    REQUIRE(run("ingest --raw " + ws.p("raw") + " --out " + ws.p("data")).exit_code == 0);
    {
        // dangling author reference
        std::ofstream out(ws.p("data/edges_book_author.jsonl"), std::ios::app);
        out << R"({"relation":"book_author","src":"B0","dst":"A404"})" << "\n";
    }
    auto bad = run("validate --data " + ws.p("data"));
    CHECK(bad.exit_code == 2);
    CHECK(bad.output.find("invalid") != std::string::npos);

    // downstream commands refuse the corrupted dataset with the same code
    auto split = run("split --data " + ws.p("data") + " --out " + ws.p("s.json"));
    CHECK(split.exit_code == 2);
}

TEST_CASE("CLI exit codes: usage, empty input, multi-seed evaluate") {
    Workspace ws;
    CHECK(run("").exit_code == 1);                       // no subcommand
    CHECK(run("train --model bogus").exit_code != 0);    // unknown model name

    auto missing = run("ingest --raw " + ws.p("nowhere") + " --out " + ws.p("d2"));
    CHECK(missing.exit_code == 1);

    fs::create_directories(ws.p("empty_raw"));
    auto empty = run("ingest --raw " + ws.p("empty_raw") + " --out " + ws.p("d3"));
    CHECK(empty.exit_code == 1);

    REQUIRE(run("ingest --raw " + ws.p("raw") + " --out " + ws.p("data")).exit_code == 0);
    REQUIRE(run("split --data " + ws.p("data") + " --out " + ws.p("split.json")).exit_code == 0);

    auto multi = run("evaluate --data " + ws.p("data") + " --split " + ws.p("split.json") +
                     " --model als --seeds 1,2,3 --set model.dim=4 --set model.epochs=3" +
                     " --out " + ws.p("als.json"));
    INFO(multi.output);
    REQUIRE(multi.exit_code == 0);
    CHECK(multi.output.find("mean:") != std::string::npos);
    json report = json::parse(slurp(ws.p("als.json")));
    CHECK(report["per_seed"].size() == 3);
    CHECK(report.contains("stddev"));
}
