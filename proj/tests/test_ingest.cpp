#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "bookrec/ingest.hpp"
#include "bookrec/io.hpp"
#include "bookrec/util.hpp"
#include "helpers.hpp"

using namespace bookrec;
using namespace bookrec::ingest;

TEST_CASE("normalize_numeric handles separators, Bangla digits, junk") {
    CHECK(normalize_numeric("1,250") == 1250.0);
    CHECK(normalize_numeric("১২৩") == 123.0);
    CHECK(!normalize_numeric("abc").has_value());
    CHECK(normalize_numeric("৳ 1,250.50") == 1250.5);
    CHECK(normalize_numeric("-3.5") == -3.5);
    CHECK(normalize_numeric("$99") == 99.0);
    CHECK(!normalize_numeric("").has_value());
    CHECK(!normalize_numeric("1.2.3").has_value());
    CHECK(!normalize_numeric("১২abc").has_value());
}

TEST_CASE("normalize_numeric round-trips plain integers") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        int64_t v = static_cast<int64_t>(rng.next_below(1000000));
        auto first = normalize_numeric(std::to_string(v));
        REQUIRE(first.has_value());
        auto second = normalize_numeric(std::to_string(static_cast<int64_t>(*first)));
        CHECK(second == first);
    }
}

TEST_CASE("clamp_rating clamps into [1,5] and preserves null") {
    CHECK(clamp_rating(7.2) == 5.0);
    CHECK(clamp_rating(3.5) == 3.5);
    CHECK(clamp_rating(0.2) == 1.0);
    CHECK(!clamp_rating(std::nullopt).has_value());
}

TEST_CASE("clamp_rating output always null or in range") {
    Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        double raw = (rng.next_double() - 0.5) * 1000.0;
        auto out = clamp_rating(raw);
        REQUIRE(out.has_value());
        CHECK(*out >= 1.0);
        CHECK(*out <= 5.0);
    }
}

TEST_CASE("normalize_text applies NFD and collapses whitespace") {
    CHECK(normalize_text("  a  b ") == "a b");
    CHECK(normalize_text("plain ascii text") == "plain ascii text");

    // BENGALI VOWEL SIGN O (U+09CB) decomposes to U+09C7 U+09BE
    std::string precomposed = "\xe0\xa6\x95\xe0\xa7\x8b";        // KA + O sign
    std::string decomposed = "\xe0\xa6\x95\xe0\xa7\x87\xe0\xa6\xbe";  // KA + E sign + AA sign
    CHECK(normalize_text(precomposed) == decomposed);
    // idempotent on already-NFD input
    CHECK(normalize_text(decomposed) == decomposed);
}

TEST_CASE("normalize_text rejects invalid UTF-8") {
    std::string bad = "ok\xff\xfe";
    CHECK_THROWS_AS(normalize_text(bad), DecodeError);
}

TEST_CASE("normalize_url lowercases scheme and host, strips fragment") {
    CHECK(normalize_url("HTTP://Example.COM/Path?q=X#frag") == "http://example.com/Path?q=X");
    CHECK(normalize_url("https://a.b/p") == "https://a.b/p");
}

namespace {

RawRecord raw(EntityKind kind, std::string url, std::string id) {
    RawRecord r;
    r.kind = kind;
    r.source_url = std::move(url);
    if (!id.empty()) r.payload["id"] = {std::move(id)};
    return r;
}

}  // namespace

TEST_CASE("dedup_records drops same-URL and same-id duplicates") {
    SUBCASE("same URL") {
        std::vector<RawRecord> recs = {raw(EntityKind::Book, "http://x/b/1", "B1"),
                                       raw(EntityKind::Book, "http://x/b/1", "B9")};
        auto result = dedup_records(recs);
        CHECK(result.kept.size() == 1);
        CHECK(result.dropped_count() == 1);
    }
    SUBCASE("distinct URLs, same id") {
        std::vector<RawRecord> recs = {raw(EntityKind::Book, "http://x/b/1", "B1"),
                                       raw(EntityKind::Book, "http://x/b/1-copy", "B1")};
        auto result = dedup_records(recs);
        CHECK(result.kept.size() == 1);
        CHECK(result.dropped_count() == 1);
    }
    SUBCASE("no URL, no id -> quarantine") {
        std::vector<RawRecord> recs = {raw(EntityKind::Book, "", "")};
        auto result = dedup_records(recs);
        CHECK(result.kept.empty());
        CHECK(result.quarantined.size() == 1);
    }
}

TEST_CASE("dedup_records: kept keys pairwise distinct, kept+dropped=input") {
    Rng rng(3);
    std::vector<RawRecord> recs;
    for (int i = 0; i < 300; ++i) {
        int id = static_cast<int>(rng.next_below(60));
        recs.push_back(raw(EntityKind::Book, "http://x/" + std::to_string(id),
                           "B" + std::to_string(id)));
    }
    auto result = dedup_records(recs);
    CHECK(result.kept.size() + result.dropped.size() == recs.size());
    std::set<std::string> ids;
    for (const auto& r : result.kept) ids.insert(*r.field("id"));
    CHECK(ids.size() == result.kept.size());
}

TEST_CASE("anonymize_users issues sequential ids and drops PII") {
    std::vector<RawRecord> recs;
    for (const char* u : {"x", "y", "x"}) {
        RawRecord r;
        r.kind = EntityKind::Review;
        r.source_url = "http://r";
        r.payload["user_id"] = {u};
        r.payload["email"] = {"who@example.com"};
        recs.push_back(r);
    }
    auto result = anonymize_users(recs);
    CHECK(*result.records[0].field("user_id") == "USER000001");
    CHECK(*result.records[1].field("user_id") == "USER000002");
    CHECK(*result.records[2].field("user_id") == "USER000001");
    for (const auto& r : result.records) CHECK(r.payload.find("email") == r.payload.end());
}

TEST_CASE("anonymize_users is a bijection over distinct raw keys") {
    Rng rng(17);
    std::vector<RawRecord> recs;
    std::set<std::string> raw_keys;
    for (int i = 0; i < 200; ++i) {
        std::string key = "user" + std::to_string(rng.next_below(40));
        raw_keys.insert(key);
        RawRecord r;
        r.kind = EntityKind::Review;
        r.source_url = "http://r/" + std::to_string(i);
        r.payload["user_id"] = {key};
        recs.push_back(r);
    }
    auto result = anonymize_users(recs);
    CHECK(result.mapping.size() == raw_keys.size());
    std::set<std::string> issued;
    for (const auto& [raw_key, anon] : result.mapping) issued.insert(anon);
    CHECK(issued.size() == result.mapping.size());
}

TEST_CASE("link_entities resolves references and tallies misses") {
    GraphBuilder gb;
    gb.add_book(testutil::make_book("B1", "t"));
    gb.add_author({"A1", "a", std::nullopt, std::nullopt});
    gb.add_author({"A2", "b", std::nullopt, std::nullopt});

    RawRecord rec;
    rec.kind = EntityKind::Book;
    rec.source_url = "http://x";
    rec.payload["id"] = {"B1"};
    rec.payload["author_ids"] = {"A1", "A2"};
    rec.payload["publisher_ids"] = {"P404"};

    auto result = link_entities({rec}, gb);
    CHECK(result.edges.size() == 2);
    CHECK(result.unresolved == 1);
    for (const auto& e : result.edges) CHECK(e.relation == Relation::BookAuthor);
}

TEST_CASE("split_interactions: exact floor sizes") {
    std::vector<Interaction> all;
    for (int i = 0; i < 100; ++i) all.push_back(testutil::make_interaction(i % 10, i % 7));
    SplitSpec spec;
    spec.seed = 5;
    auto split = split_interactions(all, spec);
    CHECK(split.train.size() == 70);
    CHECK(split.valid.size() == 15);
    CHECK(split.test.size() == 15);
}

TEST_CASE("split_interactions: n=1 goes to test by floor rule") {
    std::vector<Interaction> all = {testutil::make_interaction(0, 0)};
    auto split = split_interactions(all, SplitSpec{});
    CHECK(split.train.empty());
    CHECK(split.valid.empty());
    CHECK(split.test.size() == 1);
}

TEST_CASE("split_interactions: deterministic, disjoint, exhaustive") {
    std::vector<Interaction> all;
    for (int i = 0; i < 237; ++i) all.push_back(testutil::make_interaction(i, i));
    SplitSpec spec;
    spec.seed = 99;
    auto a = split_interactions(all, spec);
    auto b = split_interactions(all, spec);
    CHECK(a.train_idx == b.train_idx);
    CHECK(a.valid_idx == b.valid_idx);
    CHECK(a.test_idx == b.test_idx);

    std::set<int64_t> seen;
    for (const auto* idx : {&a.train_idx, &a.valid_idx, &a.test_idx})
        for (int64_t i : *idx) CHECK(seen.insert(i).second);
    CHECK(seen.size() == all.size());

    SplitSpec other = spec;
    other.seed = 100;
    auto c = split_interactions(all, other);
    CHECK(a.train_idx != c.train_idx);
}

TEST_CASE("split_interactions rejects bad input") {
    CHECK_THROWS_AS(split_interactions({}, SplitSpec{}), std::invalid_argument);
    SplitSpec bad;
    bad.train_frac = 0.5;
    bad.valid_frac = 0.2;
    bad.test_frac = 0.2;
    std::vector<Interaction> one = {testutil::make_interaction(0, 0)};
    CHECK_THROWS_AS(split_interactions(one, bad), std::invalid_argument);
}

TEST_CASE("ingest pipeline: toy corpus end to end") {
    namespace fs = std::filesystem;
    std::vector<RawRecord> records;

    auto add = [&](EntityKind kind, std::string url, std::map<std::string, std::vector<std::string>> payload) {
        RawRecord r;
        r.kind = kind;
        r.source_url = std::move(url);
        r.payload = std::move(payload);
        records.push_back(std::move(r));
    };

    add(EntityKind::Author, "http://x/a/1", {{"id", {"A1"}}, {"name", {"Author One"}}});
    add(EntityKind::Category, "http://x/c/1", {{"id", {"C1"}}, {"name", {"Thriller"}}});
    add(EntityKind::Publisher, "http://x/p/1", {{"id", {"P1"}}, {"name", {"Press"}}});
    add(EntityKind::Book, "http://x/b/1",
        {{"id", {"B1"}},
         {"title", {"  Book   One "}},
         {"price", {"১,২৫০"}},
         {"pages", {"200"}},
         {"avg_rating", {"4.5"}},
         {"author_ids", {"A1"}},
         {"category_ids", {"C1"}},
         {"publisher_ids", {"P1"}}});
    add(EntityKind::Book, "http://x/b/1", {{"id", {"B1dup"}}, {"title", {"dup"}}});  // dup URL
    add(EntityKind::Book, "http://x/b/2",
        {{"id", {"B2"}}, {"title", {"Book Two"}}, {"author_ids", {"A1"}}});
    add(EntityKind::Review, "http://x/r/1",
        {{"id", {"R1"}},
         {"user_id", {"rawuser-77"}},
         {"book_id", {"B1"}},
         {"rating", {"7.2"}},
         {"text", {"darun boi"}},
         {"date", {"2023-05-14"}},
         {"verified", {"true"}}});
    add(EntityKind::Review, "http://x/r/2",
        {{"id", {"R2"}}, {"user_id", {"rawuser-78"}}, {"book_id", {"B2"}}, {"rating", {"0"}}});

    auto result = bookrec::io::run_ingest(records);
    const auto& g = result.graph;

    CHECK(result.report.duplicates_total == 1);
    CHECK(g.num_books() == 2);
    CHECK(g.num_users() == 2);
    CHECK(g.user_ids()[0] == "USER000001");

    // "১,২৫০" -> 1250, whitespace collapsed title, rating 7.2 clamped to 5
    const auto& b1 = g.books()[0];
    CHECK(b1.title == "Book One");
    CHECK(b1.price == 1250.0);
    CHECK(g.reviews()[0].rating == 5.0);
    CHECK(!g.reviews()[1].rating.has_value());  // raw "0" = unrated

    CHECK(result.report.violations == 0);
    CHECK(result.interactions.size() == 2);

    // round-trip through files
    fs::path dir = fs::temp_directory_path() / "bookrec_ingest_test";
    fs::remove_all(dir);
    bookrec::io::write_graph(g, dir);
    auto loaded = bookrec::io::load_graph(dir);
    CHECK(loaded.num_books() == g.num_books());
    CHECK(loaded.num_users() == g.num_users());
    CHECK(loaded.books()[0].title == "Book One");
    CHECK(validate_graph(loaded).ok());
    CHECK(loaded.edges(Relation::BookAuthor).size() == g.edges(Relation::BookAuthor).size());
    fs::remove_all(dir);
}
