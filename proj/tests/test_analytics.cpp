#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bookrec/analytics.hpp"
#include "helpers.hpp"

using namespace bookrec;
using namespace bookrec::stats;

TEST_CASE("classify_language by script share") {
    // pure Bengali script
    CHECK(classify_language("\xe0\xa6\xac\xe0\xa6\xbe\xe0\xa6\x82\xe0\xa6\xb2\xe0\xa6\xbe") ==
          LanguageType::Bangla);
    CHECK(classify_language("this is a plain english sentence") == LanguageType::English);
    // roughly half Latin, half Bengali letters
    CHECK(classify_language("boi ta khub \xe0\xa6\xad\xe0\xa6\xbe\xe0\xa6\xb2\xe0\xa7\x8b "
                            "\xe0\xa6\xb2\xe0\xa6\xbe\xe0\xa6\x97\xe0\xa6\xb2\xe0\xa7\x8b") ==
          LanguageType::Mixed);
    CHECK(classify_language("") == LanguageType::Other);
    CHECK(classify_language("12345 !?%") == LanguageType::Other);
    // Bangla digits are script-neutral
    CHECK(classify_language("\xe0\xa7\xa7\xe0\xa7\xa8\xe0\xa7\xa9") == LanguageType::Other);
}

TEST_CASE("language classes partition the review set") {
    GraphBuilder gb;
    const char* texts[] = {"english only text here",
                           "\xe0\xa6\xad\xe0\xa6\xbe\xe0\xa6\xb2\xe0\xa7\x8b",
                           "mix \xe0\xa6\xad\xe0\xa6\xbe\xe0\xa6\xb2\xe0\xa7\x8b mix",
                           "!!!"};
    int rid = 0;
    for (const char* t : texts) {
        auto r = testutil::make_review("R" + std::to_string(rid++));
        r.text = t;
        gb.add_review(r);
    }
    gb.add_review(testutil::make_review("Rnull"));  // no text at all
    auto g = gb.build();
    auto profile = compute_profile(g);

    int64_t total = 0;
    for (const auto& bin : profile.language) total += bin.count;
    CHECK(total == static_cast<int64_t>(g.reviews().size()));
}

namespace {

int64_t bin_count(const std::vector<HistBin>& bins, const std::string& label) {
    for (const auto& b : bins)
        if (b.label == label) return b.count;
    return -1;
}

void add_review_edge(GraphBuilder& gb, int& rid, int user, int book,
                     std::optional<double> rating) {
    int r = gb.add_review(testutil::make_review("R" + std::to_string(rid++), rating));
    gb.add_edge(Relation::UserReview, user, r);
    gb.add_edge(Relation::BookReview, book, r);
}

}  // namespace

TEST_CASE("compute_profile: books with 0, 2, 7 reviews land in bins 0 / 2 / 5+") {
    GraphBuilder gb;
    gb.add_book(testutil::make_book("B0", "no reviews"));
    int b1 = gb.add_book(testutil::make_book("B1", "two reviews"));
    int b2 = gb.add_book(testutil::make_book("B2", "seven reviews"));
    int u = gb.add_user("U0");
    int rid = 0;
    for (int k = 0; k < 2; ++k) add_review_edge(gb, rid, u, b1, 5.0);
    for (int k = 0; k < 7; ++k) add_review_edge(gb, rid, u, b2, 4.0);
    auto profile = compute_profile(gb.build());

    CHECK(bin_count(profile.book_engagement, "0 reviews") == 1);
    CHECK(bin_count(profile.book_engagement, "2 reviews") == 1);
    CHECK(bin_count(profile.book_engagement, "5 or more reviews") == 1);
    CHECK(bin_count(profile.book_engagement, "1 review") == 0);
}

TEST_CASE("compute_profile: users with 1 and 6 reviews land in bins 1 / 5-9") {
    GraphBuilder gb;
    int b = gb.add_book(testutil::make_book("B0", "t"));
    int u0 = gb.add_user("U0");
    int u1 = gb.add_user("U1");
    int rid = 0;
    add_review_edge(gb, rid, u0, b, 5.0);
    for (int k = 0; k < 6; ++k) add_review_edge(gb, rid, u1, b, std::nullopt);
    auto profile = compute_profile(gb.build());

    CHECK(bin_count(profile.user_activity, "1 review") == 1);
    CHECK(bin_count(profile.user_activity, "5-9 reviews") == 1);
    CHECK(bin_count(profile.user_activity, "2-4 reviews") == 0);

    // ratings: one 5, six nulls
    CHECK(bin_count(profile.rating_frequency, "5") == 1);
    CHECK(bin_count(profile.rating_frequency, "0") == 6);
}

TEST_CASE("profile percentages recompute from counts within 0.1") {
    auto g = testutil::toy_graph();
    auto profile = compute_profile(g);
    auto check_hist = [](const std::vector<HistBin>& bins) {
        int64_t total = 0;
        for (const auto& b : bins) total += b.count;
        if (total == 0) return;
        for (const auto& b : bins)
            CHECK(std::abs(b.percent - 100.0 * b.count / total) < 0.1);
    };
    check_hist(profile.book_engagement);
    check_hist(profile.user_activity);
    check_hist(profile.rating_frequency);
    check_hist(profile.language);
}

TEST_CASE("profile completeness counts non-null book fields") {
    GraphBuilder gb;
    Book full = testutil::make_book("B0", "titled");
    full.isbn = "123";
    full.pages = 100;
    full.summary = "s";
    full.avg_rating = 4.0;
    full.review_count = 3;
    gb.add_book(full);
    gb.add_book(testutil::make_book("B1", "bare"));
    auto profile = compute_profile(gb.build());

    for (const auto& field : profile.completeness) {
        if (field.label == "Title" || field.label == "Book ID") {
            CHECK(field.count == 2);
            CHECK(field.percent == doctest::Approx(100.0));
        } else if (field.label == "Category" || field.label == "Publisher") {
            CHECK(field.count == 0);
        } else {
            CHECK(field.count == 1);
            CHECK(field.percent == doctest::Approx(50.0));
        }
    }
}

TEST_CASE("jaccard affinity: set arithmetic on shared authors") {
    GraphBuilder gb;
    for (int a = 0; a < 5; ++a)
        gb.add_author({"A" + std::to_string(a), "a", std::nullopt, std::nullopt});
    gb.add_publisher({"P0", "p0", std::nullopt, std::nullopt, std::nullopt});
    gb.add_publisher({"P1", "p1", std::nullopt, std::nullopt, std::nullopt});
    gb.add_publisher({"P2", "p2", std::nullopt, std::nullopt, std::nullopt});
    gb.add_publisher({"P3", "p3", std::nullopt, std::nullopt, std::nullopt});

    // P0 = {a,b,c} = {0,1,2}; P1 = {b,c,d,e} = {1,2,3,4}
    for (int a : {0, 1, 2}) gb.add_edge(Relation::AuthorPublisher, a, 0);
    for (int a : {1, 2, 3, 4}) gb.add_edge(Relation::AuthorPublisher, a, 1);
    // P2 identical to P0; P3 disjoint from everyone (no authors)
    for (int a : {0, 1, 2}) gb.add_edge(Relation::AuthorPublisher, a, 2);
    auto g = gb.build();

    auto rows = jaccard_affinity(g, 10);
    REQUIRE(!rows.empty());

    // find the P0-P1 pair: shared 2 of union 5
    bool found = false;
    for (const auto& r : rows) {
        if ((r.publisher_a == 0 && r.publisher_b == 1)) {
            CHECK(r.shared_authors == 2);
            CHECK(r.jaccard == doctest::Approx(0.4).epsilon(1e-12));
            found = true;
        }
        CHECK(r.jaccard >= 0.0);
        CHECK(r.jaccard <= 1.0);
        CHECK(r.shared_authors > 0);  // disjoint pairs excluded
        CHECK(r.publisher_a < r.publisher_b);
    }
    CHECK(found);

    // identical author sets give similarity 1 and rank first (3 shared authors)
    CHECK(rows[0].publisher_a == 0);
    CHECK(rows[0].publisher_b == 2);
    CHECK(rows[0].jaccard == doctest::Approx(1.0));

    // no pair involves P3
    for (const auto& r : rows) {
        CHECK(r.publisher_a != 3);
        CHECK(r.publisher_b != 3);
    }
}

TEST_CASE("jaccard is symmetric in construction") {
    // reversing publisher insertion order yields the same similarity values
    auto build = [](bool swap) {
        GraphBuilder gb;
        for (int a = 0; a < 4; ++a)
            gb.add_author({"A" + std::to_string(a), "a", std::nullopt, std::nullopt});
        gb.add_publisher({swap ? "PY" : "PX", "x", std::nullopt, std::nullopt, std::nullopt});
        gb.add_publisher({swap ? "PX" : "PY", "y", std::nullopt, std::nullopt, std::nullopt});
        for (int a : {0, 1}) gb.add_edge(Relation::AuthorPublisher, a, 0);
        for (int a : {1, 2, 3}) gb.add_edge(Relation::AuthorPublisher, a, 1);
        auto rows = jaccard_affinity(gb.build(), 5);
        REQUIRE(rows.size() == 1);
        return rows[0].jaccard;
    };
    CHECK(build(false) == doctest::Approx(build(true)).epsilon(1e-15));
}
