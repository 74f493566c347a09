#pragma once

// Shared fixtures for the test suites: small hand-built graphs and synthetic
// interaction generators with planted structure.

#include <string>
#include <vector>

#include "bookrec/graph.hpp"
#include "bookrec/util.hpp"

namespace testutil {

using namespace bookrec;

inline Book make_book(std::string id, std::string title) {
    Book b;
    b.ext_id = std::move(id);
    b.title = std::move(title);
    return b;
}

inline Review make_review(std::string id, std::optional<double> rating = std::nullopt,
                          std::optional<int64_t> date = std::nullopt, bool verified = false) {
    Review r;
    r.ext_id = std::move(id);
    r.rating = rating;
    r.date = date;
    r.verified = verified;
    return r;
}

// 3 books, 2 authors, 2 categories, 1 publisher, 2 users, 3 reviews.
// Review R0: U0 x B0, R1: U0 x B1, R2: U1 x B2. Fully consistent.
inline BookGraph toy_graph() {
    GraphBuilder gb;
    int b0 = gb.add_book(make_book("B0", "alpha"));
    int b1 = gb.add_book(make_book("B1", "beta"));
    int b2 = gb.add_book(make_book("B2", "gamma"));
    int a0 = gb.add_author({"A0", "author zero", std::nullopt, std::nullopt});
    int a1 = gb.add_author({"A1", "author one", std::nullopt, std::nullopt});
    int c0 = gb.add_category({"C0", "thriller", std::nullopt, std::nullopt});
    int c1 = gb.add_category({"C1", "poetry", std::nullopt, std::nullopt});
    int p0 = gb.add_publisher({"P0", "press", std::nullopt, std::nullopt, std::nullopt});
    int u0 = gb.add_user("USER000001");
    int u1 = gb.add_user("USER000002");
    int r0 = gb.add_review(make_review("R0", 5.0, 100, true));
    int r1 = gb.add_review(make_review("R1", std::nullopt, 50, false));
    int r2 = gb.add_review(make_review("R2", 4.0, std::nullopt, false));

    gb.add_edge(Relation::BookAuthor, b0, a0);
    gb.add_edge(Relation::BookAuthor, b0, a1);
    gb.add_edge(Relation::BookAuthor, b1, a1);
    gb.add_edge(Relation::BookAuthor, b2, a0);
    gb.add_edge(Relation::BookCategory, b0, c0);
    gb.add_edge(Relation::BookCategory, b1, c0);
    gb.add_edge(Relation::BookCategory, b2, c1);
    gb.add_edge(Relation::BookPublisher, b0, p0);
    gb.add_edge(Relation::BookPublisher, b1, p0);
    gb.add_edge(Relation::AuthorCategory, a0, c0);
    gb.add_edge(Relation::AuthorPublisher, a0, p0);
    gb.add_edge(Relation::PublisherCategory, p0, c0);
    gb.add_edge(Relation::UserReview, u0, r0);
    gb.add_edge(Relation::UserReview, u0, r1);
    gb.add_edge(Relation::UserReview, u1, r2);
    gb.add_edge(Relation::BookReview, b0, r0);
    gb.add_edge(Relation::BookReview, b1, r1);
    gb.add_edge(Relation::BookReview, b2, r2);
    return gb.build();
}

// Interactions with no graph behind them, for model-level tests.
inline Interaction make_interaction(int user, int book, double weight = 1.0,
                                    std::optional<int64_t> ts = std::nullopt,
                                    std::optional<double> rating = std::nullopt) {
    Interaction it;
    it.user = user;
    it.book = book;
    it.weight = weight;
    it.timestamp = ts;
    it.rating = rating;
    it.review = book * 10007 + user;  // distinct, deterministic
    return it;
}

// Planted clusters: `clusters` groups of books; each user belongs to one
// cluster and interacts with `per_user` random books from it (plus optional
// uniform noise). Returns interactions; cluster of user u is u % clusters.
struct ClusteredData {
    std::vector<Interaction> interactions;
    int num_users = 0;
    int num_books = 0;
    int clusters = 0;
    int books_per_cluster = 0;

    int cluster_of_user(int u) const { return u % clusters; }
    int cluster_of_book(int b) const { return b / books_per_cluster; }
};

inline ClusteredData clustered_interactions(int num_users, int clusters, int books_per_cluster,
                                            int per_user, double noise, uint64_t seed) {
    ClusteredData data;
    data.num_users = num_users;
    data.clusters = clusters;
    data.books_per_cluster = books_per_cluster;
    data.num_books = clusters * books_per_cluster;

    Rng rng(seed);
    int64_t ts = 0;
    int32_t review = 0;
    for (int u = 0; u < num_users; ++u) {
        const int c = u % clusters;
        for (int k = 0; k < per_user; ++k) {
            int book;
            if (rng.next_double() < noise) {
                book = static_cast<int>(rng.next_below(data.num_books));
            } else {
                book = c * books_per_cluster + static_cast<int>(rng.next_below(books_per_cluster));
            }
            Interaction it;
            it.user = u;
            it.book = book;
            it.weight = 1.0;
            it.timestamp = ts++;
            it.review = review++;
            data.interactions.push_back(it);
        }
    }
    return data;
}

}  // namespace testutil
