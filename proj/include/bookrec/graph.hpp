#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bookrec/util.hpp"

namespace bookrec {

enum class EntityKind : uint8_t { Book, Author, Category, Publisher, Review, User };
constexpr int kNumEntityKinds = 6;

enum class Relation : uint8_t {
    BookAuthor,
    BookPublisher,
    BookCategory,
    AuthorCategory,
    AuthorPublisher,
    PublisherCategory,
    UserReview,
    BookReview,
};
constexpr int kNumRelations = 8;

const char* to_string(EntityKind k);
const char* to_string(Relation r);
std::optional<EntityKind> entity_kind_from_string(std::string_view s);
std::optional<Relation> relation_from_string(std::string_view s);

// Endpoint kinds of a relation, (src, dst) as stored.
std::pair<EntityKind, EntityKind> relation_endpoints(Relation r);

// (kind, index) pair; indices are dense per kind.
struct EntityId {
    EntityKind kind;
    int32_t index;

    bool operator==(const EntityId&) const = default;
};

struct Book {
    std::string ext_id;
    std::string title;
    std::optional<std::string> summary;
    std::optional<std::string> isbn;
    std::optional<double> avg_rating;  // [1,5], or 0 when unrated
    std::optional<int64_t> rating_count;
    std::optional<int64_t> review_count;
    std::optional<int64_t> pages;
    std::optional<double> price;
};

struct Author {
    std::string ext_id;
    std::string name;
    std::optional<std::string> biography;
    std::optional<int64_t> follower_count;
};

struct Category {
    std::string ext_id;
    std::string name;
    std::optional<std::string> description;
    std::optional<int64_t> total_book_count;
};

struct Publisher {
    std::string ext_id;
    std::string name;
    std::optional<std::string> description;
    std::optional<int64_t> total_author_count;
    std::optional<int64_t> total_book_count;
};

struct Review {
    std::string ext_id;
    std::optional<double> rating;  // null or [1,5]
    std::optional<std::string> text;
    std::optional<int64_t> date;  // days since epoch
    int64_t upvotes = 0;
    int64_t downvotes = 0;
    bool verified = false;
};

struct RelationEdge {
    Relation relation;
    int32_t src;  // index within the relation's src kind
    int32_t dst;  // index within the relation's dst kind

    bool operator==(const RelationEdge&) const = default;
};

// One review joined to both its user and its book. The unit of training and
// evaluation.
struct Interaction {
    int32_t user = -1;
    int32_t book = -1;
    double weight = 1.0;  // > 0
    std::optional<int64_t> timestamp;
    std::optional<double> rating;
    bool verified = false;
    int32_t review = -1;  // source review index; distinguishes repeated (user, book) pairs
};

struct Violation {
    enum class Type { DanglingEdge, DuplicateEdge, KindMismatch, RatingOutOfRange };
    Type type;
    std::string detail;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

// Immutable after build(); concurrent read access is safe.
class BookGraph {
public:
    const std::vector<Book>& books() const { return books_; }
    const std::vector<Author>& authors() const { return authors_; }
    const std::vector<Category>& categories() const { return categories_; }
    const std::vector<Publisher>& publishers() const { return publishers_; }
    const std::vector<Review>& reviews() const { return reviews_; }
    const std::vector<std::string>& user_ids() const { return user_ids_; }

    int32_t entity_count(EntityKind k) const;
    int32_t num_books() const { return static_cast<int32_t>(books_.size()); }
    int32_t num_users() const { return static_cast<int32_t>(user_ids_.size()); }

    const std::vector<RelationEdge>& edges(Relation r) const {
        return edges_[static_cast<size_t>(r)];
    }

    // External id -> dense index for a kind; -1 if unknown.
    int32_t index_of(EntityKind k, const std::string& ext_id) const;
    const std::string& ext_id_of(EntityKind k, int32_t index) const;

    // All nodes adjacent to `node` under `relation`, ascending index order.
    // Throws std::invalid_argument if node.kind is not an endpoint of `relation`.
    std::vector<int32_t> neighbors(EntityId node, Relation relation) const;

    // Review -> linked user/book index (-1 when the edge is missing).
    int32_t review_user(int32_t review) const { return review_user_[review]; }
    int32_t review_book(int32_t review) const { return review_book_[review]; }

private:
    friend class GraphBuilder;

    std::vector<Book> books_;
    std::vector<Author> authors_;
    std::vector<Category> categories_;
    std::vector<Publisher> publishers_;
    std::vector<Review> reviews_;
    std::vector<std::string> user_ids_;

    std::array<std::vector<RelationEdge>, kNumRelations> edges_;
    std::array<std::unordered_map<std::string, int32_t>, kNumEntityKinds> id_to_index_;

    // adjacency per relation, forward (src->dst) and reverse, sorted
    std::array<std::vector<std::vector<int32_t>>, kNumRelations> adj_fwd_;
    std::array<std::vector<std::vector<int32_t>>, kNumRelations> adj_rev_;

    std::vector<int32_t> review_user_;
    std::vector<int32_t> review_book_;
};

// Single-threaded construction front-end for BookGraph.
class GraphBuilder {
public:
    int32_t add_book(Book b);
    int32_t add_author(Author a);
    int32_t add_category(Category c);
    int32_t add_publisher(Publisher p);
    int32_t add_review(Review r);
    int32_t add_user(std::string ext_id);

    // Edges may reference not-yet-valid indices; validate_graph reports them.
    void add_edge(Relation r, int32_t src, int32_t dst);

    int32_t count(EntityKind k) const;
    int32_t index_of(EntityKind k, const std::string& ext_id) const;

    BookGraph build();

private:
    BookGraph g_;
};

// Reports every dangling edge, duplicate (relation, src, dst) triple,
// endpoint-kind mismatch, and out-of-range review rating. Violations are data,
// not failures: the report is empty iff the graph is valid.
ValidationReport validate_graph(const BookGraph& graph);

// Loss weight from review metadata; always >= 1.
// w = 1 + 0.5 * verified + 0.1 * max(rating - 3, 0)   (rating term only when present)
double interaction_weight(const Review& review);

struct InteractionBuildResult {
    std::vector<Interaction> interactions;
    int64_t skipped = 0;  // reviews missing a user or book link
};

// One interaction per review that links both a user and a book, ordered by
// (timestamp, review index) ascending with missing timestamps after present
// ones.
InteractionBuildResult build_interactions(const BookGraph& graph);

}  // namespace bookrec
