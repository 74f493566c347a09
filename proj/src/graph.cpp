#include "bookrec/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace bookrec {

const char* to_string(EntityKind k) {
    switch (k) {
        case EntityKind::Book: return "book";
        case EntityKind::Author: return "author";
        case EntityKind::Category: return "category";
        case EntityKind::Publisher: return "publisher";
        case EntityKind::Review: return "review";
        case EntityKind::User: return "user";
    }
    return "?";
}

const char* to_string(Relation r) {
    switch (r) {
        case Relation::BookAuthor: return "book_author";
        case Relation::BookPublisher: return "book_publisher";
        case Relation::BookCategory: return "book_category";
        case Relation::AuthorCategory: return "author_category";
        case Relation::AuthorPublisher: return "author_publisher";
        case Relation::PublisherCategory: return "publisher_category";
        case Relation::UserReview: return "user_review";
        case Relation::BookReview: return "book_review";
    }
    return "?";
}

std::optional<EntityKind> entity_kind_from_string(std::string_view s) {
    for (int i = 0; i < kNumEntityKinds; ++i) {
        auto k = static_cast<EntityKind>(i);
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

std::optional<Relation> relation_from_string(std::string_view s) {
    for (int i = 0; i < kNumRelations; ++i) {
        auto r = static_cast<Relation>(i);
        if (s == to_string(r)) return r;
    }
    return std::nullopt;
}

std::pair<EntityKind, EntityKind> relation_endpoints(Relation r) {
    using K = EntityKind;
    switch (r) {
        case Relation::BookAuthor: return {K::Book, K::Author};
        case Relation::BookPublisher: return {K::Book, K::Publisher};
        case Relation::BookCategory: return {K::Book, K::Category};
        case Relation::AuthorCategory: return {K::Author, K::Category};
        case Relation::AuthorPublisher: return {K::Author, K::Publisher};
        case Relation::PublisherCategory: return {K::Publisher, K::Category};
        case Relation::UserReview: return {K::User, K::Review};
        case Relation::BookReview: return {K::Book, K::Review};
    }
    throw std::invalid_argument("unknown relation");
}

int32_t BookGraph::entity_count(EntityKind k) const {
    switch (k) {
        case EntityKind::Book: return static_cast<int32_t>(books_.size());
        case EntityKind::Author: return static_cast<int32_t>(authors_.size());
        case EntityKind::Category: return static_cast<int32_t>(categories_.size());
        case EntityKind::Publisher: return static_cast<int32_t>(publishers_.size());
        case EntityKind::Review: return static_cast<int32_t>(reviews_.size());
        case EntityKind::User: return static_cast<int32_t>(user_ids_.size());
    }
    return 0;
}

int32_t BookGraph::index_of(EntityKind k, const std::string& ext_id) const {
    const auto& m = id_to_index_[static_cast<size_t>(k)];
    auto it = m.find(ext_id);
    return it == m.end() ? -1 : it->second;
}

const std::string& BookGraph::ext_id_of(EntityKind k, int32_t index) const {
    switch (k) {
        case EntityKind::Book: return books_.at(index).ext_id;
        case EntityKind::Author: return authors_.at(index).ext_id;
        case EntityKind::Category: return categories_.at(index).ext_id;
        case EntityKind::Publisher: return publishers_.at(index).ext_id;
        case EntityKind::Review: return reviews_.at(index).ext_id;
        case EntityKind::User: return user_ids_.at(index);
    }
    throw std::invalid_argument("unknown entity kind");
}

std::vector<int32_t> BookGraph::neighbors(EntityId node, Relation relation) const {
    auto [src_kind, dst_kind] = relation_endpoints(relation);
    const size_t r = static_cast<size_t>(relation);
    if (node.kind == src_kind) {
        if (node.index < 0 || node.index >= entity_count(src_kind))
            throw std::out_of_range("neighbors: node index out of range");
        return adj_fwd_[r][node.index];
    }
    if (node.kind == dst_kind) {
        if (node.index < 0 || node.index >= entity_count(dst_kind))
            throw std::out_of_range("neighbors: node index out of range");
        return adj_rev_[r][node.index];
    }
    std::ostringstream msg;
    msg << "neighbors: relation " << to_string(relation) << " does not touch kind "
        << to_string(node.kind);
    throw std::invalid_argument(msg.str());
}

namespace {

template <typename T>
int32_t register_entity(std::vector<T>& table,
                        std::unordered_map<std::string, int32_t>& index, T entity) {
    int32_t idx = static_cast<int32_t>(table.size());
    index.emplace(entity.ext_id, idx);
    table.push_back(std::move(entity));
    return idx;
}

}  // namespace

int32_t GraphBuilder::add_book(Book b) {
    return register_entity(g_.books_, g_.id_to_index_[size_t(EntityKind::Book)], std::move(b));
}
int32_t GraphBuilder::add_author(Author a) {
    return register_entity(g_.authors_, g_.id_to_index_[size_t(EntityKind::Author)], std::move(a));
}
int32_t GraphBuilder::add_category(Category c) {
    return register_entity(g_.categories_, g_.id_to_index_[size_t(EntityKind::Category)],
                           std::move(c));
}
int32_t GraphBuilder::add_publisher(Publisher p) {
    return register_entity(g_.publishers_, g_.id_to_index_[size_t(EntityKind::Publisher)],
                           std::move(p));
}
int32_t GraphBuilder::add_review(Review r) {
    return register_entity(g_.reviews_, g_.id_to_index_[size_t(EntityKind::Review)], std::move(r));
}

int32_t GraphBuilder::add_user(std::string ext_id) {
    int32_t idx = static_cast<int32_t>(g_.user_ids_.size());
    g_.id_to_index_[size_t(EntityKind::User)].emplace(ext_id, idx);
    g_.user_ids_.push_back(std::move(ext_id));
    return idx;
}

void GraphBuilder::add_edge(Relation r, int32_t src, int32_t dst) {
    g_.edges_[static_cast<size_t>(r)].push_back({r, src, dst});
}

int32_t GraphBuilder::count(EntityKind k) const { return g_.entity_count(k); }

int32_t GraphBuilder::index_of(EntityKind k, const std::string& ext_id) const {
    return g_.index_of(k, ext_id);
}

BookGraph GraphBuilder::build() {
    BookGraph g = std::move(g_);
    g_ = BookGraph{};

    for (int ri = 0; ri < kNumRelations; ++ri) {
        auto rel = static_cast<Relation>(ri);
        auto [src_kind, dst_kind] = relation_endpoints(rel);
        auto& fwd = g.adj_fwd_[ri];
        auto& rev = g.adj_rev_[ri];
        fwd.assign(g.entity_count(src_kind), {});
        rev.assign(g.entity_count(dst_kind), {});
        for (const auto& e : g.edges_[ri]) {
            if (e.src < 0 || e.src >= g.entity_count(src_kind)) continue;  // dangling
            if (e.dst < 0 || e.dst >= g.entity_count(dst_kind)) continue;
            fwd[e.src].push_back(e.dst);
            rev[e.dst].push_back(e.src);
        }
        for (auto& v : fwd) std::sort(v.begin(), v.end());
        for (auto& v : rev) std::sort(v.begin(), v.end());
    }

    g.review_user_.assign(g.reviews_.size(), -1);
    g.review_book_.assign(g.reviews_.size(), -1);
    for (const auto& e : g.edges_[size_t(Relation::UserReview)]) {
        if (e.dst >= 0 && e.dst < static_cast<int32_t>(g.reviews_.size()) && e.src >= 0 &&
            e.src < g.num_users())
            g.review_user_[e.dst] = e.src;
    }
    for (const auto& e : g.edges_[size_t(Relation::BookReview)]) {
        if (e.dst >= 0 && e.dst < static_cast<int32_t>(g.reviews_.size()) && e.src >= 0 &&
            e.src < g.num_books())
            g.review_book_[e.dst] = e.src;
    }
    return g;
}

ValidationReport validate_graph(const BookGraph& graph) {
    ValidationReport report;
    auto add = [&](Violation::Type t, std::string detail) {
        report.violations.push_back({t, std::move(detail)});
    };

    for (int ri = 0; ri < kNumRelations; ++ri) {
        auto rel = static_cast<Relation>(ri);
        auto [src_kind, dst_kind] = relation_endpoints(rel);
        const int32_t src_count = graph.entity_count(src_kind);
        const int32_t dst_count = graph.entity_count(dst_kind);

        std::set<std::pair<int32_t, int32_t>> seen;
        for (const auto& e : graph.edges(rel)) {
            std::ostringstream where;
            where << to_string(rel) << " " << e.src << "->" << e.dst;
            if (e.relation != rel) {
                add(Violation::Type::KindMismatch,
                    where.str() + ": edge stored under wrong relation list");
                continue;
            }
            if (e.src < 0 || e.src >= src_count)
                add(Violation::Type::DanglingEdge, where.str() + ": src missing");
            else if (e.dst < 0 || e.dst >= dst_count)
                add(Violation::Type::DanglingEdge, where.str() + ": dst missing");
            else if (!seen.insert({e.src, e.dst}).second)
                add(Violation::Type::DuplicateEdge, where.str() + ": duplicate triple");
        }
    }

    const auto& reviews = graph.reviews();
    for (size_t i = 0; i < reviews.size(); ++i) {
        const auto& r = reviews[i];
        if (r.rating && (*r.rating < 1.0 || *r.rating > 5.0)) {
            std::ostringstream msg;
            msg << "review " << r.ext_id << " rating " << *r.rating << " outside [1,5]";
            add(Violation::Type::RatingOutOfRange, msg.str());
        }
    }
    for (const auto& b : graph.books()) {
        if (b.avg_rating && *b.avg_rating != 0.0 &&
            (*b.avg_rating < 1.0 || *b.avg_rating > 5.0)) {
            std::ostringstream msg;
            msg << "book " << b.ext_id << " avg_rating " << *b.avg_rating << " outside [1,5]";
            add(Violation::Type::RatingOutOfRange, msg.str());
        }
    }
    return report;
}

double interaction_weight(const Review& review) {
    double w = 1.0 + (review.verified ? 0.5 : 0.0);
    if (review.rating) w += 0.1 * std::max(*review.rating - 3.0, 0.0);
    return w;
}

InteractionBuildResult build_interactions(const BookGraph& graph) {
    InteractionBuildResult result;
    const auto& reviews = graph.reviews();
    result.interactions.reserve(reviews.size());
    for (int32_t i = 0; i < static_cast<int32_t>(reviews.size()); ++i) {
        const int32_t user = graph.review_user(i);
        const int32_t book = graph.review_book(i);
        if (user < 0 || book < 0) {
            ++result.skipped;
            continue;
        }
        const auto& r = reviews[i];
        Interaction it;
        it.user = user;
        it.book = book;
        it.weight = interaction_weight(r);
        it.timestamp = r.date;
        it.rating = r.rating;
        it.verified = r.verified;
        it.review = i;
        result.interactions.push_back(it);
    }
    // Missing timestamps sort after present ones; review index breaks ties.
    std::stable_sort(result.interactions.begin(), result.interactions.end(),
                     [](const Interaction& a, const Interaction& b) {
                         if (a.timestamp.has_value() != b.timestamp.has_value())
                             return a.timestamp.has_value();
                         if (a.timestamp && b.timestamp && *a.timestamp != *b.timestamp)
                             return *a.timestamp < *b.timestamp;
                         return a.review < b.review;
                     });
    return result;
}

}  // namespace bookrec
