#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "bookrec/graph.hpp"

namespace bookrec::feat {

// Sparse vector: (column, value) pairs sorted by column.
using SparseVec = std::vector<std::pair<int32_t, double>>;

double sparse_dot(const SparseVec& a, const SparseVec& b);
double sparse_norm(const SparseVec& v);

// Per-book side features. Multi-hot blocks store active indices; the numeric
// block is fixed at 5 dims (price, pages, avg_rating, rating_count,
// review_count), log1p on the count-like fields, z-scored over the catalog,
// missing mapped to 0 after scaling.
struct FeatureBundle {
    std::vector<int32_t> author_idx;
    std::vector<int32_t> category_idx;
    std::vector<int32_t> publisher_idx;
    std::array<double, 5> numeric{};
    std::vector<float> text_embedding;
};

// Catalog statistics are computed once; bundle construction is pure after that.
class FeatureBuilder {
public:
    explicit FeatureBuilder(const BookGraph& graph);

    FeatureBundle build(int32_t book) const;

    int32_t author_dim() const { return author_dim_; }
    int32_t category_dim() const { return category_dim_; }
    int32_t publisher_dim() const { return publisher_dim_; }

private:
    const BookGraph* graph_;
    int32_t author_dim_, category_dim_, publisher_dim_;
    std::array<double, 5> mean_{};
    std::array<double, 5> std_{};
};

// Splits on Unicode word boundaries (ASCII alnum runs and non-ASCII letter
// runs), lowercasing ASCII.
std::vector<std::string> tokenize(std::string_view text);

struct TfidfModel {
    std::map<std::string, int32_t> vocabulary;  // term -> column, lexicographic columns
    std::vector<double> idf;
    double min_df = 0.0;
    double max_df = 1.0;
    int32_t max_features = 0;
    int64_t num_documents = 0;
};

// Unigrams + bigrams; document-frequency bounds are proportions; the top
// max_features terms by document frequency survive (ties broken by
// lexicographic term order). idf(t) = ln((1+N)/(1+df(t))) + 1.
// Throws std::runtime_error when filtering empties the vocabulary.
TfidfModel tfidf_fit(const std::vector<std::vector<std::string>>& documents, double min_df,
                     double max_df, int32_t max_features);

// L2-normalized tf-idf row; all-out-of-vocabulary documents give a zero vector.
SparseVec tfidf_transform(const TfidfModel& model, const std::vector<std::string>& document);

// Title, summary, author information, category descriptions, publisher
// metadata, joined in that order and NFD-normalized.
std::string compose_book_text(const BookGraph& graph, int32_t book);

// Deterministic signed feature hashing; unit norm for non-empty text.
// Requires dim >= 8.
std::vector<float> hash_text_embed(std::string_view text, int32_t dim);

struct EmbeddingTable {
    int32_t dim = 0;
    std::unordered_map<int32_t, std::vector<float>> vectors;  // book index -> unit vector
    std::string provenance;

    // zero vector for books absent from the table
    std::vector<float> get(int32_t book) const {
        auto it = vectors.find(book);
        if (it != vectors.end()) return it->second;
        return std::vector<float>(dim, 0.0f);
    }
};

// File format: first line "dim=<D>", then "book_id<TAB>v1,v2,...,vD".
// Rows are L2-normalized at load time. Throws on dimension mismatch or
// duplicate book ids; unknown book ids are also an error.
EmbeddingTable load_embeddings(const std::filesystem::path& path, const BookGraph& graph);

void write_embeddings(const std::filesystem::path& path, const BookGraph& graph,
                      const std::vector<std::vector<float>>& per_book, int32_t dim);

// Built-in fallback: hash_text_embed over compose_book_text for every book.
EmbeddingTable hashing_embeddings(const BookGraph& graph, int32_t dim = 256);

struct FeatureOptions {
    double tfidf_min_df = 0.2;
    double tfidf_max_df = 0.8;
    int32_t tfidf_max_features = 5000;
    bool relax_df_bounds = false;  // retry with [0,1] when bounds empty the vocabulary
    int32_t hash_dim = 256;
    std::string embedding_file;  // empty -> hashing fallback
};

// Everything the content-based, hybrid, and neural models consume.
struct BookFeatures {
    std::vector<FeatureBundle> bundles;  // per book
    int32_t author_dim = 0, category_dim = 0, publisher_dim = 0;
    TfidfModel tfidf;
    std::vector<SparseVec> tfidf_vectors;  // per book, from training review text only
    EmbeddingTable embeddings;
};

// Review text is restricted to the training split to avoid leakage.
BookFeatures build_book_features(const BookGraph& graph,
                                 const std::vector<Interaction>& train,
                                 const FeatureOptions& opts = {});

}  // namespace bookrec::feat
