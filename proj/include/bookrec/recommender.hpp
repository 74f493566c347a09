#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bookrec/features.hpp"
#include "bookrec/graph.hpp"

namespace bookrec::rec {

using json = nlohmann::json;

struct RankEntry {
    int32_t book = -1;
    double score = 0.0;
};

// Books excluded from a user's candidate set (their training items).
class BookMask {
public:
    explicit BookMask(int32_t num_books) : excluded_(num_books, 0) {}

    void exclude(int32_t book) { excluded_.at(book) = 1; }
    bool is_excluded(int32_t book) const { return excluded_[book] != 0; }
    int32_t size() const { return static_cast<int32_t>(excluded_.size()); }
    int64_t excluded_count() const;

private:
    std::vector<uint8_t> excluded_;
};

// Scores sorted descending, ties by ascending book index, masked books dropped.
std::vector<RankEntry> top_n_from_scores(const std::vector<double>& scores,
                                         const BookMask& mask, int32_t top_n);

// Same, with a secondary sort key (used by category popularity's
// popularity-then-index tie-break).
std::vector<RankEntry> top_n_from_scores(const std::vector<double>& scores,
                                         const std::vector<double>& tiebreak,
                                         const BookMask& mask, int32_t top_n);

// CSR matrix over (user, book) training pairs.
struct SparseMatrix {
    int32_t rows = 0, cols = 0;
    std::vector<int64_t> indptr;   // rows + 1
    std::vector<int32_t> indices;  // sorted within each row
    std::vector<double> values;

    int64_t nnz() const { return static_cast<int64_t>(indices.size()); }
    SparseMatrix transposed() const;
};

// Distinct (user, book) pairs; binary values or summed interaction weights.
// Both views represent the same matrix.
struct SparseInteractionMatrix {
    SparseMatrix by_user;
    SparseMatrix by_item;

    static SparseInteractionMatrix build(const std::vector<Interaction>& train,
                                         int32_t num_users, int32_t num_books,
                                         bool binary = true);
};

// --- checkpoint format -------------------------------------------------------
// Flat binary file: magic, version, model kind, then float64 tensors keyed by
// name. Hyperparameters and seed live in a JSON sidecar (<path>.json).

struct Tensor {
    std::vector<uint64_t> shape;
    std::vector<double> data;

    static Tensor from_vector(std::vector<double> v);
    static Tensor from_matrix(int64_t rows, int64_t cols, std::vector<double> row_major);
    int64_t rows() const { return shape.empty() ? 0 : static_cast<int64_t>(shape[0]); }
    int64_t cols() const { return shape.size() < 2 ? 1 : static_cast<int64_t>(shape[1]); }
};

using TensorMap = std::map<std::string, Tensor>;

struct Checkpoint {
    std::string kind;
    json config;
    TensorMap tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// --- the model contract --------------------------------------------------------

class Recommender {
public:
    virtual ~Recommender() = default;

    virtual std::string kind() const = 0;
    virtual json config() const = 0;
    virtual int32_t num_users() const = 0;
    virtual int32_t num_books() const = 0;

    // Ordered (book, score) list; never returns a masked book; deterministic.
    virtual std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                        int32_t top_n) const = 0;

    // State sufficient to reconstruct rank() behaviour.
    virtual TensorMap tensors() const = 0;

    void save(const std::filesystem::path& path) const;
};

// Reads a checkpoint written by save() and reconstructs the model by kind.
std::unique_ptr<Recommender> load_recommender(const std::filesystem::path& path);

}  // namespace bookrec::rec
