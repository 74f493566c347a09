#include "bookrec/recommender.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>

#include "bookrec/classic.hpp"
#include "bookrec/neural.hpp"

namespace bookrec::rec {

int64_t BookMask::excluded_count() const {
    int64_t n = 0;
    for (uint8_t b : excluded_) n += b;
    return n;
}

std::vector<RankEntry> top_n_from_scores(const std::vector<double>& scores,
                                         const BookMask& mask, int32_t top_n) {
    return top_n_from_scores(scores, {}, mask, top_n);
}

std::vector<RankEntry> top_n_from_scores(const std::vector<double>& scores,
                                         const std::vector<double>& tiebreak,
                                         const BookMask& mask, int32_t top_n) {
    std::vector<int32_t> candidates;
    candidates.reserve(scores.size());
    for (int32_t i = 0; i < static_cast<int32_t>(scores.size()); ++i)
        if (!mask.is_excluded(i)) candidates.push_back(i);

    auto better = [&](int32_t a, int32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (!tiebreak.empty() && tiebreak[a] != tiebreak[b]) return tiebreak[a] > tiebreak[b];
        return a < b;
    };
    const size_t n = std::min<size_t>(top_n, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + n, candidates.end(), better);
    candidates.resize(n);

    std::vector<RankEntry> out;
    out.reserve(n);
    for (int32_t i : candidates) out.push_back({i, scores[i]});
    return out;
}

SparseMatrix SparseMatrix::transposed() const {
    SparseMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.indptr.assign(cols + 1, 0);
    for (int32_t c : indices) ++t.indptr[c + 1];
    for (int32_t c = 0; c < cols; ++c) t.indptr[c + 1] += t.indptr[c];
    t.indices.resize(indices.size());
    t.values.resize(values.size());
    std::vector<int64_t> next(t.indptr.begin(), t.indptr.end() - 1);
    for (int32_t r = 0; r < rows; ++r) {
        for (int64_t k = indptr[r]; k < indptr[r + 1]; ++k) {
            int64_t slot = next[indices[k]]++;
            t.indices[slot] = r;
            t.values[slot] = values[k];
        }
    }
    return t;
}

SparseInteractionMatrix SparseInteractionMatrix::build(const std::vector<Interaction>& train,
                                                       int32_t num_users, int32_t num_books,
                                                       bool binary) {
    // collapse duplicate (user, book) pairs
    std::map<std::pair<int32_t, int32_t>, double> cells;
    for (const auto& it : train) {
        auto key = std::make_pair(it.user, it.book);
        if (binary)
            cells[key] = 1.0;
        else
            cells[key] += it.weight;
    }

    SparseInteractionMatrix m;
    m.by_user.rows = num_users;
    m.by_user.cols = num_books;
    m.by_user.indptr.assign(num_users + 1, 0);
    for (const auto& [key, v] : cells) ++m.by_user.indptr[key.first + 1];
    for (int32_t u = 0; u < num_users; ++u) m.by_user.indptr[u + 1] += m.by_user.indptr[u];
    m.by_user.indices.reserve(cells.size());
    m.by_user.values.reserve(cells.size());
    for (const auto& [key, v] : cells) {  // map iterates (user, book) ascending
        m.by_user.indices.push_back(key.second);
        m.by_user.values.push_back(v);
    }
    m.by_item = m.by_user.transposed();
    return m;
}

Tensor Tensor::from_vector(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<uint64_t>(v.size())};
    t.data = std::move(v);
    return t;
}

Tensor Tensor::from_matrix(int64_t rows, int64_t cols, std::vector<double> row_major) {
    if (static_cast<int64_t>(row_major.size()) != rows * cols)
        throw std::invalid_argument("Tensor::from_matrix: size mismatch");
    Tensor t;
    t.shape = {static_cast<uint64_t>(rows), static_cast<uint64_t>(cols)};
    t.data = std::move(row_major);
    return t;
}

namespace {

constexpr char kMagic[8] = {'B', 'K', 'R', 'E', 'C', 'K', 'P', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint truncated");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    uint32_t len = read_pod<uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw std::runtime_error("checkpoint truncated");
    return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_string(out, ckpt.kind);
    write_pod<uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
        write_string(out, name);
        write_pod<uint32_t>(out, static_cast<uint32_t>(tensor.shape.size()));
        for (uint64_t d : tensor.shape) write_pod<uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(tensor.data.data()),
                  static_cast<std::streamsize>(tensor.data.size() * sizeof(double)));
    }

    std::ofstream sidecar(path.string() + ".json");
    sidecar << json{{"kind", ckpt.kind}, {"config", ckpt.config}}.dump(2) << "\n";
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read checkpoint: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a model checkpoint: " + path.string());

    Checkpoint ckpt;
    ckpt.kind = read_string(in);
    uint64_t count = read_pod<uint64_t>(in);
    for (uint64_t t = 0; t < count; ++t) {
        std::string name = read_string(in);
        uint32_t ndim = read_pod<uint32_t>(in);
        Tensor tensor;
        uint64_t total = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            tensor.shape.push_back(read_pod<uint64_t>(in));
            total *= tensor.shape.back();
        }
        tensor.data.resize(total);
        in.read(reinterpret_cast<char*>(tensor.data.data()),
                static_cast<std::streamsize>(total * sizeof(double)));
        if (!in) throw std::runtime_error("checkpoint truncated in tensor " + name);
        ckpt.tensors.emplace(std::move(name), std::move(tensor));
    }

    std::ifstream sidecar(path.string() + ".json");
    if (sidecar) {
        json j = json::parse(sidecar, nullptr, false);
        if (!j.is_discarded() && j.contains("config")) ckpt.config = j["config"];
    }
    return ckpt;
}

void Recommender::save(const std::filesystem::path& path) const {
    Checkpoint ckpt;
    ckpt.kind = kind();
    ckpt.config = config();
    ckpt.tensors = tensors();
    write_checkpoint(path, ckpt);
}

std::unique_ptr<Recommender> load_recommender(const std::filesystem::path& path) {
    Checkpoint ckpt = read_checkpoint(path);
    if (auto model = restore_classic(ckpt)) return model;
    if (auto model = restore_neural(ckpt)) return model;
    throw std::runtime_error("unknown model kind in checkpoint: " + ckpt.kind);
}

}  // namespace bookrec::rec
