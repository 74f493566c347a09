#include "bookrec/classic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace bookrec::rec {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<double> to_f64(const std::vector<int64_t>& v) {
    return {v.begin(), v.end()};
}
std::vector<double> to_f64_32(const std::vector<int32_t>& v) {
    return {v.begin(), v.end()};
}
std::vector<int64_t> to_i64(const std::vector<double>& v) {
    std::vector<int64_t> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<int64_t>(v[i]);
    return out;
}
std::vector<int32_t> to_i32(const std::vector<double>& v) {
    std::vector<int32_t> out(v.size());
    for (size_t i = 0; i < v.size(); ++i) out[i] = static_cast<int32_t>(v[i]);
    return out;
}

Tensor matrix_tensor(const MatrixXd& m) {
    std::vector<double> data(m.rows() * m.cols());
    for (int64_t r = 0; r < m.rows(); ++r)
        for (int64_t c = 0; c < m.cols(); ++c) data[r * m.cols() + c] = m(r, c);
    return Tensor::from_matrix(m.rows(), m.cols(), std::move(data));
}

MatrixXd tensor_matrix(const Tensor& t) {
    MatrixXd m(t.rows(), t.cols());
    for (int64_t r = 0; r < t.rows(); ++r)
        for (int64_t c = 0; c < t.cols(); ++c) m(r, c) = t.data[r * t.cols() + c];
    return m;
}

std::vector<double> popularity_counts(const std::vector<Interaction>& train,
                                      int32_t num_books) {
    std::vector<double> counts(num_books, 0.0);
    for (const auto& it : train) counts.at(it.book) += 1.0;
    return counts;
}

void put_csr(TensorMap& t, const std::string& prefix, const std::vector<int64_t>& indptr,
             const std::vector<int32_t>& indices, const std::vector<double>* values = nullptr) {
    t[prefix + "_indptr"] = Tensor::from_vector(to_f64(indptr));
    t[prefix + "_idx"] = Tensor::from_vector(to_f64_32(indices));
    if (values) t[prefix + "_val"] = Tensor::from_vector(*values);
}

void get_csr(const TensorMap& t, const std::string& prefix, std::vector<int64_t>& indptr,
             std::vector<int32_t>& indices, std::vector<double>* values = nullptr) {
    indptr = to_i64(t.at(prefix + "_indptr").data);
    indices = to_i32(t.at(prefix + "_idx").data);
    if (values) *values = t.at(prefix + "_val").data;
}

// --- popularity ---------------------------------------------------------------

class PopularityModel final : public Recommender {
public:
    PopularityModel(std::vector<double> counts, int32_t num_users)
        : counts_(std::move(counts)), num_users_(num_users) {}

    std::string kind() const override { return "popularity"; }
    json config() const override { return {{"num_users", num_users_}}; }
    int32_t num_users() const override { return num_users_; }
    int32_t num_books() const override { return static_cast<int32_t>(counts_.size()); }

    std::vector<RankEntry> rank(int32_t, const BookMask& mask, int32_t top_n) const override {
        return top_n_from_scores(counts_, mask, top_n);
    }

    TensorMap tensors() const override {
        return {{"pop", Tensor::from_vector(counts_)}};
    }

    const std::vector<double>& counts() const { return counts_; }

private:
    std::vector<double> counts_;
    int32_t num_users_;
};

// --- category-aware popularity --------------------------------------------------

class CategoryPopularityModel final : public Recommender {
public:
    CategoryPopularityModel(std::vector<std::vector<int32_t>> book_cats,
                            std::vector<std::vector<std::pair<int32_t, double>>> profiles,
                            std::vector<double> pop)
        : book_cats_(std::move(book_cats)),
          profiles_(std::move(profiles)),
          pop_(std::move(pop)) {}

    std::string kind() const override { return "category_pop"; }
    json config() const override { return {{"num_users", profiles_.size()}}; }
    int32_t num_users() const override { return static_cast<int32_t>(profiles_.size()); }
    int32_t num_books() const override { return static_cast<int32_t>(pop_.size()); }

    std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                int32_t top_n) const override {
        const auto& profile = profiles_.at(user);
        if (profile.empty())  // cold user: global popularity
            return top_n_from_scores(pop_, mask, top_n);

        std::vector<double> cat_count;
        for (const auto& [cat, count] : profile) {
            if (cat >= static_cast<int32_t>(cat_count.size()))
                cat_count.resize(cat + 1, 0.0);
            cat_count[cat] = count;
        }
        std::vector<double> scores(pop_.size(), 0.0);
        for (size_t b = 0; b < book_cats_.size(); ++b)
            for (int32_t c : book_cats_[b])
                if (c < static_cast<int32_t>(cat_count.size())) scores[b] += cat_count[c];
        return top_n_from_scores(scores, pop_, mask, top_n);
    }

    TensorMap tensors() const override {
        TensorMap t;
        std::vector<int64_t> bc_ptr{0};
        std::vector<int32_t> bc_idx;
        for (const auto& cats : book_cats_) {
            bc_idx.insert(bc_idx.end(), cats.begin(), cats.end());
            bc_ptr.push_back(static_cast<int64_t>(bc_idx.size()));
        }
        put_csr(t, "book_cat", bc_ptr, bc_idx);

        std::vector<int64_t> p_ptr{0};
        std::vector<int32_t> p_idx;
        std::vector<double> p_val;
        for (const auto& profile : profiles_) {
            for (const auto& [cat, count] : profile) {
                p_idx.push_back(cat);
                p_val.push_back(count);
            }
            p_ptr.push_back(static_cast<int64_t>(p_idx.size()));
        }
        put_csr(t, "profile", p_ptr, p_idx, &p_val);
        t["pop"] = Tensor::from_vector(pop_);
        return t;
    }

    static std::unique_ptr<CategoryPopularityModel> restore(const Checkpoint& ckpt) {
        std::vector<int64_t> bc_ptr, p_ptr;
        std::vector<int32_t> bc_idx, p_idx;
        std::vector<double> p_val;
        get_csr(ckpt.tensors, "book_cat", bc_ptr, bc_idx);
        get_csr(ckpt.tensors, "profile", p_ptr, p_idx, &p_val);

        std::vector<std::vector<int32_t>> book_cats(bc_ptr.size() - 1);
        for (size_t b = 0; b + 1 < bc_ptr.size(); ++b)
            book_cats[b].assign(bc_idx.begin() + bc_ptr[b], bc_idx.begin() + bc_ptr[b + 1]);
        std::vector<std::vector<std::pair<int32_t, double>>> profiles(p_ptr.size() - 1);
        for (size_t u = 0; u + 1 < p_ptr.size(); ++u)
            for (int64_t k = p_ptr[u]; k < p_ptr[u + 1]; ++k)
                profiles[u].emplace_back(p_idx[k], p_val[k]);
        return std::make_unique<CategoryPopularityModel>(std::move(book_cats),
                                                         std::move(profiles),
                                                         ckpt.tensors.at("pop").data);
    }

private:
    std::vector<std::vector<int32_t>> book_cats_;
    std::vector<std::vector<std::pair<int32_t, double>>> profiles_;  // cat -> count
    std::vector<double> pop_;
};

// --- neighborhood CF -----------------------------------------------------------

struct NeighborLists {
    std::vector<int64_t> indptr;
    std::vector<int32_t> idx;
    std::vector<double> sim;
};

// Exact cosine over binary rows, truncated to the top-k per row afterwards.
NeighborLists topk_cosine(const SparseMatrix& rows, const SparseMatrix& cols, int32_t k,
                          bool exclude_self) {
    NeighborLists out;
    out.indptr.push_back(0);
    std::vector<double> overlap(rows.rows, 0.0);
    std::vector<int32_t> touched;
    for (int32_t r = 0; r < rows.rows; ++r) {
        touched.clear();
        for (int64_t p = rows.indptr[r]; p < rows.indptr[r + 1]; ++p) {
            int32_t c = rows.indices[p];
            for (int64_t q = cols.indptr[c]; q < cols.indptr[c + 1]; ++q) {
                int32_t other = cols.indices[q];
                if (exclude_self && other == r) continue;
                if (overlap[other] == 0.0) touched.push_back(other);
                overlap[other] += 1.0;
            }
        }
        const double deg_r = static_cast<double>(rows.indptr[r + 1] - rows.indptr[r]);
        std::vector<std::pair<int32_t, double>> sims;
        sims.reserve(touched.size());
        for (int32_t other : touched) {
            const double deg_o = static_cast<double>(rows.indptr[other + 1] -
                                                     rows.indptr[other]);
            sims.emplace_back(other, overlap[other] / std::sqrt(deg_r * deg_o));
            overlap[other] = 0.0;
        }
        std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (static_cast<int32_t>(sims.size()) > k) sims.resize(k);
        for (const auto& [other, s] : sims) {
            out.idx.push_back(other);
            out.sim.push_back(s);
        }
        out.indptr.push_back(static_cast<int64_t>(out.idx.size()));
    }
    return out;
}

class UserCfModel final : public Recommender {
public:
    UserCfModel(SparseMatrix by_user, NeighborLists neighbors, std::vector<double> pop,
                int32_t k)
        : by_user_(std::move(by_user)),
          neighbors_(std::move(neighbors)),
          pop_(std::move(pop)),
          k_(k) {}

    std::string kind() const override { return "user_cf"; }
    json config() const override { return {{"k", k_}}; }
    int32_t num_users() const override { return by_user_.rows; }
    int32_t num_books() const override { return by_user_.cols; }

    std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                int32_t top_n) const override {
        if (by_user_.indptr[user] == by_user_.indptr[user + 1]) {
            // no training signal: popularity order, score 0
            std::vector<double> zeros(pop_.size(), 0.0);
            return top_n_from_scores(zeros, pop_, mask, top_n);
        }
        std::vector<double> scores(by_user_.cols, 0.0);
        for (int64_t p = neighbors_.indptr[user]; p < neighbors_.indptr[user + 1]; ++p) {
            const int32_t v = neighbors_.idx[p];
            const double s = neighbors_.sim[p];
            for (int64_t q = by_user_.indptr[v]; q < by_user_.indptr[v + 1]; ++q)
                scores[by_user_.indices[q]] += s;
        }
        return top_n_from_scores(scores, mask, top_n);
    }

    TensorMap tensors() const override {
        TensorMap t;
        put_csr(t, "rows", by_user_.indptr, by_user_.indices);
        put_csr(t, "nbr", neighbors_.indptr, neighbors_.idx, &neighbors_.sim);
        t["pop"] = Tensor::from_vector(pop_);
        t["shape"] = Tensor::from_vector({double(by_user_.rows), double(by_user_.cols)});
        return t;
    }

    static std::unique_ptr<UserCfModel> restore(const Checkpoint& ckpt) {
        SparseMatrix rows;
        rows.rows = static_cast<int32_t>(ckpt.tensors.at("shape").data[0]);
        rows.cols = static_cast<int32_t>(ckpt.tensors.at("shape").data[1]);
        get_csr(ckpt.tensors, "rows", rows.indptr, rows.indices);
        rows.values.assign(rows.indices.size(), 1.0);
        NeighborLists nbr;
        get_csr(ckpt.tensors, "nbr", nbr.indptr, nbr.idx, &nbr.sim);
        int32_t k = ckpt.config.value("k", 50);
        return std::make_unique<UserCfModel>(std::move(rows), std::move(nbr),
                                             ckpt.tensors.at("pop").data, k);
    }

private:
    SparseMatrix by_user_;
    NeighborLists neighbors_;
    std::vector<double> pop_;
    int32_t k_;
};

class ItemCfModel final : public Recommender {
public:
    // scatter: for each history item j, the list of items i whose top-k list
    // contains j, with sim(i, j).
    ItemCfModel(SparseMatrix by_user, NeighborLists scatter, std::vector<double> pop,
                int32_t k)
        : by_user_(std::move(by_user)),
          scatter_(std::move(scatter)),
          pop_(std::move(pop)),
          k_(k) {}

    std::string kind() const override { return "item_cf"; }
    json config() const override { return {{"k", k_}}; }
    int32_t num_users() const override { return by_user_.rows; }
    int32_t num_books() const override { return by_user_.cols; }

    std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                int32_t top_n) const override {
        if (by_user_.indptr[user] == by_user_.indptr[user + 1]) {
            std::vector<double> zeros(pop_.size(), 0.0);
            return top_n_from_scores(zeros, pop_, mask, top_n);
        }
        std::vector<double> scores(by_user_.cols, 0.0);
        for (int64_t p = by_user_.indptr[user]; p < by_user_.indptr[user + 1]; ++p) {
            const int32_t j = by_user_.indices[p];
            for (int64_t q = scatter_.indptr[j]; q < scatter_.indptr[j + 1]; ++q)
                scores[scatter_.idx[q]] += scatter_.sim[q];
        }
        return top_n_from_scores(scores, mask, top_n);
    }

    TensorMap tensors() const override {
        TensorMap t;
        put_csr(t, "rows", by_user_.indptr, by_user_.indices);
        put_csr(t, "scatter", scatter_.indptr, scatter_.idx, &scatter_.sim);
        t["pop"] = Tensor::from_vector(pop_);
        t["shape"] = Tensor::from_vector({double(by_user_.rows), double(by_user_.cols)});
        return t;
    }

    static std::unique_ptr<ItemCfModel> restore(const Checkpoint& ckpt) {
        SparseMatrix rows;
        rows.rows = static_cast<int32_t>(ckpt.tensors.at("shape").data[0]);
        rows.cols = static_cast<int32_t>(ckpt.tensors.at("shape").data[1]);
        get_csr(ckpt.tensors, "rows", rows.indptr, rows.indices);
        rows.values.assign(rows.indices.size(), 1.0);
        NeighborLists scatter;
        get_csr(ckpt.tensors, "scatter", scatter.indptr, scatter.idx, &scatter.sim);
        int32_t k = ckpt.config.value("k", 50);
        return std::make_unique<ItemCfModel>(std::move(rows), std::move(scatter),
                                             ckpt.tensors.at("pop").data, k);
    }

private:
    SparseMatrix by_user_;
    NeighborLists scatter_;
    std::vector<double> pop_;
    int32_t k_;
};

// --- factor models --------------------------------------------------------------

class FactorModel final : public Recommender {
public:
    FactorModel(std::string kind, MatrixXd user_factors, MatrixXd item_factors, json config)
        : kind_(std::move(kind)),
          user_factors_(std::move(user_factors)),
          item_factors_(std::move(item_factors)),
          config_(std::move(config)) {}

    std::string kind() const override { return kind_; }
    json config() const override { return config_; }
    int32_t num_users() const override { return static_cast<int32_t>(user_factors_.rows()); }
    int32_t num_books() const override { return static_cast<int32_t>(item_factors_.rows()); }

    std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                int32_t top_n) const override {
        VectorXd s = item_factors_ * user_factors_.row(user).transpose();
        std::vector<double> scores(s.data(), s.data() + s.size());
        return top_n_from_scores(scores, mask, top_n);
    }

    TensorMap tensors() const override {
        return {{"user_factors", matrix_tensor(user_factors_)},
                {"item_factors", matrix_tensor(item_factors_)}};
    }

    static std::unique_ptr<FactorModel> restore(const Checkpoint& ckpt) {
        return std::make_unique<FactorModel>(ckpt.kind,
                                             tensor_matrix(ckpt.tensors.at("user_factors")),
                                             tensor_matrix(ckpt.tensors.at("item_factors")),
                                             ckpt.config);
    }

private:
    std::string kind_;
    MatrixXd user_factors_, item_factors_;
    json config_;
};

class BiasedMfModel final : public Recommender {
public:
    BiasedMfModel(double mu, VectorXd user_bias, VectorXd item_bias, MatrixXd p, MatrixXd q,
                  json config)
        : mu_(mu),
          user_bias_(std::move(user_bias)),
          item_bias_(std::move(item_bias)),
          p_(std::move(p)),
          q_(std::move(q)),
          config_(std::move(config)) {}

    std::string kind() const override { return "explicit_mf"; }
    json config() const override { return config_; }
    int32_t num_users() const override { return static_cast<int32_t>(p_.rows()); }
    int32_t num_books() const override { return static_cast<int32_t>(q_.rows()); }

    std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                int32_t top_n) const override {
        VectorXd s = q_ * p_.row(user).transpose();
        std::vector<double> scores(s.size());
        for (int64_t i = 0; i < s.size(); ++i)
            scores[i] = mu_ + user_bias_(user) + item_bias_(i) + s(i);
        return top_n_from_scores(scores, mask, top_n);
    }

    double predict(int32_t user, int32_t item) const {
        return mu_ + user_bias_(user) + item_bias_(item) + p_.row(user).dot(q_.row(item));
    }

    TensorMap tensors() const override {
        return {{"mu", Tensor::from_vector({mu_})},
                {"user_bias",
                 Tensor::from_vector({user_bias_.data(), user_bias_.data() + user_bias_.size()})},
                {"item_bias",
                 Tensor::from_vector({item_bias_.data(), item_bias_.data() + item_bias_.size()})},
                {"p", matrix_tensor(p_)},
                {"q", matrix_tensor(q_)}};
    }

    static std::unique_ptr<BiasedMfModel> restore(const Checkpoint& ckpt) {
        const auto& bu = ckpt.tensors.at("user_bias").data;
        const auto& bi = ckpt.tensors.at("item_bias").data;
        VectorXd user_bias = Eigen::Map<const VectorXd>(bu.data(), bu.size());
        VectorXd item_bias = Eigen::Map<const VectorXd>(bi.data(), bi.size());
        return std::make_unique<BiasedMfModel>(
            ckpt.tensors.at("mu").data[0], std::move(user_bias), std::move(item_bias),
            tensor_matrix(ckpt.tensors.at("p")), tensor_matrix(ckpt.tensors.at("q")),
            ckpt.config);
    }

private:
    double mu_;
    VectorXd user_bias_, item_bias_;
    MatrixXd p_, q_;
    json config_;
};

// --- content-based ---------------------------------------------------------------

class ContentModel final : public Recommender {
public:
    ContentModel(SparseMatrix item_vecs, std::vector<double> norms, SparseMatrix by_user,
                 std::vector<double> pop)
        : item_vecs_(std::move(item_vecs)),
          norms_(std::move(norms)),
          by_user_(std::move(by_user)),
          pop_(std::move(pop)),
          postings_(item_vecs_.transposed()) {}

    std::string kind() const override { return "content"; }
    json config() const override {
        return {{"feature_dim", item_vecs_.cols}};
    }
    int32_t num_users() const override { return by_user_.rows; }
    int32_t num_books() const override { return item_vecs_.rows; }

    std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                int32_t top_n) const override {
        if (by_user_.indptr[user] == by_user_.indptr[user + 1]) {
            std::vector<double> zeros(pop_.size(), 0.0);
            return top_n_from_scores(zeros, pop_, mask, top_n);
        }
        std::vector<double> best(item_vecs_.rows, 0.0);
        std::vector<double> dots(item_vecs_.rows, 0.0);
        for (int64_t p = by_user_.indptr[user]; p < by_user_.indptr[user + 1]; ++p) {
            const int32_t j = by_user_.indices[p];
            if (norms_[j] == 0.0) continue;  // zero-norm vector: cosine 0 everywhere
            std::fill(dots.begin(), dots.end(), 0.0);
            for (int64_t f = item_vecs_.indptr[j]; f < item_vecs_.indptr[j + 1]; ++f) {
                const int32_t col = item_vecs_.indices[f];
                const double vj = item_vecs_.values[f];
                for (int64_t q = postings_.indptr[col]; q < postings_.indptr[col + 1]; ++q)
                    dots[postings_.indices[q]] += vj * postings_.values[q];
            }
            for (int32_t i = 0; i < item_vecs_.rows; ++i) {
                if (norms_[i] == 0.0) continue;
                const double cos = dots[i] / (norms_[i] * norms_[j]);
                if (cos > best[i]) best[i] = cos;
            }
        }
        return top_n_from_scores(best, mask, top_n);
    }

    TensorMap tensors() const override {
        TensorMap t;
        put_csr(t, "item", item_vecs_.indptr, item_vecs_.indices, &item_vecs_.values);
        put_csr(t, "rows", by_user_.indptr, by_user_.indices);
        t["norms"] = Tensor::from_vector(norms_);
        t["pop"] = Tensor::from_vector(pop_);
        t["shape"] = Tensor::from_vector(
            {double(item_vecs_.rows), double(item_vecs_.cols), double(by_user_.rows)});
        return t;
    }

    static std::unique_ptr<ContentModel> restore(const Checkpoint& ckpt) {
        const auto& shape = ckpt.tensors.at("shape").data;
        SparseMatrix items;
        items.rows = static_cast<int32_t>(shape[0]);
        items.cols = static_cast<int32_t>(shape[1]);
        get_csr(ckpt.tensors, "item", items.indptr, items.indices, &items.values);
        SparseMatrix rows;
        rows.rows = static_cast<int32_t>(shape[2]);
        rows.cols = items.rows;
        get_csr(ckpt.tensors, "rows", rows.indptr, rows.indices);
        rows.values.assign(rows.indices.size(), 1.0);
        return std::make_unique<ContentModel>(std::move(items), ckpt.tensors.at("norms").data,
                                              std::move(rows), ckpt.tensors.at("pop").data);
    }

private:
    SparseMatrix item_vecs_;  // rows = items, cols = feature space
    std::vector<double> norms_;
    SparseMatrix by_user_;
    std::vector<double> pop_;
    SparseMatrix postings_;  // feature -> (item, value)
};

}  // namespace

// --- fit functions ---------------------------------------------------------------

std::unique_ptr<Recommender> fit_popularity(const std::vector<Interaction>& train,
                                            int32_t num_users, int32_t num_books) {
    if (train.empty()) throw std::invalid_argument("fit_popularity: empty training set");
    return std::make_unique<PopularityModel>(popularity_counts(train, num_books), num_users);
}

std::unique_ptr<Recommender> fit_category_popularity(const std::vector<Interaction>& train,
                                                     const BookGraph& graph) {
    const int32_t num_books = graph.num_books();
    const int32_t num_users = graph.num_users();
    std::vector<std::vector<int32_t>> book_cats(num_books);
    for (int32_t b = 0; b < num_books; ++b)
        book_cats[b] = graph.neighbors({EntityKind::Book, b}, Relation::BookCategory);

    std::vector<std::map<int32_t, double>> maps(num_users);
    for (const auto& it : train)
        for (int32_t c : book_cats[it.book]) maps[it.user][c] += 1.0;
    std::vector<std::vector<std::pair<int32_t, double>>> profiles(num_users);
    for (int32_t u = 0; u < num_users; ++u)
        profiles[u].assign(maps[u].begin(), maps[u].end());

    return std::make_unique<CategoryPopularityModel>(std::move(book_cats), std::move(profiles),
                                                     popularity_counts(train, num_books));
}

std::unique_ptr<Recommender> fit_user_cf(const std::vector<Interaction>& train,
                                         int32_t num_users, int32_t num_books, int32_t k) {
    auto matrix = SparseInteractionMatrix::build(train, num_users, num_books);
    auto neighbors = topk_cosine(matrix.by_user, matrix.by_item, k, /*exclude_self=*/true);
    return std::make_unique<UserCfModel>(std::move(matrix.by_user), std::move(neighbors),
                                         popularity_counts(train, num_books), k);
}

std::unique_ptr<Recommender> fit_item_cf(const std::vector<Interaction>& train,
                                         int32_t num_users, int32_t num_books, int32_t k) {
    auto matrix = SparseInteractionMatrix::build(train, num_users, num_books);
    // per-item top-k lists over item rows (users as the feature axis)
    auto topk = topk_cosine(matrix.by_item, matrix.by_user, k, /*exclude_self=*/true);

    // invert to scatter lists: j -> {(i, sim) : j in topk(i)}
    std::vector<std::vector<std::pair<int32_t, double>>> by_j(num_books);
    for (int32_t i = 0; i < num_books; ++i)
        for (int64_t p = topk.indptr[i]; p < topk.indptr[i + 1]; ++p)
            by_j[topk.idx[p]].emplace_back(i, topk.sim[p]);
    NeighborLists scatter;
    scatter.indptr.push_back(0);
    for (auto& list : by_j) {
        std::sort(list.begin(), list.end());
        for (const auto& [i, s] : list) {
            scatter.idx.push_back(i);
            scatter.sim.push_back(s);
        }
        scatter.indptr.push_back(static_cast<int64_t>(scatter.idx.size()));
    }
    return std::make_unique<ItemCfModel>(std::move(matrix.by_user), std::move(scatter),
                                         popularity_counts(train, num_books), k);
}

std::unique_ptr<Recommender> fit_als(const std::vector<Interaction>& train, int32_t num_users,
                                     int32_t num_books, const AlsConfig& config,
                                     std::vector<double>* objective_trace) {
    if (config.dim < 1) throw std::invalid_argument("fit_als: dim must be >= 1");
    auto matrix = SparseInteractionMatrix::build(train, num_users, num_books);
    const int32_t d = config.dim;
    const double c_obs = 1.0 + config.alpha;

    Rng rng(config.seed);
    auto init = [&](MatrixXd& m) {
        for (int64_t r = 0; r < m.rows(); ++r)
            for (int64_t c = 0; c < m.cols(); ++c) m(r, c) = 0.01 * rng.next_gaussian();
    };
    MatrixXd x(num_users, d), y(num_books, d);
    init(x);
    init(y);

    auto objective = [&]() {
        // full sum over all cells: c=1, p=0 unobserved; c=1+alpha, p=1 observed
        double total = 0.0;
        for (int32_t u = 0; u < num_users; ++u) {
            std::set<int32_t> observed(
                matrix.by_user.indices.begin() + matrix.by_user.indptr[u],
                matrix.by_user.indices.begin() + matrix.by_user.indptr[u + 1]);
            for (int32_t i = 0; i < num_books; ++i) {
                const double pred = x.row(u).dot(y.row(i));
                if (observed.count(i))
                    total += c_obs * (1.0 - pred) * (1.0 - pred);
                else
                    total += pred * pred;
            }
        }
        total += config.reg * (x.squaredNorm() + y.squaredNorm());
        return total;
    };

    auto solve_side = [&](const SparseMatrix& rows, const MatrixXd& fixed, MatrixXd& target) {
        // (F^T F + (c-1) F_obs^T F_obs + reg I) t = c F_obs^T 1
        MatrixXd gram = fixed.transpose() * fixed;
        gram.diagonal().array() += config.reg;
        for (int32_t r = 0; r < rows.rows; ++r) {
            MatrixXd a = gram;
            VectorXd b = VectorXd::Zero(d);
            for (int64_t p = rows.indptr[r]; p < rows.indptr[r + 1]; ++p) {
                const auto f = fixed.row(rows.indices[p]);
                a.noalias() += (c_obs - 1.0) * f.transpose() * f;
                b.noalias() += c_obs * f.transpose();
            }
            target.row(r) = a.llt().solve(b).transpose();
        }
    };

    if (objective_trace) objective_trace->push_back(objective());
    for (int32_t sweep = 0; sweep < config.epochs; ++sweep) {
        solve_side(matrix.by_user, y, x);
        solve_side(matrix.by_item, x, y);
        if (!x.allFinite() || !y.allFinite())
            throw std::runtime_error("fit_als: non-finite factor after sweep " +
                                     std::to_string(sweep + 1));
        if (objective_trace) objective_trace->push_back(objective());
    }

    json cfg{{"dim", config.dim}, {"epochs", config.epochs}, {"reg", config.reg},
             {"alpha", config.alpha}, {"seed", config.seed}};
    return std::make_unique<FactorModel>("als", std::move(x), std::move(y), std::move(cfg));
}

double explicit_mf_loss(const ExplicitMfPoint& pt, double rating, double reg) {
    double pred = pt.mu + pt.user_bias + pt.item_bias;
    for (size_t f = 0; f < pt.p.size(); ++f) pred += pt.p[f] * pt.q[f];
    const double err = rating - pred;
    double penalty = pt.user_bias * pt.user_bias + pt.item_bias * pt.item_bias;
    for (double v : pt.p) penalty += v * v;
    for (double v : pt.q) penalty += v * v;
    return err * err + reg * penalty;
}

void explicit_mf_grad(const ExplicitMfPoint& pt, double rating, double reg,
                      double& d_user_bias, double& d_item_bias, std::vector<double>& d_p,
                      std::vector<double>& d_q) {
    double pred = pt.mu + pt.user_bias + pt.item_bias;
    for (size_t f = 0; f < pt.p.size(); ++f) pred += pt.p[f] * pt.q[f];
    const double err = rating - pred;
    d_user_bias = -2.0 * err + 2.0 * reg * pt.user_bias;
    d_item_bias = -2.0 * err + 2.0 * reg * pt.item_bias;
    d_p.resize(pt.p.size());
    d_q.resize(pt.q.size());
    for (size_t f = 0; f < pt.p.size(); ++f) {
        d_p[f] = -2.0 * err * pt.q[f] + 2.0 * reg * pt.p[f];
        d_q[f] = -2.0 * err * pt.p[f] + 2.0 * reg * pt.q[f];
    }
}

std::unique_ptr<Recommender> fit_explicit_mf(const std::vector<Interaction>& train,
                                             int32_t num_users, int32_t num_books,
                                             const ExplicitMfConfig& config) {
    std::vector<const Interaction*> rated;
    double rating_sum = 0.0;
    for (const auto& it : train) {
        if (!it.rating) continue;
        rated.push_back(&it);
        rating_sum += *it.rating;
    }
    if (rated.empty())
        throw std::invalid_argument(
            "fit_explicit_mf: no rated interactions; use an implicit-feedback model");

    const double mu = rating_sum / static_cast<double>(rated.size());
    const int32_t d = config.dim;
    Rng rng(config.seed);
    VectorXd bu = VectorXd::Zero(num_users), bi = VectorXd::Zero(num_books);
    MatrixXd p(num_users, d), q(num_books, d);
    for (int64_t r = 0; r < p.rows(); ++r)
        for (int32_t c = 0; c < d; ++c) p(r, c) = 0.1 * rng.next_gaussian();
    for (int64_t r = 0; r < q.rows(); ++r)
        for (int32_t c = 0; c < d; ++c) q(r, c) = 0.1 * rng.next_gaussian();

    std::vector<size_t> order(rated.size());
    std::iota(order.begin(), order.end(), size_t{0});
    const double lr = config.lr, reg = config.reg;
    for (int32_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t idx : order) {
            const Interaction& it = *rated[idx];
            const int32_t u = it.user, i = it.book;
            const double err = *it.rating - (mu + bu(u) + bi(i) + p.row(u).dot(q.row(i)));
            bu(u) += lr * (err - reg * bu(u));
            bi(i) += lr * (err - reg * bi(i));
            VectorXd pu = p.row(u);
            p.row(u) += lr * (err * q.row(i) - reg * p.row(u));
            q.row(i) += lr * (err * pu.transpose() - reg * q.row(i));
        }
    }

    json cfg{{"dim", config.dim}, {"epochs", config.epochs}, {"reg", config.reg},
             {"lr", config.lr},   {"seed", config.seed},     {"mu", mu}};
    return std::make_unique<BiasedMfModel>(mu, std::move(bu), std::move(bi), std::move(p),
                                           std::move(q), std::move(cfg));
}

std::unique_ptr<Recommender> fit_content_based(const std::vector<Interaction>& train,
                                               const feat::BookFeatures& features,
                                               int32_t num_users, int32_t num_books) {
    // item vector = [author multi-hot ; category ; publisher ; tf-idf block]
    const int32_t a_off = 0;
    const int32_t c_off = features.author_dim;
    const int32_t p_off = c_off + features.category_dim;
    const int32_t t_off = p_off + features.publisher_dim;
    const int32_t dim = t_off + static_cast<int32_t>(features.tfidf.vocabulary.size());

    SparseMatrix items;
    items.rows = num_books;
    items.cols = dim;
    items.indptr.push_back(0);
    std::vector<double> norms(num_books, 0.0);
    for (int32_t b = 0; b < num_books; ++b) {
        const auto& bundle = features.bundles.at(b);
        double norm_sq = 0.0;
        auto push = [&](int32_t col, double v) {
            if (col < 0 || col >= dim)
                throw std::invalid_argument(
                    "fit_content_based: feature column outside the declared space");
            items.indices.push_back(col);
            items.values.push_back(v);
            norm_sq += v * v;
        };
        for (int32_t a : bundle.author_idx) push(a_off + a, 1.0);
        for (int32_t c : bundle.category_idx) push(c_off + c, 1.0);
        for (int32_t p : bundle.publisher_idx) push(p_off + p, 1.0);
        for (const auto& [col, v] : features.tfidf_vectors.at(b)) push(t_off + col, v);
        items.indptr.push_back(static_cast<int64_t>(items.indices.size()));
        norms[b] = std::sqrt(norm_sq);
    }

    auto matrix = SparseInteractionMatrix::build(train, num_users, num_books);
    return std::make_unique<ContentModel>(std::move(items), std::move(norms),
                                          std::move(matrix.by_user),
                                          popularity_counts(train, num_books));
}

double warp_rank_weight(int32_t num_items, int32_t samples_drawn) {
    return std::log(std::floor(static_cast<double>(num_items - 1) / samples_drawn) + 1.0);
}

std::unique_ptr<Recommender> fit_hybrid_warp(const std::vector<Interaction>& train,
                                             const feat::BookFeatures& features,
                                             int32_t num_users, int32_t num_books,
                                             const WarpConfig& config) {
    // feature space: per-item identity, then author/category/publisher indicators
    const int32_t a_off = num_books;
    const int32_t c_off = a_off + features.author_dim;
    const int32_t p_off = c_off + features.category_dim;
    const int32_t num_feats = p_off + features.publisher_dim;

    std::vector<std::vector<int32_t>> item_feats(num_books);
    for (int32_t b = 0; b < num_books; ++b) {
        const auto& bundle = features.bundles.at(b);
        auto& f = item_feats[b];
        f.push_back(b);  // identity
        for (int32_t a : bundle.author_idx) f.push_back(a_off + a);
        for (int32_t c : bundle.category_idx) f.push_back(c_off + c);
        for (int32_t p : bundle.publisher_idx) f.push_back(p_off + p);
    }

    const int32_t d = config.dim;
    Rng rng(config.seed);
    MatrixXd user_emb(num_users, d), feat_emb(num_feats, d);
    for (int64_t r = 0; r < user_emb.rows(); ++r)
        for (int32_t c = 0; c < d; ++c) user_emb(r, c) = 0.01 * rng.next_gaussian();
    for (int64_t r = 0; r < feat_emb.rows(); ++r)
        for (int32_t c = 0; c < d; ++c) feat_emb(r, c) = 0.01 * rng.next_gaussian();

    auto matrix = SparseInteractionMatrix::build(train, num_users, num_books);
    auto user_has = [&](int32_t u, int32_t i) {
        auto begin = matrix.by_user.indices.begin() + matrix.by_user.indptr[u];
        auto end = matrix.by_user.indices.begin() + matrix.by_user.indptr[u + 1];
        return std::binary_search(begin, end, i);
    };

    auto item_repr = [&](int32_t i) {
        VectorXd x = VectorXd::Zero(d);
        for (int32_t f : item_feats[i]) x += feat_emb.row(f);
        return x;
    };

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (int32_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t idx : order) {
            const int32_t u = train[idx].user;
            const int32_t pos = train[idx].book;
            const VectorXd xu = user_emb.row(u);
            const double s_pos = xu.dot(item_repr(pos));

            int32_t neg = -1, trials = 0;
            double s_neg = 0.0;
            while (trials < config.max_trials) {
                ++trials;
                int32_t j = static_cast<int32_t>(rng.next_below(num_books));
                if (j == pos || user_has(u, j)) continue;
                const double s = xu.dot(item_repr(j));
                if (s > s_pos - config.margin) {
                    neg = j;
                    s_neg = s;
                    break;
                }
            }
            if (neg < 0) continue;  // no violation found within the cap

            const double w = warp_rank_weight(num_books, trials);
            const double slack = config.margin - s_pos + s_neg;
            if (slack <= 0) continue;
            const VectorXd x_pos = item_repr(pos);
            const VectorXd x_neg = item_repr(neg);
            user_emb.row(u) -= (config.lr * w) * (x_neg - x_pos).transpose();
            for (int32_t f : item_feats[pos]) feat_emb.row(f) += (config.lr * w) * xu.transpose();
            for (int32_t f : item_feats[neg]) feat_emb.row(f) -= (config.lr * w) * xu.transpose();
        }
    }

    MatrixXd item_mat(num_books, d);
    for (int32_t i = 0; i < num_books; ++i) item_mat.row(i) = item_repr(i).transpose();

    json cfg{{"dim", config.dim},          {"epochs", config.epochs},
             {"max_trials", config.max_trials}, {"margin", config.margin},
             {"lr", config.lr},            {"seed", config.seed},
             {"feature_dim", num_feats}};
    return std::make_unique<FactorModel>("hybrid_warp", std::move(user_emb),
                                         std::move(item_mat), std::move(cfg));
}

std::unique_ptr<Recommender> restore_classic(const Checkpoint& ckpt) {
    if (ckpt.kind == "popularity")
        return std::make_unique<PopularityModel>(ckpt.tensors.at("pop").data,
                                                 ckpt.config.value("num_users", 0));
    if (ckpt.kind == "category_pop") return CategoryPopularityModel::restore(ckpt);
    if (ckpt.kind == "user_cf") return UserCfModel::restore(ckpt);
    if (ckpt.kind == "item_cf") return ItemCfModel::restore(ckpt);
    if (ckpt.kind == "als" || ckpt.kind == "hybrid_warp") return FactorModel::restore(ckpt);
    if (ckpt.kind == "explicit_mf") return BiasedMfModel::restore(ckpt);
    if (ckpt.kind == "content") return ContentModel::restore(ckpt);
    return nullptr;
}

}  // namespace bookrec::rec
