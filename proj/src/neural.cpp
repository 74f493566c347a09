#include "bookrec/neural.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "bookrec/eval.hpp"

namespace bookrec::rec {

using nn::Mat;
using nn::Vec;

// --- shared rank-by-dot-product model -------------------------------------------

namespace {

class DotProductModel final : public Recommender {
public:
    DotProductModel(std::string kind, Mat users, Mat items, json config)
        : kind_(std::move(kind)),
          users_(std::move(users)),
          items_(std::move(items)),
          config_(std::move(config)) {}

    std::string kind() const override { return kind_; }
    json config() const override { return config_; }
    int32_t num_users() const override { return static_cast<int32_t>(users_.rows()); }
    int32_t num_books() const override { return static_cast<int32_t>(items_.rows()); }

    std::vector<RankEntry> rank(int32_t user, const BookMask& mask,
                                int32_t top_n) const override {
        Vec s = items_ * users_.row(user).transpose();
        std::vector<double> scores(s.data(), s.data() + s.size());
        return top_n_from_scores(scores, mask, top_n);
    }

    TensorMap tensors() const override {
        auto pack = [](const Mat& m) {
            std::vector<double> data(m.rows() * m.cols());
            for (int64_t r = 0; r < m.rows(); ++r)
                for (int64_t c = 0; c < m.cols(); ++c) data[r * m.cols() + c] = m(r, c);
            return Tensor::from_matrix(m.rows(), m.cols(), std::move(data));
        };
        return {{"user_emb", pack(users_)}, {"item_emb", pack(items_)}};
    }

private:
    std::string kind_;
    Mat users_, items_;
    json config_;
};

Mat unpack_matrix(const Tensor& t) {
    Mat m(t.rows(), t.cols());
    for (int64_t r = 0; r < t.rows(); ++r)
        for (int64_t c = 0; c < t.cols(); ++c) m(r, c) = t.data[r * t.cols() + c];
    return m;
}

// per-user sorted distinct train items, for negative-sample rejection
std::vector<std::vector<int32_t>> train_item_sets(const std::vector<Interaction>& train,
                                                  int32_t num_users) {
    std::vector<std::vector<int32_t>> sets(num_users);
    for (const auto& it : train) sets[it.user].push_back(it.book);
    for (auto& s : sets) {
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
    }
    return sets;
}

}  // namespace

int32_t sample_uniform_negative(Rng& rng, const std::vector<int32_t>& sorted_user_items,
                                int32_t num_books) {
    if (static_cast<int32_t>(sorted_user_items.size()) >= num_books)
        throw std::runtime_error("cannot sample a negative: user interacted with every book");
    for (;;) {
        int32_t j = static_cast<int32_t>(rng.next_below(num_books));
        if (!std::binary_search(sorted_user_items.begin(), sorted_user_items.end(), j))
            return j;
    }
}

// --- normalized adjacency / LightGCN --------------------------------------------

NormalizedAdjacency build_norm_adjacency(const std::vector<Interaction>& train,
                                         int32_t num_users, int32_t num_books) {
    std::set<std::pair<int32_t, int32_t>> pairs;
    for (const auto& it : train) pairs.emplace(it.user, it.book);

    std::vector<int64_t> deg(num_users + num_books, 0);
    for (const auto& [u, i] : pairs) {
        ++deg[u];
        ++deg[num_users + i];
    }

    // adjacency rows: user rows hold item columns and vice versa
    std::vector<std::vector<std::pair<int32_t, double>>> rows(num_users + num_books);
    for (const auto& [u, i] : pairs) {
        const double v = 1.0 / std::sqrt(static_cast<double>(deg[u]) *
                                         static_cast<double>(deg[num_users + i]));
        rows[u].emplace_back(num_users + i, v);
        rows[num_users + i].emplace_back(u, v);
    }

    NormalizedAdjacency adj;
    adj.num_users = num_users;
    adj.num_items = num_books;
    adj.indptr.push_back(0);
    for (auto& row : rows) {
        std::sort(row.begin(), row.end());
        for (const auto& [c, v] : row) {
            adj.indices.push_back(c);
            adj.values.push_back(v);
        }
        adj.indptr.push_back(static_cast<int64_t>(adj.indices.size()));
    }
    return adj;
}

Mat adjacency_multiply(const NormalizedAdjacency& adj, const Mat& embeddings) {
    Mat out = Mat::Zero(embeddings.rows(), embeddings.cols());
    for (int32_t r = 0; r < adj.size(); ++r)
        for (int64_t p = adj.indptr[r]; p < adj.indptr[r + 1]; ++p)
            out.row(r) += adj.values[p] * embeddings.row(adj.indices[p]);
    return out;
}

Mat lightgcn_propagate(const NormalizedAdjacency& adj, const Mat& e0, int32_t layers) {
    Mat acc = e0;
    Mat cur = e0;
    for (int32_t l = 0; l < layers; ++l) {
        cur = adjacency_multiply(adj, cur);
        acc += cur;
    }
    return acc / static_cast<double>(layers + 1);
}

std::unique_ptr<Recommender> fit_lightgcn(const std::vector<Interaction>& train,
                                          int32_t num_users, int32_t num_books,
                                          const LightGcnConfig& config) {
    if (train.empty()) throw std::invalid_argument("fit_lightgcn: empty training set");
    const auto adj = build_norm_adjacency(train, num_users, num_books);
    const auto user_items = train_item_sets(train, num_users);
    const int32_t n = num_users + num_books;

    Rng rng(config.seed);
    Mat e0 = nn::init_gaussian(n, config.dim, 0.1, rng);
    Mat grad = Mat::Zero(n, config.dim);
    nn::AdamW opt(config.lr, 0.0);
    opt.add(e0, grad, false);

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    for (int32_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size(); start += config.batch) {
            const size_t end = std::min(order.size(), start + config.batch);
            const double inv_b = 1.0 / static_cast<double>(end - start);

            Mat final_emb = lightgcn_propagate(adj, e0, config.layers);
            Mat g_final = Mat::Zero(n, config.dim);
            double loss = 0.0;
            for (size_t b = start; b < end; ++b) {
                const auto& it = train[order[b]];
                const int32_t u = it.user;
                const int32_t i = num_users + it.book;
                const int32_t j =
                    num_users + sample_uniform_negative(rng, user_items[it.user], num_books);

                Vec xu = final_emb.row(u), xi = final_emb.row(i), xj = final_emb.row(j);
                loss += nn::bpr_loss(xu, xi, xj, 0.0) * inv_b;
                Vec gu, gi, gj;
                nn::bpr_grad(xu, xi, xj, 0.0, gu, gi, gj);
                g_final.row(u) += inv_b * gu.transpose();
                g_final.row(i) += inv_b * gi.transpose();
                g_final.row(j) += inv_b * gj.transpose();
                // L2 on the raw (layer-0) embeddings of the batch
                grad.row(u) += 2.0 * config.reg * inv_b * e0.row(u);
                grad.row(i) += 2.0 * config.reg * inv_b * e0.row(i);
                grad.row(j) += 2.0 * config.reg * inv_b * e0.row(j);
            }
            if (!std::isfinite(loss))
                throw std::runtime_error("fit_lightgcn: NaN loss at epoch " +
                                         std::to_string(epoch));

            // d final / d e0 through symmetric propagation: sum_l A^l g / (L+1)
            Mat acc = g_final;
            Mat cur = g_final;
            for (int32_t l = 0; l < config.layers; ++l) {
                cur = adjacency_multiply(adj, cur);
                acc += cur;
            }
            grad += acc / static_cast<double>(config.layers + 1);
            opt.step();
        }
    }

    Mat final_emb = lightgcn_propagate(adj, e0, config.layers);
    json cfg{{"dim", config.dim},   {"layers", config.layers}, {"lr", config.lr},
             {"epochs", config.epochs}, {"batch", config.batch},  {"reg", config.reg},
             {"seed", config.seed}};
    return std::make_unique<DotProductModel>(
        "lightgcn", final_emb.topRows(num_users), final_emb.bottomRows(num_books),
        std::move(cfg));
}

// --- two-tower -------------------------------------------------------------------

json TowerConfig::to_json() const {
    return {{"id_emb_dim", id_emb_dim},
            {"text_proj_dim", text_proj_dim},
            {"out_dim", out_dim},
            {"hidden_dim", hidden_dim},
            {"mlp_layers", mlp_layers},
            {"dropout", dropout},
            {"max_history", max_history},
            {"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"patience", patience},
            {"temperature", temperature},
            {"layer_norm", layer_norm},
            {"seed", seed}};
}

TowerConfig TowerConfig::from_json(const json& j) {
    TowerConfig c;
    c.id_emb_dim = j.value("id_emb_dim", c.id_emb_dim);
    c.text_proj_dim = j.value("text_proj_dim", c.text_proj_dim);
    c.out_dim = j.value("out_dim", c.out_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.mlp_layers = j.value("mlp_layers", c.mlp_layers);
    c.dropout = j.value("dropout", c.dropout);
    c.max_history = j.value("max_history", c.max_history);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.patience = j.value("patience", c.patience);
    c.temperature = j.value("temperature", c.temperature);
    c.layer_norm = j.value("layer_norm", c.layer_norm);
    c.seed = j.value("seed", c.seed);
    return c;
}

TwoTowerNetwork::TwoTowerNetwork(const TowerConfig& config, const AblationFlags& flags,
                                 int32_t num_users, int32_t num_books, int32_t num_authors,
                                 int32_t num_categories, int32_t num_publishers,
                                 int32_t text_dim)
    : config_(config),
      flags_(flags),
      num_users_(num_users),
      num_books_(num_books),
      text_dim_(text_dim) {
    Rng rng(config.seed);
    const int32_t d = config.id_emb_dim;
    const double init_std = 0.01;
    item_emb_ = nn::init_gaussian(num_books, d, init_std, rng);
    user_emb_ = nn::init_gaussian(num_users, d, init_std, rng);
    author_emb_ = nn::init_gaussian(std::max(num_authors, 1), d, init_std, rng);
    category_emb_ = nn::init_gaussian(std::max(num_categories, 1), d, init_std, rng);
    publisher_emb_ = nn::init_gaussian(std::max(num_publishers, 1), d, init_std, rng);
    shared_user_emb_ = nn::init_gaussian(1, d, init_std, rng);
    text_proj_.init(text_dim, config.text_proj_dim, rng);
    item_mlp_.init(item_input_dim(), config.hidden_dim, config.out_dim, config.mlp_layers,
                   config.layer_norm, config.dropout, rng);
    user_mlp_.init(user_input_dim(), config.hidden_dim, config.out_dim, config.mlp_layers,
                   config.layer_norm, config.dropout, rng);

    auto zeros_like = [](const Mat& m) { return Mat::Zero(m.rows(), m.cols()); };
    g_item_emb_ = zeros_like(item_emb_);
    g_user_emb_ = zeros_like(user_emb_);
    g_author_emb_ = zeros_like(author_emb_);
    g_category_emb_ = zeros_like(category_emb_);
    g_publisher_emb_ = zeros_like(publisher_emb_);
    g_shared_user_emb_ = zeros_like(shared_user_emb_);
}

int32_t TwoTowerNetwork::item_input_dim() const {
    int32_t dim = 0;
    if (flags_.interaction) dim += config_.id_emb_dim;       // e_i
    if (flags_.relations) dim += 3 * config_.id_emb_dim;     // p_i ; a_i ; c_i
    if (flags_.side) dim += 5 + config_.text_proj_dim;       // n_i ; t_i
    return dim;
}

int32_t TwoTowerNetwork::user_input_dim() const {
    return config_.id_emb_dim + config_.out_dim;  // [e_u ; h_u]
}

Mat TwoTowerNetwork::item_inputs(const std::vector<int32_t>& books,
                                 const std::vector<const feat::FeatureBundle*>& bundles) const {
    const int64_t batch = static_cast<int64_t>(books.size());
    const int32_t d = config_.id_emb_dim;
    Mat x(batch, item_input_dim());

    Mat text_raw;
    Mat text_projected;
    if (flags_.side) {
        text_raw = Mat::Zero(batch, text_dim_);
        for (int64_t r = 0; r < batch; ++r) {
            const auto& emb = bundles[r]->text_embedding;
            for (int32_t k = 0; k < std::min<int32_t>(text_dim_, emb.size()); ++k)
                text_raw(r, k) = emb[k];
        }
        text_projected = text_proj_.forward(text_raw);
    }

    for (int64_t r = 0; r < batch; ++r) {
        const auto& bundle = *bundles[r];
        int32_t off = 0;
        if (flags_.interaction) {
            x.row(r).segment(off, d) = item_emb_.row(books[r]);
            off += d;
        }
        if (flags_.relations) {
            auto mean_pool = [&](const std::vector<int32_t>& idx, const Mat& table) {
                Eigen::RowVectorXd pooled = Eigen::RowVectorXd::Zero(d);
                for (int32_t i : idx) pooled += table.row(i);
                if (!idx.empty()) pooled /= static_cast<double>(idx.size());
                return pooled;
            };
            x.row(r).segment(off, d) = mean_pool(bundle.publisher_idx, publisher_emb_);
            off += d;
            x.row(r).segment(off, d) = mean_pool(bundle.author_idx, author_emb_);
            off += d;
            x.row(r).segment(off, d) = mean_pool(bundle.category_idx, category_emb_);
            off += d;
        }
        if (flags_.side) {
            for (int32_t k = 0; k < 5; ++k) x(r, off + k) = bundle.numeric[k];
            off += 5;
            x.row(r).segment(off, config_.text_proj_dim) = text_projected.row(r);
            off += config_.text_proj_dim;
        }
    }
    return x;
}

Mat TwoTowerNetwork::user_inputs(const std::vector<int32_t>& users, const Mat& pooled) const {
    const int64_t batch = static_cast<int64_t>(users.size());
    const int32_t d = config_.id_emb_dim;
    Mat x(batch, user_input_dim());
    for (int64_t r = 0; r < batch; ++r) {
        if (flags_.interaction)
            x.row(r).segment(0, d) = user_emb_.row(users[r]);
        else
            x.row(r).segment(0, d) = shared_user_emb_.row(0);
        x.row(r).segment(d, config_.out_dim) = pooled.row(r);
    }
    return x;
}

Vec TwoTowerNetwork::item_forward(int32_t book, const feat::FeatureBundle& bundle) const {
    Mat x = item_inputs({book}, {&bundle});
    Mat out = nn::l2_normalize_rows(item_mlp_.forward_eval(x));
    return out.row(0).transpose();
}

Vec TwoTowerNetwork::user_forward(int32_t user, const Mat& history_z) const {
    Mat pooled = Mat::Zero(1, config_.out_dim);
    if (flags_.interaction && history_z.rows() > 0)
        pooled.row(0) = history_z.colwise().mean();
    Mat x = user_inputs({user}, pooled);
    Mat out = nn::l2_normalize_rows(user_mlp_.forward_eval(x));
    return out.row(0).transpose();
}

Mat TwoTowerNetwork::all_item_embeddings(const feat::BookFeatures& features) const {
    std::vector<int32_t> books(num_books_);
    std::iota(books.begin(), books.end(), 0);
    std::vector<const feat::FeatureBundle*> bundles(num_books_);
    for (int32_t b = 0; b < num_books_; ++b) bundles[b] = &features.bundles[b];
    Mat x = item_inputs(books, bundles);
    return nn::l2_normalize_rows(item_mlp_.forward_eval(x));
}

Mat TwoTowerNetwork::all_user_embeddings(const std::vector<std::vector<int32_t>>& histories,
                                         const Mat& item_z) const {
    Mat pooled = Mat::Zero(num_users_, config_.out_dim);
    if (flags_.interaction) {
        for (int32_t u = 0; u < num_users_; ++u) {
            const auto& hist = histories[u];
            if (hist.empty()) continue;  // zero vector when no history
            for (int32_t b : hist) pooled.row(u) += item_z.row(b);
            pooled.row(u) /= static_cast<double>(hist.size());
        }
    }
    std::vector<int32_t> users(num_users_);
    std::iota(users.begin(), users.end(), 0);
    Mat x = user_inputs(users, pooled);
    return nn::l2_normalize_rows(user_mlp_.forward_eval(x));
}

std::vector<std::vector<int32_t>> build_user_histories(const std::vector<Interaction>& train,
                                                       int32_t num_users,
                                                       int32_t max_history) {
    struct Entry {
        std::optional<int64_t> ts;
        int32_t review;
        int32_t book;
    };
    std::vector<std::vector<Entry>> per_user(num_users);
    for (const auto& it : train) per_user[it.user].push_back({it.timestamp, it.review, it.book});

    std::vector<std::vector<int32_t>> histories(num_users);
    for (int32_t u = 0; u < num_users; ++u) {
        auto& entries = per_user[u];
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            if (a.ts.has_value() != b.ts.has_value()) return a.ts.has_value();
            if (a.ts && b.ts && *a.ts != *b.ts) return *a.ts < *b.ts;
            return a.review < b.review;
        });
        const size_t keep = std::min<size_t>(max_history, entries.size());
        histories[u].reserve(keep);
        for (size_t k = entries.size() - keep; k < entries.size(); ++k)
            histories[u].push_back(entries[k].book);
    }
    return histories;
}

class TwoTowerTrainer {
public:
    TwoTowerTrainer(TwoTowerNetwork& net, const feat::BookFeatures& features,
                    const std::vector<std::vector<int32_t>>& histories)
        : net_(net),
          features_(features),
          histories_(histories),
          opt_(net.config().lr, net.config().weight_decay),
          rng_(net.config().seed ^ 0x5eed5eed5eed5eedULL) {
        opt_.add(net_.item_emb_, net_.g_item_emb_, true);
        opt_.add(net_.user_emb_, net_.g_user_emb_, true);
        opt_.add(net_.author_emb_, net_.g_author_emb_, true);
        opt_.add(net_.category_emb_, net_.g_category_emb_, true);
        opt_.add(net_.publisher_emb_, net_.g_publisher_emb_, true);
        opt_.add(net_.shared_user_emb_, net_.g_shared_user_emb_, true);
        opt_.add_linear(net_.text_proj_);
        opt_.add_mlp(net_.item_mlp_);
        opt_.add_mlp(net_.user_mlp_);
    }

    // one weighted in-batch softmax step; returns the batch loss
    double step(const std::vector<const Interaction*>& batch) {
        const auto& cfg = net_.config();
        const int64_t bsz = static_cast<int64_t>(batch.size());

        // unique items: positives plus (when interactions are on) history items
        std::vector<int32_t> unique_books;
        std::unordered_map<int32_t, int32_t> row_of;
        auto intern = [&](int32_t book) {
            auto [it, inserted] = row_of.try_emplace(book, unique_books.size());
            if (inserted) unique_books.push_back(book);
            return it->second;
        };
        for (const auto* it : batch) intern(it->book);
        if (net_.flags_.interaction)
            for (const auto* it : batch)
                for (int32_t b : histories_[it->user]) intern(b);

        std::vector<const feat::FeatureBundle*> bundles(unique_books.size());
        for (size_t r = 0; r < unique_books.size(); ++r)
            bundles[r] = &features_.bundles[unique_books[r]];

        // item tower forward (training mode)
        Mat x_items = net_.item_inputs(unique_books, bundles);
        nn::Mlp::Cache item_cache;
        Mat raw_items = net_.item_mlp_.forward(x_items, true, rng_, item_cache);
        Mat z_items = nn::l2_normalize_rows(raw_items);

        // user tower forward
        Mat pooled = Mat::Zero(bsz, cfg.out_dim);
        std::vector<int32_t> users(bsz);
        for (int64_t j = 0; j < bsz; ++j) {
            users[j] = batch[j]->user;
            if (!net_.flags_.interaction) continue;
            const auto& hist = histories_[users[j]];
            if (hist.empty()) continue;
            for (int32_t b : hist) pooled.row(j) += z_items.row(row_of.at(b));
            pooled.row(j) /= static_cast<double>(hist.size());
        }
        Mat x_users = net_.user_inputs(users, pooled);
        nn::Mlp::Cache user_cache;
        Mat raw_users = net_.user_mlp_.forward(x_users, true, rng_, user_cache);
        Mat z_users = nn::l2_normalize_rows(raw_users);

        Mat z_pos(bsz, cfg.out_dim);
        std::vector<int32_t> pos_ids(bsz);
        Vec weights(bsz);
        for (int64_t j = 0; j < bsz; ++j) {
            pos_ids[j] = batch[j]->book;
            z_pos.row(j) = z_items.row(row_of.at(pos_ids[j]));
            weights(j) = batch[j]->weight;
        }

        auto loss = nn::in_batch_softmax_loss(z_users, z_pos, weights, pos_ids,
                                              cfg.temperature, true);

        // ---- backward ----
        Mat g_raw_users = nn::l2_normalize_backward(raw_users, loss.grad_users);
        Mat gx_users = net_.user_mlp_.backward(user_cache, g_raw_users);

        Mat g_z_items = Mat::Zero(z_items.rows(), z_items.cols());
        const int32_t d = cfg.id_emb_dim;
        for (int64_t j = 0; j < bsz; ++j) {
            if (net_.flags_.interaction)
                net_.g_user_emb_.row(users[j]) += gx_users.row(j).segment(0, d);
            else
                net_.g_shared_user_emb_.row(0) += gx_users.row(j).segment(0, d);
            if (net_.flags_.interaction) {
                const auto& hist = histories_[users[j]];
                if (!hist.empty()) {
                    const double inv = 1.0 / static_cast<double>(hist.size());
                    for (int32_t b : hist)
                        g_z_items.row(row_of.at(b)) +=
                            inv * gx_users.row(j).segment(d, cfg.out_dim);
                }
            }
            g_z_items.row(row_of.at(pos_ids[j])) += loss.grad_items.row(j);
        }

        Mat g_raw_items = nn::l2_normalize_backward(raw_items, g_z_items);
        Mat gx_items = net_.item_mlp_.backward(item_cache, g_raw_items);

        Mat g_text_proj;  // d loss / d projected text block, gathered below
        if (net_.flags_.side)
            g_text_proj = Mat::Zero(unique_books.size(), cfg.text_proj_dim);
        for (size_t r = 0; r < unique_books.size(); ++r) {
            const auto& bundle = *bundles[r];
            int32_t off = 0;
            if (net_.flags_.interaction) {
                net_.g_item_emb_.row(unique_books[r]) += gx_items.row(r).segment(0, d);
                off += d;
            }
            if (net_.flags_.relations) {
                auto scatter = [&](const std::vector<int32_t>& idx, Mat& g_table) {
                    if (idx.empty()) {
                        off += d;
                        return;
                    }
                    const double inv = 1.0 / static_cast<double>(idx.size());
                    for (int32_t i : idx)
                        g_table.row(i) += inv * gx_items.row(r).segment(off, d);
                    off += d;
                };
                scatter(bundle.publisher_idx, net_.g_publisher_emb_);
                scatter(bundle.author_idx, net_.g_author_emb_);
                scatter(bundle.category_idx, net_.g_category_emb_);
            }
            if (net_.flags_.side) {
                off += 5;  // numeric block is a fixed input
                g_text_proj.row(r) = gx_items.row(r).segment(off, cfg.text_proj_dim);
                off += cfg.text_proj_dim;
            }
        }
        if (net_.flags_.side) {
            Mat text_raw = Mat::Zero(unique_books.size(), net_.text_dim_);
            for (size_t r = 0; r < unique_books.size(); ++r) {
                const auto& emb = bundles[r]->text_embedding;
                for (int32_t k = 0; k < std::min<int32_t>(net_.text_dim_, emb.size()); ++k)
                    text_raw(r, k) = emb[k];
            }
            net_.text_proj_.backward(text_raw, g_text_proj);
        }

        opt_.step();
        return loss.value;
    }

    Rng& rng() { return rng_; }
    nn::AdamW& optimizer() { return opt_; }

    // every trainable matrix, for early-stop snapshots
    std::vector<Mat*> parameters() {
        std::vector<Mat*> params = {&net_.item_emb_,      &net_.user_emb_,
                                    &net_.author_emb_,    &net_.category_emb_,
                                    &net_.publisher_emb_, &net_.shared_user_emb_,
                                    &net_.text_proj_.w,   &net_.text_proj_.b};
        for (auto* mlp : {&net_.item_mlp_, &net_.user_mlp_}) {
            for (auto& l : mlp->linears()) {
                params.push_back(&l.w);
                params.push_back(&l.b);
            }
            for (auto& ln : mlp->norms()) {
                params.push_back(&ln.gamma);
                params.push_back(&ln.beta);
            }
        }
        return params;
    }

private:
    TwoTowerNetwork& net_;
    const feat::BookFeatures& features_;
    const std::vector<std::vector<int32_t>>& histories_;
    nn::AdamW opt_;
    Rng rng_;
};

namespace {

// mean NDCG@10 (or MRR@10) over users with at least one interaction in
// eval_set, ranking by dot product with train items masked
double embedding_rank_metric(const Mat& user_z, const Mat& item_z,
                             const std::vector<std::vector<int32_t>>& train_items,
                             const std::vector<Interaction>& eval_set, bool use_mrr) {
    const int32_t num_users = static_cast<int32_t>(user_z.rows());
    const int32_t num_books = static_cast<int32_t>(item_z.rows());
    std::vector<std::set<int32_t>> relevant(num_users);
    for (const auto& it : eval_set) relevant[it.user].insert(it.book);

    double total = 0.0;
    int64_t counted = 0;
    const int32_t k = 10;
    for (int32_t u = 0; u < num_users; ++u) {
        if (relevant[u].empty()) continue;
        BookMask mask(num_books);
        for (int32_t b : train_items[u]) mask.exclude(b);
        Vec s = item_z * user_z.row(u).transpose();
        std::vector<double> scores(s.data(), s.data() + s.size());
        auto top = top_n_from_scores(scores, mask, k);
        std::vector<int32_t> ranked;
        ranked.reserve(top.size());
        for (const auto& e : top) ranked.push_back(e.book);
        auto m = ev::metrics_at_k(ranked, relevant[u], k);
        total += use_mrr ? m.mrr : m.ndcg;
        ++counted;
    }
    return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace

std::unique_ptr<Recommender> fit_two_tower(const std::vector<Interaction>& train,
                                           const std::vector<Interaction>& valid,
                                           const BookGraph& graph,
                                           const feat::BookFeatures& features,
                                           const TowerConfig& config,
                                           const AblationFlags& flags,
                                           TwoTowerFitReport* report) {
    if (train.empty()) throw std::invalid_argument("fit_two_tower: empty training set");
    const int32_t num_users = graph.num_users();
    const int32_t num_books = graph.num_books();

    // feature dims govern the relation index space of the bundles
    TwoTowerNetwork net(config, flags, num_users, num_books, features.author_dim,
                        features.category_dim, features.publisher_dim,
                        features.embeddings.dim);
    auto histories = build_user_histories(train, num_users, config.max_history);
    auto train_items = train_item_sets(train, num_users);
    TwoTowerTrainer trainer(net, features, histories);

    // snapshot of every trainable matrix, restored on early stop / divergence
    std::vector<Mat*> params = trainer.parameters();
    std::vector<Mat> best_params;
    auto snapshot = [&] {
        best_params.clear();
        for (Mat* p : params) best_params.push_back(*p);
    };
    auto restore = [&] {
        if (best_params.empty()) return;
        for (size_t i = 0; i < params.size(); ++i) *params[i] = best_params[i];
    };
    snapshot();

    Rng order_rng(config.seed ^ 0xba7cULL);
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    double best_metric = -1.0;
    int32_t best_epoch = -1;
    int32_t stall = 0;
    bool diverged = false;

    for (int32_t epoch = 0; epoch < config.max_epochs && !diverged; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        int64_t batches = 0;
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(config.batch_size)) {
            const size_t end =
                std::min(order.size(), start + static_cast<size_t>(config.batch_size));
            if (end - start < 2) continue;  // softmax needs at least one in-batch negative
            std::vector<const Interaction*> batch;
            batch.reserve(end - start);
            for (size_t b = start; b < end; ++b) batch.push_back(&train[order[b]]);
            const double loss = trainer.step(batch);
            if (!std::isfinite(loss)) {
                diverged = true;  // roll back to the last good checkpoint
                break;
            }
            epoch_loss += loss;
            ++batches;
        }

        // early stopping on validation NDCG@10
        Mat item_z = net.all_item_embeddings(features);
        Mat user_z = net.all_user_embeddings(histories, item_z);
        const double metric = valid.empty() ? 0.0
                                            : embedding_rank_metric(user_z, item_z,
                                                                    train_items, valid,
                                                                    /*use_mrr=*/false);
        if (report) report->valid_ndcg_per_epoch.push_back(metric);
        if (report && batches > 0) report->train_loss_per_epoch.push_back(epoch_loss / batches);

        if (valid.empty()) {
            snapshot();  // no validation signal: keep the latest weights
            best_epoch = epoch;
        } else if (metric > best_metric) {
            best_metric = metric;
            best_epoch = epoch;
            stall = 0;
            snapshot();
        } else if (++stall >= config.patience) {
            break;
        }
    }
    restore();
    if (report) {
        report->best_epoch = best_epoch;
        report->best_valid_ndcg = std::max(best_metric, 0.0);
    }

    Mat item_z = net.all_item_embeddings(features);
    Mat user_z = net.all_user_embeddings(histories, item_z);
    json cfg = config.to_json();
    cfg["flags"] = {{"interaction", flags.interaction},
                    {"side", flags.side},
                    {"relations", flags.relations}};
    cfg["weighting"] = "1 + 0.5*verified + 0.1*max(rating-3,0)";
    return std::make_unique<DotProductModel>("two_tower", std::move(user_z), std::move(item_z),
                                             std::move(cfg));
}

// --- HGNN ------------------------------------------------------------------------

namespace {

struct DirectedRelation {
    Relation base;
    bool reversed;  // message flows dst -> src of the stored edge
    EntityKind src_kind, dst_kind;
    std::vector<std::pair<int32_t, int32_t>> edges;  // (src node, dst node)
};

struct HgnnGraph {
    std::array<int32_t, kNumEntityKinds> counts{};
    std::vector<DirectedRelation> relations;
    std::array<Mat, kNumEntityKinds> inputs;  // user inputs are the learnable table
};

int kind_index(EntityKind k) { return static_cast<int>(k); }

}  // namespace

std::unique_ptr<Recommender> fit_hgnn(const BookGraph& graph,
                                      const std::vector<Interaction>& train,
                                      const std::vector<Interaction>& valid,
                                      const HgnnConfig& config) {
    if (train.empty()) throw std::invalid_argument("fit_hgnn: empty training set");
    const int32_t num_users = graph.num_users();
    const int32_t num_books = graph.num_books();
    const int32_t dim = config.dim;

    // --- assemble the training graph (metadata edges + train review chain) ---
    HgnnGraph hg;
    for (int k = 0; k < kNumEntityKinds; ++k)
        hg.counts[k] = graph.entity_count(static_cast<EntityKind>(k));

    std::set<int32_t> train_reviews;
    for (const auto& it : train)
        if (it.review >= 0) train_reviews.insert(it.review);

    for (int ri = 0; ri < kNumRelations; ++ri) {
        const auto rel = static_cast<Relation>(ri);
        const bool interaction_rel = rel == Relation::UserReview || rel == Relation::BookReview;
        if (!config.flags.relations && !interaction_rel) continue;  // relations ablation

        std::vector<std::pair<int32_t, int32_t>> edges;
        for (const auto& e : graph.edges(rel)) {
            if (interaction_rel && !train_reviews.count(e.dst)) continue;  // train edges only
            auto [sk, dk] = relation_endpoints(rel);
            if (e.src < 0 || e.src >= graph.entity_count(sk)) continue;
            if (e.dst < 0 || e.dst >= graph.entity_count(dk)) continue;
            edges.emplace_back(e.src, e.dst);
        }
        if (edges.empty()) {
            std::cerr << "hgnn: relation " << to_string(rel) << " has no usable edges, skipped\n";
            continue;
        }
        auto [sk, dk] = relation_endpoints(rel);
        DirectedRelation fwd{rel, false, sk, dk, edges};
        DirectedRelation rev{rel, true, dk, sk, {}};
        rev.edges.reserve(edges.size());
        for (auto [s, d] : edges) rev.edges.emplace_back(d, s);
        hg.relations.push_back(std::move(fwd));
        hg.relations.push_back(std::move(rev));
    }

    // --- node input features ---
    auto log1p_or0 = [](const std::optional<int64_t>& v) {
        return v ? std::log1p(static_cast<double>(*v)) : 0.0;
    };
    {
        Mat m = Mat::Zero(std::max(num_books, 1), 4);
        if (config.flags.side) {
            for (int32_t b = 0; b < num_books; ++b) {
                const auto& book = graph.books()[b];
                m(b, 0) = book.price ? std::log1p(*book.price) : 0.0;
                m(b, 1) = book.avg_rating.value_or(0.0);
                m(b, 2) = log1p_or0(book.review_count);
                m(b, 3) = log1p_or0(book.pages);
            }
        }
        hg.inputs[kind_index(EntityKind::Book)] = std::move(m);
    }
    {
        const int32_t n = graph.entity_count(EntityKind::Author);
        Mat m = Mat::Zero(std::max(n, 1), 2);
        if (config.flags.side) {
            for (int32_t a = 0; a < n; ++a) {
                m(a, 0) = log1p_or0(graph.authors()[a].follower_count);
                m(a, 1) = std::log1p(static_cast<double>(
                    graph.neighbors({EntityKind::Author, a}, Relation::BookAuthor).size()));
            }
        }
        hg.inputs[kind_index(EntityKind::Author)] = std::move(m);
    }
    {
        const int32_t n = graph.entity_count(EntityKind::Category);
        Mat m = Mat::Zero(std::max(n, 1), 2);
        if (config.flags.side) {
            for (int32_t c = 0; c < n; ++c) {
                m(c, 0) = log1p_or0(graph.categories()[c].total_book_count);
                m(c, 1) = std::log1p(static_cast<double>(
                    graph.neighbors({EntityKind::Category, c}, Relation::BookCategory).size()));
            }
        }
        hg.inputs[kind_index(EntityKind::Category)] = std::move(m);
    }
    {
        const int32_t n = graph.entity_count(EntityKind::Publisher);
        Mat m = Mat::Zero(std::max(n, 1), 2);
        if (config.flags.side) {
            for (int32_t p = 0; p < n; ++p) {
                m(p, 0) = log1p_or0(graph.publishers()[p].total_author_count);
                m(p, 1) = log1p_or0(graph.publishers()[p].total_book_count);
            }
        }
        hg.inputs[kind_index(EntityKind::Publisher)] = std::move(m);
    }
    {
        const int32_t n = graph.entity_count(EntityKind::Review);
        Mat m = Mat::Zero(std::max(n, 1), 4);
        if (config.flags.side) {
            for (int32_t r = 0; r < n; ++r) {
                const auto& review = graph.reviews()[r];
                m(r, 0) = review.rating.value_or(0.0) / 5.0;
                m(r, 1) = std::log1p(static_cast<double>(review.upvotes));
                m(r, 2) = std::log1p(static_cast<double>(review.downvotes));
                m(r, 3) = review.verified ? 1.0 : 0.0;
            }
        }
        hg.inputs[kind_index(EntityKind::Review)] = std::move(m);
    }

    Rng rng(config.seed);
    // learnable user embeddings; a single shared row under interaction ablation
    const bool personalized = config.flags.interaction;
    Mat user_table = nn::init_gaussian(personalized ? std::max(num_users, 1) : 1, dim, 0.1, rng);
    Mat g_user_table = Mat::Zero(user_table.rows(), user_table.cols());

    auto user_input_row = [&](int32_t u) { return personalized ? u : 0; };

    // per-relation per-layer linear transforms
    struct RelParams {
        nn::Linear w0, w1;
    };
    std::vector<RelParams> rel_params(hg.relations.size());
    auto input_dim_of = [&](EntityKind k) {
        if (k == EntityKind::User) return static_cast<int64_t>(dim);
        return hg.inputs[kind_index(k)].cols();
    };
    for (size_t r = 0; r < hg.relations.size(); ++r) {
        rel_params[r].w0.init(input_dim_of(hg.relations[r].src_kind), dim, rng);
        rel_params[r].w1.init(dim, dim, rng);
    }
    nn::Mlp user_out_mlp, book_out_mlp;
    user_out_mlp.init(dim, dim, dim, 2, false, 0.0, rng);
    book_out_mlp.init(dim, dim, dim, 2, false, 0.0, rng);

    nn::AdamW opt(config.lr, 0.0);
    opt.add(user_table, g_user_table, false);
    for (auto& rp : rel_params) {
        opt.add_linear(rp.w0);
        opt.add_linear(rp.w1);
    }
    opt.add_mlp(user_out_mlp);
    opt.add_mlp(book_out_mlp);

    auto kind_count = [&](EntityKind k) { return std::max(hg.counts[kind_index(k)], 1); };

    // caches filled by forward() for use in backward()
    struct LayerCache {
        std::array<Mat, kNumEntityKinds> h_in;      // inputs to this layer
        std::array<Mat, kNumEntityKinds> acc;       // pre-ReLU sums
        std::array<nn::DropoutMask, kNumEntityKinds> drop;
        std::vector<Mat> rel_mean;                  // aggregated means per relation
        std::vector<std::vector<double>> rel_count; // in-degree per dst node
    };
    std::vector<LayerCache> caches(config.layers);
    std::array<Mat, kNumEntityKinds> h_final;

    auto forward = [&](bool training, Rng& drop_rng) {
        std::array<Mat, kNumEntityKinds> h;
        for (int k = 0; k < kNumEntityKinds; ++k) {
            auto kind = static_cast<EntityKind>(k);
            if (kind == EntityKind::User) {
                Mat m(kind_count(kind), dim);
                for (int32_t u = 0; u < kind_count(kind); ++u)
                    m.row(u) = user_table.row(user_input_row(u));
                h[k] = std::move(m);
            } else {
                h[k] = hg.inputs[k];
            }
        }
        for (int32_t layer = 0; layer < config.layers; ++layer) {
            auto& cache = caches[layer];
            cache.h_in = h;
            cache.rel_mean.assign(hg.relations.size(), {});
            cache.rel_count.assign(hg.relations.size(), {});
            std::array<Mat, kNumEntityKinds> acc;
            for (int k = 0; k < kNumEntityKinds; ++k)
                acc[k] = Mat::Zero(kind_count(static_cast<EntityKind>(k)), dim);

            for (size_t r = 0; r < hg.relations.size(); ++r) {
                const auto& rel = hg.relations[r];
                const Mat& src = h[kind_index(rel.src_kind)];
                Mat mean = Mat::Zero(kind_count(rel.dst_kind), src.cols());
                std::vector<double> count(kind_count(rel.dst_kind), 0.0);
                for (auto [s, d] : rel.edges) {
                    mean.row(d) += src.row(s);
                    count[d] += 1.0;
                }
                for (int32_t v = 0; v < mean.rows(); ++v)
                    if (count[v] > 0) mean.row(v) /= count[v];
                nn::Linear& w = layer == 0 ? rel_params[r].w0 : rel_params[r].w1;
                Mat msg = w.forward(mean);
                auto& dst_acc = acc[kind_index(rel.dst_kind)];
                for (int32_t v = 0; v < mean.rows(); ++v)
                    if (count[v] > 0) dst_acc.row(v) += msg.row(v);
                cache.rel_mean[r] = std::move(mean);
                cache.rel_count[r] = std::move(count);
            }
            for (int k = 0; k < kNumEntityKinds; ++k) {
                cache.acc[k] = acc[k];
                Mat act = nn::relu(acc[k]);
                h[k] = nn::dropout_forward(act, config.dropout, training, drop_rng,
                                           cache.drop[k]);
            }
        }
        h_final = h;
    };

    auto backward = [&](const Mat& g_user_out_in, const Mat& g_book_out_in,
                        nn::Mlp::Cache& u_cache, nn::Mlp::Cache& b_cache) {
        std::array<Mat, kNumEntityKinds> g;
        for (int k = 0; k < kNumEntityKinds; ++k)
            g[k] = Mat::Zero(kind_count(static_cast<EntityKind>(k)), dim);
        g[kind_index(EntityKind::User)] = user_out_mlp.backward(u_cache, g_user_out_in);
        g[kind_index(EntityKind::Book)] = book_out_mlp.backward(b_cache, g_book_out_in);

        for (int32_t layer = config.layers - 1; layer >= 0; --layer) {
            auto& cache = caches[layer];
            std::array<Mat, kNumEntityKinds> g_in;
            for (int k = 0; k < kNumEntityKinds; ++k) {
                auto kind = static_cast<EntityKind>(k);
                g[k] = nn::dropout_backward(cache.drop[k], g[k]);
                g[k] = nn::relu_backward(cache.acc[k], g[k]);
                g_in[k] = Mat::Zero(kind_count(kind), cache.h_in[k].cols());
            }
            for (size_t r = 0; r < hg.relations.size(); ++r) {
                const auto& rel = hg.relations[r];
                const auto& count = cache.rel_count[r];
                Mat g_msg = Mat::Zero(kind_count(rel.dst_kind), dim);
                for (int32_t v = 0; v < g_msg.rows(); ++v)
                    if (count[v] > 0) g_msg.row(v) = g[kind_index(rel.dst_kind)].row(v);
                nn::Linear& w = layer == 0 ? rel_params[r].w0 : rel_params[r].w1;
                Mat g_mean = w.backward(cache.rel_mean[r], g_msg);
                auto& g_src = g_in[kind_index(rel.src_kind)];
                for (auto [s, d] : rel.edges)
                    if (count[d] > 0) g_src.row(s) += g_mean.row(d) / count[d];
            }
            g = std::move(g_in);
        }
        // layer-0 user inputs are the learnable table
        const Mat& gu = g[kind_index(EntityKind::User)];
        for (int32_t u = 0; u < gu.rows(); ++u)
            g_user_table.row(user_input_row(u)) += gu.row(u);
    };

    auto train_items = train_item_sets(train, num_users);
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), size_t{0});

    // snapshot for early stopping
    std::vector<Mat*> params = {&user_table};
    for (auto& rp : rel_params)
        for (Mat* m : {&rp.w0.w, &rp.w0.b, &rp.w1.w, &rp.w1.b}) params.push_back(m);
    for (auto* mlp : {&user_out_mlp, &book_out_mlp})
        for (auto& l : mlp->linears()) {
            params.push_back(&l.w);
            params.push_back(&l.b);
        }
    std::vector<Mat> best;
    auto snapshot = [&] {
        best.clear();
        for (Mat* p : params) best.push_back(*p);
    };
    auto restore = [&] {
        for (size_t i = 0; i < params.size() && i < best.size(); ++i) *params[i] = best[i];
    };
    snapshot();

    auto eval_outputs = [&](Rng& r) {
        forward(false, r);
        Mat user_out = user_out_mlp.forward_eval(h_final[kind_index(EntityKind::User)]);
        Mat book_out = book_out_mlp.forward_eval(h_final[kind_index(EntityKind::Book)]);
        return std::make_pair(std::move(user_out), std::move(book_out));
    };

    double best_metric = -1.0;
    int32_t stall = 0;
    Rng drop_rng(config.seed ^ 0xd40bULL);
    for (int32_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        rng.shuffle(order);
        for (size_t start = 0; start < order.size();
             start += static_cast<size_t>(config.batch)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
            forward(true, drop_rng);

            nn::Mlp::Cache u_cache, b_cache;
            Rng unused(1);
            Mat user_out = user_out_mlp.forward(h_final[kind_index(EntityKind::User)], false,
                                                unused, u_cache);
            Mat book_out = book_out_mlp.forward(h_final[kind_index(EntityKind::Book)], false,
                                                unused, b_cache);

            Mat g_user_out = Mat::Zero(user_out.rows(), dim);
            Mat g_book_out = Mat::Zero(book_out.rows(), dim);
            const double inv_b = 1.0 / static_cast<double>(end - start);
            double loss = 0.0;
            for (size_t b = start; b < end; ++b) {
                const auto& it = train[order[b]];
                const int32_t j = sample_uniform_negative(rng, train_items[it.user], num_books);
                Vec xu = user_out.row(it.user), xi = book_out.row(it.book),
                    xj = book_out.row(j);
                loss += nn::bpr_loss(xu, xi, xj, 0.0) * inv_b;
                Vec gu, gi, gj;
                nn::bpr_grad(xu, xi, xj, 0.0, gu, gi, gj);
                g_user_out.row(it.user) += inv_b * gu.transpose();
                g_book_out.row(it.book) += inv_b * gi.transpose();
                g_book_out.row(j) += inv_b * gj.transpose();
            }
            if (!std::isfinite(loss))
                throw std::runtime_error("fit_hgnn: NaN loss at epoch " + std::to_string(epoch));
            backward(g_user_out, g_book_out, u_cache, b_cache);
            opt.step();
        }

        // early stop on validation MRR@10
        if (!valid.empty()) {
            Rng eval_rng(1);
            auto [user_out, book_out] = eval_outputs(eval_rng);
            const double metric =
                embedding_rank_metric(user_out, book_out, train_items, valid, /*use_mrr=*/true);
            if (metric > best_metric) {
                best_metric = metric;
                stall = 0;
                snapshot();
            } else if (++stall >= config.patience) {
                break;
            }
        } else {
            snapshot();
        }
    }
    restore();

    Rng eval_rng(1);
    auto [user_out, book_out] = eval_outputs(eval_rng);
    json cfg{{"dim", config.dim},     {"layers", config.layers},
             {"dropout", config.dropout}, {"lr", config.lr},
             {"max_epochs", config.max_epochs}, {"batch", config.batch},
             {"patience", config.patience},     {"seed", config.seed},
             {"flags",
              {{"interaction", config.flags.interaction},
               {"side", config.flags.side},
               {"relations", config.flags.relations}}}};
    return std::make_unique<DotProductModel>("hgnn", std::move(user_out), std::move(book_out),
                                             std::move(cfg));
}

std::unique_ptr<Recommender> restore_neural(const Checkpoint& ckpt) {
    if (ckpt.kind == "lightgcn" || ckpt.kind == "hgnn" || ckpt.kind == "two_tower") {
        return std::make_unique<DotProductModel>(ckpt.kind,
                                                 unpack_matrix(ckpt.tensors.at("user_emb")),
                                                 unpack_matrix(ckpt.tensors.at("item_emb")),
                                                 ckpt.config);
    }
    return nullptr;
}

}  // namespace bookrec::rec
