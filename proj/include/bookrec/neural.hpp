#pragma once

// Graph and neural recommenders: LightGCN, the relational heterogeneous GNN,
// and the two-tower retrieval model.

#include "bookrec/nn.hpp"
#include "bookrec/recommender.hpp"

namespace bookrec::rec {

// Symmetric normalized adjacency over the bipartite train graph. Node ids:
// users are rows [0, U), items [U, U+I). Entry (u, i) = 1/sqrt(deg u * deg i);
// zero diagonal.
struct NormalizedAdjacency {
    int32_t num_users = 0;
    int32_t num_items = 0;
    std::vector<int64_t> indptr;
    std::vector<int32_t> indices;
    std::vector<double> values;

    int32_t size() const { return num_users + num_items; }
};

NormalizedAdjacency build_norm_adjacency(const std::vector<Interaction>& train,
                                         int32_t num_users, int32_t num_books);

// Uniform draw over books outside the user's (sorted) training items; used for
// BPR and WARP negative sampling. Throws when no negative exists.
int32_t sample_uniform_negative(Rng& rng, const std::vector<int32_t>& sorted_user_items,
                                int32_t num_books);

nn::Mat adjacency_multiply(const NormalizedAdjacency& adj, const nn::Mat& embeddings);

// mean(E0, A E0, ..., A^L E0)
nn::Mat lightgcn_propagate(const NormalizedAdjacency& adj, const nn::Mat& e0, int32_t layers);

struct LightGcnConfig {
    int32_t dim = 64;
    int32_t layers = 2;
    double lr = 0.01;
    int32_t epochs = 10;
    int32_t batch = 4096;
    double reg = 1e-4;  // on raw (non-propagated) embeddings in the batch
    uint64_t seed = 42;
};

std::unique_ptr<Recommender> fit_lightgcn(const std::vector<Interaction>& train,
                                          int32_t num_users, int32_t num_books,
                                          const LightGcnConfig& config = {});

// Signals that can be removed in ablation runs (Interaction / Side / Relations).
struct AblationFlags {
    bool interaction = true;
    bool side = true;
    bool relations = true;
};

struct HgnnConfig {
    int32_t dim = 64;
    int32_t layers = 2;
    double dropout = 0.2;
    double lr = 0.01;
    int32_t max_epochs = 30;
    int32_t batch = 512;
    int32_t patience = 4;  // early stop on validation MRR@10
    uint64_t seed = 42;
    AblationFlags flags;
};

std::unique_ptr<Recommender> fit_hgnn(const BookGraph& graph,
                                      const std::vector<Interaction>& train,
                                      const std::vector<Interaction>& valid,
                                      const HgnnConfig& config = {});

struct TowerConfig {
    int32_t id_emb_dim = 128;
    int32_t text_proj_dim = 256;
    int32_t out_dim = 256;
    int32_t hidden_dim = 256;
    int32_t mlp_layers = 2;
    double dropout = 0.1;
    int32_t max_history = 50;  // most recent K train items pooled per user
    int32_t batch_size = 256;
    int32_t max_epochs = 20;
    double lr = 5e-4;
    double weight_decay = 1e-5;
    int32_t patience = 4;  // early stop on validation NDCG@10
    double temperature = 0.05;
    bool layer_norm = true;
    uint64_t seed = 42;

    json to_json() const;
    static TowerConfig from_json(const json& j);
};

// The dual-encoder parameter set with eval-mode forwards exposed so the tower
// contracts (unit norm, ablation invariance) can be exercised directly.
class TwoTowerNetwork {
public:
    TwoTowerNetwork(const TowerConfig& config, const AblationFlags& flags, int32_t num_users,
                    int32_t num_books, int32_t num_authors, int32_t num_categories,
                    int32_t num_publishers, int32_t text_dim);

    // components in order [e_i ; p_i ; a_i ; c_i ; n_i ; t_i], disabled ones omitted
    int32_t item_input_dim() const;
    int32_t user_input_dim() const;

    // Unit-norm item embedding, eval mode (no dropout).
    nn::Vec item_forward(int32_t book, const feat::FeatureBundle& bundle) const;

    // Unit-norm user embedding; history_z rows are the pooled items' current
    // item-tower outputs, already restricted to the most recent K.
    nn::Vec user_forward(int32_t user, const nn::Mat& history_z) const;

    // batched eval-mode forwards over every book / every user
    nn::Mat all_item_embeddings(const feat::BookFeatures& features) const;
    nn::Mat all_user_embeddings(const std::vector<std::vector<int32_t>>& histories,
                                const nn::Mat& item_z) const;

    const TowerConfig& config() const { return config_; }
    const AblationFlags& flags() const { return flags_; }

private:
    friend class TwoTowerTrainer;

    nn::Mat item_inputs(const std::vector<int32_t>& books,
                        const std::vector<const feat::FeatureBundle*>& bundles) const;
    nn::Mat user_inputs(const std::vector<int32_t>& users, const nn::Mat& pooled) const;

    TowerConfig config_;
    AblationFlags flags_;
    int32_t num_users_, num_books_;
    int32_t text_dim_;

    nn::Mat item_emb_, user_emb_, author_emb_, category_emb_, publisher_emb_;
    nn::Mat shared_user_emb_;  // replaces personalization under interaction ablation
    nn::Linear text_proj_;
    nn::Mlp item_mlp_, user_mlp_;

    // gradient buffers for the embedding tables
    nn::Mat g_item_emb_, g_user_emb_, g_author_emb_, g_category_emb_, g_publisher_emb_,
        g_shared_user_emb_;
};

struct TwoTowerFitReport {
    std::vector<double> valid_ndcg_per_epoch;
    std::vector<double> train_loss_per_epoch;
    int32_t best_epoch = -1;
    double best_valid_ndcg = 0.0;
};

std::unique_ptr<Recommender> fit_two_tower(const std::vector<Interaction>& train,
                                           const std::vector<Interaction>& valid,
                                           const BookGraph& graph,
                                           const feat::BookFeatures& features,
                                           const TowerConfig& config = {},
                                           const AblationFlags& flags = {},
                                           TwoTowerFitReport* report = nullptr);

// Most recent K training items per user: ordered by (timestamp, review id)
// with missing timestamps last, then truncated to the most recent K.
std::vector<std::vector<int32_t>> build_user_histories(const std::vector<Interaction>& train,
                                                       int32_t num_users, int32_t max_history);

// checkpoint reconstruction, dispatched from load_recommender
std::unique_ptr<Recommender> restore_neural(const Checkpoint& ckpt);

}  // namespace bookrec::rec
