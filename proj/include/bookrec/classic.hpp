#pragma once

// The eight non-GNN, non-two-tower recommenders: popularity, category-aware
// popularity, user/item neighborhood CF, implicit ALS, explicit MF, pure
// content similarity, and the WARP-trained hybrid factorization model.

#include "bookrec/recommender.hpp"

namespace bookrec::rec {

std::unique_ptr<Recommender> fit_popularity(const std::vector<Interaction>& train,
                                            int32_t num_users, int32_t num_books);

std::unique_ptr<Recommender> fit_category_popularity(const std::vector<Interaction>& train,
                                                     const BookGraph& graph);

std::unique_ptr<Recommender> fit_user_cf(const std::vector<Interaction>& train,
                                         int32_t num_users, int32_t num_books, int32_t k = 50);

std::unique_ptr<Recommender> fit_item_cf(const std::vector<Interaction>& train,
                                         int32_t num_users, int32_t num_books, int32_t k = 50);

struct AlsConfig {
    int32_t dim = 64;
    int32_t epochs = 20;
    double reg = 0.01;
    double alpha = 40.0;  // confidence c = 1 + alpha for observed cells
    uint64_t seed = 42;
};

// Implicit-feedback alternating least squares; each half-sweep solves its
// regularized least-squares subproblem exactly. Throws on non-finite factors.
// When objective_trace is given it receives the full objective
//   sum_ui c_ui (p_ui - x_u.y_i)^2 + reg (|X|^2 + |Y|^2)
// before training and after every sweep (O(U*I*d) per point; test-scale only).
std::unique_ptr<Recommender> fit_als(const std::vector<Interaction>& train, int32_t num_users,
                                     int32_t num_books, const AlsConfig& config = {},
                                     std::vector<double>* objective_trace = nullptr);

struct ExplicitMfConfig {
    int32_t dim = 100;
    int32_t epochs = 20;
    double reg = 0.02;
    double lr = 0.005;
    uint64_t seed = 42;
};

// Biased factorization r = mu + b_u + b_i + p.q on observed ratings, SGD.
// Throws std::invalid_argument when no interaction carries a rating.
std::unique_ptr<Recommender> fit_explicit_mf(const std::vector<Interaction>& train,
                                             int32_t num_users, int32_t num_books,
                                             const ExplicitMfConfig& config = {});

// Loss and analytic gradient at one observation, for gradient checking and the
// SGD steps:  L = (r - r_hat)^2 + reg (b_u^2 + b_i^2 + |p|^2 + |q|^2).
struct ExplicitMfPoint {
    double mu = 0.0;
    double user_bias = 0.0;
    double item_bias = 0.0;
    std::vector<double> p, q;
};
double explicit_mf_loss(const ExplicitMfPoint& point, double rating, double reg);
void explicit_mf_grad(const ExplicitMfPoint& point, double rating, double reg,
                      double& d_user_bias, double& d_item_bias, std::vector<double>& d_p,
                      std::vector<double>& d_q);

std::unique_ptr<Recommender> fit_content_based(const std::vector<Interaction>& train,
                                               const feat::BookFeatures& features,
                                               int32_t num_users, int32_t num_books);

struct WarpConfig {
    int32_t dim = 64;
    int32_t epochs = 30;
    int32_t max_trials = 100;  // negative-sample cap per positive
    double margin = 1.0;
    double lr = 0.05;
    uint64_t seed = 42;
};

// Rank weight for a violation found after q negative samples out of I items:
// ln(floor((I-1)/q) + 1).
double warp_rank_weight(int32_t num_items, int32_t samples_drawn);

// Hybrid factorization: item representation is the sum of embeddings of its
// active features (per-item identity + author/category/publisher indicators),
// trained with the WARP loss.
std::unique_ptr<Recommender> fit_hybrid_warp(const std::vector<Interaction>& train,
                                             const feat::BookFeatures& features,
                                             int32_t num_users, int32_t num_books,
                                             const WarpConfig& config = {});

// checkpoint reconstruction, dispatched from load_recommender
std::unique_ptr<Recommender> restore_classic(const Checkpoint& ckpt);

}  // namespace bookrec::rec
