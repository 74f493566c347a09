#pragma once

// Minimal dense NN toolkit: linear layers, layer norm, dropout, row-wise L2
// normalization, AdamW, and the two ranking losses with analytic gradients.
// Everything is float64 and deterministic given a seed.

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "bookrec/util.hpp"

namespace bookrec::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// fan-in scaled uniform init
Mat init_uniform(int64_t rows, int64_t cols, Rng& rng);
Mat init_gaussian(int64_t rows, int64_t cols, double stddev, Rng& rng);

struct Linear {
    Mat w;  // in x out
    Mat b;  // 1 x out
    Mat gw, gb;

    void init(int64_t in, int64_t out, Rng& rng);
    Mat forward(const Mat& x) const;                 // x: B x in
    Mat backward(const Mat& x, const Mat& gy);       // returns gx; accumulates gw/gb
    void zero_grad();
};

struct LayerNorm {
    Mat gamma, beta;  // 1 x dim
    Mat ggamma, gbeta;

    struct Cache {
        Mat normalized;
        Vec inv_std;
    };

    void init(int64_t dim);
    Mat forward(const Mat& x, Cache& cache) const;
    Mat backward(const Cache& cache, const Mat& gy);
    void zero_grad();
};

// inverted dropout; identity when rate == 0 or eval mode
struct DropoutMask {
    Mat mask;  // empty = pass-through
};
Mat dropout_forward(const Mat& x, double rate, bool training, Rng& rng, DropoutMask& cache);
Mat dropout_backward(const DropoutMask& cache, const Mat& gy);

Mat relu(const Mat& x);
Mat relu_backward(const Mat& pre_activation, const Mat& gy);

// row-wise x / |x|; zero rows stay zero
Mat l2_normalize_rows(const Mat& x);
// gradient through row normalization; needs the unnormalized input
Mat l2_normalize_backward(const Mat& x, const Mat& gy);

// MLP: (Linear -> LayerNorm? -> ReLU -> Dropout) x (L-1), then Linear.
class Mlp {
public:
    void init(int64_t in_dim, int64_t hidden, int64_t out_dim, int32_t num_layers,
              bool layer_norm, double dropout, Rng& rng);

    struct Cache {
        std::vector<Mat> inputs;       // input to each linear
        std::vector<Mat> pre_act;      // after layer norm, before relu
        std::vector<LayerNorm::Cache> ln;
        std::vector<DropoutMask> drop;
    };

    Mat forward(const Mat& x, bool training, Rng& rng, Cache& cache) const;
    Mat forward_eval(const Mat& x) const;
    Mat backward(const Cache& cache, const Mat& gy);  // accumulates layer grads
    void zero_grad();

    std::vector<Linear>& linears() { return linears_; }
    std::vector<LayerNorm>& norms() { return norms_; }
    const std::vector<Linear>& linears() const { return linears_; }

private:
    std::vector<Linear> linears_;
    std::vector<LayerNorm> norms_;
    bool layer_norm_ = false;
    double dropout_ = 0.0;
};

// Decoupled weight decay Adam. Parameters are registered with their gradient
// buffers; step() updates everything and zeroes the gradients.
class AdamW {
public:
    AdamW(double lr, double weight_decay) : lr_(lr), weight_decay_(weight_decay) {}

    void add(Mat& param, Mat& grad, bool decay);
    void add_linear(Linear& l, bool decay_weights = true);
    void add_layer_norm(LayerNorm& ln);
    void add_mlp(Mlp& mlp);
    void step();
    void set_lr(double lr) { lr_ = lr; }

private:
    struct Slot {
        Mat* param;
        Mat* grad;
        Mat m, v;
        bool decay;
    };
    std::vector<Slot> slots_;
    double lr_, weight_decay_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
};

// --- losses -----------------------------------------------------------------

// BPR: -ln sigmoid(xu.xi - xu.xj) + reg (|xu|^2 + |xi|^2 + |xj|^2)
double bpr_loss(const Vec& xu, const Vec& xi, const Vec& xj, double reg);
void bpr_grad(const Vec& xu, const Vec& xi, const Vec& xj, double reg, Vec& gu, Vec& gi,
              Vec& gj);

// Weighted softmax cross-entropy with in-batch negatives.
// S_jk = z_users[j] . z_items[k] / temperature; row j's positive is column j.
// Columns k != j with item_ids[k] == item_ids[j] are masked out of row j's
// denominator (duplicate positives). Throws std::invalid_argument when B < 2.
struct InBatchLossResult {
    double value = 0.0;
    Mat grad_users;  // d loss / d z_users
    Mat grad_items;  // d loss / d z_items
};
InBatchLossResult in_batch_softmax_loss(const Mat& z_users, const Mat& z_items,
                                        const Vec& weights,
                                        const std::vector<int32_t>& item_ids,
                                        double temperature, bool want_grad);

}  // namespace bookrec::nn
