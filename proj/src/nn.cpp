#include "bookrec/nn.hpp"

#include <cmath>

namespace bookrec::nn {

Mat init_uniform(int64_t rows, int64_t cols, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Mat m(rows, cols);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) m(r, c) = (2.0 * rng.next_double() - 1.0) * bound;
    return m;
}

Mat init_gaussian(int64_t rows, int64_t cols, double stddev, Rng& rng) {
    Mat m(rows, cols);
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) m(r, c) = stddev * rng.next_gaussian();
    return m;
}

void Linear::init(int64_t in, int64_t out, Rng& rng) {
    w = init_uniform(in, out, rng);
    b = Mat::Zero(1, out);
    zero_grad();
}

Mat Linear::forward(const Mat& x) const {
    return (x * w).rowwise() + b.row(0);
}

Mat Linear::backward(const Mat& x, const Mat& gy) {
    gw.noalias() += x.transpose() * gy;
    gb.row(0) += gy.colwise().sum();
    return gy * w.transpose();
}

void Linear::zero_grad() {
    gw = Mat::Zero(w.rows(), w.cols());
    gb = Mat::Zero(1, b.cols());
}

void LayerNorm::init(int64_t dim) {
    gamma = Mat::Ones(1, dim);
    beta = Mat::Zero(1, dim);
    zero_grad();
}

Mat LayerNorm::forward(const Mat& x, Cache& cache) const {
    const double eps = 1e-5;
    const int64_t d = x.cols();
    cache.normalized.resize(x.rows(), d);
    cache.inv_std.resize(x.rows());
    Mat out(x.rows(), d);
    for (int64_t r = 0; r < x.rows(); ++r) {
        const double mean = x.row(r).mean();
        const double var = (x.row(r).array() - mean).square().sum() / d;
        const double inv = 1.0 / std::sqrt(var + eps);
        cache.inv_std(r) = inv;
        cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
        out.row(r) = cache.normalized.row(r).cwiseProduct(gamma.row(0)) + beta.row(0);
    }
    return out;
}

Mat LayerNorm::backward(const Cache& cache, const Mat& gy) {
    const int64_t d = gy.cols();
    Mat gx(gy.rows(), d);
    for (int64_t r = 0; r < gy.rows(); ++r) {
        const auto xhat = cache.normalized.row(r);
        Eigen::RowVectorXd gxhat = gy.row(r).cwiseProduct(gamma.row(0));
        const double mean_g = gxhat.mean();
        const double mean_gx = gxhat.cwiseProduct(xhat).mean();
        gx.row(r) = (gxhat.array() - mean_g - xhat.array() * mean_gx) * cache.inv_std(r);
        ggamma.row(0) += gy.row(r).cwiseProduct(xhat);
        gbeta.row(0) += gy.row(r);
    }
    return gx;
}

void LayerNorm::zero_grad() {
    ggamma = Mat::Zero(1, gamma.cols());
    gbeta = Mat::Zero(1, beta.cols());
}

Mat dropout_forward(const Mat& x, double rate, bool training, Rng& rng, DropoutMask& cache) {
    if (!training || rate <= 0.0) {
        cache.mask.resize(0, 0);
        return x;
    }
    const double keep = 1.0 - rate;
    cache.mask.resize(x.rows(), x.cols());
    for (int64_t r = 0; r < x.rows(); ++r)
        for (int64_t c = 0; c < x.cols(); ++c)
            cache.mask(r, c) = rng.next_double() < keep ? 1.0 / keep : 0.0;
    return x.cwiseProduct(cache.mask);
}

Mat dropout_backward(const DropoutMask& cache, const Mat& gy) {
    if (cache.mask.size() == 0) return gy;
    return gy.cwiseProduct(cache.mask);
}

Mat relu(const Mat& x) {
    return x.cwiseMax(0.0);
}

Mat relu_backward(const Mat& pre_activation, const Mat& gy) {
    return (pre_activation.array() > 0.0).cast<double>().matrix().cwiseProduct(gy);
}

Mat l2_normalize_rows(const Mat& x) {
    Mat out = x;
    for (int64_t r = 0; r < x.rows(); ++r) {
        const double norm = x.row(r).norm();
        if (norm > 0.0) out.row(r) /= norm;
    }
    return out;
}

Mat l2_normalize_backward(const Mat& x, const Mat& gy) {
    Mat gx(x.rows(), x.cols());
    for (int64_t r = 0; r < x.rows(); ++r) {
        const double norm = x.row(r).norm();
        if (norm == 0.0) {
            gx.row(r).setZero();
            continue;
        }
        const Eigen::RowVectorXd y = x.row(r) / norm;
        gx.row(r) = (gy.row(r) - y * y.dot(gy.row(r))) / norm;
    }
    return gx;
}

void Mlp::init(int64_t in_dim, int64_t hidden, int64_t out_dim, int32_t num_layers,
               bool layer_norm, double dropout, Rng& rng) {
    if (num_layers < 1) throw std::invalid_argument("Mlp: need at least one layer");
    layer_norm_ = layer_norm;
    dropout_ = dropout;
    linears_.resize(num_layers);
    norms_.clear();
    if (layer_norm) norms_.resize(num_layers - 1);
    int64_t in = in_dim;
    for (int32_t l = 0; l < num_layers; ++l) {
        const int64_t out = (l + 1 == num_layers) ? out_dim : hidden;
        linears_[l].init(in, out, rng);
        if (layer_norm && l + 1 < num_layers) norms_[l].init(out);
        in = out;
    }
}

Mat Mlp::forward(const Mat& x, bool training, Rng& rng, Cache& cache) const {
    const int32_t n = static_cast<int32_t>(linears_.size());
    cache.inputs.assign(n, {});
    cache.pre_act.assign(n, {});
    cache.ln.assign(layer_norm_ ? n - 1 : 0, {});
    cache.drop.assign(n > 0 ? n - 1 : 0, {});

    Mat h = x;
    for (int32_t l = 0; l < n; ++l) {
        cache.inputs[l] = h;
        h = linears_[l].forward(h);
        if (l + 1 == n) break;
        if (layer_norm_) h = norms_[l].forward(h, cache.ln[l]);
        cache.pre_act[l] = h;
        h = relu(h);
        h = dropout_forward(h, dropout_, training, rng, cache.drop[l]);
    }
    return h;
}

Mat Mlp::forward_eval(const Mat& x) const {
    Rng unused(1);
    Cache cache;
    return forward(x, false, unused, cache);
}

Mat Mlp::backward(const Cache& cache, const Mat& gy) {
    const int32_t n = static_cast<int32_t>(linears_.size());
    Mat g = gy;
    for (int32_t l = n - 1; l >= 0; --l) {
        if (l + 1 < n) {
            g = dropout_backward(cache.drop[l], g);
            g = relu_backward(cache.pre_act[l], g);
            if (layer_norm_) g = norms_[l].backward(cache.ln[l], g);
        }
        g = linears_[l].backward(cache.inputs[l], g);
    }
    return g;
}

void Mlp::zero_grad() {
    for (auto& l : linears_) l.zero_grad();
    for (auto& ln : norms_) ln.zero_grad();
}

void AdamW::add(Mat& param, Mat& grad, bool decay) {
    slots_.push_back({&param, &grad, Mat::Zero(param.rows(), param.cols()),
                      Mat::Zero(param.rows(), param.cols()), decay});
}

void AdamW::add_linear(Linear& l, bool decay_weights) {
    add(l.w, l.gw, decay_weights);
    add(l.b, l.gb, false);
}

void AdamW::add_layer_norm(LayerNorm& ln) {
    add(ln.gamma, ln.ggamma, false);
    add(ln.beta, ln.gbeta, false);
}

void AdamW::add_mlp(Mlp& mlp) {
    for (auto& l : mlp.linears()) add_linear(l);
    for (auto& ln : mlp.norms()) add_layer_norm(ln);
}

void AdamW::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& s : slots_) {
        s.m = beta1_ * s.m + (1.0 - beta1_) * (*s.grad);
        s.v = beta2_ * s.v + (1.0 - beta2_) * s.grad->cwiseProduct(*s.grad);
        if (s.decay && weight_decay_ > 0.0) *s.param -= lr_ * weight_decay_ * (*s.param);
        const Mat m_hat = s.m / bc1;
        const Mat v_hat = s.v / bc2;
        *s.param -=
            lr_ * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + eps_).matrix());
        s.grad->setZero();
    }
}

double bpr_loss(const Vec& xu, const Vec& xi, const Vec& xj, double reg) {
    const double margin = xu.dot(xi) - xu.dot(xj);
    // -ln sigmoid(m) = ln(1 + e^{-m}), computed stably
    const double nll = margin > 0 ? std::log1p(std::exp(-margin))
                                  : -margin + std::log1p(std::exp(margin));
    return nll + reg * (xu.squaredNorm() + xi.squaredNorm() + xj.squaredNorm());
}

void bpr_grad(const Vec& xu, const Vec& xi, const Vec& xj, double reg, Vec& gu, Vec& gi,
              Vec& gj) {
    const double margin = xu.dot(xi) - xu.dot(xj);
    double sig;  // sigmoid(-margin), stable at both tails
    if (margin > 0)
        sig = std::exp(-margin) / (1.0 + std::exp(-margin));
    else
        sig = 1.0 / (1.0 + std::exp(margin));
    gu = -sig * (xi - xj) + 2.0 * reg * xu;
    gi = -sig * xu + 2.0 * reg * xi;
    gj = sig * xu + 2.0 * reg * xj;
}

InBatchLossResult in_batch_softmax_loss(const Mat& z_users, const Mat& z_items,
                                        const Vec& weights,
                                        const std::vector<int32_t>& item_ids,
                                        double temperature, bool want_grad) {
    const int64_t batch = z_users.rows();
    if (batch < 2)
        throw std::invalid_argument("in_batch_softmax_loss: batch must have >= 2 rows");
    if (z_items.rows() != batch || static_cast<int64_t>(item_ids.size()) != batch ||
        weights.size() != batch)
        throw std::invalid_argument("in_batch_softmax_loss: inconsistent batch shapes");

    const Mat scores = (z_users * z_items.transpose()) / temperature;
    const double weight_sum = weights.sum();

    InBatchLossResult result;
    Mat grad_s;
    if (want_grad) grad_s = Mat::Zero(batch, batch);

    double total = 0.0;
    std::vector<char> keep(batch);
    for (int64_t j = 0; j < batch; ++j) {
        // duplicate-positive masking: drop columns whose item equals row j's
        // positive, except the diagonal itself
        double max_score = -std::numeric_limits<double>::infinity();
        for (int64_t k = 0; k < batch; ++k) {
            keep[k] = (k == j) || (item_ids[k] != item_ids[j]);
            if (keep[k] && scores(j, k) > max_score) max_score = scores(j, k);
        }
        double denom = 0.0;
        for (int64_t k = 0; k < batch; ++k)
            if (keep[k]) denom += std::exp(scores(j, k) - max_score);
        const double log_prob = scores(j, j) - max_score - std::log(denom);
        total += weights(j) * (-log_prob);

        if (want_grad) {
            for (int64_t k = 0; k < batch; ++k) {
                if (!keep[k]) continue;
                const double p = std::exp(scores(j, k) - max_score) / denom;
                grad_s(j, k) =
                    weights(j) * (p - (k == j ? 1.0 : 0.0)) / (weight_sum * temperature);
            }
        }
    }
    result.value = total / weight_sum;
    if (want_grad) {
        result.grad_users = grad_s * z_items;
        result.grad_items = grad_s.transpose() * z_users;
    }
    return result;
}

}  // namespace bookrec::nn
