#pragma once

// Sequence classifier over per-token feature rows: linear projection into
// d_model, fixed sinusoidal positions, pre-norm Transformer encoder layers,
// masked mean pooling and a 2-way linear head. Gradients are exact and
// hand-derived; training uses AdamW with decoupled weight decay.
//
// Each sequence is processed at its true length (padded positions are
// sliced away before the encoder), so padding can never leak into logits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mgtd/error.hpp"
#include "mgtd/features.hpp"
#include "mgtd/serial.hpp"

namespace mgtd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct CandaceConfig {
    std::size_t input_dim = 12;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t ffn_dim = 128;
    double dropout = 0.1;           // training only
    std::size_t max_seq_len = 256;
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::size_t epochs = 10;
    double weight_decay = 0.01;
    std::uint64_t seed = 42;

    void validate() const {
        if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
            throw ConfigError("candace: d_model must be divisible by n_heads");
        if (dropout < 0.0 || dropout >= 1.0)
            throw ConfigError("candace: dropout must be in [0, 1)");
        if (input_dim == 0 || input_dim % 3 != 0)
            throw ConfigError("candace: input_dim must be a positive multiple of 3");
    }
};

struct EncoderLayerParams {
    Vector ln1_gain, ln1_bias;
    Matrix wq, wk, wv, wo;  // (d_model x d_model), applied as X * W^T
    Vector bq, bk, bv, bo;
    Vector ln2_gain, ln2_bias;
    Matrix w1;  // (ffn_dim x d_model)
    Vector b1;
    Matrix w2;  // (d_model x ffn_dim)
    Vector b2;
};

struct CandaceParams {
    Matrix projection;  // (d_model x input_dim)
    Vector projection_bias;
    std::vector<EncoderLayerParams> layers;
    Matrix head;  // (2 x d_model)
    Vector head_bias;

    // Every parameter tensor in a fixed declared order, as maps over the
    // underlying storage (vectors appear as n x 1 matrices). Optimizer,
    // serialization and gradient checks all iterate this list.
    std::vector<std::pair<std::string, Eigen::Map<Matrix>>> tensors() {
        std::vector<std::pair<std::string, Eigen::Map<Matrix>>> out;
        auto add = [&out](const std::string& name, Matrix& m) {
            out.emplace_back(name, Eigen::Map<Matrix>(m.data(), m.rows(), m.cols()));
        };
        auto addv = [&out](const std::string& name, Vector& v) {
            out.emplace_back(name, Eigen::Map<Matrix>(v.data(), v.size(), 1));
        };
        add("projection", projection);
        addv("projection_bias", projection_bias);
        for (std::size_t l = 0; l < layers.size(); ++l) {
            auto& lp = layers[l];
            std::string p = "layer" + std::to_string(l) + ".";
            addv(p + "ln1_gain", lp.ln1_gain);
            addv(p + "ln1_bias", lp.ln1_bias);
            add(p + "wq", lp.wq);
            addv(p + "bq", lp.bq);
            add(p + "wk", lp.wk);
            addv(p + "bk", lp.bk);
            add(p + "wv", lp.wv);
            addv(p + "bv", lp.bv);
            add(p + "wo", lp.wo);
            addv(p + "bo", lp.bo);
            addv(p + "ln2_gain", lp.ln2_gain);
            addv(p + "ln2_bias", lp.ln2_bias);
            add(p + "w1", lp.w1);
            addv(p + "b1", lp.b1);
            add(p + "w2", lp.w2);
            addv(p + "b2", lp.b2);
        }
        add("head", head);
        addv("head_bias", head_bias);
        return out;
    }
};

namespace candace_detail {

inline Matrix sinusoidal_positions(std::size_t max_len, std::size_t d_model) {
    Matrix pe(max_len, d_model);
    for (std::size_t pos = 0; pos < max_len; ++pos) {
        for (std::size_t i = 0; i < d_model; i += 2) {
            double angle = static_cast<double>(pos) /
                           std::pow(10000.0, static_cast<double>(i) /
                                                 static_cast<double>(d_model));
            pe(pos, i) = std::sin(angle);
            if (i + 1 < d_model) pe(pos, i + 1) = std::cos(angle);
        }
    }
    return pe;
}

inline double gelu(double u) {
    return 0.5 * u * (1.0 + std::erf(u / std::numbers::sqrt2));
}

inline double gelu_grad(double u) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(u / std::numbers::sqrt2)) +
           u * inv_sqrt_2pi * std::exp(-0.5 * u * u);
}

constexpr double kLnEps = 1e-5;

struct LayerNormCache {
    Matrix xhat;     // normalized input
    Vector inv_std;  // per row
};

inline Matrix layer_norm(const Matrix& x, const Vector& gain,
                         const Vector& bias, LayerNormCache& cache) {
    const auto rows = x.rows();
    const auto cols = x.cols();
    cache.xhat.resize(rows, cols);
    cache.inv_std.resize(rows);
    Matrix y(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        double mean = x.row(i).mean();
        double var = (x.row(i).array() - mean).square().mean();
        double inv = 1.0 / std::sqrt(var + kLnEps);
        cache.inv_std(i) = inv;
        cache.xhat.row(i) = (x.row(i).array() - mean) * inv;
        y.row(i) = cache.xhat.row(i).cwiseProduct(gain.transpose()) +
                   bias.transpose();
    }
    return y;
}

inline Matrix layer_norm_backward(const Matrix& dy, const Vector& gain,
                                  const LayerNormCache& cache, Vector& dgain,
                                  Vector& dbias) {
    const auto rows = dy.rows();
    const auto d = static_cast<double>(dy.cols());
    dgain += (dy.array() * cache.xhat.array()).colwise().sum().transpose().matrix();
    dbias += dy.colwise().sum().transpose();
    Matrix dx(rows, dy.cols());
    for (Eigen::Index i = 0; i < rows; ++i) {
        Eigen::RowVectorXd dxhat = dy.row(i).cwiseProduct(gain.transpose());
        double sum_dxhat = dxhat.sum();
        double sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat.row(i)).sum();
        dx.row(i) = (cache.inv_std(i) / d) *
                    (d * dxhat.array() - sum_dxhat -
                     cache.xhat.row(i).array() * sum_dxhat_xhat);
    }
    return dx;
}

inline void softmax_rows(Matrix& scores) {
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
        double m = scores.row(i).maxCoeff();
        scores.row(i) = (scores.row(i).array() - m).exp();
        scores.row(i) /= scores.row(i).sum();
    }
}

struct AttentionCache {
    Matrix input;                // layer-norm output fed to Q/K/V
    Matrix q, k, v;              // (T x d_model)
    std::vector<Matrix> probs;   // per head, (T x T)
    Matrix concat;               // heads re-concatenated, (T x d_model)
};

struct FfnCache {
    Matrix input;  // layer-norm output fed to the FFN
    Matrix pre;    // before GELU, (T x ffn_dim)
    Matrix act;    // after GELU
};

struct LayerCache {
    LayerNormCache ln1, ln2;
    AttentionCache attn;
    FfnCache ffn;
    Matrix attn_drop_mask, ffn_drop_mask;  // empty when dropout disabled
};

struct ForwardCache {
    Matrix input;    // standardized features (T x input_dim)
    Matrix embedded; // projection + positions
    std::vector<LayerCache> layers;
    Matrix encoded;  // encoder output (T x d_model)
    Vector pooled;
};

}  // namespace candace_detail

struct CandaceModel {
    CandaceConfig config;
    Vector feature_mean;  // standardization, length input_dim
    Vector feature_std;
    Matrix positions;  // fixed sinusoidal table (max_seq_len x d_model)
    CandaceParams params;

    static CandaceModel init(const CandaceConfig& cfg) {
        cfg.validate();
        CandaceModel m;
        m.config = cfg;
        m.feature_mean = Vector::Zero(static_cast<Eigen::Index>(cfg.input_dim));
        m.feature_std = Vector::Ones(static_cast<Eigen::Index>(cfg.input_dim));
        m.positions =
            candace_detail::sinusoidal_positions(cfg.max_seq_len, cfg.d_model);

        std::mt19937_64 rng(cfg.seed);
        auto glorot = [&rng](Eigen::Index out, Eigen::Index in) {
            double limit = std::sqrt(6.0 / static_cast<double>(out + in));
            std::uniform_real_distribution<double> u(-limit, limit);
            Matrix w(out, in);
            for (Eigen::Index i = 0; i < out; ++i)
                for (Eigen::Index j = 0; j < in; ++j) w(i, j) = u(rng);
            return w;
        };
        const auto d = static_cast<Eigen::Index>(cfg.d_model);
        const auto f = static_cast<Eigen::Index>(cfg.ffn_dim);
        m.params.projection = glorot(d, static_cast<Eigen::Index>(cfg.input_dim));
        m.params.projection_bias = Vector::Zero(d);
        m.params.layers.resize(cfg.n_layers);
        for (auto& lp : m.params.layers) {
            lp.ln1_gain = Vector::Ones(d);
            lp.ln1_bias = Vector::Zero(d);
            lp.wq = glorot(d, d);
            lp.wk = glorot(d, d);
            lp.wv = glorot(d, d);
            lp.wo = glorot(d, d);
            lp.bq = Vector::Zero(d);
            lp.bk = Vector::Zero(d);
            lp.bv = Vector::Zero(d);
            lp.bo = Vector::Zero(d);
            lp.ln2_gain = Vector::Ones(d);
            lp.ln2_bias = Vector::Zero(d);
            lp.w1 = glorot(f, d);
            lp.b1 = Vector::Zero(f);
            lp.w2 = glorot(d, f);
            lp.b2 = Vector::Zero(d);
        }
        m.params.head = glorot(2, d);
        m.params.head_bias = Vector::Zero(2);
        return m;
    }

    Matrix standardize(const FeatureMatrix& fm) const {
        const auto cols = static_cast<Eigen::Index>(config.input_dim);
        if (fm.rows.empty()) return Matrix(0, cols);
        if (static_cast<Eigen::Index>(fm.rows[0].size()) != cols)
            throw ShapeError("candace: feature width " +
                             std::to_string(fm.rows[0].size()) +
                             " != input_dim " + std::to_string(config.input_dim));
        std::size_t len = std::min(fm.rows.size(),
                                   static_cast<std::size_t>(config.max_seq_len));
        Matrix x(static_cast<Eigen::Index>(len), cols);
        for (std::size_t t = 0; t < len; ++t)
            for (Eigen::Index j = 0; j < cols; ++j)
                x(static_cast<Eigen::Index>(t), j) =
                    (fm.rows[t][static_cast<std::size_t>(j)] - feature_mean(j)) /
                    feature_std(j);
        return x;
    }
};

namespace candace_detail {

// Inverted dropout; mask entries are 0 or 1/(1-rate).
inline Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                           std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - rate);
    Matrix mask(rows, cols);
    double scale = 1.0 / (1.0 - rate);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            mask(i, j) = keep(rng) ? scale : 0.0;
    return mask;
}

inline Matrix attention_forward(const Matrix& input,
                                const EncoderLayerParams& lp,
                                std::size_t n_heads, AttentionCache& cache) {
    const Eigen::Index t = input.rows();
    const Eigen::Index d = input.cols();
    const Eigen::Index dh = d / static_cast<Eigen::Index>(n_heads);
    cache.input = input;
    cache.q = input * lp.wq.transpose();
    cache.q.rowwise() += lp.bq.transpose();
    cache.k = input * lp.wk.transpose();
    cache.k.rowwise() += lp.bk.transpose();
    cache.v = input * lp.wv.transpose();
    cache.v.rowwise() += lp.bv.transpose();

    cache.probs.assign(n_heads, Matrix());
    cache.concat.resize(t, d);
    double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (std::size_t h = 0; h < n_heads; ++h) {
        Eigen::Index off = static_cast<Eigen::Index>(h) * dh;
        auto qh = cache.q.middleCols(off, dh);
        auto kh = cache.k.middleCols(off, dh);
        auto vh = cache.v.middleCols(off, dh);
        Matrix scores = (qh * kh.transpose()) * scale;
        softmax_rows(scores);
        cache.probs[h] = std::move(scores);
        cache.concat.middleCols(off, dh) = cache.probs[h] * vh;
    }
    Matrix out = cache.concat * lp.wo.transpose();
    out.rowwise() += lp.bo.transpose();
    return out;
}

}  // namespace candace_detail

struct CandaceForwardResult {
    Vector logits;  // length 2
    candace_detail::ForwardCache cache;
};

// Forward pass for one sequence of standardized features. `rng` non-null
// enables dropout (training); masks are recorded for the backward pass.
inline CandaceForwardResult candace_forward_one(const CandaceModel& m,
                                                const Matrix& x,
                                                std::mt19937_64* rng = nullptr) {
    using namespace candace_detail;
    const auto& cfg = m.config;
    CandaceForwardResult res;
    auto& cache = res.cache;
    cache.input = x;
    const Eigen::Index t = x.rows();
    const Eigen::Index d = static_cast<Eigen::Index>(cfg.d_model);

    Matrix h;
    if (t > 0) {
        h = x * m.params.projection.transpose();
        h.rowwise() += m.params.projection_bias.transpose();
        h += m.positions.topRows(t);
    } else {
        h.resize(0, d);
    }
    cache.embedded = h;

    cache.layers.resize(cfg.n_layers);
    bool use_dropout = rng != nullptr && cfg.dropout > 0.0;
    for (std::size_t l = 0; l < cfg.n_layers && t > 0; ++l) {
        auto& lc = cache.layers[l];
        const auto& lp = m.params.layers[l];
        Matrix normed = layer_norm(h, lp.ln1_gain, lp.ln1_bias, lc.ln1);
        Matrix attn = attention_forward(normed, lp, cfg.n_heads, lc.attn);
        if (use_dropout) {
            lc.attn_drop_mask = dropout_mask(t, d, cfg.dropout, *rng);
            attn = attn.cwiseProduct(lc.attn_drop_mask);
        }
        h += attn;

        Matrix normed2 = layer_norm(h, lp.ln2_gain, lp.ln2_bias, lc.ln2);
        lc.ffn.input = normed2;
        lc.ffn.pre = normed2 * lp.w1.transpose();
        lc.ffn.pre.rowwise() += lp.b1.transpose();
        lc.ffn.act = lc.ffn.pre.unaryExpr([](double u) { return gelu(u); });
        Matrix ffn_out = lc.ffn.act * lp.w2.transpose();
        ffn_out.rowwise() += lp.b2.transpose();
        if (use_dropout) {
            lc.ffn_drop_mask = dropout_mask(t, d, cfg.dropout, *rng);
            ffn_out = ffn_out.cwiseProduct(lc.ffn_drop_mask);
        }
        h += ffn_out;
    }
    cache.encoded = h;

    // Empty sequences pool to the zero vector; the head bias decides.
    cache.pooled = t > 0 ? Vector(h.colwise().mean().transpose())
                         : Vector(Vector::Zero(d));
    res.logits = m.params.head * cache.pooled + m.params.head_bias;
    return res;
}

// Numerically stable mean cross-entropy over a batch of 2-class logits.
inline double cross_entropy(const std::vector<Vector>& logits,
                            const std::vector<int>& labels) {
    if (logits.size() != labels.size() || logits.empty())
        throw ShapeError("cross_entropy: logits/labels length mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1)
            throw ValueError("cross_entropy: label must be 0 or 1");
        const Vector& z = logits[i];
        double m = z.maxCoeff();
        double lse = m + std::log(std::exp(z(0) - m) + std::exp(z(1) - m));
        total += lse - z(labels[i]);
    }
    return total / static_cast<double>(logits.size());
}

inline Vector softmax2(const Vector& z) {
    double m = z.maxCoeff();
    Vector e = (z.array() - m).exp();
    return e / e.sum();
}

// Accumulates exact gradients of the (unreduced) loss for one sequence into
// `grads`, given d(loss)/d(logits).
inline void candace_backward_one(const CandaceModel& m,
                                 const candace_detail::ForwardCache& cache,
                                 const Vector& dlogits, CandaceParams& grads) {
    using namespace candace_detail;
    const auto& cfg = m.config;
    const Eigen::Index t = cache.input.rows();
    const Eigen::Index d = static_cast<Eigen::Index>(cfg.d_model);

    grads.head += dlogits * cache.pooled.transpose();
    grads.head_bias += dlogits;
    if (t == 0) return;

    Vector dpooled = m.params.head.transpose() * dlogits;
    Matrix dh = Matrix::Zero(t, d);
    dh.rowwise() = (dpooled / static_cast<double>(t)).transpose();

    const Eigen::Index dh_cols = d / static_cast<Eigen::Index>(cfg.n_heads);
    double scale = 1.0 / std::sqrt(static_cast<double>(dh_cols));

    for (std::size_t l = cfg.n_layers; l-- > 0;) {
        const auto& lc = cache.layers[l];
        const auto& lp = m.params.layers[l];
        auto& lg = grads.layers[l];

        // FFN sublayer
        Matrix dffn_out = dh;
        if (lc.ffn_drop_mask.size() > 0)
            dffn_out = dffn_out.cwiseProduct(lc.ffn_drop_mask);
        lg.w2 += dffn_out.transpose() * lc.ffn.act;
        lg.b2 += dffn_out.colwise().sum().transpose();
        Matrix dact = dffn_out * lp.w2;
        Matrix dpre = dact.cwiseProduct(
            lc.ffn.pre.unaryExpr([](double u) { return gelu_grad(u); }));
        lg.w1 += dpre.transpose() * lc.ffn.input;
        lg.b1 += dpre.colwise().sum().transpose();
        Matrix dnormed2 = dpre * lp.w1;
        dh += layer_norm_backward(dnormed2, lp.ln2_gain, lc.ln2, lg.ln2_gain,
                                  lg.ln2_bias);

        // attention sublayer
        Matrix dattn_out = dh;
        if (lc.attn_drop_mask.size() > 0)
            dattn_out = dattn_out.cwiseProduct(lc.attn_drop_mask);
        lg.wo += dattn_out.transpose() * lc.attn.concat;
        lg.bo += dattn_out.colwise().sum().transpose();
        Matrix dconcat = dattn_out * lp.wo;

        Matrix dq = Matrix::Zero(t, d), dk = Matrix::Zero(t, d),
               dv = Matrix::Zero(t, d);
        for (std::size_t hd = 0; hd < cfg.n_heads; ++hd) {
            Eigen::Index off = static_cast<Eigen::Index>(hd) * dh_cols;
            const Matrix& probs = lc.attn.probs[hd];
            auto vh = lc.attn.v.middleCols(off, dh_cols);
            auto qh = lc.attn.q.middleCols(off, dh_cols);
            auto kh = lc.attn.k.middleCols(off, dh_cols);
            Matrix dhh = dconcat.middleCols(off, dh_cols);
            Matrix dprobs = dhh * vh.transpose();
            dv.middleCols(off, dh_cols) = probs.transpose() * dhh;
            // softmax rows backward
            Matrix dscores(t, t);
            for (Eigen::Index i = 0; i < t; ++i) {
                double dot = dprobs.row(i).cwiseProduct(probs.row(i)).sum();
                dscores.row(i) = probs.row(i).array() *
                                 (dprobs.row(i).array() - dot);
            }
            dq.middleCols(off, dh_cols) = (dscores * kh) * scale;
            dk.middleCols(off, dh_cols) = (dscores.transpose() * qh) * scale;
        }
        const Matrix& a = lc.attn.input;
        lg.wq += dq.transpose() * a;
        lg.bq += dq.colwise().sum().transpose();
        lg.wk += dk.transpose() * a;
        lg.bk += dk.colwise().sum().transpose();
        lg.wv += dv.transpose() * a;
        lg.bv += dv.colwise().sum().transpose();
        Matrix dnormed = dq * lp.wq + dk * lp.wk + dv * lp.wv;
        dh += layer_norm_backward(dnormed, lp.ln1_gain, lc.ln1, lg.ln1_gain,
                                  lg.ln1_bias);
    }

    grads.projection += dh.transpose() * cache.input;
    grads.projection_bias += dh.colwise().sum().transpose();
}

inline CandaceParams zero_like(const CandaceParams& params) {
    CandaceParams z = params;
    for (auto& [name, m] : z.tensors()) m.setZero();
    return z;
}

// --- AdamW ------------------------------------------------------------

struct AdamWState {
    CandaceParams m, v;
    std::size_t step = 0;
};

// Decoupled weight decay: the decay term p -= lr*wd*p is applied separately
// from the bias-corrected moment update.
inline void adamw_step_tensor(Eigen::Ref<Matrix> param,
                              const Eigen::Ref<const Matrix>& grad,
                              Eigen::Ref<Matrix> m, Eigen::Ref<Matrix> v,
                              std::size_t step, double lr, double beta1 = 0.9,
                              double beta2 = 0.999, double eps = 1e-8,
                              double weight_decay = 0.01) {
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    param -= lr * weight_decay * param;
    param.array() -=
        lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

inline void adamw_step(CandaceParams& params, CandaceParams& grads,
                       AdamWState& state, double lr, double weight_decay) {
    ++state.step;
    auto ps = params.tensors();
    auto gs = grads.tensors();
    auto ms = state.m.tensors();
    auto vs = state.v.tensors();
    for (std::size_t i = 0; i < ps.size(); ++i)
        adamw_step_tensor(ps[i].second, gs[i].second, ms[i].second,
                          vs[i].second, state.step, lr, 0.9, 0.999, 1e-8,
                          weight_decay);
}

}  // namespace mgtd
