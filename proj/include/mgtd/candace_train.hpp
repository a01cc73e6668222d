#pragma once

// Batched training, padded-batch inference and persistence for the
// sequence classifier.

#include <algorithm>
#include <iostream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mgtd/candace.hpp"
#include "mgtd/metrics.hpp"

namespace mgtd {

// Zero-padded batch: `mask` marks real token positions; padded positions
// hold zeros. Rows may be fully padded (empty documents).
struct PaddedBatch {
    std::vector<Matrix> features;         // each max_len x input_dim
    std::vector<std::vector<bool>> mask;  // true = real token
    std::vector<int> labels;              // empty when unlabeled
};

inline PaddedBatch make_padded_batch(const std::vector<FeatureMatrix>& items,
                                     std::size_t input_dim,
                                     std::size_t max_seq_len,
                                     const std::vector<int>& labels = {}) {
    std::size_t max_len = 1;
    for (const auto& fm : items)
        max_len = std::max(max_len, std::min(fm.rows.size(), max_seq_len));
    PaddedBatch b;
    b.labels = labels;
    for (const auto& fm : items) {
        if (!fm.rows.empty() && fm.rows[0].size() != input_dim)
            throw ShapeError("padded batch: feature width mismatch");
        Matrix x = Matrix::Zero(static_cast<Eigen::Index>(max_len),
                                static_cast<Eigen::Index>(input_dim));
        std::vector<bool> mask(max_len, false);
        std::size_t len = std::min(fm.rows.size(), max_seq_len);
        for (std::size_t t = 0; t < len; ++t) {
            mask[t] = true;
            for (std::size_t j = 0; j < input_dim; ++j)
                x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                    fm.rows[t][j];
        }
        b.features.push_back(std::move(x));
        b.mask.push_back(std::move(mask));
    }
    return b;
}

namespace candace_detail {

// Gathers the masked-true rows of one batch item and standardizes them.
inline Matrix gather_standardized(const CandaceModel& m, const Matrix& padded,
                                  const std::vector<bool>& mask) {
    Eigen::Index n_true = 0;
    for (bool b : mask) n_true += b ? 1 : 0;
    Matrix x(n_true, padded.cols());
    Eigen::Index r = 0;
    for (std::size_t t = 0; t < mask.size(); ++t)
        if (mask[t]) x.row(r++) = padded.row(static_cast<Eigen::Index>(t));
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        x.row(i) = (x.row(i) - m.feature_mean.transpose().eval())
                       .cwiseQuotient(m.feature_std.transpose().eval());
    return x;
}

}  // namespace candace_detail

// Forward over a padded batch; one logit pair per row. Padded positions are
// sliced away before the encoder, so their feature values cannot influence
// any logit.
inline std::vector<Vector> candace_forward(const CandaceModel& m,
                                           const PaddedBatch& batch,
                                           std::mt19937_64* rng = nullptr) {
    if (batch.features.size() != batch.mask.size())
        throw ShapeError("candace_forward: features/mask size mismatch");
    std::vector<Vector> logits;
    logits.reserve(batch.features.size());
    for (std::size_t i = 0; i < batch.features.size(); ++i) {
        Matrix x = candace_detail::gather_standardized(m, batch.features[i],
                                                       batch.mask[i]);
        logits.push_back(candace_forward_one(m, x, rng).logits);
    }
    return logits;
}

// One optimization step on a batch; returns the batch loss. Gradients are
// accumulated in batch order.
inline double candace_train_step(CandaceModel& model, const PaddedBatch& batch,
                                 AdamWState& state, std::mt19937_64& rng) {
    const std::size_t n = batch.features.size();
    if (batch.labels.size() != n)
        throw UsageError("candace_train_step: batch is unlabeled");
    CandaceParams grads = zero_like(model.params);
    std::vector<Vector> logits;
    double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        Matrix x = candace_detail::gather_standardized(model, batch.features[i],
                                                       batch.mask[i]);
        auto res = candace_forward_one(
            model, x, model.config.dropout > 0.0 ? &rng : nullptr);
        Vector dlogits = softmax2(res.logits);
        dlogits(batch.labels[i]) -= 1.0;
        dlogits *= inv_n;
        candace_backward_one(model, res.cache, dlogits, grads);
        logits.push_back(std::move(res.logits));
    }
    double loss = cross_entropy(logits, batch.labels);
    adamw_step(model.params, grads, state, model.config.lr,
               model.config.weight_decay);
    return loss;
}

inline int candace_predict(const CandaceModel& m, const FeatureMatrix& fm) {
    Matrix x = m.standardize(fm);
    Vector logits = candace_forward_one(m, x).logits;
    return logits(1) > logits(0) ? 1 : 0;  // tie -> 0
}

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double dev_accuracy = 0.0;
    double dev_f1 = 0.0;
};

struct CandaceTrainResult {
    CandaceModel model;  // parameters from the best-dev-accuracy epoch
    std::vector<EpochMetrics> history;
    std::size_t best_epoch = 0;  // 1-based
};

inline void fit_standardization(CandaceModel& model,
                                const std::vector<FeatureMatrix>& train) {
    const auto dim = static_cast<Eigen::Index>(model.config.input_dim);
    Vector sum = Vector::Zero(dim), sum_sq = Vector::Zero(dim);
    double count = 0.0;
    for (const auto& fm : train) {
        std::size_t len = std::min(fm.rows.size(),
                                   static_cast<std::size_t>(model.config.max_seq_len));
        for (std::size_t t = 0; t < len; ++t) {
            for (Eigen::Index j = 0; j < dim; ++j) {
                double v = fm.rows[t][static_cast<std::size_t>(j)];
                sum(j) += v;
                sum_sq(j) += v * v;
            }
            count += 1.0;
        }
    }
    if (count == 0.0) return;  // all-empty corpus: identity standardization
    model.feature_mean = sum / count;
    for (Eigen::Index j = 0; j < dim; ++j) {
        double var = sum_sq(j) / count - model.feature_mean(j) * model.feature_mean(j);
        model.feature_std(j) = var > 1e-12 ? std::sqrt(var) : 1.0;
    }
}

// Seeded, single-threaded training loop: shuffled batches, AdamW, per-epoch
// dev evaluation, post-hoc selection of the best-dev-accuracy parameters.
inline CandaceTrainResult candace_train(
    const std::vector<FeatureMatrix>& train_x, const std::vector<int>& train_y,
    const std::vector<FeatureMatrix>& dev_x, const std::vector<int>& dev_y,
    const CandaceConfig& cfg, std::ostream* log = nullptr) {
    if (train_x.size() != train_y.size() || dev_x.size() != dev_y.size())
        throw ShapeError("candace_train: features/labels length mismatch");
    if (train_x.empty() || dev_x.empty())
        throw UsageError("candace_train: empty train or dev set");
    for (const auto& fm : train_x)
        if (!fm.rows.empty() && fm.rows[0].size() != cfg.input_dim)
            throw ConfigError("candace_train: feature width != input_dim");

    CandaceModel model = CandaceModel::init(cfg);
    fit_standardization(model, train_x);
    AdamWState state{zero_like(model.params), zero_like(model.params), 0};
    std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::mt19937_64 dropout_rng(cfg.seed + 1);

    CandaceTrainResult result;
    double best_acc = -1.0;
    std::vector<std::size_t> order(train_x.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += cfg.batch_size) {
            std::size_t end = std::min(start + cfg.batch_size, order.size());
            std::vector<FeatureMatrix> items;
            std::vector<int> labels;
            for (std::size_t i = start; i < end; ++i) {
                items.push_back(train_x[order[i]]);
                labels.push_back(train_y[order[i]]);
            }
            PaddedBatch batch = make_padded_batch(items, cfg.input_dim,
                                                  cfg.max_seq_len, labels);
            loss_sum += candace_train_step(model, batch, state, dropout_rng);
            ++n_batches;
        }

        std::vector<int> dev_pred;
        dev_pred.reserve(dev_x.size());
        for (const auto& fm : dev_x) dev_pred.push_back(candace_predict(model, fm));
        MetricsReport dev = metrics(confusion(dev_pred, dev_y));

        EpochMetrics em;
        em.epoch = epoch;
        em.train_loss = loss_sum / static_cast<double>(n_batches);
        em.dev_accuracy = dev.accuracy;
        em.dev_f1 = dev.f1;
        result.history.push_back(em);
        if (log)
            *log << "epoch=" << epoch << " train_loss=" << em.train_loss
                 << " dev_accuracy=" << em.dev_accuracy
                 << " dev_f1=" << em.dev_f1 << "\n";

        if (dev.accuracy > best_acc) {
            best_acc = dev.accuracy;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    return result;
}

// --- persistence -------------------------------------------------------

inline void candace_save(CandaceModel& m, std::ostream& out) {
    out << "mgtd-candace v1\n";
    const auto& c = m.config;
    out << c.input_dim << ' ' << c.d_model << ' ' << c.n_heads << ' '
        << c.n_layers << ' ' << c.ffn_dim << ' ' << double_to_string(c.dropout)
        << ' ' << c.max_seq_len << ' ' << double_to_string(c.lr) << ' '
        << c.batch_size << ' ' << c.epochs << ' '
        << double_to_string(c.weight_decay) << ' ' << c.seed << '\n';
    auto write_block = [&out](const Matrix& mat) {
        for (Eigen::Index j = 0; j < mat.cols(); ++j)
            for (Eigen::Index i = 0; i < mat.rows(); ++i)
                out << double_to_string(mat(i, j)) << '\n';
    };
    write_block(m.feature_mean);
    write_block(m.feature_std);
    for (auto& [name, tensor] : m.params.tensors()) {
        out << name << ' ' << tensor.rows() << ' ' << tensor.cols() << '\n';
        write_block(tensor);
    }
}

inline CandaceModel candace_load(std::istream& in) {
    std::string tag;
    std::getline(in, tag);
    if (tag != "mgtd-candace v1")
        throw ParseError("not a candace model file (tag '" + tag + "')");
    CandaceConfig c;
    std::string dropout_s, lr_s, wd_s;
    in >> c.input_dim >> c.d_model >> c.n_heads >> c.n_layers >> c.ffn_dim >>
        dropout_s >> c.max_seq_len >> lr_s >> c.batch_size >> c.epochs >>
        wd_s >> c.seed;
    c.dropout = parse_double(dropout_s);
    c.lr = parse_double(lr_s);
    c.weight_decay = parse_double(wd_s);
    CandaceModel m = CandaceModel::init(c);
    std::string tok;
    auto read_block = [&](Eigen::Ref<Matrix> mat) {
        for (Eigen::Index j = 0; j < mat.cols(); ++j)
            for (Eigen::Index i = 0; i < mat.rows(); ++i) {
                if (!(in >> tok))
                    throw ParseError("candace model: truncated tensor data");
                mat(i, j) = parse_double(tok);
            }
    };
    read_block(m.feature_mean);
    read_block(m.feature_std);
    for (auto& [name, tensor] : m.params.tensors()) {
        std::string got_name;
        Eigen::Index rows = 0, cols = 0;
        if (!(in >> got_name >> rows >> cols) || got_name != name ||
            rows != tensor.rows() || cols != tensor.cols())
            throw ParseError("candace model: tensor header mismatch at '" +
                             name + "'");
        read_block(tensor);
    }
    return m;
}

}  // namespace mgtd
