#pragma once

// Primal L2-regularized squared-hinge linear SVM with balanced class
// weights, trained by full-batch gradient descent with backtracking line
// search. The objective is
//   F(w,b) = 1/2 ||w||^2 + C * sum_i cw_i * max(0, 1 - y_i (w.x_i + b))^2
// with y in {-1,+1} and the intercept unregularized.

#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mgtd/error.hpp"
#include "mgtd/serial.hpp"
#include "mgtd/tfidf.hpp"

namespace mgtd {

struct SvmConfig {
    double C = 0.5;
    std::size_t max_iter = 5000;
    double tol = 1e-6;  // relative objective decrease
};

struct SvmModel {
    std::vector<double> weights;
    double intercept = 0.0;
};

// w_c = n / (2 * n_c): equalizes the aggregate loss weight of each class.
inline std::pair<double, double> balanced_class_weights(std::size_t count0,
                                                        std::size_t count1) {
    if (count0 == 0 || count1 == 0)
        throw ValueError("balanced_class_weights: a class has zero samples");
    double n = static_cast<double>(count0 + count1);
    return {n / (2.0 * static_cast<double>(count0)),
            n / (2.0 * static_cast<double>(count1))};
}

namespace detail {

struct SvmProblem {
    const std::vector<SparseVector>& X;
    std::vector<double> signed_labels;   // +1 / -1
    std::vector<double> sample_weights;  // C * class weight
    std::size_t dim;

    double objective(const std::vector<double>& w, double b) const {
        double f = 0.0;
        for (double wj : w) f += wj * wj;
        f *= 0.5;
        for (std::size_t i = 0; i < X.size(); ++i) {
            double margin = 1.0 - signed_labels[i] * (X[i].dot(w) + b);
            if (margin > 0.0) f += sample_weights[i] * margin * margin;
        }
        return f;
    }

    // grad_w = w - 2 sum_i cw_i y_i x_i max(0, margin_i), grad_b likewise
    // without the regularization term.
    void gradient(const std::vector<double>& w, double b,
                  std::vector<double>& gw, double& gb) const {
        gw = w;
        gb = 0.0;
        for (std::size_t i = 0; i < X.size(); ++i) {
            double margin = 1.0 - signed_labels[i] * (X[i].dot(w) + b);
            if (margin <= 0.0) continue;
            double coef = -2.0 * sample_weights[i] * signed_labels[i] * margin;
            for (auto& [idx, v] : X[i].entries) gw[idx] += coef * v;
            gb += coef;
        }
    }
};

}  // namespace detail

struct SvmFitTrace {
    std::vector<double> objectives;  // one per accepted iterate
    std::size_t iterations = 0;
};

inline SvmModel svm_fit(const std::vector<SparseVector>& X,
                        const std::vector<int>& y, const SvmConfig& cfg,
                        SvmFitTrace* trace = nullptr) {
    if (X.size() != y.size() || X.size() < 2)
        throw ShapeError("svm_fit: need |X| == |y| >= 2");
    std::size_t dim = X[0].dimension;
    std::size_t count0 = 0, count1 = 0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        if (X[i].dimension != dim)
            throw ShapeError("svm_fit: inconsistent feature dimension");
        (y[i] == 0 ? count0 : count1)++;
    }
    if (count0 == 0 || count1 == 0)
        throw ValueError("svm_fit: training data contains a single class");

    auto [w0, w1] = balanced_class_weights(count0, count1);
    detail::SvmProblem prob{X, {}, {}, dim};
    prob.signed_labels.reserve(X.size());
    prob.sample_weights.reserve(X.size());
    for (int label : y) {
        prob.signed_labels.push_back(label == 1 ? 1.0 : -1.0);
        prob.sample_weights.push_back(cfg.C * (label == 1 ? w1 : w0));
    }

    std::vector<double> w(dim, 0.0), gw;
    double b = 0.0, gb = 0.0;
    double f = prob.objective(w, b);
    if (trace) trace->objectives.push_back(f);

    double step = 1.0;
    for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
        prob.gradient(w, b, gw, gb);
        double grad_sq = gb * gb;
        for (double g : gw) grad_sq += g * g;
        if (grad_sq == 0.0) break;

        // Backtracking with Armijo condition f_new <= f - 0.5 * step * |g|^2.
        step *= 2.0;  // allow recovery after conservative steps
        std::vector<double> w_new(dim);
        double b_new, f_new;
        for (;;) {
            for (std::size_t j = 0; j < dim; ++j) w_new[j] = w[j] - step * gw[j];
            b_new = b - step * gb;
            f_new = prob.objective(w_new, b_new);
            if (f_new <= f - 0.5 * step * grad_sq) break;
            step *= 0.5;
            if (step < 1e-18)
                throw ValueError("svm_fit: line search failed to make progress");
        }
        double decrease = (f - f_new) / std::max(std::abs(f), 1e-12);
        w.swap(w_new);
        b = b_new;
        f = f_new;
        if (trace) {
            trace->objectives.push_back(f);
            trace->iterations = iter + 1;
        }
        if (decrease < cfg.tol) break;
    }

    return SvmModel{std::move(w), b};
}

inline double svm_decision(const SvmModel& m, const SparseVector& x) {
    if (x.dimension != m.weights.size())
        throw ShapeError("svm_decision: dimension mismatch");
    return x.dot(m.weights) + m.intercept;
}

inline int svm_predict(const SvmModel& m, const SparseVector& x) {
    return svm_decision(m, x) > 0.0 ? 1 : 0;
}

inline void svm_save(const SvmModel& m, std::ostream& out) {
    out << "mgtd-svm v1\n" << m.weights.size() << '\n';
    out << double_to_string(m.intercept) << '\n';
    for (double w : m.weights) out << double_to_string(w) << '\n';
}

inline SvmModel svm_load(std::istream& in) {
    std::string tag;
    std::getline(in, tag);
    if (tag != "mgtd-svm v1")
        throw ParseError("not an svm model file (tag '" + tag + "')");
    std::size_t dim = 0;
    std::string tok;
    in >> dim >> tok;
    SvmModel m;
    m.intercept = parse_double(tok);
    m.weights.reserve(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        if (!(in >> tok)) throw ParseError("svm model: truncated weights");
        m.weights.push_back(parse_double(tok));
    }
    return m;
}

}  // namespace mgtd
