#pragma once

// Confusion matrix and the task metrics (accuracy, precision, recall, F1)
// with `machine` (label 1) as the positive class. 0/0 ratios are defined
// as 0 so degenerate splits still produce a report.

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "mgtd/error.hpp"

namespace mgtd {

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

inline ConfusionMatrix confusion(const std::vector<int>& pred,
                                 const std::vector<int>& gold) {
    if (pred.size() != gold.size() || pred.empty())
        throw ShapeError("confusion: need equal nonempty pred/gold");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] == 1)
            (gold[i] == 1 ? cm.tp : cm.fp)++;
        else
            (gold[i] == 0 ? cm.tn : cm.fn)++;
    }
    return cm;
}

inline MetricsReport metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw UsageError("metrics: empty confusion matrix");
    auto ratio = [](double num, double den) { return den > 0 ? num / den : 0.0; };
    MetricsReport r;
    r.accuracy = ratio(static_cast<double>(cm.tp + cm.tn),
                       static_cast<double>(cm.total()));
    r.precision = ratio(static_cast<double>(cm.tp),
                        static_cast<double>(cm.tp + cm.fp));
    r.recall = ratio(static_cast<double>(cm.tp),
                     static_cast<double>(cm.tp + cm.fn));
    r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
    return r;
}

// Percentage with two decimals, round-half-up (0.97905 -> "97.91").
inline std::string format_percent(double value) {
    double scaled = std::floor(value * 10000.0 + 0.5) / 100.0;
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(2) << scaled;
    return ss.str();
}

// Fixed-width comparison table, one row per system, metrics as percentages.
inline std::string render_table(
    const std::vector<std::pair<std::string, MetricsReport>>& reports) {
    if (reports.empty()) throw UsageError("render_table: no reports");
    std::size_t name_width = 6;  // "System"
    for (const auto& [name, r] : reports)
        name_width = std::max(name_width, name.size());
    std::ostringstream ss;
    ss << std::left << std::setw(static_cast<int>(name_width)) << "System"
       << std::right << std::setw(8) << "Acc." << std::setw(8) << "F1"
       << std::setw(8) << "Prec." << std::setw(8) << "Rec." << '\n';
    for (const auto& [name, r] : reports) {
        ss << std::left << std::setw(static_cast<int>(name_width)) << name
           << std::right << std::setw(8) << format_percent(r.accuracy)
           << std::setw(8) << format_percent(r.f1) << std::setw(8)
           << format_percent(r.precision) << std::setw(8)
           << format_percent(r.recall) << '\n';
    }
    return ss.str();
}

}  // namespace mgtd
