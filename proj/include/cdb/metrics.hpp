#pragma once

#include <cmath>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdb/matrix.hpp"

namespace cdb {

// Row = true class, column = predicted class.
struct ConfusionMatrix {
    std::size_t num_classes = 0;
    std::vector<std::size_t> counts;

    explicit ConfusionMatrix(std::size_t c = 0) : num_classes(c), counts(c * c, 0) {}

    std::size_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * num_classes + predicted]; }
    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * num_classes + predicted]; }

    std::size_t row_sum(std::size_t truth) const {
        std::size_t s = 0;
        for (std::size_t p = 0; p < num_classes; ++p) s += at(truth, p);
        return s;
    }
    std::size_t col_sum(std::size_t predicted) const {
        std::size_t s = 0;
        for (std::size_t t = 0; t < num_classes; ++t) s += at(t, predicted);
        return s;
    }
};

inline ConfusionMatrix confusion_matrix(std::span<const std::size_t> predictions,
                                        std::span<const std::size_t> labels, std::size_t num_classes) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("confusion_matrix: prediction/label length mismatch");
    }
    ConfusionMatrix cm(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes || predictions[i] >= num_classes) {
            throw std::invalid_argument("confusion_matrix: index out of range");
        }
        cm.at(labels[i], predictions[i]) += 1;
    }
    return cm;
}

// Argmax with ties resolved toward the lower class index.
inline std::size_t argmax_row(std::span<const double> row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[best]) best = j;
    }
    return best;
}

inline std::vector<std::size_t> predictions_from_logits(const Matrix& logits) {
    std::vector<std::size_t> preds(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) preds[i] = argmax_row(logits.row(i));
    return preds;
}

// Fraction of samples whose true label ranks within the k largest logits;
// equal logits rank by lower class index first.
inline double topk_accuracy(const Matrix& logits, std::span<const std::size_t> labels, std::size_t k) {
    if (k < 1 || k > logits.cols) {
        throw std::invalid_argument("topk_accuracy: k out of range: " + std::to_string(k));
    }
    if (labels.size() != logits.rows) {
        throw std::invalid_argument("topk_accuracy: label count mismatch");
    }
    if (logits.rows == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto row = logits.row(i);
        const std::size_t truth = labels[i];
        if (truth >= logits.cols) throw std::invalid_argument("topk_accuracy: label out of range");
        const double z = row[truth];
        std::size_t rank = 0;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] > z || (row[j] == z && j < truth)) ++rank;
        }
        if (rank < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows);
}

namespace detail {

inline double safe_ratio(std::size_t numerator, std::size_t denominator) {
    // empty denominator contributes 0 and still counts in the macro mean
    return denominator == 0 ? 0.0 : static_cast<double>(numerator) / static_cast<double>(denominator);
}

}  // namespace detail

inline double macro_recall(const ConfusionMatrix& cm) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cm.num_classes; ++c) sum += detail::safe_ratio(cm.at(c, c), cm.row_sum(c));
    return sum / static_cast<double>(cm.num_classes);
}

inline double macro_precision(const ConfusionMatrix& cm) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cm.num_classes; ++c) sum += detail::safe_ratio(cm.at(c, c), cm.col_sum(c));
    return sum / static_cast<double>(cm.num_classes);
}

// Macro recall/precision over a subset of classes; precision columns come
// from the full matrix.
inline std::pair<double, double> group_metrics(const ConfusionMatrix& cm,
                                               const std::set<std::size_t>& group) {
    if (group.empty()) throw std::invalid_argument("group_metrics: empty group");
    double recall_sum = 0.0;
    double precision_sum = 0.0;
    for (std::size_t c : group) {
        if (c >= cm.num_classes) throw std::invalid_argument("group_metrics: class out of range");
        recall_sum += detail::safe_ratio(cm.at(c, c), cm.row_sum(c));
        precision_sum += detail::safe_ratio(cm.at(c, c), cm.col_sum(c));
    }
    const double n = static_cast<double>(group.size());
    return {recall_sum / n, precision_sum / n};
}

struct TrialSummary {
    double top1 = 0.0;
    std::map<std::size_t, double> topk;
    double macro_recall = 0.0;
    double macro_precision = 0.0;
    std::vector<double> per_class_accuracy;
    double error_rate = 0.0;  // always 1 - top1
};

inline TrialSummary evaluate(const Matrix& logits, std::span<const std::size_t> labels,
                             std::size_t num_classes) {
    TrialSummary s;
    s.top1 = topk_accuracy(logits, labels, 1);
    s.error_rate = 1.0 - s.top1;
    s.topk[1] = s.top1;
    if (num_classes >= 5) s.topk[5] = topk_accuracy(logits, labels, 5);
    const auto preds = predictions_from_logits(logits);
    const auto cm = confusion_matrix(preds, labels, num_classes);
    s.macro_recall = macro_recall(cm);
    s.macro_precision = macro_precision(cm);
    s.per_class_accuracy.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        s.per_class_accuracy[c] = detail::safe_ratio(cm.at(c, c), cm.row_sum(c));
    }
    return s;
}

struct MetricAggregate {
    double mean = 0.0;
    double stddev = 0.0;  // sample stddev (N-1); 0 for a single trial
};

inline MetricAggregate mean_stddev(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_stddev: empty input");
    MetricAggregate agg;
    for (double v : values) agg.mean += v;
    agg.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return agg;
}

// Mean and sample stddev for every metric across repeated trials.
inline std::map<std::string, MetricAggregate> aggregate_trials(std::span<const TrialSummary> summaries) {
    if (summaries.empty()) throw std::invalid_argument("aggregate_trials: no summaries");
    std::map<std::string, MetricAggregate> out;
    auto collect = [&](const std::string& name, auto getter) {
        std::vector<double> values;
        values.reserve(summaries.size());
        for (const auto& s : summaries) values.push_back(getter(s));
        out[name] = mean_stddev(values);
    };
    collect("error_rate", [](const TrialSummary& s) { return s.error_rate; });
    collect("top1", [](const TrialSummary& s) { return s.top1; });
    collect("macro_recall", [](const TrialSummary& s) { return s.macro_recall; });
    collect("macro_precision", [](const TrialSummary& s) { return s.macro_precision; });
    for (const auto& [k, unused] : summaries.front().topk) {
        collect("top" + std::to_string(k), [k = k](const TrialSummary& s) { return s.topk.at(k); });
    }
    return out;
}

}  // namespace cdb
