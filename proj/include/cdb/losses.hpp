#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdb/matrix.hpp"
#include "cdb/softmax.hpp"

namespace cdb {

enum class LossKind { kCe, kCdbCe, kIfwCe, kFocal, kClassBalanced };
enum class TauMode { kFixed, kDynamic };
enum class ClassWeightsSource { kNone, kDifficulty, kInverseFrequency, kEffectiveNumber };

struct LossSpec {
    LossKind kind = LossKind::kCe;
    TauMode tau_mode = TauMode::kDynamic;
    double tau = 1.0;          // exponent when tau_mode is fixed
    double focal_gamma = 2.0;  // focal loss only
    double cb_beta = 0.999;    // class-balanced loss only
};

inline ClassWeightsSource class_weights_source(LossKind kind) {
    switch (kind) {
        case LossKind::kCdbCe: return ClassWeightsSource::kDifficulty;
        case LossKind::kIfwCe: return ClassWeightsSource::kInverseFrequency;
        case LossKind::kClassBalanced: return ClassWeightsSource::kEffectiveNumber;
        default: return ClassWeightsSource::kNone;
    }
}

struct BatchLossResult {
    double mean_loss = 0.0;
    Matrix dloss_dlogits;
    std::vector<double> per_sample_loss;
};

namespace detail {

inline void check_labels(const Matrix& logits, std::span<const std::size_t> labels) {
    if (labels.size() != logits.rows) {
        throw std::invalid_argument("loss: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(logits.rows) + " logit rows");
    }
    for (std::size_t k : labels) {
        if (k >= logits.cols) throw std::invalid_argument("label out of range: " + std::to_string(k));
    }
}

// Weighted softmax cross-entropy, fused in logit space. weights == nullptr
// means unweighted; class weight 1.0 gives bit-identical results either way.
inline BatchLossResult weighted_ce(const Matrix& logits, std::span<const std::size_t> labels,
                                   const double* weights) {
    check_labels(logits, labels);
    const std::size_t batch = logits.rows;
    const std::size_t num_classes = logits.cols;
    BatchLossResult result;
    result.dloss_dlogits = Matrix(batch, num_classes);
    result.per_sample_loss.resize(batch);
    const double inv_batch = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const auto ls = log_softmax(logits.row(i));
        const std::size_t k = labels[i];
        const double w = weights ? weights[k] : 1.0;
        result.per_sample_loss[i] = -w * ls[k];
        loss_sum += result.per_sample_loss[i];
        double* grow = result.dloss_dlogits.row(i).data();
        for (std::size_t j = 0; j < num_classes; ++j) {
            const double p = std::exp(ls[j]);
            const double indicator = (j == k) ? 1.0 : 0.0;
            grow[j] = w * (p - indicator) * inv_batch;
        }
    }
    result.mean_loss = loss_sum * inv_batch;
    return result;
}

}  // namespace detail

// Per-sample loss -log p_k; gradient row (p - onehot)/B.
inline BatchLossResult ce_loss(const Matrix& logits, std::span<const std::size_t> labels) {
    return detail::weighted_ce(logits, labels, nullptr);
}

// Class-difficulty weighted cross-entropy: -w_k log p_k per sample, weights
// indexed by true class. With all weights 1 this is ce_loss bit for bit.
inline BatchLossResult cdb_ce_loss(const Matrix& logits, std::span<const std::size_t> labels,
                                   std::span<const double> class_weights) {
    if (class_weights.size() != logits.cols) {
        throw std::invalid_argument("cdb_ce_loss: weight vector length " +
                                    std::to_string(class_weights.size()) + " != class count " +
                                    std::to_string(logits.cols));
    }
    for (double w : class_weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("cdb_ce_loss: class weights must be >= 0");
    }
    return detail::weighted_ce(logits, labels, class_weights.data());
}

// Focal loss -(1-p_k)^gamma log p_k with the analytic logit gradient.
inline BatchLossResult focal_loss(const Matrix& logits, std::span<const std::size_t> labels,
                                  double gamma) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("focal_loss: gamma must be >= 0");
    detail::check_labels(logits, labels);
    const std::size_t batch = logits.rows;
    const std::size_t num_classes = logits.cols;
    BatchLossResult result;
    result.dloss_dlogits = Matrix(batch, num_classes);
    result.per_sample_loss.resize(batch);
    const double inv_batch = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const auto ls = log_softmax(logits.row(i));
        const std::size_t k = labels[i];
        const double pk = std::exp(ls[k]);
        const double one_minus = 1.0 - pk;
        double* grow = result.dloss_dlogits.row(i).data();
        if (one_minus <= 0.0) {
            // p_k rounded to 1: the modulating factor has driven loss and
            // gradient to their zero limit
            result.per_sample_loss[i] = 0.0;
            continue;
        }
        const double focal_factor = std::pow(one_minus, gamma);
        result.per_sample_loss[i] = -focal_factor * ls[k];
        loss_sum += result.per_sample_loss[i];
        // d/dz_j of -(1-p)^g log p = [g*p*log(p)*(1-p)^(g-1) - (1-p)^g] * (1[j==k] - p_j)
        const double dcoeff =
            (gamma == 0.0 ? 0.0 : gamma * pk * ls[k] * std::pow(one_minus, gamma - 1.0)) - focal_factor;
        for (std::size_t j = 0; j < num_classes; ++j) {
            const double p = std::exp(ls[j]);
            const double indicator = (j == k) ? 1.0 : 0.0;
            grow[j] = dcoeff * (indicator - p) * inv_batch;
        }
    }
    result.mean_loss = loss_sum * inv_batch;
    return result;
}

// w_c proportional to 1/n_c, normalized to mean 1.
inline std::vector<double> inverse_frequency_weights(std::span<const std::size_t> class_counts) {
    if (class_counts.empty()) throw std::invalid_argument("inverse_frequency_weights: no classes");
    std::vector<double> weights(class_counts.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        if (class_counts[c] == 0) throw std::invalid_argument("empty class " + std::to_string(c));
        weights[c] = 1.0 / static_cast<double>(class_counts[c]);
        sum += weights[c];
    }
    const double scale = static_cast<double>(class_counts.size()) / sum;
    for (double& w : weights) w *= scale;
    return weights;
}

// Effective-number weights w_c proportional to (1-beta)/(1-beta^n_c),
// normalized so the weights sum to C.
inline std::vector<double> class_balanced_weights(std::span<const std::size_t> class_counts, double beta) {
    if (class_counts.empty()) throw std::invalid_argument("class_balanced_weights: no classes");
    if (beta < 0.0 || beta >= 1.0) throw std::invalid_argument("class_balanced_weights: beta must be in [0,1)");
    std::vector<double> weights(class_counts.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < class_counts.size(); ++c) {
        if (class_counts[c] == 0) throw std::invalid_argument("empty class " + std::to_string(c));
        const double effective = 1.0 - std::pow(beta, static_cast<double>(class_counts[c]));
        weights[c] = (1.0 - beta) / effective;
        sum += weights[c];
    }
    const double scale = static_cast<double>(class_counts.size()) / sum;
    for (double& w : weights) w *= scale;
    return weights;
}

}  // namespace cdb
