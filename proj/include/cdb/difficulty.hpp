#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdb/losses.hpp"

namespace cdb {

// Epsilon guarding the bias denominator when the worst class accuracy is 0.
inline constexpr double kBiasEpsilon = 0.0001;

// Per-class validation counts and accuracies. Classes absent from the
// validation set get total 0 and accuracy 0: an unmeasured class is treated
// as maximally unlearned.
struct ClassValStats {
    std::vector<std::size_t> total;
    std::vector<std::size_t> correct;
    std::vector<double> accuracy;

    std::size_t num_classes() const { return accuracy.size(); }
};

inline ClassValStats class_accuracies(std::span<const std::size_t> predictions,
                                      std::span<const std::size_t> labels, std::size_t num_classes) {
    if (predictions.size() != labels.size()) {
        throw std::invalid_argument("class_accuracies: " + std::to_string(predictions.size()) +
                                    " predictions for " + std::to_string(labels.size()) + " labels");
    }
    ClassValStats stats;
    stats.total.assign(num_classes, 0);
    stats.correct.assign(num_classes, 0);
    stats.accuracy.assign(num_classes, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) {
            throw std::invalid_argument("class_accuracies: label out of range: " + std::to_string(labels[i]));
        }
        if (predictions[i] >= num_classes) {
            throw std::invalid_argument("class_accuracies: prediction out of range: " +
                                        std::to_string(predictions[i]));
        }
        stats.total[labels[i]] += 1;
        if (predictions[i] == labels[i]) stats.correct[labels[i]] += 1;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (stats.total[c] > 0) {
            stats.accuracy[c] = static_cast<double>(stats.correct[c]) / static_cast<double>(stats.total[c]);
        }
    }
    return stats;
}

// d_c = 1 - A_c
inline std::vector<double> difficulties(const ClassValStats& stats) {
    std::vector<double> d(stats.num_classes());
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = 1.0 - stats.accuracy[c];
    return d;
}

// b = max_c A_c / (min_c A_c + epsilon) - 1. Slightly negative when all
// accuracies are equal; that is the formula as written, not a bug.
inline double accuracy_bias(const ClassValStats& stats, double epsilon = kBiasEpsilon) {
    if (stats.num_classes() == 0) throw std::invalid_argument("accuracy_bias: no classes");
    if (!(epsilon > 0.0)) throw std::invalid_argument("accuracy_bias: epsilon must be positive");
    const auto [lo, hi] = std::minmax_element(stats.accuracy.begin(), stats.accuracy.end());
    return *hi / (*lo + epsilon) - 1.0;
}

// tau = 2 / (1 + exp(-b)), in (0,2) and increasing in b. The exponent is
// clamped at +-700 to keep exp finite; indistinguishable from the limit in
// 64-bit floats. When exp(-b) underflows past 1 ulp the quotient would round
// to exactly 2, so the result is nudged to the largest double below 2 to
// keep the interval open.
inline double dynamic_tau(double bias) {
    if (!std::isfinite(bias)) throw std::invalid_argument("dynamic_tau: non-finite bias");
    const double clamped = std::clamp(bias, -700.0, 700.0);
    const double tau = 2.0 / (1.0 + std::exp(-clamped));
    return tau < 2.0 ? tau : std::nextafter(2.0, 0.0);
}

// w_c = d_c^tau with 0^0 := 1, so tau = 0 reproduces unweighted CE exactly.
inline std::vector<double> difficulty_weights(std::span<const double> difficulty, double tau) {
    if (!(tau >= 0.0)) throw std::invalid_argument("difficulty_weights: tau must be >= 0");
    std::vector<double> weights(difficulty.size());
    for (std::size_t c = 0; c < difficulty.size(); ++c) {
        const double d = difficulty[c];
        if (d < 0.0 || d > 1.0) {
            throw std::invalid_argument("difficulty_weights: difficulty out of [0,1]: " + std::to_string(d));
        }
        weights[c] = tau == 0.0 ? 1.0 : std::pow(d, tau);
    }
    return weights;
}

// One epoch's difficulty snapshot: everything derived from a single
// validation pass.
struct DifficultyState {
    std::size_t epoch = 0;
    std::vector<double> difficulty;
    double tau = 0.0;
    double bias = 0.0;
    double epsilon = kBiasEpsilon;
    std::vector<double> weights;
};

// difficulties -> (bias -> dynamic tau | fixed tau) -> weights, all from the
// same stats. Non-CDB losses get tau 0, i.e. unit weights.
inline DifficultyState update_difficulty(const ClassValStats& stats, const LossSpec& spec,
                                         std::size_t epoch) {
    DifficultyState state;
    state.epoch = epoch;
    state.difficulty = difficulties(stats);
    state.bias = accuracy_bias(stats, state.epsilon);
    if (spec.kind == LossKind::kCdbCe) {
        state.tau = spec.tau_mode == TauMode::kDynamic ? dynamic_tau(state.bias) : spec.tau;
    } else {
        state.tau = 0.0;
    }
    state.weights = difficulty_weights(state.difficulty, state.tau);
    return state;
}

}  // namespace cdb
