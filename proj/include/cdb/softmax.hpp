#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdb/matrix.hpp"

namespace cdb {

namespace detail {
inline void require_finite_logits(std::span<const double> logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logit vector");
    for (double z : logits) {
        if (!std::isfinite(z)) throw std::invalid_argument("non-finite logits");
    }
}
}  // namespace detail

// Max-subtracted softmax; argmax is preserved and the sum is 1 up to rounding.
inline std::vector<double> softmax(std::span<const double> logits) {
    detail::require_finite_logits(logits);
    const double zmax = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        out[j] = std::exp(logits[j] - zmax);
        sum += out[j];
    }
    for (double& v : out) v /= sum;
    return out;
}

// log softmax as z - logsumexp(z); never evaluates log(0).
inline std::vector<double> log_softmax(std::span<const double> logits) {
    detail::require_finite_logits(logits);
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - zmax);
    const double lse = zmax + std::log(sum);
    std::vector<double> out(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) out[j] = logits[j] - lse;
    return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const auto p = softmax(logits.row(i));
        std::copy(p.begin(), p.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace cdb
