#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdb/matrix.hpp"
#include "cdb/rng.hpp"

namespace cdb {

struct LabeledDataset {
    Matrix features;                        // N x D
    std::vector<std::size_t> labels;        // N, values in [0, num_classes)
    std::size_t num_classes = 0;
    std::vector<std::size_t> class_counts;  // per class

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols; }

    void recount() {
        class_counts.assign(num_classes, 0);
        for (std::size_t label : labels) {
            if (label >= num_classes) {
                throw std::invalid_argument("dataset label out of range: " + std::to_string(label));
            }
            class_counts[label] += 1;
        }
    }
};

namespace detail {

inline LabeledDataset take_rows(const LabeledDataset& source, const std::vector<std::size_t>& rows) {
    LabeledDataset out;
    out.features = Matrix(rows.size(), source.dim());
    out.labels.resize(rows.size());
    out.num_classes = source.num_classes;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = source.features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.features.row(i).begin());
        out.labels[i] = source.labels[rows[i]];
    }
    out.recount();
    return out;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(const LabeledDataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);
    return by_class;
}

inline std::size_t round_half_up(double x) {
    return static_cast<std::size_t>(std::floor(x + 0.5));
}

}  // namespace detail

// Gaussian blobs with unit covariance: class c sits at separation times a
// unit vector (equally spaced on the circle when D == 2, axis e_{c mod D}
// otherwise). Wholly determined by the seed.
inline LabeledDataset make_gaussian_mixture(std::size_t num_classes, std::size_t samples_per_class,
                                            std::size_t dim, double separation, std::uint64_t seed) {
    if (num_classes < 1 || samples_per_class < 1 || dim < 1) {
        throw std::invalid_argument("make_gaussian_mixture: counts must be >= 1");
    }
    if (separation < 0.0) throw std::invalid_argument("make_gaussian_mixture: separation must be >= 0");
    LabeledDataset ds;
    ds.num_classes = num_classes;
    ds.features = Matrix(num_classes * samples_per_class, dim);
    ds.labels.resize(num_classes * samples_per_class);
    Rng rng(seed);
    std::size_t row = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<double> center(dim, 0.0);
        if (dim == 2) {
            const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
            center[0] = separation * std::cos(angle);
            center[1] = separation * std::sin(angle);
        } else {
            center[c % dim] = separation;
        }
        for (std::size_t s = 0; s < samples_per_class; ++s, ++row) {
            auto feat = ds.features.row(row);
            for (std::size_t d = 0; d < dim; ++d) feat[d] = center[d] + rng.next_normal(0.0, 1.0);
            ds.labels[row] = c;
        }
    }
    ds.recount();
    return ds;
}

// Majority-class-ratio subsampling for the binary protocol: keep
// round(ratio*total) samples of the majority class and total minus that of
// the minority class, then relabel {0 = minority, 1 = majority}.
struct MajoritySpec {
    std::size_t total = 5000;
    std::size_t majority_class = 9;
    std::size_t minority_class = 4;
    double ratio = 0.9;
};

inline LabeledDataset induce_majority_ratio(const LabeledDataset& source, const MajoritySpec& spec,
                                            std::uint64_t seed) {
    if (!(spec.ratio > 0.0 && spec.ratio < 1.0)) {
        throw std::invalid_argument("induce_majority_ratio: ratio must be in (0,1)");
    }
    if (spec.majority_class >= source.num_classes || spec.minority_class >= source.num_classes ||
        spec.majority_class == spec.minority_class) {
        throw std::invalid_argument("induce_majority_ratio: bad class indices");
    }
    const std::size_t majority_count = detail::round_half_up(spec.ratio * static_cast<double>(spec.total));
    if (majority_count < 1 || majority_count >= spec.total) {
        throw std::invalid_argument("induce_majority_ratio: ratio*total leaves an empty class");
    }
    const std::size_t minority_count = spec.total - majority_count;
    const auto by_class = detail::indices_by_class(source);
    if (by_class[spec.majority_class].size() < majority_count) {
        throw std::invalid_argument("insufficient samples of class " + std::to_string(spec.majority_class) +
                                    ": need " + std::to_string(majority_count) + ", have " +
                                    std::to_string(by_class[spec.majority_class].size()));
    }
    if (by_class[spec.minority_class].size() < minority_count) {
        throw std::invalid_argument("insufficient samples of class " + std::to_string(spec.minority_class) +
                                    ": need " + std::to_string(minority_count) + ", have " +
                                    std::to_string(by_class[spec.minority_class].size()));
    }
    Rng rng(seed);
    auto pick = [&rng](const std::vector<std::size_t>& pool, std::size_t count) {
        auto order = rng.permutation(pool.size());
        std::vector<std::size_t> out(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = pool[order[i]];
        return out;
    };
    const auto minority_rows = pick(by_class[spec.minority_class], minority_count);
    const auto majority_rows = pick(by_class[spec.majority_class], majority_count);

    LabeledDataset out;
    out.num_classes = 2;
    out.features = Matrix(spec.total, source.dim());
    out.labels.resize(spec.total);
    std::vector<std::size_t> order(spec.total);
    for (std::size_t i = 0; i < spec.total; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t i = 0; i < spec.total; ++i) {
        const std::size_t slot = order[i];
        const bool is_minority = i < minority_count;
        const std::size_t src_row = is_minority ? minority_rows[i] : majority_rows[i - minority_count];
        const auto src = source.features.row(src_row);
        std::copy(src.begin(), src.end(), out.features.row(slot).begin());
        out.labels[slot] = is_minority ? 0 : 1;
    }
    out.recount();
    return out;
}

// Exponential long-tail truncation: class c (0-based) keeps
// round(n_c * mu^c) samples, floored at 1. Either mu is given directly or it
// is solved from a target imbalance factor F as mu = F^(-1/(C-1)).
struct LongTailSpec {
    double mu = 0.0;                // in (0,1); used when > 0
    double imbalance_factor = 0.0;  // > 1; used when mu == 0
};

inline double long_tail_mu(const LongTailSpec& spec, std::size_t num_classes) {
    if (spec.mu > 0.0) {
        if (spec.mu >= 1.0 && spec.mu != 1.0) throw std::invalid_argument("induce_long_tail: mu must be in (0,1]");
        return spec.mu;
    }
    if (!(spec.imbalance_factor > 1.0)) {
        throw std::invalid_argument("induce_long_tail: need mu in (0,1] or imbalance_factor > 1");
    }
    if (num_classes < 2) throw std::invalid_argument("induce_long_tail: imbalance factor needs >= 2 classes");
    return std::pow(spec.imbalance_factor, -1.0 / static_cast<double>(num_classes - 1));
}

inline std::size_t long_tail_target(std::size_t available, double mu, std::size_t class_index,
                                    const LongTailSpec& spec, std::size_t num_classes) {
    double factor;
    if (spec.mu == 0.0) {
        // computed straight from F for better conditioning; identical to
        // mu^c in exact arithmetic
        factor = std::pow(spec.imbalance_factor,
                          -static_cast<double>(class_index) / static_cast<double>(num_classes - 1));
    } else {
        factor = std::pow(mu, static_cast<double>(class_index));
    }
    const std::size_t target = detail::round_half_up(static_cast<double>(available) * factor);
    return target < 1 ? 1 : target;
}

inline LabeledDataset induce_long_tail(const LabeledDataset& source, const LongTailSpec& spec,
                                       std::uint64_t seed) {
    const double mu = long_tail_mu(spec, source.num_classes);
    const auto by_class = detail::indices_by_class(source);
    Rng rng(seed);
    std::vector<std::size_t> rows;
    for (std::size_t c = 0; c < source.num_classes; ++c) {
        const std::size_t target = long_tail_target(by_class[c].size(), mu, c, spec, source.num_classes);
        if (by_class[c].size() < target) {
            throw std::invalid_argument("insufficient samples of class " + std::to_string(c) + ": need " +
                                        std::to_string(target) + ", have " +
                                        std::to_string(by_class[c].size()));
        }
        auto order = rng.permutation(by_class[c].size());
        for (std::size_t i = 0; i < target; ++i) rows.push_back(by_class[c][order[i]]);
    }
    rng.shuffle(rows);
    return detail::take_rows(source, rows);
}

// Stratified validation split, either a fixed per-class count or a fraction
// of each class. Train keeps everything not selected; the pieces are
// disjoint and exhaustive.
struct ValSplitSpec {
    enum class Mode { kPerClass, kFraction };
    Mode mode = Mode::kFraction;
    std::size_t per_class = 0;
    double fraction = 0.1;
};

inline std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& source,
                                                                  const ValSplitSpec& spec,
                                                                  std::uint64_t seed) {
    if (spec.mode == ValSplitSpec::Mode::kFraction && (spec.fraction < 0.0 || spec.fraction >= 1.0)) {
        throw std::invalid_argument("split_validation: fraction must be in [0,1)");
    }
    const auto by_class = detail::indices_by_class(source);
    Rng rng(seed);
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> val_rows;
    for (std::size_t c = 0; c < source.num_classes; ++c) {
        const std::size_t have = by_class[c].size();
        const std::size_t want = spec.mode == ValSplitSpec::Mode::kPerClass
                                     ? spec.per_class
                                     : detail::round_half_up(spec.fraction * static_cast<double>(have));
        if (want >= have && !(want == 0 && have == 0)) {
            throw std::invalid_argument("class too small: class " + std::to_string(c) + " has " +
                                        std::to_string(have) + " samples, validation wants " +
                                        std::to_string(want));
        }
        auto order = rng.permutation(have);
        for (std::size_t i = 0; i < have; ++i) {
            (i < want ? val_rows : train_rows).push_back(by_class[c][order[i]]);
        }
    }
    // keep source row order so an empty split returns the input unchanged
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    return {detail::take_rows(source, train_rows), detail::take_rows(source, val_rows)};
}

// Convenience for fixed per-class counts.
inline std::pair<LabeledDataset, LabeledDataset> split_validation(const LabeledDataset& source,
                                                                  std::size_t per_class,
                                                                  std::uint64_t seed) {
    ValSplitSpec spec;
    spec.mode = ValSplitSpec::Mode::kPerClass;
    spec.per_class = per_class;
    return split_validation(source, spec, seed);
}

// Keep only the listed classes and relabel them 0..k-1 in list order.
inline LabeledDataset filter_classes(const LabeledDataset& source, const std::vector<std::size_t>& keep) {
    if (keep.empty()) throw std::invalid_argument("filter_classes: empty class list");
    std::vector<std::size_t> remap(source.num_classes, source.num_classes);
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] >= source.num_classes) {
            throw std::invalid_argument("filter_classes: class out of range: " + std::to_string(keep[i]));
        }
        remap[keep[i]] = i;
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (remap[source.labels[i]] < source.num_classes) rows.push_back(i);
    }
    LabeledDataset out = detail::take_rows(source, rows);
    for (auto& label : out.labels) label = remap[label];
    out.num_classes = keep.size();
    out.recount();
    return out;
}

// CSV with a header row, features first and the label column last.
inline void write_dataset_csv(const LabeledDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t d = 0; d < ds.dim(); ++d) out << "f" << d << ",";
    out << "label\n";
    char buf[32];
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto row = ds.features.row(i);
        for (double v : row) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << buf << ",";
        }
        out << ds.labels[i] << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace cdb
