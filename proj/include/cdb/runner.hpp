#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cdb/config.hpp"
#include "cdb/dataset.hpp"
#include "cdb/difficulty.hpp"
#include "cdb/idx.hpp"
#include "cdb/losses.hpp"
#include "cdb/metrics.hpp"
#include "cdb/mlp.hpp"

namespace cdb {

// Fixed PRNG stream roles per trial. Everything a trial does draws from the
// trial seed through these jump indices, so adding draws to one stage never
// shifts another.
enum class StreamRole : std::size_t {
    kDataGen = 1,
    kTestSplit = 2,
    kValSplit = 3,
    kInducer = 4,
    kTraining = 5,
};

inline Rng stream_for(std::uint64_t seed, StreamRole role) {
    return Rng(seed).nth_stream(static_cast<std::size_t>(role));
}

struct EpochRow {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double tau = 0.0;
    double bias = 0.0;
    std::vector<double> val_accuracy;
    std::vector<double> weights;          // computed after this epoch, applied in the next
    std::vector<double> applied_weights;  // the vector that scaled this epoch's losses
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::size_t num_classes = 0;
    std::vector<EpochRow> epochs;
    TrialSummary test;
};

struct TrialDatasets {
    LabeledDataset train;
    LabeledDataset val;
    LabeledDataset test;
};

// Materialize the train/val/test triplet for one trial. The split order
// follows the binary-MNIST protocol: validation is carved out of the source
// pool first, the imbalance inducer then draws the training set from what
// remains, and the test set comes from the held-out test pool.
inline TrialDatasets build_trial_datasets(const ExperimentConfig& config, std::uint64_t seed) {
    TrialDatasets out;
    LabeledDataset train_pool;
    LabeledDataset test_pool;
    if (config.data.source == DataConfig::Source::kSynthetic) {
        LabeledDataset pool = make_gaussian_mixture(
            config.data.synthetic_classes, config.data.synthetic_per_class, config.data.synthetic_dim,
            config.data.synthetic_separation, stream_for(seed, StreamRole::kDataGen).next_u64());
        auto [rest, test] = split_validation(pool, config.data.test_per_class,
                                             stream_for(seed, StreamRole::kTestSplit).next_u64());
        train_pool = std::move(rest);
        test_pool = std::move(test);
        out.test = test_pool;
    } else {
        train_pool = read_idx(config.data.mnist_train_images, config.data.mnist_train_labels);
        test_pool = read_idx(config.data.mnist_test_images, config.data.mnist_test_labels);
        if (config.data.inducer == DataConfig::Inducer::kMajorityRatio) {
            const std::vector<std::size_t> keep = {config.data.majority.minority_class,
                                                   config.data.majority.majority_class};
            train_pool = filter_classes(train_pool, keep);
            test_pool = filter_classes(test_pool, keep);
        }
        out.test = split_validation(test_pool, config.data.test_per_class,
                                    stream_for(seed, StreamRole::kTestSplit).next_u64())
                       .second;
    }

    auto [train_rest, val] =
        split_validation(train_pool, config.val, stream_for(seed, StreamRole::kValSplit).next_u64());
    out.val = std::move(val);

    const std::uint64_t inducer_seed = stream_for(seed, StreamRole::kInducer).next_u64();
    switch (config.data.inducer) {
        case DataConfig::Inducer::kNone:
            out.train = std::move(train_rest);
            break;
        case DataConfig::Inducer::kMajorityRatio: {
            MajoritySpec spec = config.data.majority;
            if (config.data.source == DataConfig::Source::kMnistIdx) {
                // pools were already filtered and remapped {0 = minority, 1 = majority}
                spec.minority_class = 0;
                spec.majority_class = 1;
            }
            out.train = induce_majority_ratio(train_rest, spec, inducer_seed);
            break;
        }
        case DataConfig::Inducer::kLongTail:
            out.train = induce_long_tail(train_rest, config.data.long_tail, inducer_seed);
            break;
    }
    return out;
}

namespace detail {

inline BatchLossResult dispatch_loss(const LossSpec& spec, const Matrix& logits,
                                     std::span<const std::size_t> labels,
                                     std::span<const double> class_weights) {
    switch (spec.kind) {
        case LossKind::kCe: return ce_loss(logits, labels);
        case LossKind::kFocal: return focal_loss(logits, labels, spec.focal_gamma);
        case LossKind::kCdbCe:
        case LossKind::kIfwCe:
        case LossKind::kClassBalanced: return cdb_ce_loss(logits, labels, class_weights);
    }
    throw std::logic_error("dispatch_loss: unreachable");
}

inline Matrix gather_rows(const Matrix& features, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), features.cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto src = features.row(rows[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

}  // namespace detail

// One full training run: per epoch a seeded shuffle over mini-batches, then
// a validation pass that refreshes the difficulty state; the weight vector
// applied during epoch e is the one computed after epoch e-1 (all ones for
// the first epoch of difficulty-weighted losses).
inline RunRecord train_one(const ExperimentConfig& config, std::uint64_t seed,
                           const LabeledDataset& train, const LabeledDataset& val,
                           const LabeledDataset& test) {
    const std::size_t num_classes = train.num_classes;
    const std::size_t dim = train.dim();
    if (test.num_classes != num_classes || test.dim() != dim) {
        throw std::invalid_argument("train_one: test set shape does not match train set");
    }
    if (val.size() > 0 && (val.num_classes != num_classes || val.dim() != dim)) {
        throw std::invalid_argument("train_one: validation set shape does not match train set");
    }
    const bool is_cdb = config.loss.kind == LossKind::kCdbCe;
    if (is_cdb && val.size() == 0) throw std::runtime_error("CDB requires validation data");

    Rng base(seed);
    MlpConfig model_config;
    model_config.input_dim = dim;
    model_config.hidden_dims = config.hidden_dims;
    model_config.num_classes = num_classes;
    model_config.init_seed = base.next_u64();
    Mlp model = init_params(model_config);
    SgdState opt_state;
    Rng train_rng = stream_for(seed, StreamRole::kTraining);

    std::vector<double> fixed_weights;
    if (config.loss.kind == LossKind::kIfwCe) {
        fixed_weights = inverse_frequency_weights(train.class_counts);
    } else if (config.loss.kind == LossKind::kClassBalanced) {
        fixed_weights = class_balanced_weights(train.class_counts, config.loss.cb_beta);
    }

    if (is_cdb) {
        for (std::size_t c = 0; c < val.class_counts.size(); ++c) {
            if (val.class_counts[c] == 0) {
                std::cerr << "warning: class " << c
                          << " has no validation samples; its difficulty is pinned at 1 and the "
                             "bias denominator saturates\n";
            }
        }
    }

    std::vector<double> applied = fixed_weights.empty() ? std::vector<double>(num_classes, 1.0)
                                                        : fixed_weights;
    RunRecord record;
    record.seed = seed;
    record.config_hash = config_hash(config);
    record.num_classes = num_classes;

    const std::size_t n = train.size();
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = train_rng.permutation(n);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + config.batch_size);
            const std::span<const std::size_t> batch_rows(order.data() + start, stop - start);
            Matrix batch = detail::gather_rows(train.features, batch_rows);
            std::vector<std::size_t> batch_labels(batch_rows.size());
            for (std::size_t i = 0; i < batch_rows.size(); ++i) batch_labels[i] = train.labels[batch_rows[i]];
            ForwardCache cache = forward(model, batch);
            BatchLossResult loss = detail::dispatch_loss(config.loss, cache.logits(), batch_labels, applied);
            for (double l : loss.per_sample_loss) loss_sum += l;
            Gradients grads = backward(model, cache, loss.dloss_dlogits);
            sgd_step(model, grads, opt_state, config.optimizer, epoch);
        }

        ClassValStats stats;
        if (val.size() > 0) {
            const ForwardCache val_cache = forward(model, val.features);
            const auto preds = predictions_from_logits(val_cache.logits());
            stats = class_accuracies(preds, val.labels, num_classes);
        } else {
            stats.total.assign(num_classes, 0);
            stats.correct.assign(num_classes, 0);
            stats.accuracy.assign(num_classes, 0.0);
        }
        const DifficultyState state = update_difficulty(stats, config.loss, epoch);

        EpochRow row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(n);
        row.tau = state.tau;
        row.bias = state.bias;
        row.val_accuracy = stats.accuracy;
        row.applied_weights = applied;
        if (is_cdb) {
            applied = state.weights;
            row.weights = state.weights;
        } else {
            row.weights = applied;
        }
        record.epochs.push_back(std::move(row));
    }

    const ForwardCache test_cache = forward(model, test.features);
    record.test = evaluate(test_cache.logits(), test.labels, num_classes);
    return record;
}

// --- artifact writers ---

namespace detail {

inline std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Header: epoch,train_loss,tau,bias,acc_c0..acc_c{C-1},w_c0..w_c{C-1}.
// Floats carry 17 significant digits and round-trip exactly.
inline void write_trace_csv(const RunRecord& record, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "epoch,train_loss,tau,bias";
    for (std::size_t c = 0; c < record.num_classes; ++c) out << ",acc_c" << c;
    for (std::size_t c = 0; c < record.num_classes; ++c) out << ",w_c" << c;
    out << "\n";
    for (const EpochRow& row : record.epochs) {
        out << row.epoch << "," << detail::fmt17(row.train_loss) << "," << detail::fmt17(row.tau) << ","
            << detail::fmt17(row.bias);
        for (double a : row.val_accuracy) out << "," << detail::fmt17(a);
        for (double w : row.weights) out << "," << detail::fmt17(w);
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline nlohmann::ordered_json summary_to_json(const TrialSummary& s) {
    nlohmann::ordered_json j;
    j["top1"] = s.top1;
    j["error_rate"] = s.error_rate;
    nlohmann::ordered_json topk;
    for (const auto& [k, v] : s.topk) topk[std::to_string(k)] = v;
    j["topk"] = topk;
    j["macro_recall"] = s.macro_recall;
    j["macro_precision"] = s.macro_precision;
    j["per_class_accuracy"] = s.per_class_accuracy;
    return j;
}

inline TrialSummary summary_from_json(const nlohmann::json& j) {
    TrialSummary s;
    s.top1 = j.at("top1").get<double>();
    s.error_rate = j.at("error_rate").get<double>();
    for (const auto& [k, v] : j.at("topk").items()) s.topk[std::stoul(k)] = v.get<double>();
    s.macro_recall = j.at("macro_recall").get<double>();
    s.macro_precision = j.at("macro_precision").get<double>();
    s.per_class_accuracy = j.at("per_class_accuracy").get<std::vector<double>>();
    return s;
}

struct ExperimentResult {
    std::vector<RunRecord> records;  // in seed order
    std::map<std::string, MetricAggregate> aggregate;
    std::vector<std::string> trace_paths;
    std::string summary_path;
};

struct RunOptions {
    std::size_t threads = 1;
};

// One train_one per seed; trials run on a small worker pool and their
// outputs depend only on (config, seed), so results and files are identical
// whatever the thread count. A failed trial fails the whole experiment.
inline ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {}) {
    validate_config(config);
    namespace fs = std::filesystem;
    fs::create_directories(config.output_dir);

    const std::size_t num_trials = config.seeds.size();
    ExperimentResult result;
    result.records.resize(num_trials);
    result.trace_paths.resize(num_trials);
    std::vector<std::exception_ptr> failures(num_trials);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= num_trials) return;
            const std::uint64_t seed = config.seeds[i];
            try {
                TrialDatasets data = build_trial_datasets(config, seed);
                RunRecord record = train_one(config, seed, data.train, data.val, data.test);
                const std::string path =
                    (fs::path(config.output_dir) / ("trace_seed" + std::to_string(seed) + ".csv")).string();
                write_trace_csv(record, path);  // flush per trial
                result.trace_paths[i] = path;
                result.records[i] = std::move(record);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };

    const std::size_t pool = std::max<std::size_t>(1, std::min(options.threads, num_trials));
    if (pool == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < pool; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (std::size_t i = 0; i < num_trials; ++i) {
        if (failures[i]) {
            try {
                std::rethrow_exception(failures[i]);
            } catch (const std::exception& e) {
                throw std::runtime_error("trial with seed " + std::to_string(config.seeds[i]) +
                                         " failed: " + e.what());
            }
        }
    }

    std::vector<TrialSummary> summaries;
    for (const auto& record : result.records) summaries.push_back(record.test);
    result.aggregate = aggregate_trials(summaries);

    nlohmann::ordered_json j;
    j["config_hash"] = config_hash(config);
    j["canonical_config"] = canonical_config_dump(config);
    j["seeds"] = config.seeds;
    j["num_classes"] = result.records.front().num_classes;
    nlohmann::ordered_json trials = nlohmann::ordered_json::array();
    for (const auto& record : result.records) {
        nlohmann::ordered_json t;
        t["seed"] = record.seed;
        t["summary"] = summary_to_json(record.test);
        trials.push_back(t);
    }
    j["trials"] = trials;
    nlohmann::ordered_json agg;
    for (const auto& [name, value] : result.aggregate) {
        agg[name] = {{"mean", value.mean}, {"stddev", value.stddev}};
    }
    j["aggregate"] = agg;

    result.summary_path = (fs::path(config.output_dir) / "summary.json").string();
    std::ofstream out(result.summary_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + result.summary_path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + result.summary_path);
    return result;
}

// --- sweep ---

struct SweepParam {
    std::string key;
    std::vector<std::string> values;
};

struct SweepCell {
    std::string row_value;
    std::string col_value;  // empty for 1-D sweeps
    std::map<std::string, MetricAggregate> aggregate;
};

struct SweepResult {
    std::vector<SweepCell> cells;
    std::string report_path;
};

namespace detail {

inline std::string sanitize_for_path(const std::string& s) {
    std::string out;
    for (char ch : s) out.push_back((std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-') ? ch : '_');
    return out;
}

inline std::string fmt_percent_cell(const MetricAggregate& agg) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f±%.2f", agg.mean * 100.0, agg.stddev * 100.0);
    return buf;
}

}  // namespace detail

// Cartesian sweep over one or two config keys. The report CSV puts the first
// parameter on rows and the second (if any) on columns; display cells are
// "mean±std" of the test error in percent, with raw mean/std columns
// alongside for machines.
inline SweepResult run_sweep(const ExperimentConfig& base, const std::vector<SweepParam>& params,
                             const RunOptions& options = {}) {
    if (params.empty() || params.size() > 2) {
        throw ConfigError("sweep needs one or two --param/--values pairs");
    }
    for (const auto& p : params) {
        if (p.values.empty()) throw ConfigError("sweep parameter '" + p.key + "' has no values");
    }
    namespace fs = std::filesystem;
    SweepResult result;
    const SweepParam& rows = params[0];
    const std::vector<std::string> cols =
        params.size() == 2 ? params[1].values : std::vector<std::string>{""};

    for (const auto& row_value : rows.values) {
        for (const auto& col_value : cols) {
            ExperimentConfig config = base;
            apply_config_key(config, rows.key, row_value, "sweep override");
            std::string subdir = detail::sanitize_for_path(rows.key) + "=" + detail::sanitize_for_path(row_value);
            if (params.size() == 2) {
                apply_config_key(config, params[1].key, col_value, "sweep override");
                subdir += "__" + detail::sanitize_for_path(params[1].key) + "=" +
                          detail::sanitize_for_path(col_value);
            }
            config.output_dir = (fs::path(base.output_dir) / subdir).string();
            validate_config(config);
            ExperimentResult run = run_experiment(config, options);
            result.cells.push_back({row_value, col_value, std::move(run.aggregate)});
        }
    }

    fs::create_directories(base.output_dir);
    result.report_path = (fs::path(base.output_dir) / "report.csv").string();
    std::ofstream out(result.report_path);
    if (!out) throw std::runtime_error("cannot open for writing: " + result.report_path);
    auto cell_at = [&](const std::string& r, const std::string& c) -> const SweepCell& {
        for (const auto& cell : result.cells) {
            if (cell.row_value == r && cell.col_value == c) return cell;
        }
        throw std::logic_error("run_sweep: missing cell");
    };
    out << rows.key;
    for (const auto& c : cols) {
        const std::string label = params.size() == 2 ? params[1].key + "=" + c : std::string("error_rate");
        out << "," << label << "," << label << "_mean," << label << "_std";
    }
    out << "\n";
    for (const auto& r : rows.values) {
        out << r;
        for (const auto& c : cols) {
            const auto& agg = cell_at(r, c).aggregate.at("error_rate");
            out << "," << detail::fmt_percent_cell(agg) << "," << detail::fmt17(agg.mean) << ","
                << detail::fmt17(agg.stddev);
        }
        out << "\n";
    }
    if (!out) throw std::runtime_error("write failed: " + result.report_path);
    return result;
}

// --- report: re-aggregate stored summaries ---

struct ReportEntry {
    std::string path;
    std::size_t num_trials = 0;
    std::map<std::string, MetricAggregate> aggregate;  // recomputed from per-trial summaries
    bool stored_matches = true;
};

// Walk dir for summary.json files and recompute every aggregate from the
// per-trial summaries they store; flags any file whose stored aggregate no
// longer matches.
inline std::vector<ReportEntry> reaggregate_directory(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir)) throw std::runtime_error("no such directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().filename() == "summary.json") {
            files.push_back(entry.path().string());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<ReportEntry> entries;
    for (const auto& file : files) {
        std::ifstream in(file);
        nlohmann::json j;
        in >> j;
        ReportEntry entry;
        entry.path = file;
        std::vector<TrialSummary> summaries;
        for (const auto& t : j.at("trials")) summaries.push_back(summary_from_json(t.at("summary")));
        entry.num_trials = summaries.size();
        entry.aggregate = aggregate_trials(summaries);
        for (const auto& [name, agg] : entry.aggregate) {
            if (!j.at("aggregate").contains(name)) {
                entry.stored_matches = false;
                continue;
            }
            const auto& stored = j.at("aggregate").at(name);
            if (std::abs(stored.at("mean").get<double>() - agg.mean) > 1e-12 ||
                std::abs(stored.at("stddev").get<double>() - agg.stddev) > 1e-12) {
                entry.stored_matches = false;
            }
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

}  // namespace cdb
