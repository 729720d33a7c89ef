#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdb/dataset.hpp"
#include "cdb/losses.hpp"
#include "cdb/mlp.hpp"

namespace cdb {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataConfig {
    enum class Source { kSynthetic, kMnistIdx };
    enum class Inducer { kNone, kMajorityRatio, kLongTail };

    Source source = Source::kSynthetic;
    std::size_t synthetic_classes = 2;
    std::size_t synthetic_per_class = 1000;
    std::size_t synthetic_dim = 2;
    double synthetic_separation = 2.0;
    std::string mnist_train_images;
    std::string mnist_train_labels;
    std::string mnist_test_images;
    std::string mnist_test_labels;
    Inducer inducer = Inducer::kNone;
    MajoritySpec majority;
    LongTailSpec long_tail;
    std::size_t test_per_class = 800;
};

struct ExperimentConfig {
    DataConfig data;
    ValSplitSpec val;
    std::vector<std::size_t> hidden_dims = {256};
    SgdConfig optimizer;
    LossSpec loss;
    std::size_t epochs = 300;
    std::size_t batch_size = 100;
    std::vector<std::uint64_t> seeds = {1};
    std::string output_dir;

    std::set<std::string> set_keys;  // keys explicitly present in the file / overrides
};

namespace detail {

inline double parse_real(const std::string& value, const std::string& context) {
    const char* begin = value.data();
    const char* end = begin + value.size();
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError(context + ": expected real");
    return out;
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& context) {
    const char* begin = value.data();
    const char* end = begin + value.size();
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) throw ConfigError(context + ": expected integer");
    return out;
}

inline std::vector<std::string> split_csv(const std::string& value) {
    std::vector<std::string> parts;
    std::string current;
    for (char ch : value) {
        if (ch == ',') {
            parts.push_back(current);
            current.clear();
        } else {
            current.push_back(ch);
        }
    }
    parts.push_back(current);
    return parts;
}

inline std::string trim(const std::string& s) {
    std::size_t begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    std::size_t end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

// One row per config key; both the file parser and sweep overrides go
// through this table, so a key behaves identically from either entry point.
struct KeyHandler {
    const char* key;
    std::function<void(ExperimentConfig&, const std::string& value, const std::string& context)> apply;
};

inline const std::vector<KeyHandler>& key_table() {
    static const std::vector<KeyHandler> table = {
        {"data.source",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v == "synthetic") c.data.source = DataConfig::Source::kSynthetic;
             else if (v == "mnist_idx") c.data.source = DataConfig::Source::kMnistIdx;
             else throw ConfigError(ctx + ": expected 'synthetic' or 'mnist_idx'");
         }},
        {"data.synthetic.classes",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.synthetic_classes = parse_u64(v, ctx);
         }},
        {"data.synthetic.per_class",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.synthetic_per_class = parse_u64(v, ctx);
         }},
        {"data.synthetic.dim",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.synthetic_dim = parse_u64(v, ctx);
         }},
        {"data.synthetic.separation",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.synthetic_separation = parse_real(v, ctx);
         }},
        {"data.mnist.train_images",
         [](ExperimentConfig& c, const std::string& v, const std::string&) { c.data.mnist_train_images = v; }},
        {"data.mnist.train_labels",
         [](ExperimentConfig& c, const std::string& v, const std::string&) { c.data.mnist_train_labels = v; }},
        {"data.mnist.test_images",
         [](ExperimentConfig& c, const std::string& v, const std::string&) { c.data.mnist_test_images = v; }},
        {"data.mnist.test_labels",
         [](ExperimentConfig& c, const std::string& v, const std::string&) { c.data.mnist_test_labels = v; }},
        {"data.inducer",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v == "none") c.data.inducer = DataConfig::Inducer::kNone;
             else if (v == "majority_ratio") c.data.inducer = DataConfig::Inducer::kMajorityRatio;
             else if (v == "long_tail") c.data.inducer = DataConfig::Inducer::kLongTail;
             else throw ConfigError(ctx + ": expected 'none', 'majority_ratio' or 'long_tail'");
         }},
        {"data.majority.total",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.majority.total = parse_u64(v, ctx);
         }},
        {"data.majority.ratio",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.majority.ratio = parse_real(v, ctx);
         }},
        {"data.majority.majority_class",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.majority.majority_class = parse_u64(v, ctx);
         }},
        {"data.majority.minority_class",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.majority.minority_class = parse_u64(v, ctx);
         }},
        {"data.long_tail.mu",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.long_tail.mu = parse_real(v, ctx);
         }},
        {"data.long_tail.imbalance_factor",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.long_tail.imbalance_factor = parse_real(v, ctx);
         }},
        {"data.test_per_class",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.data.test_per_class = parse_u64(v, ctx);
         }},
        {"val.per_class",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.val.mode = ValSplitSpec::Mode::kPerClass;
             c.val.per_class = parse_u64(v, ctx);
         }},
        {"val.fraction",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.val.mode = ValSplitSpec::Mode::kFraction;
             c.val.fraction = parse_real(v, ctx);
         }},
        {"model.hidden_dims",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.hidden_dims.clear();
             if (trim(v).empty()) return;  // no hidden layers: a linear model
             for (const auto& part : split_csv(v)) c.hidden_dims.push_back(parse_u64(trim(part), ctx));
         }},
        {"optimizer.lr",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.optimizer.lr = parse_real(v, ctx);
         }},
        {"optimizer.momentum",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.optimizer.momentum = parse_real(v, ctx);
         }},
        {"optimizer.weight_decay",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.optimizer.weight_decay = parse_real(v, ctx);
         }},
        {"optimizer.lr_decay_factor",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.optimizer.lr_decay_factor = parse_real(v, ctx);
         }},
        {"optimizer.lr_decay_epochs",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.optimizer.lr_decay_epochs.clear();
             if (trim(v).empty()) return;
             for (const auto& part : split_csv(v)) {
                 c.optimizer.lr_decay_epochs.push_back(parse_u64(trim(part), ctx));
             }
         }},
        {"loss.kind",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v == "ce") c.loss.kind = LossKind::kCe;
             else if (v == "cdb_ce") c.loss.kind = LossKind::kCdbCe;
             else if (v == "ifw_ce") c.loss.kind = LossKind::kIfwCe;
             else if (v == "focal") c.loss.kind = LossKind::kFocal;
             else if (v == "class_balanced") c.loss.kind = LossKind::kClassBalanced;
             else throw ConfigError(ctx + ": expected one of ce, cdb_ce, ifw_ce, focal, class_balanced");
         }},
        {"loss.tau_mode",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v == "fixed") c.loss.tau_mode = TauMode::kFixed;
             else if (v == "dynamic") c.loss.tau_mode = TauMode::kDynamic;
             else throw ConfigError(ctx + ": expected 'fixed' or 'dynamic'");
         }},
        {"loss.tau",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.loss.tau = parse_real(v, ctx);
             if (c.loss.tau < 0.0) throw ConfigError(ctx + ": tau must be >= 0");
         }},
        {"loss.focal_gamma",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.loss.focal_gamma = parse_real(v, ctx);
             if (c.loss.focal_gamma < 0.0) throw ConfigError(ctx + ": focal_gamma must be >= 0");
         }},
        {"loss.cb_beta",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.loss.cb_beta = parse_real(v, ctx);
         }},
        {"epochs",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.epochs = parse_u64(v, ctx);
         }},
        {"batch_size",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.batch_size = parse_u64(v, ctx);
         }},
        {"seeds",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.seeds.clear();
             for (const auto& part : split_csv(v)) c.seeds.push_back(parse_u64(trim(part), ctx));
         }},
        {"output_dir",
         [](ExperimentConfig& c, const std::string& v, const std::string&) { c.output_dir = v; }},
    };
    return table;
}

}  // namespace detail

// Apply one key=value pair; used by the file parser and by sweep/CLI
// overrides. context prefixes error messages (e.g. "line 7").
inline void apply_config_key(ExperimentConfig& config, const std::string& key, const std::string& value,
                             const std::string& context) {
    for (const auto& handler : detail::key_table()) {
        if (key == handler.key) {
            handler.apply(config, value, context + " (key '" + key + "')");
            config.set_keys.insert(key);
            return;
        }
    }
    throw ConfigError(context + ": unknown key '" + key + "'");
}

// Cross-field checks that need the whole config.
inline void validate_config(const ExperimentConfig& config) {
    if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (config.seeds.empty()) throw ConfigError("seeds must be non-empty");
    config.optimizer.validate();
    if (config.set_keys.count("val.per_class") && config.set_keys.count("val.fraction")) {
        throw ConfigError("val.per_class and val.fraction are mutually exclusive");
    }
    if (config.data.source == DataConfig::Source::kMnistIdx) {
        for (const char* key : {"data.mnist.train_images", "data.mnist.train_labels",
                                "data.mnist.test_images", "data.mnist.test_labels"}) {
            if (!config.set_keys.count(key)) throw ConfigError(std::string("missing required key '") + key + "'");
        }
    }
    if (config.data.inducer == DataConfig::Inducer::kLongTail) {
        const bool has_mu = config.data.long_tail.mu > 0.0;
        const bool has_factor = config.data.long_tail.imbalance_factor > 0.0;
        if (has_mu == has_factor) {
            throw ConfigError("long_tail inducer needs exactly one of data.long_tail.mu, "
                              "data.long_tail.imbalance_factor");
        }
    }
    if (config.data.inducer == DataConfig::Inducer::kMajorityRatio) {
        if (!(config.data.majority.ratio > 0.0 && config.data.majority.ratio < 1.0)) {
            throw ConfigError("data.majority.ratio must be in (0,1)");
        }
    }
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig config;
    const char* env = std::getenv("CDB_OUTPUT_DIR");
    config.output_dir = env ? env : "cdb_out";

    std::istringstream in(text);
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string context = "line " + std::to_string(line_number);
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(context + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(context + ": empty key");
        if (config.set_keys.count(key)) throw ConfigError(context + ": duplicate key '" + key + "'");
        apply_config_key(config, key, value, context);
    }
    validate_config(config);
    return config;
}

inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

namespace detail {

inline void dump_kv(std::string& out, const std::string& key, const std::string& value) {
    out += key;
    out += '=';
    out += value;
    out += '\n';
}

inline std::string fmt_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

template <class T>
std::string fmt_list(const std::vector<T>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

}  // namespace detail

// Canonical flat dump of every field (defaults included) in fixed order;
// the config hash is FNV-1a 64 over this string.
inline std::string canonical_config_dump(const ExperimentConfig& c) {
    using detail::dump_kv;
    using detail::fmt_list;
    using detail::fmt_real;
    std::string out;
    dump_kv(out, "data.source", c.data.source == DataConfig::Source::kSynthetic ? "synthetic" : "mnist_idx");
    dump_kv(out, "data.synthetic.classes", std::to_string(c.data.synthetic_classes));
    dump_kv(out, "data.synthetic.per_class", std::to_string(c.data.synthetic_per_class));
    dump_kv(out, "data.synthetic.dim", std::to_string(c.data.synthetic_dim));
    dump_kv(out, "data.synthetic.separation", fmt_real(c.data.synthetic_separation));
    dump_kv(out, "data.mnist.train_images", c.data.mnist_train_images);
    dump_kv(out, "data.mnist.train_labels", c.data.mnist_train_labels);
    dump_kv(out, "data.mnist.test_images", c.data.mnist_test_images);
    dump_kv(out, "data.mnist.test_labels", c.data.mnist_test_labels);
    switch (c.data.inducer) {
        case DataConfig::Inducer::kNone: dump_kv(out, "data.inducer", "none"); break;
        case DataConfig::Inducer::kMajorityRatio: dump_kv(out, "data.inducer", "majority_ratio"); break;
        case DataConfig::Inducer::kLongTail: dump_kv(out, "data.inducer", "long_tail"); break;
    }
    dump_kv(out, "data.majority.total", std::to_string(c.data.majority.total));
    dump_kv(out, "data.majority.ratio", fmt_real(c.data.majority.ratio));
    dump_kv(out, "data.majority.majority_class", std::to_string(c.data.majority.majority_class));
    dump_kv(out, "data.majority.minority_class", std::to_string(c.data.majority.minority_class));
    dump_kv(out, "data.long_tail.mu", fmt_real(c.data.long_tail.mu));
    dump_kv(out, "data.long_tail.imbalance_factor", fmt_real(c.data.long_tail.imbalance_factor));
    dump_kv(out, "data.test_per_class", std::to_string(c.data.test_per_class));
    if (c.val.mode == ValSplitSpec::Mode::kPerClass) {
        dump_kv(out, "val.per_class", std::to_string(c.val.per_class));
    } else {
        dump_kv(out, "val.fraction", fmt_real(c.val.fraction));
    }
    dump_kv(out, "model.hidden_dims", fmt_list(c.hidden_dims));
    dump_kv(out, "optimizer.lr", fmt_real(c.optimizer.lr));
    dump_kv(out, "optimizer.momentum", fmt_real(c.optimizer.momentum));
    dump_kv(out, "optimizer.weight_decay", fmt_real(c.optimizer.weight_decay));
    dump_kv(out, "optimizer.lr_decay_factor", fmt_real(c.optimizer.lr_decay_factor));
    dump_kv(out, "optimizer.lr_decay_epochs", fmt_list(c.optimizer.lr_decay_epochs));
    switch (c.loss.kind) {
        case LossKind::kCe: dump_kv(out, "loss.kind", "ce"); break;
        case LossKind::kCdbCe: dump_kv(out, "loss.kind", "cdb_ce"); break;
        case LossKind::kIfwCe: dump_kv(out, "loss.kind", "ifw_ce"); break;
        case LossKind::kFocal: dump_kv(out, "loss.kind", "focal"); break;
        case LossKind::kClassBalanced: dump_kv(out, "loss.kind", "class_balanced"); break;
    }
    dump_kv(out, "loss.tau_mode", c.loss.tau_mode == TauMode::kFixed ? "fixed" : "dynamic");
    dump_kv(out, "loss.tau", fmt_real(c.loss.tau));
    dump_kv(out, "loss.focal_gamma", fmt_real(c.loss.focal_gamma));
    dump_kv(out, "loss.cb_beta", fmt_real(c.loss.cb_beta));
    dump_kv(out, "epochs", std::to_string(c.epochs));
    dump_kv(out, "batch_size", std::to_string(c.batch_size));
    dump_kv(out, "seeds", fmt_list(c.seeds));
    dump_kv(out, "output_dir", c.output_dir);
    return out;
}

inline std::string config_hash(const ExperimentConfig& config) {
    const std::string dump = canonical_config_dump(config);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace cdb
