#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdb/matrix.hpp"
#include "cdb/rng.hpp"

namespace cdb {

enum class Activation { kRelu };

struct MlpConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t num_classes = 0;
    Activation activation = Activation::kRelu;
    std::uint64_t init_seed = 0;

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("MlpConfig: input_dim must be >= 1");
        if (num_classes < 2) throw std::invalid_argument("MlpConfig: num_classes must be >= 2");
        for (std::size_t h : hidden_dims) {
            if (h < 1) throw std::invalid_argument("MlpConfig: hidden dims must be >= 1");
        }
    }

    // input_dim, hidden..., num_classes
    std::vector<std::size_t> layer_dims() const {
        std::vector<std::size_t> dims;
        dims.push_back(input_dim);
        dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
        dims.push_back(num_classes);
        return dims;
    }
};

struct Layer {
    Matrix weight;             // fan_in x fan_out
    std::vector<double> bias;  // fan_out
};

struct Mlp {
    std::vector<Layer> layers;
    MlpConfig config;
};

// He initialization: weights ~ N(0, sqrt(2/fan_in)) drawn row-major per layer
// from init_seed, biases zero.
inline Mlp init_params(const MlpConfig& config) {
    config.validate();
    Rng rng(config.init_seed);
    const auto dims = config.layer_dims();
    Mlp model;
    model.config = config;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.weight = Matrix(dims[l], dims[l + 1]);
        const double std = std::sqrt(2.0 / static_cast<double>(dims[l]));
        for (double& w : layer.weight.data) w = rng.next_normal(0.0, std);
        layer.bias.assign(dims[l + 1], 0.0);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

// Activations kept from a forward pass; exactly what backward needs.
struct ForwardCache {
    std::vector<Matrix> inputs;           // input to each layer (inputs[0] = batch)
    std::vector<Matrix> pre_activations;  // z per layer; back() holds the logits
    const Matrix& logits() const { return pre_activations.back(); }
};

inline ForwardCache forward(const Mlp& model, const Matrix& batch) {
    if (batch.cols != model.config.input_dim) {
        throw std::invalid_argument("forward: batch width " + std::to_string(batch.cols) +
                                    " != input_dim " + std::to_string(model.config.input_dim));
    }
    ForwardCache cache;
    cache.inputs.push_back(batch);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        Matrix z = matmul(cache.inputs[l], layer.weight);
        for (std::size_t i = 0; i < z.rows; ++i) {
            double* row = z.data.data() + i * z.cols;
            for (std::size_t j = 0; j < z.cols; ++j) row[j] += layer.bias[j];
        }
        cache.pre_activations.push_back(z);
        if (l + 1 < model.layers.size()) {
            // ReLU'(0) := 0, so the mask used in backward is strictly z > 0
            for (double& v : z.data) v = v > 0.0 ? v : 0.0;
            cache.inputs.push_back(std::move(z));
        }
    }
    return cache;
}

struct Gradients {
    std::vector<Layer> layers;  // same shapes as the model parameters
};

// Exact analytic gradients for the cached forward pass. dloss_dlogits carries
// whatever batch scaling the loss chose; nothing is rescaled here.
inline Gradients backward(const Mlp& model, const ForwardCache& cache, const Matrix& dloss_dlogits) {
    const std::size_t num_layers = model.layers.size();
    if (cache.pre_activations.size() != num_layers || cache.inputs.size() != num_layers) {
        throw std::invalid_argument("backward: cache does not match model layer count");
    }
    const Matrix& logits = cache.logits();
    if (dloss_dlogits.rows != logits.rows || dloss_dlogits.cols != logits.cols) {
        throw std::invalid_argument("backward: dloss_dlogits shape " + dloss_dlogits.shape_str() +
                                    " != logits shape " + logits.shape_str());
    }
    Gradients grads;
    grads.layers.resize(num_layers);
    Matrix delta = dloss_dlogits;
    for (std::size_t l = num_layers; l-- > 0;) {
        grads.layers[l].weight = matmul_at(cache.inputs[l], delta);
        grads.layers[l].bias.assign(delta.cols, 0.0);
        for (std::size_t i = 0; i < delta.rows; ++i) {
            const double* row = delta.data.data() + i * delta.cols;
            for (std::size_t j = 0; j < delta.cols; ++j) grads.layers[l].bias[j] += row[j];
        }
        if (l > 0) {
            delta = matmul_bt(delta, model.layers[l].weight);
            const Matrix& z = cache.pre_activations[l - 1];
            for (std::size_t i = 0; i < delta.data.size(); ++i) {
                if (!(z.data[i] > 0.0)) delta.data[i] = 0.0;
            }
        }
    }
    return grads;
}

struct SgdConfig {
    double lr = 0.001;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    double lr_decay_factor = 0.1;
    std::vector<std::size_t> lr_decay_epochs;

    void validate() const {
        if (!(lr > 0.0)) throw std::invalid_argument("SgdConfig: lr must be positive");
        if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("SgdConfig: momentum must be in [0,1)");
        if (weight_decay < 0.0) throw std::invalid_argument("SgdConfig: weight_decay must be >= 0");
        if (!(lr_decay_factor > 0.0) || lr_decay_factor > 1.0) {
            throw std::invalid_argument("SgdConfig: lr_decay_factor must be in (0,1]");
        }
    }
};

struct SgdState {
    std::vector<Layer> velocity;
};

inline double learning_rate_at(const SgdConfig& config, std::size_t epoch) {
    double lr = config.lr;
    for (std::size_t milestone : config.lr_decay_epochs) {
        if (epoch >= milestone) lr *= config.lr_decay_factor;
    }
    return lr;
}

// Classic coupled formulation: v <- m*v + g + wd*p; p <- p - lr(epoch)*v.
inline void sgd_step(Mlp& model, const Gradients& grads, SgdState& state, const SgdConfig& config,
                     std::size_t epoch) {
    if (state.velocity.empty()) {
        state.velocity.resize(model.layers.size());
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            state.velocity[l].weight = Matrix(model.layers[l].weight.rows, model.layers[l].weight.cols);
            state.velocity[l].bias.assign(model.layers[l].bias.size(), 0.0);
        }
    }
    const double lr = learning_rate_at(config, epoch);
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Layer& p = model.layers[l];
        Layer& v = state.velocity[l];
        const Layer& g = grads.layers[l];
        if (g.weight.rows != p.weight.rows || g.weight.cols != p.weight.cols) {
            throw std::invalid_argument("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        }
        for (std::size_t i = 0; i < p.weight.data.size(); ++i) {
            v.weight.data[i] = config.momentum * v.weight.data[i] + g.weight.data[i] +
                               config.weight_decay * p.weight.data[i];
            p.weight.data[i] -= lr * v.weight.data[i];
        }
        for (std::size_t i = 0; i < p.bias.size(); ++i) {
            v.bias[i] = config.momentum * v.bias[i] + g.bias[i] + config.weight_decay * p.bias[i];
            p.bias[i] -= lr * v.bias[i];
        }
    }
}

// --- checkpoint file ---
// Flat little-endian binary: magic "CDBM", version u32 (=1), layer count u32,
// then layer_count+1 dims u32, then per layer the weight matrix row-major and
// the bias vector, all f64.
namespace detail {

inline void write_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_f64(std::ofstream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint32_t read_u32(std::ifstream& in, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error(std::string("checkpoint truncated reading ") + what);
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double read_f64(std::ifstream& in) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("checkpoint truncated reading parameters");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline void save_checkpoint(const Mlp& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out.write("CDBM", 4);
    detail::write_u32(out, 1);
    const auto dims = model.config.layer_dims();
    detail::write_u32(out, static_cast<std::uint32_t>(model.layers.size()));
    for (std::size_t d : dims) detail::write_u32(out, static_cast<std::uint32_t>(d));
    for (const Layer& layer : model.layers) {
        for (double w : layer.weight.data) detail::write_f64(out, w);
        for (double b : layer.bias) detail::write_f64(out, b);
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

// The checkpoint stores dims and parameters only; init_seed is not part of
// the format and comes back as 0.
inline Mlp load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    if (!in.read(magic, 4)) throw std::runtime_error("checkpoint truncated reading magic");
    if (std::memcmp(magic, "CDBM", 4) != 0) throw std::runtime_error("checkpoint bad magic: " + path);
    const std::uint32_t version = detail::read_u32(in, "version");
    if (version != 1) throw std::runtime_error("checkpoint unsupported version " + std::to_string(version));
    const std::uint32_t num_layers = detail::read_u32(in, "layer count");
    std::vector<std::size_t> dims(num_layers + 1);
    for (auto& d : dims) d = detail::read_u32(in, "dims");
    Mlp model;
    model.config.input_dim = dims.front();
    model.config.num_classes = dims.back();
    model.config.hidden_dims.assign(dims.begin() + 1, dims.end() - 1);
    for (std::size_t l = 0; l < num_layers; ++l) {
        Layer layer;
        layer.weight = Matrix(dims[l], dims[l + 1]);
        for (double& w : layer.weight.data) w = detail::read_f64(in);
        layer.bias.resize(dims[l + 1]);
        for (double& b : layer.bias) b = detail::read_f64(in);
        model.layers.push_back(std::move(layer));
    }
    return model;
}

}  // namespace cdb
