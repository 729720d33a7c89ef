#include <cmath>
#include <cstdio>
#include <filesystem>

#include <catch2/catch_amalgamated.hpp>

#include "cdb/losses.hpp"
#include "cdb/mlp.hpp"
#include "testutil.hpp"

using Catch::Matchers::WithinAbs;
using cdb::Matrix;

namespace {

cdb::MlpConfig small_config(std::size_t in, std::vector<std::size_t> hidden, std::size_t classes,
                            std::uint64_t seed) {
    cdb::MlpConfig config;
    config.input_dim = in;
    config.hidden_dims = std::move(hidden);
    config.num_classes = classes;
    config.init_seed = seed;
    return config;
}

}  // namespace

TEST_CASE("linear model computes Wx + b") {
    cdb::Mlp model;
    model.config = small_config(3, {}, 2, 0);
    cdb::Layer layer;
    layer.weight = Matrix(3, 2);
    layer.weight.data = {1, 0, 0, 1, 2, -1};
    layer.bias = {0.5, -0.5};
    model.layers.push_back(layer);

    Matrix x(1, 3);
    x.data = {1, 2, 3};
    const auto cache = cdb::forward(model, x);
    REQUIRE(cache.logits()(0, 0) == 1 * 1 + 2 * 0 + 3 * 2 + 0.5);
    REQUIRE(cache.logits()(0, 1) == 1 * 0 + 2 * 1 + 3 * -1 - 0.5);
}

TEST_CASE("empty batch forwards to 0 x C logits") {
    const cdb::Mlp model = cdb::init_params(small_config(4, {3}, 2, 1));
    const auto cache = cdb::forward(model, Matrix(0, 4));
    REQUIRE(cache.logits().rows == 0);
    REQUIRE(cache.logits().cols == 2);
}

TEST_CASE("forward rejects width mismatch") {
    const cdb::Mlp model = cdb::init_params(small_config(4, {3}, 2, 1));
    REQUIRE_THROWS_AS(cdb::forward(model, Matrix(2, 5)), std::invalid_argument);
}

TEST_CASE("golden logits for a fixed 2-8-3 net") {
    // recorded once from this implementation (seed 7, input below) and frozen
    const cdb::Mlp model = cdb::init_params(small_config(2, {8}, 3, 7));
    Matrix x(2, 2);
    x.data = {0.5, -1.25, 2.0, 0.75};
    const auto cache = cdb::forward(model, x);
    const std::vector<double> expected = {
        -0.82347802093884293, 2.9034493308402141, 0.12929825785401775,
        -1.503767812063779,   2.3927402264882298, 1.9651970736997868,
    };
    REQUIRE(cache.logits().data.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        REQUIRE_THAT(cache.logits().data[i], WithinAbs(expected[i], 1e-15));
    }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    const cdb::Mlp model = cdb::init_params(small_config(3, {4}, 2, 2));
    Matrix x(2, 3);
    x.data = {1, 2, 3, -1, 0.5, 2};
    const auto cache = cdb::forward(model, x);
    const auto grads = cdb::backward(model, cache, Matrix(2, 2));
    for (const auto& layer : grads.layers) {
        for (double g : layer.weight.data) REQUIRE(g == 0.0);
        for (double g : layer.bias) REQUIRE(g == 0.0);
    }
}

TEST_CASE("linear single-sample gradient is x^T d") {
    cdb::Mlp model;
    model.config = small_config(3, {}, 2, 0);
    cdb::Layer layer;
    layer.weight = Matrix(3, 2);
    layer.weight.data = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    layer.bias = {0, 0};
    model.layers.push_back(layer);

    Matrix x(1, 3);
    x.data = {2, -1, 0.5};
    const auto cache = cdb::forward(model, x);
    Matrix d(1, 2);
    d.data = {0.7, -0.3};
    const auto grads = cdb::backward(model, cache, d);
    const Matrix expected = cdb::matmul_at(x, d);
    REQUIRE(grads.layers[0].weight.data == expected.data);
    REQUIRE(grads.layers[0].bias == std::vector<double>{0.7, -0.3});
}

TEST_CASE("backward matches central finite differences on a 2-4-3 net") {
    const cdb::MlpConfig config = small_config(2, {4}, 3, 11);
    const cdb::Mlp model = cdb::init_params(config);
    cdb::Rng rng(99);
    const Matrix batch = testutil::random_matrix(rng, 5, 2, -2.0, 2.0);
    std::vector<std::size_t> labels(5);
    for (auto& l : labels) l = rng.next_u64() % 3;

    const auto cache = cdb::forward(model, batch);
    const auto loss = cdb::ce_loss(cache.logits(), labels);
    const auto grads = cdb::backward(model, cache, loss.dloss_dlogits);

    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto loss_at_weight = [&](const Matrix& w) {
            cdb::Mlp probe = model;
            probe.layers[l].weight = w;
            const auto c = cdb::forward(probe, batch);
            return cdb::ce_loss(c.logits(), labels).mean_loss;
        };
        const double err =
            testutil::max_fd_error(model.layers[l].weight, loss_at_weight, grads.layers[l].weight);
        REQUIRE(err < 1e-5);

        // bias gradients through the same probe
        cdb::Matrix bias_as_matrix(1, model.layers[l].bias.size());
        bias_as_matrix.data = model.layers[l].bias;
        cdb::Matrix bias_grad(1, grads.layers[l].bias.size());
        bias_grad.data = grads.layers[l].bias;
        auto loss_at_bias = [&](const Matrix& b) {
            cdb::Mlp probe = model;
            probe.layers[l].bias = b.data;
            const auto c = cdb::forward(probe, batch);
            return cdb::ce_loss(c.logits(), labels).mean_loss;
        };
        REQUIRE(testutil::max_fd_error(bias_as_matrix, loss_at_bias, bias_grad) < 1e-5);
    }
}

TEST_CASE("backward rejects mismatched cache or gradient shapes") {
    const cdb::Mlp model = cdb::init_params(small_config(3, {4}, 2, 2));
    Matrix x(2, 3);
    const auto cache = cdb::forward(model, x);
    REQUIRE_THROWS_AS(cdb::backward(model, cache, Matrix(2, 3)), std::invalid_argument);
    const cdb::Mlp other = cdb::init_params(small_config(3, {4, 4}, 2, 2));
    REQUIRE_THROWS_AS(cdb::backward(other, cache, Matrix(2, 2)), std::invalid_argument);
}

TEST_CASE("vanilla SGD is param minus lr grad") {
    cdb::Mlp model = cdb::init_params(small_config(2, {}, 2, 3));
    const std::vector<double> before = model.layers[0].weight.data;
    cdb::Gradients grads;
    grads.layers.resize(1);
    grads.layers[0].weight = Matrix(2, 2);
    grads.layers[0].weight.data = {1, 2, 3, 4};
    grads.layers[0].bias = {0.5, -0.5};
    cdb::SgdConfig config;
    config.lr = 0.1;
    config.momentum = 0.0;
    config.weight_decay = 0.0;
    cdb::SgdState state;
    cdb::sgd_step(model, grads, state, config, 0);
    for (std::size_t i = 0; i < before.size(); ++i) {
        REQUIRE(model.layers[0].weight.data[i] == before[i] - 0.1 * grads.layers[0].weight.data[i]);
    }
    REQUIRE(model.layers[0].bias[0] == -0.1 * 0.5);
}

TEST_CASE("zero gradient with zero velocity leaves parameters unchanged") {
    cdb::Mlp model = cdb::init_params(small_config(2, {3}, 2, 4));
    const cdb::Mlp before = model;
    cdb::Gradients grads;
    grads.layers.resize(2);
    for (std::size_t l = 0; l < 2; ++l) {
        grads.layers[l].weight = Matrix(model.layers[l].weight.rows, model.layers[l].weight.cols);
        grads.layers[l].bias.assign(model.layers[l].bias.size(), 0.0);
    }
    cdb::SgdConfig config;
    config.momentum = 0.9;
    config.weight_decay = 0.0;
    cdb::SgdState state;
    cdb::sgd_step(model, grads, state, config, 0);
    for (std::size_t l = 0; l < 2; ++l) {
        REQUIRE(model.layers[l].weight.data == before.layers[l].weight.data);
        REQUIRE(model.layers[l].bias == before.layers[l].bias);
    }
}

TEST_CASE("learning rate schedule") {
    cdb::SgdConfig config;
    config.lr = 0.1;
    config.lr_decay_factor = 0.1;
    config.lr_decay_epochs = {3};
    REQUIRE(cdb::learning_rate_at(config, 2) == 0.1);
    REQUIRE_THAT(cdb::learning_rate_at(config, 3), WithinAbs(0.01, 1e-15));
    config.lr_decay_epochs = {3, 5};
    REQUIRE_THAT(cdb::learning_rate_at(config, 7), WithinAbs(0.001, 1e-15));
}

TEST_CASE("init is deterministic with zero biases and the stated scale") {
    const auto a = cdb::init_params(small_config(50, {20}, 3, 1234));
    const auto b = cdb::init_params(small_config(50, {20}, 3, 1234));
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        REQUIRE(a.layers[l].weight.data == b.layers[l].weight.data);
        for (double bias : a.layers[l].bias) REQUIRE(bias == 0.0);
    }

    const auto big = cdb::init_params(small_config(1000, {1000}, 2, 5));
    const auto& w = big.layers[0].weight.data;
    double sum = 0.0;
    for (double v : w) sum += v;
    const double mean = sum / static_cast<double>(w.size());
    double ss = 0.0;
    for (double v : w) ss += (v - mean) * (v - mean);
    const double std = std::sqrt(ss / static_cast<double>(w.size()));
    const double target = std::sqrt(2.0 / 1000.0);
    REQUIRE(std > target * 0.95);
    REQUIRE(std < target * 1.05);
}

TEST_CASE("training is bitwise deterministic and reduces loss on separable data") {
    // two linearly separable blobs
    const std::size_t n = 40;
    Matrix x(n, 2);
    std::vector<std::size_t> labels(n);
    cdb::Rng rng(8);
    for (std::size_t i = 0; i < n; ++i) {
        const bool pos = i % 2 == 0;
        x(i, 0) = (pos ? 3.0 : -3.0) + rng.next_normal(0.0, 0.5);
        x(i, 1) = (pos ? 3.0 : -3.0) + rng.next_normal(0.0, 0.5);
        labels[i] = pos ? 1 : 0;
    }

    auto train = [&](std::uint64_t seed) {
        cdb::Mlp model = cdb::init_params(small_config(2, {8}, 2, seed));
        cdb::SgdConfig opt;
        opt.lr = 0.1;
        opt.momentum = 0.9;
        opt.weight_decay = 0.0;
        cdb::SgdState state;
        double first_loss = 0.0;
        double last_loss = 0.0;
        for (int epoch = 0; epoch < 50; ++epoch) {
            const auto cache = cdb::forward(model, x);
            const auto loss = cdb::ce_loss(cache.logits(), labels);
            if (epoch == 0) first_loss = loss.mean_loss;
            last_loss = loss.mean_loss;
            const auto grads = cdb::backward(model, cache, loss.dloss_dlogits);
            cdb::sgd_step(model, grads, state, opt, epoch);
        }
        return std::tuple{model, first_loss, last_loss};
    };

    const auto [model_a, first_a, last_a] = train(21);
    const auto [model_b, first_b, last_b] = train(21);
    REQUIRE(last_a < first_a);
    for (std::size_t l = 0; l < model_a.layers.size(); ++l) {
        REQUIRE(model_a.layers[l].weight.data == model_b.layers[l].weight.data);
        REQUIRE(model_a.layers[l].bias == model_b.layers[l].bias);
    }
}

TEST_CASE("checkpoint round trip and error paths") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "cdb_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "model.cdbm").string();

    const cdb::Mlp model = cdb::init_params(small_config(5, {4, 3}, 2, 77));
    cdb::save_checkpoint(model, path);
    const cdb::Mlp loaded = cdb::load_checkpoint(path);
    REQUIRE(loaded.config.input_dim == 5);
    REQUIRE(loaded.config.hidden_dims == std::vector<std::size_t>{4, 3});
    REQUIRE(loaded.config.num_classes == 2);
    REQUIRE(loaded.layers.size() == model.layers.size());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        REQUIRE(loaded.layers[l].weight.data == model.layers[l].weight.data);
        REQUIRE(loaded.layers[l].bias == model.layers[l].bias);
    }

    const std::string bad_magic = (dir / "bad_magic.cdbm").string();
    {
        std::ofstream out(bad_magic, std::ios::binary);
        out << "NOPE0000";
    }
    REQUIRE_THROWS_WITH(cdb::load_checkpoint(bad_magic), Catch::Matchers::ContainsSubstring("bad magic"));

    const std::string truncated = (dir / "truncated.cdbm").string();
    {
        const std::string bytes = testutil::read_file_bytes(path);
        std::ofstream out(truncated, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    REQUIRE_THROWS_WITH(cdb::load_checkpoint(truncated), Catch::Matchers::ContainsSubstring("truncated"));

    REQUIRE_THROWS_WITH(cdb::load_checkpoint((dir / "missing.cdbm").string()),
                        Catch::Matchers::ContainsSubstring("cannot open"));
}
