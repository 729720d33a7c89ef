#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "cdb/difficulty.hpp"
#include "cdb/losses.hpp"
#include "cdb/rng.hpp"
#include "testutil.hpp"

using Catch::Matchers::WithinAbs;
using cdb::ClassValStats;

namespace {

ClassValStats stats_from_accuracies(const std::vector<double>& accuracies, std::size_t denom = 1000) {
    ClassValStats stats;
    for (double a : accuracies) {
        stats.total.push_back(denom);
        stats.correct.push_back(static_cast<std::size_t>(a * static_cast<double>(denom)));
        stats.accuracy.push_back(a);
    }
    return stats;
}

}  // namespace

TEST_CASE("class accuracies from predictions") {
    const std::vector<std::size_t> perfect = {0, 1, 2, 1};
    const auto all_right = cdb::class_accuracies(perfect, perfect, 3);
    for (double a : all_right.accuracy) REQUIRE(a == 1.0);

    const std::vector<std::size_t> labels = {0, 0, 1, 1};
    const std::vector<std::size_t> preds = {0, 1, 1, 1};
    const auto stats = cdb::class_accuracies(preds, labels, 2);
    REQUIRE(stats.accuracy == std::vector<double>{0.5, 1.0});
    REQUIRE(stats.total == std::vector<std::size_t>{2, 2});
    REQUIRE(stats.correct == std::vector<std::size_t>{1, 2});

    // class 2 absent from validation: total 0, accuracy 0
    const auto absent = cdb::class_accuracies(preds, labels, 3);
    REQUIRE(absent.total[2] == 0);
    REQUIRE(absent.accuracy[2] == 0.0);

    REQUIRE_THROWS_AS(cdb::class_accuracies(std::vector<std::size_t>{0}, labels, 2), std::invalid_argument);
    const std::vector<std::size_t> bad = {5, 0, 0, 0};
    REQUIRE_THROWS_AS(cdb::class_accuracies(bad, labels, 2), std::invalid_argument);
}

TEST_CASE("difficulty is one minus accuracy") {
    REQUIRE(cdb::difficulties(stats_from_accuracies({1, 1})) == std::vector<double>{0, 0});
    REQUIRE(cdb::difficulties(stats_from_accuracies({0, 0})) == std::vector<double>{1, 1});
    REQUIRE(cdb::difficulties(stats_from_accuracies({0.75, 0.40})) == std::vector<double>{0.25, 0.60});
}

TEST_CASE("bias formula") {
    // frozen from tests/compute_expected_values.py
    REQUIRE_THAT(cdb::accuracy_bias(stats_from_accuracies({0.5, 0.5})),
                 WithinAbs(-0.00019996000799840032, 1e-15));
    REQUIRE_THAT(cdb::accuracy_bias(stats_from_accuracies({0.8})),
                 WithinAbs(-0.00012498437695288089, 1e-15));
    REQUIRE_THAT(cdb::accuracy_bias(stats_from_accuracies({1.0, 0.0})), WithinAbs(9999.0, 1e-9));
}

TEST_CASE("dynamic tau") {
    REQUIRE(cdb::dynamic_tau(0.0) == 1.0);
    REQUIRE_THAT(cdb::dynamic_tau(9999.0), WithinAbs(2.0, 1e-12));
    REQUIRE_THAT(cdb::dynamic_tau(-0.00019996000799840032), WithinAbs(0.99990001999633393, 1e-12));
    // clamped exponents stay strictly inside (0,2)
    REQUIRE(cdb::dynamic_tau(-1e9) > 0.0);
    REQUIRE(cdb::dynamic_tau(1e9) < 2.0);
}

TEST_CASE("difficulty weights") {
    const std::vector<double> any_d = {0.0, 0.3, 1.0};
    for (double w : cdb::difficulty_weights(any_d, 0.0)) REQUIRE(w == 1.0);

    const std::vector<double> quarter = {0.25};
    REQUIRE(cdb::difficulty_weights(quarter, 2.0) == std::vector<double>{0.0625});

    // frozen from tests/compute_expected_values.py
    const std::vector<double> d = {1.0, 0.5, 0.1};
    const auto w = cdb::difficulty_weights(d, 1.5);
    REQUIRE(w[0] == 1.0);
    REQUIRE_THAT(w[1], WithinAbs(0.35355339059327376, 1e-15));
    REQUIRE_THAT(w[2], WithinAbs(0.031622776601683793, 1e-15));

    REQUIRE_THROWS_AS(cdb::difficulty_weights(d, -1.0), std::invalid_argument);
    const std::vector<double> out_of_range = {1.5};
    REQUIRE_THROWS_AS(cdb::difficulty_weights(out_of_range, 1.0), std::invalid_argument);
}

TEST_CASE("update composes the chain") {
    cdb::LossSpec spec;
    spec.kind = cdb::LossKind::kCdbCe;

    SECTION("equal accuracies give equal weights") {
        spec.tau_mode = cdb::TauMode::kDynamic;
        const auto state = cdb::update_difficulty(stats_from_accuracies({0.7, 0.7, 0.7}), spec, 4);
        REQUIRE(state.epoch == 4);
        REQUIRE(state.weights[0] == state.weights[1]);
        REQUIRE(state.weights[1] == state.weights[2]);
    }

    SECTION("fixed tau") {
        spec.tau_mode = cdb::TauMode::kFixed;
        spec.tau = 2.0;
        const auto state = cdb::update_difficulty(stats_from_accuracies({0.9, 0.5}), spec, 0);
        REQUIRE(state.tau == 2.0);
        REQUIRE_THAT(state.weights[0], WithinAbs(0.01, 1e-15));
        REQUIRE_THAT(state.weights[1], WithinAbs(0.25, 1e-15));
    }

    SECTION("dynamic worked example A=[0.9,0.5]") {
        // frozen from tests/compute_expected_values.py
        spec.tau_mode = cdb::TauMode::kDynamic;
        const auto state = cdb::update_difficulty(stats_from_accuracies({0.9, 0.5}), spec, 0);
        REQUIRE_THAT(state.bias, WithinAbs(0.79964007198560288, 1e-12));
        REQUIRE_THAT(state.tau, WithinAbs(1.379794967542512, 1e-12));
        REQUIRE_THAT(state.weights[0], WithinAbs(0.041706623592112583, 1e-12));
        REQUIRE_THAT(state.weights[1], WithinAbs(0.38427340348219988, 1e-12));
        REQUIRE(state.epsilon == 0.0001);
    }

    SECTION("non-cdb losses get unit weights") {
        cdb::LossSpec ce;
        ce.kind = cdb::LossKind::kCe;
        const auto state = cdb::update_difficulty(stats_from_accuracies({0.9, 0.5}), ce, 0);
        REQUIRE(state.tau == 0.0);
        REQUIRE(state.weights == std::vector<double>{1.0, 1.0});
    }
}

TEST_CASE("update is idempotent") {
    cdb::LossSpec spec;
    spec.kind = cdb::LossKind::kCdbCe;
    spec.tau_mode = cdb::TauMode::kDynamic;
    const auto stats = stats_from_accuracies({0.82, 0.31, 0.55});
    const auto a = cdb::update_difficulty(stats, spec, 7);
    const auto b = cdb::update_difficulty(stats, spec, 7);
    REQUIRE(a.difficulty == b.difficulty);
    REQUIRE(a.weights == b.weights);
    REQUIRE(a.tau == b.tau);
    REQUIRE(a.bias == b.bias);
}

TEST_CASE("difficulty machinery properties") {
    cdb::Rng rng(5150);

    SECTION("weights strictly increase with difficulty for fixed tau > 0") {
        for (int trial = 0; trial < 200; ++trial) {
            const double tau = 0.1 + rng.next_uniform() * 4.9;
            double d1 = rng.next_uniform();
            double d2 = rng.next_uniform();
            if (d1 == d2) continue;
            if (d1 > d2) std::swap(d1, d2);
            const std::vector<double> d = {d1, d2};
            const auto w = cdb::difficulty_weights(d, tau);
            REQUIRE(w[0] < w[1]);
        }
    }

    SECTION("weights decrease in tau for d in (0,1); d = 1 is pinned at 1") {
        for (int trial = 0; trial < 200; ++trial) {
            const double d = 0.01 + rng.next_uniform() * 0.98;
            double t1 = rng.next_uniform() * 5.0;
            double t2 = rng.next_uniform() * 5.0;
            if (t1 == t2) continue;
            if (t1 > t2) std::swap(t1, t2);
            const std::vector<double> dv = {d};
            REQUIRE(cdb::difficulty_weights(dv, t1)[0] > cdb::difficulty_weights(dv, t2)[0]);
            const std::vector<double> pinned = {1.0};
            REQUIRE(cdb::difficulty_weights(pinned, t2)[0] == 1.0);
        }
    }

    SECTION("dynamic tau stays in (0,2) and is monotone in b") {
        double previous = 0.0;
        for (int i = 0; i <= 2000; ++i) {
            const double b = -1000.0 + static_cast<double>(i);
            const double tau = cdb::dynamic_tau(b);
            REQUIRE(tau > 0.0);
            REQUIRE(tau < 2.0);
            if (i > 0) REQUIRE(tau >= previous);
            // strict growth between the clamp and double-precision saturation
            if (i > 0 && b <= 30.0 && b > -700.0) REQUIRE(tau > previous);
            previous = tau;
        }
        for (int trial = 0; trial < 1000; ++trial) {
            const std::size_t c = 1 + rng.next_u64() % 10;
            std::vector<double> accs(c);
            for (auto& a : accs) a = rng.next_uniform();
            const double tau = cdb::dynamic_tau(cdb::accuracy_bias(stats_from_accuracies(accs)));
            REQUIRE(tau > 0.0);
            REQUIRE(tau < 2.0);
        }
    }

    SECTION("bias lower bound and permutation invariance") {
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t c = 1 + rng.next_u64() % 8;
            std::vector<double> accs(c);
            for (auto& a : accs) a = rng.next_uniform();
            const auto stats = stats_from_accuracies(accs);
            const double b = cdb::accuracy_bias(stats);
            const double min_acc = *std::min_element(accs.begin(), accs.end());
            REQUIRE(b >= -cdb::kBiasEpsilon / (min_acc + cdb::kBiasEpsilon) - 1e-15);

            std::vector<double> shuffled = accs;
            cdb::Rng(rng.next_u64()).shuffle(shuffled);
            REQUIRE(cdb::accuracy_bias(stats_from_accuracies(shuffled)) == b);
        }
    }

    SECTION("equal accuracies make the cdb gradient a positive multiple of ce's") {
        cdb::LossSpec spec;
        spec.kind = cdb::LossKind::kCdbCe;
        spec.tau_mode = cdb::TauMode::kDynamic;
        const auto state = cdb::update_difficulty(stats_from_accuracies({0.6, 0.6, 0.6}), spec, 0);
        const double scale = state.weights[0];
        REQUIRE(scale > 0.0);

        const cdb::Matrix logits = testutil::random_matrix(rng, 4, 3, -3.0, 3.0);
        const std::vector<std::size_t> labels = {0, 2, 1, 1};
        const auto ce = cdb::ce_loss(logits, labels);
        const auto weighted = cdb::cdb_ce_loss(logits, labels, state.weights);
        for (std::size_t i = 0; i < ce.dloss_dlogits.data.size(); ++i) {
            REQUIRE_THAT(weighted.dloss_dlogits.data[i],
                         WithinAbs(scale * ce.dloss_dlogits.data[i], 1e-12));
        }
    }
}
