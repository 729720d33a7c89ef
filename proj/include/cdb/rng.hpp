#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cdb {

// xoshiro256** seeded through SplitMix64, after Blackman & Vigna. The seeding
// constants (0x9e3779b97f4a7c15 increment, 0xbf58476d1ce4e5b9 /
// 0x94d049bb133111eb mixers) and the jump polynomial below are the reference
// ones, so any conforming implementation reproduces the stream for a given
// 64-bit seed.
//
// Stream splitting: nth_stream(k) restarts from the seeded state and applies
// the jump k times. One jump advances 2^128 steps, so distinct streams cannot
// overlap within any realistic draw count.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
        root_ = state_;
    }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0,1), 53 mantissa bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Box-Muller with the second draw cached; std == 0 returns mean exactly.
    double next_normal(double mean, double std) {
        if (std < 0.0) throw std::invalid_argument("next_normal: negative std");
        if (has_cached_) {
            has_cached_ = false;
            return mean + std * cached_;
        }
        const double u = 1.0 - next_uniform();  // (0,1]; log stays finite
        const double v = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double angle = 2.0 * std::numbers::pi * v;
        cached_ = r * std::sin(angle);
        has_cached_ = true;
        return mean + std * (r * std::cos(angle));
    }

    // Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Advance 2^128 steps (Vigna's published jump constants).
    void jump() {
        static constexpr std::array<std::uint64_t, 4> kJump = {
            0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL, 0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
        std::array<std::uint64_t, 4> acc = {0, 0, 0, 0};
        for (std::uint64_t word : kJump) {
            for (int bit = 0; bit < 64; ++bit) {
                if (word & (1ULL << bit)) {
                    for (std::size_t i = 0; i < 4; ++i) acc[i] ^= state_[i];
                }
                next_u64();
            }
        }
        state_ = acc;
    }

    // Independent stream k: the seeded state jumped k times. Stream 0 is the
    // generator's own stream.
    Rng nth_stream(std::size_t k) const {
        Rng child(*this);
        child.state_ = root_;
        child.has_cached_ = false;
        for (std::size_t i = 0; i < k; ++i) child.jump();
        child.root_ = child.state_;
        return child;
    }

  private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
    std::array<std::uint64_t, 4> root_{};
    std::uint64_t seed_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace cdb
