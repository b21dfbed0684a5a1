#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>

// Seedable, platform-independent random streams. xoshiro256** core with
// splitmix64 state expansion; substreams are derived by index or by stage
// name so that shard scheduling never changes the numbers a shard sees.

namespace dualrail {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

class Xoshiro256StarStar {
  public:
    explicit Xoshiro256StarStar(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64_next(sm);
    }

    std::uint64_t next() {
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

    // Uniform on [0, 1), 53 significant bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_positive() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // Box-Muller pair, mean 0, standard deviation sigma. Consumes exactly
    // two words regardless of the values drawn.
    std::pair<double, double> gaussian_pair(double sigma = 1.0) {
        const double u1 = uniform_positive();
        const double u2 = uniform();
        const double r = sigma * std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * M_PI * u2;
        return {r * std::cos(phi), r * std::sin(phi)};
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_;
};

// Stream for shard `index` of run `seed`. Depends only on the pair of
// arguments, not on which thread consumes the shard.
inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed;
    const std::uint64_t mixed = splitmix64_next(s);
    s = mixed ^ (0x9E3779B97F4A7C15ULL * (index + 1));
    return splitmix64_next(s);
}

// Named stream for a pipeline stage, FNV-1a over the stage label.
inline std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : stage) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    std::uint64_t s = seed ^ h;
    return splitmix64_next(s);
}

}  // namespace dualrail
