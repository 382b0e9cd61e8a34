#include "distileval/rng.hpp"

#include <cmath>

#include "distileval/errors.hpp"

namespace distileval {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

RngStream::RngStream(std::initializer_list<std::uint64_t> keys) {
    // Fold the key tuple into a single splitmix state, then expand into
    // the four xoshiro words. The extra mixing round per key avoids
    // correlated neighbours for tuples differing in one slot by one.
    std::uint64_t acc = 0x6A09E667F3BCC908ULL;
    for (std::uint64_t k : keys) {
        acc ^= splitmix64(k);
        (void)splitmix64(acc);
    }
    for (auto& w : state_) w = splitmix64(acc);
}

std::uint64_t RngStream::next_u64() {
    // xoshiro256**
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

double RngStream::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
    if (n == 0) throw ConfigError("uniform_int: n must be positive");
    // Lemire multiply-shift; the tiny modulo bias is irrelevant here and
    // the mapping is identical on every platform.
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double RngStream::normal() {
    // u1 in (0,1] so the log is finite.
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int RngStream::bernoulli(double p) {
    return uniform01() < p ? 1 : 0;
}

RngStream derive_stream(std::uint64_t seed, StreamKind kind,
                        std::uint64_t a, std::uint64_t b) {
    return RngStream{seed, static_cast<std::uint64_t>(kind), a, b};
}

} // namespace distileval
