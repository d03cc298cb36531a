#include "jdtvb/rng.hpp"

#include <cmath>

#include "jdtvb/errors.hpp"

namespace jdtvb::rng {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

Stream::Stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t sm = seed ^ (0xA0761D6478BD642FULL * (stream_id + 1));
    for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t Stream::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Stream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Stream::uniform(double a, double b) {
    return a + (b - a) * uniform();
}

double Stream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = 1.0 - uniform(); // (0, 1], keeps the log finite
    double u2 = uniform();
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * M_PI * u2;
    cached_normal_ = rad * std::sin(ang);
    has_cached_normal_ = true;
    return rad * std::cos(ang);
}

int Stream::poisson(double mean) {
    if (mean < 0.0) throw DomainError("poisson: mean must be non-negative");
    int count = 0;
    double remaining = mean;
    // Knuth's method underflows for large means; split into additive chunks.
    while (remaining > 0.0) {
        double chunk = remaining > 30.0 ? 30.0 : remaining;
        remaining -= chunk;
        double limit = std::exp(-chunk);
        double prod = uniform();
        while (prod > limit) {
            ++count;
            prod *= uniform();
        }
    }
    return count;
}

bool Stream::bernoulli(double p) {
    return uniform() < p;
}

} // namespace jdtvb::rng
