#pragma once

#include <cstdint>

namespace jdtvb::rng {

/// Deterministic random stream with identical output on every platform.
/// Generation is xoshiro256++ seeded through splitmix64 from (seed, stream id),
/// so independent purposes draw from decorrelated streams of one master seed.
/// Normal variates use Box-Muller, Poisson counts use Knuth's product method
/// applied in chunks so large means cannot underflow.
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t next_u64();

    /// Uniform on [0, 1).
    double uniform();

    /// Uniform on [a, b).
    double uniform(double a, double b);

    /// Standard normal variate.
    double normal();

    /// Poisson count with the given mean.
    int poisson(double mean);

    /// Bernoulli trial.
    bool bernoulli(double p);

private:
    std::uint64_t s_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

} // namespace jdtvb::rng
