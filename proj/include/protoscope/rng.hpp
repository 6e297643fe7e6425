#pragma once

#include <cstdint>
#include <random>

namespace protoscope {

/// Deterministic random source with counter-derived substreams.
///
/// Every draw goes through an explicitly pinned algorithm: the mt19937_64
/// engine (bit-specified by the standard), masked rejection for bounded
/// integers, and Box-Muller for gaussians. Seeded sequences are therefore
/// identical across platforms and standard-library versions, which is what
/// makes parallel evaluation schedules reproducible.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    /// Independent substream for (seed, stream). Work split into fixed
    /// blocks, each with its own substream, gives results independent of
    /// the number of workers.
    static SeededRng for_stream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53-bit resolution.
    double next_unit();

    /// Uniform integer in [0, n), unbiased via masked rejection. n >= 1.
    std::uint64_t next_below(std::uint64_t n);

    /// Standard normal deviate (Box-Muller, spare cached).
    double next_gaussian();

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// SplitMix64 step; advances `state` and returns a mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace protoscope
