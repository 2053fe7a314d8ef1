#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace alignrl {

// All randomness in a run flows from one root seed through named streams:
//   stream_seed = splitmix64(splitmix64(root ^ fnv1a64(name)) + index)
// Streams are independent of each other, so adding or removing a consumer of
// one stream never shifts the draws seen by another.
std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

// mt19937_64 with hand-rolled samplers. The std:: distributions are not
// bit-specified across standard libraries; these are, given the engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller (two uniforms per call, no cached value)
    double normal();

    // integer in [lo, hi] inclusive, unbiased via rejection
    int uniform_int(int lo, int hi);

    // index sampled proportionally to probs (assumed >= 0, summing to ~1)
    int categorical(std::span<const double> probs);

    // engine state round-trips through text (format is standard-specified)
    std::string serialize() const;
    void deserialize(const std::string& text);

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace alignrl
