#include "alignrl/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "alignrl/errors.hpp"

namespace alignrl {

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index) {
    return splitmix64(splitmix64(root ^ fnv1a64(stream)) + index);
}

double Rng::normal() {
    // 1 - u keeps the log argument in (0, 1]
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int lo, int hi) {
    if (lo > hi) throw ArgumentError("uniform_int: lo > hi");
    std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
}

int Rng::categorical(std::span<const double> probs) {
    if (probs.empty()) throw ArgumentError("categorical: empty probability vector");
    double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size() - 1);
}

std::string Rng::serialize() const {
    std::ostringstream ss;
    ss << engine_;
    return ss.str();
}

void Rng::deserialize(const std::string& text) {
    std::istringstream ss(text);
    ss >> engine_;
    if (ss.fail()) throw StateError("Rng::deserialize: malformed engine state");
}

}  // namespace alignrl
