#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace divst {

// Deterministic stream generator keyed by (master seed, purpose label, index).
// Every randomized step in the artifact opens its own named stream, so adding
// a new one never perturbs existing streams and reruns are bit-identical on
// the same platform. Streams are splitmix64 sequences from a mixed key; the
// uniform/normal transforms are hand-rolled (std::*_distribution is
// implementation-defined and would break cross-compiler determinism).
class Rng {
public:
    Rng(std::uint64_t master, std::string_view label, std::uint64_t index = 0);

    std::uint64_t next_u64();

    // Uniform in [0,1), 53-bit mantissa.
    double uniform();

    // Standard normal via Box-Muller; second value of each pair is cached.
    double normal();

    // Uniform integer in [0, n); n must be positive.
    std::size_t below(std::size_t n);

    // In-place Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Index drawn proportionally to weights[i] (nonnegative, not all zero).
    std::size_t pick_weighted(const std::vector<double>& weights);

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace divst
