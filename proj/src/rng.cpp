#include "divst/rng.hpp"

#include <cmath>

#include "divst/errors.hpp"

namespace divst {

namespace {

std::uint64_t splitmix(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace

Rng::Rng(std::uint64_t master, std::string_view label, std::uint64_t index) {
    std::uint64_t s = master;
    std::uint64_t a = splitmix(s);
    s ^= fnv1a(label);
    std::uint64_t b = splitmix(s);
    s ^= index * 0xD6E8FEB86659FD93ULL + 0x2545F4914F6CDD1DULL;
    std::uint64_t c = splitmix(s);
    state_ = a ^ (b * 0x9E3779B97F4A7C15ULL) ^ c;
    if (state_ == 0) state_ = 0x853C49E6748FEA9BULL;
}

std::uint64_t Rng::next_u64() { return splitmix(state_); }

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Box-Muller; u1 nudged away from 0 so the log stays finite.
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) throw InputError("Rng::below: n must be positive");
    // Rejection sampling on the top bits: unbiased and deterministic.
    const std::uint64_t nn = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % nn;
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<std::size_t>(x % nn);
}

std::size_t Rng::pick_weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw InputError("pick_weighted: bad weight");
        total += w;
    }
    if (total <= 0.0) throw InputError("pick_weighted: weights sum to zero");
    const double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    // Rounding can push u past the last partial sum; return the last
    // positive-weight index.
    for (std::size_t i = weights.size(); i-- > 0;)
        if (weights[i] > 0.0) return i;
    return weights.size() - 1;
}

} // namespace divst
