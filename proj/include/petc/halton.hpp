#pragma once

#include <array>
#include <cstdint>

#include "petc/errors.hpp"
#include "petc/vec.hpp"

namespace petc {

/// Radical inverse of `index` in the given prime base, in [0, 1).
inline double radical_inverse(std::uint64_t index, unsigned base) {
    double inv_base = 1.0 / static_cast<double>(base);
    double factor = inv_base;
    double value = 0.0;
    while (index > 0) {
        value += static_cast<double>(index % base) * factor;
        index /= base;
        factor *= inv_base;
    }
    return value;
}

/// Deterministic low-discrepancy sequence on the unit cube. The seed selects
/// a fixed offset into the sequence, so prefixes are nested for a given seed.
class HaltonSequence {
  public:
    HaltonSequence(int dims, std::uint64_t seed) : dims_(dims) {
        if (dims < 1 || dims > static_cast<int>(kPrimes.size()))
            throw ConfigError("halton: unsupported dimension " + std::to_string(dims));
        start_ = 1000 + (seed * 2654435761ULL) % (1ULL << 30);
    }

    Vec point(std::uint64_t i) const {
        Vec p(dims_);
        for (int d = 0; d < dims_; ++d) p[d] = radical_inverse(start_ + i, kPrimes[d]);
        return p;
    }

    int dims() const { return dims_; }

  private:
    static constexpr std::array<unsigned, 8> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19};
    int dims_ = 0;
    std::uint64_t start_ = 0;
};

/// 64-bit integer mixer used to derive auxiliary deterministic choices.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace petc
