#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace petc {

/// Runtime-sized state/input vector. Dimensions in this library are small
/// (plant states, inputs), so a plain std::vector keeps the interfaces simple.
using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double dist(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline Vec zeros(std::size_t n) { return Vec(n, 0.0); }

}  // namespace petc
