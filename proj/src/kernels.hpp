#pragma once

#include <cstddef>

namespace cavkit::detail {

// Dot product with four independent accumulators. The summation order is
// fixed, so results only depend on the inputs.
template <typename A, typename B>
inline double dot(const A* a, const B* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        s0 += static_cast<double>(a[j]) * static_cast<double>(b[j]);
        s1 += static_cast<double>(a[j + 1]) * static_cast<double>(b[j + 1]);
        s2 += static_cast<double>(a[j + 2]) * static_cast<double>(b[j + 2]);
        s3 += static_cast<double>(a[j + 3]) * static_cast<double>(b[j + 3]);
    }
    for (; j < n; ++j) s0 += static_cast<double>(a[j]) * static_cast<double>(b[j]);
    return (s0 + s1) + (s2 + s3);
}

// Squared Euclidean distance; stops early once the partial sum reaches
// `bound` (the returned value is then > bound but not exact).
template <typename A, typename B>
inline double squared_distance(const A* a, const B* b, std::size_t n, double bound) {
    constexpr std::size_t block = 64;
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += block) {
        const std::size_t end = start + block < n ? start + block : n;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t j = start;
        for (; j + 4 <= end; j += 4) {
            const double d0 = static_cast<double>(a[j]) - static_cast<double>(b[j]);
            const double d1 = static_cast<double>(a[j + 1]) - static_cast<double>(b[j + 1]);
            const double d2 = static_cast<double>(a[j + 2]) - static_cast<double>(b[j + 2]);
            const double d3 = static_cast<double>(a[j + 3]) - static_cast<double>(b[j + 3]);
            s0 += d0 * d0;
            s1 += d1 * d1;
            s2 += d2 * d2;
            s3 += d3 * d3;
        }
        for (; j < end; ++j) {
            const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
            s0 += d * d;
        }
        total += (s0 + s1) + (s2 + s3);
        if (total > bound) return total;
    }
    return total;
}

} // namespace cavkit::detail
