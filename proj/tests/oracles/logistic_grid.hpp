#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

struct GridOptimum {
    double w1 = 0, w2 = 0, b = 0, loss = 0;
};

// Brute-force minimum of the mean L2-regularised logistic loss over a cubic
// grid of (w1, w2, b), refined twice around the best cell.
inline GridOptimum logistic_grid_search(const std::vector<std::array<double, 2>>& x, const std::vector<int>& y,
                                        double l2) {
    auto loss = [&](double w1, double w2, double b) {
        double s = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double z = w1 * x[i][0] + w2 * x[i][1] + b;
            const double m = y[i] ? z : -z;
            s += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
        }
        return s / static_cast<double>(x.size()) + 0.5 * l2 * (w1 * w1 + w2 * w2);
    };
    GridOptimum best{0, 0, 0, std::numeric_limits<double>::infinity()};
    double cw1 = 0, cw2 = 0, cb = 0, half = 4.0;
    for (int round = 0; round < 3; ++round) {
        const int steps = 40;
        for (int i = 0; i <= steps; ++i)
            for (int j = 0; j <= steps; ++j)
                for (int k = 0; k <= steps; ++k) {
                    const double w1 = cw1 - half + 2 * half * i / steps;
                    const double w2 = cw2 - half + 2 * half * j / steps;
                    const double b = cb - half + 2 * half * k / steps;
                    const double l = loss(w1, w2, b);
                    if (l < best.loss) best = {w1, w2, b, l};
                }
        cw1 = best.w1;
        cw2 = best.w2;
        cb = best.b;
        half /= 10.0;
    }
    return best;
}

} // namespace oracle
