#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cascade {

// Pairwise summation over a fixed ordering. Used for every cost reduction so
// results do not depend on worker count or scheduling.
inline double pairwise_sum(std::span<const double> xs) {
    const size_t n = xs.size();
    if (n <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const size_t half = n / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

inline double naive_sum(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
}

/// Mean and standard error of a sample, pairwise-summed.
struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
};

inline MeanStderr mean_stderr(std::span<const double> xs) {
    MeanStderr out;
    const size_t n = xs.size();
    if (n == 0) return out;
    out.mean = pairwise_sum(xs) / static_cast<double>(n);
    if (n == 1) return out;
    std::vector<double> sq(n);
    for (size_t i = 0; i < n; ++i) {
        const double d = xs[i] - out.mean;
        sq[i] = d * d;
    }
    const double var = pairwise_sum(sq) / static_cast<double>(n - 1);
    out.stderr_ = std::sqrt(var / static_cast<double>(n));
    return out;
}

}  // namespace cascade
