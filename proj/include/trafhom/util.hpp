#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace trafhom {

// Counter-based RNG helpers. Types are sampled per-index (not sequentially)
// so that overlapping windows and shifted environments agree bit-for-bit.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Documented replicate seed derivation: replicate r uses seed ^ hash(r).
inline std::uint64_t replicate_seed(std::uint64_t base, std::uint64_t r) {
    return base ^ splitmix64(r + 1);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Continuous piecewise-linear map, constant outside its knot range.
struct PiecewiseLinear {
    std::vector<double> xs;
    std::vector<double> ys;

    double operator()(double x) const {
        if (xs.empty()) throw std::logic_error("PiecewiseLinear: empty table");
        if (x <= xs.front()) return ys.front();
        if (x >= xs.back()) return ys.back();
        std::size_t lo = 0, hi = xs.size() - 1;
        while (hi - lo > 1) {
            std::size_t mid = (lo + hi) / 2;
            if (xs[mid] <= x) lo = mid; else hi = mid;
        }
        const double w = (x - xs[lo]) / (xs[lo + 1] - xs[lo]);
        return ys[lo] + w * (ys[lo + 1] - ys[lo]);
    }

    double slope_bound() const {
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
            const double dx = xs[i + 1] - xs[i];
            if (dx > 0.0) {
                const double a = (ys[i + 1] - ys[i]) / dx;
                if (std::abs(a) > s) s = std::abs(a);
            }
        }
        return s;
    }
};

struct MeanCi {
    double mean = 0.0;
    double ci_halfwidth = 0.0;  // 1.96 * se
    int n = 0;
};

MeanCi mean_ci(const std::vector<double>& xs);

// Least squares y = a + b x; returns slope b and its standard error.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace trafhom
