#pragma once

// Slow reference implementations used only by tests. Everything here is
// written in the most literal form possible (direct definition sums, scalar
// loops) so the fast library code can be checked against an independent
// formulation.

#include <cmath>
#include <vector>

#include "ditcache/tensor.hpp"

namespace oracle {

// Direct O(n^4) orthonormal 2D DCT-II straight from the definition.
inline ditcache::Grid naive_dct2d(const ditcache::Grid& g) {
    const int n = g.side;
    const double pi = 3.14159265358979323846;
    ditcache::Grid out(n);
    for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                for (int j = 0; j < n; ++j) {
                    acc += g.at(i, j) *
                           std::cos(pi * (2.0 * i + 1.0) * u / (2.0 * n)) *
                           std::cos(pi * (2.0 * j + 1.0) * v / (2.0 * n));
                }
            }
            double su = std::sqrt((u == 0 ? 1.0 : 2.0) / n);
            double sv = std::sqrt((v == 0 ? 1.0 : 2.0) / n);
            out.at(u, v) = su * sv * acc;
        }
    }
    return out;
}

inline double scalar_rel_l1(const std::vector<double>& cur, const std::vector<double>& prev) {
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < cur.size(); ++i) {
        num += std::fabs(cur[i] - prev[i]);
        den += std::fabs(prev[i]);
    }
    return num / den;
}

inline double scalar_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline double scalar_mse(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// SSIM of two constant grids p and q: every window has zero variance and
// zero covariance, so the index reduces to
//   [ (2pq + C1) / (p^2 + q^2 + C1) ] * [ C2 / C2 ]
// with C1 = (0.01 |p - q|)^2 from the joint range.
inline double constant_grid_ssim(double p, double q) {
    if (p == q) return 1.0;
    double range = std::fabs(p - q);
    double c1 = (0.01 * range) * (0.01 * range);
    return (2.0 * p * q + c1) / (p * p + q * q + c1);
}

// Per-token layer norm with epsilon 1e-6 followed by (1 + scale) * x + shift,
// written as plain scalar loops over one token vector.
inline std::vector<double> scalar_modulate_token(const std::vector<double>& x,
                                                 const std::vector<double>& shift,
                                                 const std::vector<double>& scale) {
    size_t d = x.size();
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    double inv = 1.0 / std::sqrt(var + 1e-6);
    std::vector<double> out(d);
    for (size_t i = 0; i < d; ++i) {
        double ln = (x[i] - mean) * inv;
        out[i] = ln * (1.0 + scale[i]) + shift[i];
    }
    return out;
}

}  // namespace oracle
