#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ditcache {

// Dense batch-of-token-states array, laid out batch-major then token-major.
// Token counts are required to be perfect squares so a state can be viewed
// as a square spatial grid per channel.
struct HiddenState {
    int batch = 0;
    int tokens = 0;
    int channels = 0;
    std::vector<double> data;

    HiddenState() = default;

    HiddenState(int b, int n, int d, double fill = 0.0)
        : batch(b), tokens(n), channels(d) {
        if (b < 1) {
            throw std::invalid_argument("HiddenState: batch must be >= 1, got " + std::to_string(b));
        }
        if (n < 4) {
            throw std::invalid_argument("HiddenState: tokens must be >= 4, got " + std::to_string(n));
        }
        if (d < 2) {
            throw std::invalid_argument("HiddenState: channels must be >= 2, got " + std::to_string(d));
        }
        int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
        if (side * side != n) {
            throw std::invalid_argument("HiddenState: tokens must be a perfect square, got " + std::to_string(n));
        }
        data.assign(static_cast<size_t>(b) * n * d, fill);
    }

    double& at(int b, int n, int d) {
        return data[(static_cast<size_t>(b) * tokens + n) * channels + d];
    }

    double at(int b, int n, int d) const {
        return data[(static_cast<size_t>(b) * tokens + n) * channels + d];
    }

    size_t size() const { return data.size(); }

    bool same_shape(const HiddenState& o) const {
        return batch == o.batch && tokens == o.tokens && channels == o.channels;
    }

    // Side length of the square token grid.
    int grid_side() const {
        return static_cast<int>(std::lround(std::sqrt(static_cast<double>(tokens))));
    }
};

inline void require_same_shape(const HiddenState& a, const HiddenState& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.batch) + "x" + std::to_string(a.tokens) + "x" +
                                    std::to_string(a.channels) + " vs " +
                                    std::to_string(b.batch) + "x" + std::to_string(b.tokens) + "x" +
                                    std::to_string(b.channels) + ")");
    }
}

inline HiddenState add(const HiddenState& a, const HiddenState& b) {
    require_same_shape(a, b, "add");
    HiddenState out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline HiddenState sub(const HiddenState& a, const HiddenState& b) {
    require_same_shape(a, b, "sub");
    HiddenState out = a;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline bool all_finite(const HiddenState& h) {
    for (double v : h.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

// Square single-channel image, row-major.
struct Grid {
    int side = 0;
    std::vector<double> v;

    Grid() = default;

    explicit Grid(int n, double fill = 0.0) : side(n) {
        if (n < 1) {
            throw std::invalid_argument("Grid: side must be >= 1, got " + std::to_string(n));
        }
        v.assign(static_cast<size_t>(n) * n, fill);
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * side + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * side + c]; }
};

// Extract one channel of one batch entry as its square spatial grid.
inline Grid channel_grid(const HiddenState& h, int b, int d) {
    if (b < 0 || b >= h.batch || d < 0 || d >= h.channels) {
        throw std::invalid_argument("channel_grid: index out of range");
    }
    int n = h.grid_side();
    Grid g(n);
    for (int t = 0; t < h.tokens; ++t) {
        g.v[static_cast<size_t>(t)] = h.at(b, t, d);
    }
    return g;
}

}  // namespace ditcache
