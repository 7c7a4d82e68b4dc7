#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "ditcache/tensor.hpp"

namespace ditcache {

// Deterministic random source. The mt19937_64 engine has a fully specified
// output sequence, but the standard library distributions that sit on top of
// it do not, so conversion to uniform/normal variates is done by hand here.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller, one spare value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
        uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
        return lo + static_cast<int>(gen_() % span);
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Stable sub-seed derivation: tag distinguishes the consumer, index the draw.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0) {
    uint64_t h = 1469598103934665603ull;
    for (char c : tag) {
        h = (h ^ static_cast<unsigned char>(c)) * 1099511628211ull;
    }
    uint64_t x = base ^ h;
    x += 0x9E3779B97F4A7C15ull * (index + 1);
    // splitmix64 finalizer
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline void fill_normal(std::vector<double>& v, Rng& rng, double scale = 1.0) {
    for (double& x : v) x = rng.normal() * scale;
}

inline HiddenState random_state(int b, int n, int d, Rng& rng, double scale = 1.0) {
    HiddenState h(b, n, d);
    fill_normal(h.data, rng, scale);
    return h;
}

}  // namespace ditcache
