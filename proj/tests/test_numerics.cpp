#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ditcache/numerics.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/tensor.hpp"
#include "oracles.hpp"

using namespace ditcache;

namespace {

Grid random_grid(int n, uint64_t seed) {
    Rng rng(seed);
    Grid g(n);
    for (double& v : g.v) v = rng.normal();
    return g;
}

double max_abs_diff(const Grid& a, const Grid& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

double grid_norm(const Grid& g) {
    double acc = 0.0;
    for (double v : g.v) acc += v * v;
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("hidden state shape validation") {
    REQUIRE_NOTHROW(HiddenState(1, 4, 2));
    REQUIRE_NOTHROW(HiddenState(2, 64, 32));
    REQUIRE_THROWS_AS(HiddenState(0, 4, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(HiddenState(1, 3, 2), std::invalid_argument);
    REQUIRE_THROWS_AS(HiddenState(1, 12, 2), std::invalid_argument);  // not a square
    REQUIRE_THROWS_AS(HiddenState(1, 4, 1), std::invalid_argument);
    REQUIRE(HiddenState(1, 64, 32).grid_side() == 8);
}

TEST_CASE("relative L1 change basics") {
    HiddenState prev(1, 4, 2);
    prev.data = {1, 2, 3, 4, 1, 2, 3, 4};
    HiddenState cur = prev;

    SECTION("identical states give exactly zero") {
        REQUIRE(rel_l1_change(cur, prev) == 0.0);
    }

    SECTION("hand value") {
        // diff mass 2 against reference mass 20
        cur.data[3] = 6.0;
        REQUIRE(std::fabs(rel_l1_change(cur, prev) - 0.1) < 1e-15);
    }

    SECTION("zero reference is rejected") {
        HiddenState zero(1, 4, 2, 0.0);
        REQUIRE_THROWS_AS(rel_l1_change(cur, zero), std::runtime_error);
    }

    SECTION("shape mismatch is rejected") {
        HiddenState other(1, 4, 3);
        REQUIRE_THROWS_AS(rel_l1_change(cur, other), std::invalid_argument);
    }
}

TEST_CASE("relative L1 change matches a scalar-loop oracle and scales linearly") {
    for (uint64_t seed : {11u, 12u, 13u}) {
        Rng rng(seed);
        HiddenState prev = random_state(2, 16, 5, rng);
        HiddenState cur = random_state(2, 16, 5, rng);
        double got = rel_l1_change(cur, prev);
        double want = oracle::scalar_rel_l1(cur.data, prev.data);
        REQUIRE(std::fabs(got - want) < 1e-12);

        // rel(prev + s*(cur - prev), prev) == s * rel(cur, prev) for s >= 0
        for (double s : {0.0, 0.25, 0.5, 2.0}) {
            HiddenState mixed = prev;
            for (size_t i = 0; i < mixed.data.size(); ++i) {
                mixed.data[i] += s * (cur.data[i] - prev.data[i]);
            }
            REQUIRE(std::fabs(rel_l1_change(mixed, prev) - s * got) < 1e-12 * (1.0 + s));
        }
    }
}

TEST_CASE("l2 error") {
    HiddenState a(1, 4, 2, 0.0), b(1, 4, 2, 0.0);
    REQUIRE(l2_error(a, b) == 0.0);
    a.data = {3, 4, 0, 0, 0, 0, 0, 0};
    REQUIRE(std::fabs(l2_error(a, b) - 5.0) < 1e-15);

    Rng rng(7);
    HiddenState x = random_state(1, 9, 3, rng);
    HiddenState y = random_state(1, 9, 3, rng);
    REQUIRE(std::fabs(l2_error(x, y) - oracle::scalar_l2(x.data, y.data)) < 1e-12);
    REQUIRE(std::fabs(l2_error(x, y) - l2_error(y, x)) < 1e-15);
}

TEST_CASE("dct2d of a constant grid is a pure DC coefficient") {
    for (int n : {4, 8}) {
        Grid g(n, 2.5);
        Grid c = dct2d(g);
        REQUIRE(std::fabs(c.at(0, 0) - 2.5 * n) < 1e-9);
        for (int u = 0; u < n; ++u) {
            for (int v = 0; v < n; ++v) {
                if (u == 0 && v == 0) continue;
                REQUIRE(std::fabs(c.at(u, v)) < 1e-9);
            }
        }
    }
}

TEST_CASE("dct2d matches the direct definition sum") {
    for (int n : {4, 8}) {
        for (uint64_t seed : {21u, 22u}) {
            Grid g = random_grid(n, seed);
            Grid fast = dct2d(g);
            Grid slow = oracle::naive_dct2d(g);
            REQUIRE(max_abs_diff(fast, slow) < 1e-9);
        }
    }
}

TEST_CASE("dct2d round trip and Parseval") {
    for (int n : {4, 8, 16, 32}) {
        Grid g = random_grid(n, 100 + static_cast<uint64_t>(n));
        Grid coeff = dct2d(g);
        Grid back = idct2d(coeff);
        REQUIRE(max_abs_diff(back, g) < 1e-9);
        REQUIRE(std::fabs(grid_norm(coeff) - grid_norm(g)) < 1e-9);

        // inverse then forward also recovers the input
        Grid fwd = dct2d(idct2d(g));
        REQUIRE(max_abs_diff(fwd, g) < 1e-9);
    }
}

TEST_CASE("dct plan rejects mismatched grid sides") {
    Dct2d plan(8);
    REQUIRE_THROWS_AS(plan.forward(Grid(4)), std::invalid_argument);
}

TEST_CASE("radial band partition") {
    SECTION("counts cover the plane and extremes land in the end bands") {
        for (auto [n, b] : std::vector<std::pair<int, int>>{{4, 2}, {4, 4}, {8, 4}, {8, 8}, {16, 8}, {32, 8}}) {
            SpectralBands sb = radial_band_partition(n, b);
            int total = 0;
            for (int c : sb.counts) {
                REQUIRE(c > 0);
                total += c;
            }
            REQUIRE(total == n * n);
            REQUIRE(sb.band(0, 0) == 0);
            REQUIRE(sb.band(n - 1, n - 1) == b - 1);
        }
    }

    SECTION("band index is monotone in radius") {
        SpectralBands sb = radial_band_partition(8, 4);
        std::vector<std::pair<double, int>> by_radius;
        for (int u = 0; u < 8; ++u) {
            for (int v = 0; v < 8; ++v) {
                by_radius.push_back({std::hypot(u, v), sb.band(u, v)});
            }
        }
        std::sort(by_radius.begin(), by_radius.end());
        for (size_t i = 1; i < by_radius.size(); ++i) {
            REQUIRE(by_radius[i].second >= by_radius[i - 1].second);
        }
    }

    SECTION("single band swallows everything") {
        SpectralBands sb = radial_band_partition(8, 1);
        REQUIRE(sb.counts[0] == 64);
    }

    SECTION("invalid arguments") {
        REQUIRE_THROWS_AS(radial_band_partition(8, 0), std::invalid_argument);
        REQUIRE_THROWS_AS(radial_band_partition(8, 9), std::invalid_argument);
        REQUIRE_THROWS_AS(radial_band_partition(0, 1), std::invalid_argument);
    }
}

TEST_CASE("band volatility") {
    SECTION("constant trace has zero volatility in every band") {
        std::vector<HiddenState> trace(3, HiddenState(1, 16, 2, 1.0));
        SpectralBands sb = radial_band_partition(4, 2);
        for (double d : band_volatility(trace, sb)) {
            REQUIRE(d == 0.0);
        }
    }

    SECTION("single band equals the global relative L2 change") {
        Rng rng(31);
        std::vector<HiddenState> trace;
        trace.push_back(random_state(1, 64, 3, rng));
        trace.push_back(random_state(1, 64, 3, rng));
        trace.push_back(random_state(1, 64, 3, rng));
        SpectralBands sb = radial_band_partition(8, 1);
        std::vector<double> delta = band_volatility(trace, sb);
        REQUIRE(delta.size() == 1);
        // the transform is orthonormal, so coefficient-space relative L2
        // equals state-space relative L2
        double want = 0.0;
        for (size_t t = 1; t < trace.size(); ++t) {
            want += l2_error(trace[t], trace[t - 1]) / frobenius_norm(trace[t - 1]);
        }
        want /= static_cast<double>(trace.size() - 1);
        REQUIRE(std::fabs(delta[0] - want) < 1e-9);
    }

    SECTION("per-band values match recomputing from pooled coefficients") {
        Rng rng(32);
        std::vector<HiddenState> trace;
        for (int t = 0; t < 4; ++t) trace.push_back(random_state(2, 16, 3, rng));
        SpectralBands sb = radial_band_partition(4, 3);
        std::vector<double> got = band_volatility(trace, sb);

        for (int band = 0; band < 3; ++band) {
            double acc = 0.0;
            for (size_t t = 1; t < trace.size(); ++t) {
                double num = 0.0, den = 0.0;
                for (int b = 0; b < 2; ++b) {
                    for (int d = 0; d < 3; ++d) {
                        Grid cur = oracle::naive_dct2d(channel_grid(trace[t], b, d));
                        Grid prev = oracle::naive_dct2d(channel_grid(trace[t - 1], b, d));
                        for (int u = 0; u < 4; ++u) {
                            for (int v = 0; v < 4; ++v) {
                                if (sb.band(u, v) != band) continue;
                                double diff = cur.at(u, v) - prev.at(u, v);
                                num += diff * diff;
                                den += prev.at(u, v) * prev.at(u, v);
                            }
                        }
                    }
                }
                acc += std::sqrt(num) / std::sqrt(den);
            }
            REQUIRE(std::fabs(got[band] - acc / 3.0) < 1e-9);
        }
    }

    SECTION("degenerate traces are rejected") {
        SpectralBands sb = radial_band_partition(4, 2);
        std::vector<HiddenState> one(1, HiddenState(1, 16, 2, 1.0));
        REQUIRE_THROWS_AS(band_volatility(one, sb), std::invalid_argument);
        std::vector<HiddenState> zeros(2, HiddenState(1, 16, 2, 0.0));
        REQUIRE_THROWS_AS(band_volatility(zeros, sb), std::runtime_error);
        std::vector<HiddenState> wrong_side(2, HiddenState(1, 64, 2, 1.0));
        REQUIRE_THROWS_AS(band_volatility(wrong_side, sb), std::invalid_argument);
    }
}

TEST_CASE("polynomial evaluation") {
    REQUIRE(poly_eval(identity_polynomial(), 0.37) == 0.37);
    Polynomial p{{0.1, 2.0, -1.0}};
    REQUIRE(std::fabs(poly_eval(p, 0.2) - (0.1 + 2.0 * 0.2 - 1.0 * 0.04)) < 1e-15);
    REQUIRE_THROWS_AS(poly_eval(Polynomial{}, 0.1), std::invalid_argument);
    REQUIRE_THROWS_AS(poly_eval(p, std::nan("")), std::invalid_argument);

    // Horner form against a direct power sum
    Rng rng(41);
    Polynomial q{{rng.normal(), rng.normal(), rng.normal(), rng.normal()}};
    for (int i = 0; i < 10; ++i) {
        double d = rng.uniform() * 2.0;
        double direct = 0.0, pw = 1.0;
        for (double c : q.coeffs) {
            direct += c * pw;
            pw *= d;
        }
        REQUIRE(std::fabs(poly_eval(q, d) - direct) < 1e-12);
    }
}

TEST_CASE("psnr") {
    Grid a(8, 0.5), b(8, 0.5);
    REQUIRE(std::isinf(psnr(a, b, 1.0)));

    // uniform offset of 0.01 at peak 1 is exactly 40 dB
    for (double& v : b.v) v += 0.01;
    REQUIRE(std::fabs(psnr(a, b, 1.0) - 40.0) < 1e-12);

    REQUIRE_THROWS_AS(psnr(a, b, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(psnr(a, Grid(4), 1.0), std::invalid_argument);

    // decreases as noise grows
    Grid ref = random_grid(8, 51);
    Grid n1 = ref, n2 = ref;
    Rng rng(52);
    for (size_t i = 0; i < ref.v.size(); ++i) {
        double e = rng.normal();
        n1.v[i] += 0.01 * e;
        n2.v[i] += 0.1 * e;
    }
    REQUIRE(psnr(n1, ref, 4.0) > psnr(n2, ref, 4.0));
}

TEST_CASE("ssim") {
    SECTION("identical grids score exactly one") {
        Grid g = random_grid(8, 61);
        REQUIRE(ssim(g, g) == 1.0);
    }

    SECTION("symmetric in its arguments") {
        Grid a = random_grid(8, 62);
        Grid b = random_grid(8, 63);
        REQUIRE(std::fabs(ssim(a, b) - ssim(b, a)) < 1e-12);
    }

    SECTION("bounded by one") {
        for (uint64_t seed : {71u, 72u, 73u}) {
            Grid a = random_grid(9, seed);
            Grid b = random_grid(9, seed + 100);
            double s = ssim(a, b);
            REQUIRE(s <= 1.0 + 1e-12);
            REQUIRE(s >= -1.0);
        }
    }

    SECTION("constant grids match the closed form") {
        for (auto [p, q] : std::vector<std::pair<double, double>>{{0.5, 0.5}, {1.0, 2.0}, {0.1, 0.9}}) {
            REQUIRE(std::fabs(ssim(Grid(8, p), Grid(8, q)) - oracle::constant_grid_ssim(p, q)) < 1e-12);
        }
    }

    SECTION("degrades with noise") {
        Grid ref = random_grid(8, 64);
        Grid noisy = ref;
        Rng rng(65);
        for (double& v : noisy.v) v += 0.5 * rng.normal();
        REQUIRE(ssim(noisy, ref) < ssim(ref, ref));
    }

    SECTION("window does not fit") {
        REQUIRE_THROWS_AS(ssim(Grid(4), Grid(4)), std::invalid_argument);
    }
}

TEST_CASE("state-level fidelity metrics") {
    Rng rng(81);
    HiddenState ref = random_state(1, 64, 4, rng);
    REQUIRE(std::isinf(psnr_state(ref, ref)));
    REQUIRE(ssim_state(ref, ref) == 1.0);

    HiddenState noisy = ref;
    for (double& v : noisy.data) v += 0.05 * rng.normal();
    double p = psnr_state(noisy, ref);
    REQUIRE(std::isfinite(p));
    REQUIRE(p > 0.0);
    REQUIRE(ssim_state(noisy, ref) < 1.0);

    // too small for the 7x7 window: marked not-a-number rather than an error
    HiddenState tiny(1, 16, 2, 1.0);
    REQUIRE(std::isnan(ssim_state(tiny, tiny)));
}

TEST_CASE("seed derivation separates tags and indices") {
    uint64_t a = derive_seed(42, "alpha", 0);
    REQUIRE(a == derive_seed(42, "alpha", 0));
    REQUIRE(a != derive_seed(42, "alpha", 1));
    REQUIRE(a != derive_seed(42, "beta", 0));
    REQUIRE(a != derive_seed(43, "alpha", 0));
}
