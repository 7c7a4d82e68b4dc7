#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "ditcache/tensor.hpp"

namespace ditcache {

namespace detail {

// Sum of |a[i] - b[i]| and sum of |b[i]| over a strided channel range.
struct L1Sums {
    double diff = 0.0;
    double ref = 0.0;
    size_t count = 0;
};

inline L1Sums l1_sums_channel_range(const HiddenState& a, const HiddenState& b,
                                    int ch_begin, int ch_end) {
    L1Sums s;
    for (int bi = 0; bi < a.batch; ++bi) {
        for (int n = 0; n < a.tokens; ++n) {
            for (int d = ch_begin; d < ch_end; ++d) {
                s.diff += std::abs(a.at(bi, n, d) - b.at(bi, n, d));
                s.ref += std::abs(b.at(bi, n, d));
                ++s.count;
            }
        }
    }
    return s;
}

}  // namespace detail

// Relative L1 change of `current` against `previous`:
// sum(|current - previous|) / sum(|previous|). Mean formulations cancel the
// element count, so plain sums are used. Throws if the reference is all zero.
inline double rel_l1_change(const HiddenState& current, const HiddenState& previous) {
    require_same_shape(current, previous, "rel_l1_change");
    auto s = detail::l1_sums_channel_range(current, previous, 0, current.channels);
    if (s.ref == 0.0) {
        throw std::runtime_error("rel_l1_change: reference state has zero L1 mass");
    }
    return s.diff / s.ref;
}

// Frobenius (elementwise L2) distance between two same-shaped states.
inline double l2_error(const HiddenState& a, const HiddenState& b) {
    require_same_shape(a, b, "l2_error");
    double acc = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

inline double frobenius_norm(const HiddenState& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v * v;
    return std::sqrt(acc);
}

// Orthonormal 2D DCT-II with precomputed cosine tables, applied separably.
// forward(inverse(x)) and inverse(forward(x)) recover x, and the transform
// preserves the Frobenius norm.
class Dct2d {
  public:
    explicit Dct2d(int n) : n_(n) {
        if (n < 1) throw std::invalid_argument("Dct2d: side must be >= 1");
        cos_.assign(static_cast<size_t>(n) * n, 0.0);
        scale_.assign(n, 0.0);
        const double pi = 3.14159265358979323846;
        for (int k = 0; k < n; ++k) {
            scale_[k] = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
            for (int j = 0; j < n; ++j) {
                cos_[static_cast<size_t>(k) * n + j] =
                    std::cos(pi * (2.0 * j + 1.0) * k / (2.0 * n));
            }
        }
    }

    int side() const { return n_; }

    Grid forward(const Grid& g) const {
        check(g);
        Grid rows(n_);
        for (int r = 0; r < n_; ++r) transform_row(&g.v[static_cast<size_t>(r) * n_], &rows.v[static_cast<size_t>(r) * n_], false);
        return transform_cols(rows, false);
    }

    Grid inverse(const Grid& g) const {
        check(g);
        Grid rows(n_);
        for (int r = 0; r < n_; ++r) transform_row(&g.v[static_cast<size_t>(r) * n_], &rows.v[static_cast<size_t>(r) * n_], true);
        return transform_cols(rows, true);
    }

  private:
    void check(const Grid& g) const {
        if (g.side != n_) {
            throw std::invalid_argument("Dct2d: grid side " + std::to_string(g.side) +
                                        " does not match plan side " + std::to_string(n_));
        }
    }

    void transform_row(const double* in, double* out, bool inv) const {
        for (int k = 0; k < n_; ++k) {
            double acc = 0.0;
            if (inv) {
                // x[k] = sum_j s(j) X[j] cos(pi (2k+1) j / 2n)
                for (int j = 0; j < n_; ++j) {
                    acc += scale_[j] * in[j] * cos_[static_cast<size_t>(j) * n_ + k];
                }
            } else {
                for (int j = 0; j < n_; ++j) {
                    acc += in[j] * cos_[static_cast<size_t>(k) * n_ + j];
                }
                acc *= scale_[k];
            }
            out[k] = acc;
        }
    }

    Grid transform_cols(const Grid& g, bool inv) const {
        Grid out(n_);
        std::vector<double> col(n_), res(n_);
        for (int c = 0; c < n_; ++c) {
            for (int r = 0; r < n_; ++r) col[r] = g.at(r, c);
            transform_row(col.data(), res.data(), inv);
            for (int r = 0; r < n_; ++r) out.at(r, c) = res[r];
        }
        return out;
    }

    int n_;
    std::vector<double> cos_;
    std::vector<double> scale_;
};

inline Grid dct2d(const Grid& g) { return Dct2d(g.side).forward(g); }
inline Grid idct2d(const Grid& g) { return Dct2d(g.side).inverse(g); }

// Partition of an n x n coefficient plane into radial frequency bands.
// Coefficient (u, v) lands in band floor(B * r / r_max') with r = sqrt(u^2+v^2)
// and r_max' nudged up so the far corner stays inside the last band.
struct SpectralBands {
    int grid_side = 0;
    int num_bands = 0;
    std::vector<int> band_of;  // row-major (u, v) -> band index
    std::vector<int> counts;   // coefficients per band

    int band(int u, int v) const { return band_of[static_cast<size_t>(u) * grid_side + v]; }
};

inline SpectralBands radial_band_partition(int grid_side, int num_bands) {
    if (grid_side < 1) throw std::invalid_argument("radial_band_partition: grid side must be >= 1");
    if (num_bands < 1) throw std::invalid_argument("radial_band_partition: need at least one band");
    if (num_bands > grid_side) {
        throw std::invalid_argument("radial_band_partition: num_bands " + std::to_string(num_bands) +
                                    " exceeds grid side " + std::to_string(grid_side));
    }
    SpectralBands sb;
    sb.grid_side = grid_side;
    sb.num_bands = num_bands;
    sb.band_of.assign(static_cast<size_t>(grid_side) * grid_side, 0);
    sb.counts.assign(num_bands, 0);
    double r_max = std::sqrt(2.0) * (grid_side - 1);
    double denom = (r_max > 0.0) ? r_max * (1.0 + 1e-12) : 1.0;
    for (int u = 0; u < grid_side; ++u) {
        for (int v = 0; v < grid_side; ++v) {
            double r = std::sqrt(static_cast<double>(u) * u + static_cast<double>(v) * v);
            int b = static_cast<int>(num_bands * (r / denom));
            if (b >= num_bands) b = num_bands - 1;
            sb.band_of[static_cast<size_t>(u) * grid_side + v] = b;
            ++sb.counts[b];
        }
    }
    return sb;
}

// Mean relative L2 step-to-step change of each frequency band's coefficients
// across a trace of states. For each step the per-channel grids are
// transformed, coefficients are pooled per band across batch entries and
// channels, and the per-step relative change ||s_t - s_{t-1}|| / ||s_{t-1}||
// is averaged over transitions.
inline std::vector<double> band_volatility(const std::vector<HiddenState>& trace,
                                           const SpectralBands& bands) {
    if (trace.size() < 2) {
        throw std::invalid_argument("band_volatility: need at least two states, got " +
                                    std::to_string(trace.size()));
    }
    const HiddenState& first = trace.front();
    for (const auto& h : trace) require_same_shape(h, first, "band_volatility");
    int n = first.grid_side();
    if (n != bands.grid_side) {
        throw std::invalid_argument("band_volatility: band partition side " +
                                    std::to_string(bands.grid_side) +
                                    " does not match state grid side " + std::to_string(n));
    }
    Dct2d plan(n);
    size_t steps = trace.size();
    int nb = bands.num_bands;

    // pooled[t][b] holds every coefficient of band b at step t
    std::vector<std::vector<std::vector<double>>> pooled(steps);
    for (size_t t = 0; t < steps; ++t) {
        pooled[t].assign(nb, {});
        for (int b = 0; b < nb; ++b) {
            pooled[t][b].reserve(static_cast<size_t>(bands.counts[b]) * first.batch * first.channels);
        }
        for (int bi = 0; bi < first.batch; ++bi) {
            for (int d = 0; d < first.channels; ++d) {
                Grid coeff = plan.forward(channel_grid(trace[t], bi, d));
                for (int u = 0; u < n; ++u) {
                    for (int v = 0; v < n; ++v) {
                        pooled[t][bands.band(u, v)].push_back(coeff.at(u, v));
                    }
                }
            }
        }
    }

    std::vector<double> delta(nb, 0.0);
    for (int b = 0; b < nb; ++b) {
        double acc = 0.0;
        for (size_t t = 1; t < steps; ++t) {
            double num = 0.0, den = 0.0;
            const auto& cur = pooled[t][b];
            const auto& prev = pooled[t - 1][b];
            for (size_t i = 0; i < cur.size(); ++i) {
                double d = cur[i] - prev[i];
                num += d * d;
                den += prev[i] * prev[i];
            }
            if (den == 0.0) {
                throw std::runtime_error("band_volatility: band " + std::to_string(b) +
                                         " has zero reference energy at step " + std::to_string(t - 1));
            }
            acc += std::sqrt(num) / std::sqrt(den);
        }
        delta[b] = acc / static_cast<double>(steps - 1);
    }
    return delta;
}

// Polynomial in the per-step relative change, coefficients in ascending
// degree. The default rescaling is the identity.
struct Polynomial {
    std::vector<double> coeffs;
};

inline Polynomial identity_polynomial() { return Polynomial{{0.0, 1.0}}; }

inline double poly_eval(const Polynomial& p, double d) {
    if (p.coeffs.empty()) throw std::invalid_argument("poly_eval: empty coefficient list");
    if (!std::isfinite(d)) throw std::invalid_argument("poly_eval: non-finite argument");
    double acc = 0.0;
    for (size_t i = p.coeffs.size(); i-- > 0;) {
        acc = acc * d + p.coeffs[i];
    }
    return acc;
}

// Marker returned by psnr when the two inputs are exactly equal.
inline double psnr_infinity() { return std::numeric_limits<double>::infinity(); }

inline double psnr(const Grid& a, const Grid& b, double peak) {
    if (a.side != b.side) throw std::invalid_argument("psnr: grid sides differ");
    if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
    double mse = 0.0;
    for (size_t i = 0; i < a.v.size(); ++i) {
        double d = a.v[i] - b.v[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.v.size());
    if (mse == 0.0) return psnr_infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

// Mean structural similarity over all fully-contained 7x7 windows with a
// uniform window, stabilizers C1 = (0.01 R)^2 and C2 = (0.03 R)^2 where R is
// the joint value range of both inputs. Using the joint range keeps the
// measure exactly symmetric in its arguments.
inline double ssim(const Grid& a, const Grid& b) {
    if (a.side != b.side) throw std::invalid_argument("ssim: grid sides differ");
    const int w = 7;
    if (a.side < w) {
        throw std::invalid_argument("ssim: grid side " + std::to_string(a.side) +
                                    " is smaller than the 7x7 window");
    }
    double lo = a.v[0], hi = a.v[0];
    for (double v : a.v) { lo = std::min(lo, v); hi = std::max(hi, v); }
    for (double v : b.v) { lo = std::min(lo, v); hi = std::max(hi, v); }
    double range = hi - lo;
    if (range == 0.0) return 1.0;  // both grids are the same constant
    double c1 = (0.01 * range) * (0.01 * range);
    double c2 = (0.03 * range) * (0.03 * range);

    const double inv_n = 1.0 / (w * w);
    double total = 0.0;
    int windows = 0;
    for (int r0 = 0; r0 + w <= a.side; ++r0) {
        for (int c0 = 0; c0 + w <= a.side; ++c0) {
            double sa = 0.0, sb = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int r = r0; r < r0 + w; ++r) {
                for (int c = c0; c < c0 + w; ++c) {
                    double x = a.at(r, c), y = b.at(r, c);
                    sa += x; sb += y;
                    saa += x * x; sbb += y * y; sab += x * y;
                }
            }
            double mu_a = sa * inv_n, mu_b = sb * inv_n;
            double var_a = saa * inv_n - mu_a * mu_a;
            double var_b = sbb * inv_n - mu_b * mu_b;
            double cov = sab * inv_n - mu_a * mu_b;
            double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++windows;
        }
    }
    return total / windows;
}

// Report-level fidelity numbers for whole states: metrics are computed on the
// per-channel spatial grids and averaged across batch entries and channels.
// The PSNR peak is the value range of the reference state (1.0 when the
// reference is constant); channel pairs with zero error are excluded from the
// PSNR average unless every pair is exact, in which case the infinity marker
// is returned.
inline double psnr_state(const HiddenState& test, const HiddenState& ref) {
    require_same_shape(test, ref, "psnr_state");
    double lo = ref.data[0], hi = ref.data[0];
    for (double v : ref.data) { lo = std::min(lo, v); hi = std::max(hi, v); }
    double peak = hi - lo;
    if (peak <= 0.0) peak = 1.0;
    double total = 0.0;
    int counted = 0;
    for (int b = 0; b < ref.batch; ++b) {
        for (int d = 0; d < ref.channels; ++d) {
            double v = psnr(channel_grid(test, b, d), channel_grid(ref, b, d), peak);
            if (std::isinf(v)) continue;
            total += v;
            ++counted;
        }
    }
    if (counted == 0) return psnr_infinity();
    return total / counted;
}

inline double ssim_state(const HiddenState& test, const HiddenState& ref) {
    require_same_shape(test, ref, "ssim_state");
    if (ref.grid_side() < 7) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    int counted = 0;
    for (int b = 0; b < ref.batch; ++b) {
        for (int d = 0; d < ref.channels; ++d) {
            total += ssim(channel_grid(test, b, d), channel_grid(ref, b, d));
            ++counted;
        }
    }
    return total / counted;
}

}  // namespace ditcache
