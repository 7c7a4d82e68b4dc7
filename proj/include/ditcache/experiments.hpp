#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ditcache/cache_policy.hpp"
#include "ditcache/numerics.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/sampler.hpp"
#include "ditcache/toy_dit.hpp"

namespace ditcache {

// Aggregate numbers for one cached run measured against a reference run that
// computed everything. A step counts as a hit when at least one block was
// skipped. The speedup proxy charges every block evaluation one unit and
// residual reuse nothing.
struct RunReport {
    int num_steps = 0;
    int hit_count = 0;
    int miss_count = 0;
    double hit_rate = 0.0;
    long total_block_evals = 0;
    long blocks_skipped = 0;
    double speedup_proxy = 1.0;
    double l2_vs_reference = 0.0;
    double psnr_vs_reference = 0.0;
    double ssim_vs_reference = 0.0;
};

inline RunReport build_run_report(const SamplerResult& run, const HiddenState& reference_final,
                                  int num_blocks) {
    RunReport r;
    r.num_steps = static_cast<int>(run.blocks_computed.size());
    for (int c : run.blocks_computed) {
        if (c < num_blocks) ++r.hit_count; else ++r.miss_count;
    }
    r.hit_rate = r.num_steps > 0 ? static_cast<double>(r.hit_count) / r.num_steps : 0.0;
    r.total_block_evals = run.total_block_evals();
    long budget = static_cast<long>(r.num_steps) * num_blocks;
    r.blocks_skipped = budget - r.total_block_evals;
    if (r.total_block_evals <= 0) {
        throw std::runtime_error("build_run_report: run evaluated no blocks at all");
    }
    r.speedup_proxy = static_cast<double>(budget) / static_cast<double>(r.total_block_evals);
    r.l2_vs_reference = l2_error(run.final_sample, reference_final);
    r.psnr_vs_reference = psnr_state(run.final_sample, reference_final);
    r.ssim_vs_reference = ssim_state(run.final_sample, reference_final);
    return r;
}

// Controller that replays a fixed per-step override schedule; steps without
// an entry compute everything.
class ForcedOverrideController : public StepController {
  public:
    explicit ForcedOverrideController(int num_steps) : schedule_(num_steps) {}

    void set(int t, BlockOverride o) {
        schedule_.at(static_cast<size_t>(t)) = std::move(o);
    }

    StepDirective on_step(int t, const HiddenState&, const TimestepEmbedding&,
                          const HiddenState&) override {
        const auto& entry = schedule_.at(static_cast<size_t>(t));
        if (entry) return StepDirective::with_overrides(*entry);
        return StepDirective::compute();
    }

  private:
    std::vector<std::optional<BlockOverride>> schedule_;
};

// Reuse directive for a 0-based set of block indices.
inline BlockOverride reuse_blocks(int num_blocks, const std::vector<int>& blocks) {
    BlockOverride o(num_blocks, BlockDirective::Compute);
    for (int b : blocks) {
        if (b < 0 || b >= num_blocks) {
            throw std::invalid_argument("reuse_blocks: block index " + std::to_string(b) +
                                        " out of range");
        }
        o[static_cast<size_t>(b)] = BlockDirective::ReuseFromPreviousTimestep;
    }
    return o;
}

inline BlockOverride reuse_all(int num_blocks) {
    return BlockOverride(num_blocks, BlockDirective::ReuseFromPreviousTimestep);
}

// Mean final-sample error caused by reusing the whole backbone at exactly one
// step, as a function of that step's position.
struct SensitivityCurve {
    std::vector<int> timesteps;
    std::vector<double> mean_error;
    int num_samples = 0;
};

inline SensitivityCurve temporal_sensitivity(const ModelWeights& w, int num_samples,
                                             uint64_t base_seed) {
    if (num_samples < 1) throw std::invalid_argument("temporal_sensitivity: num_samples must be >= 1");
    const int T = w.config.num_steps;
    const int L = w.config.num_blocks;
    SensitivityCurve curve;
    curve.num_samples = num_samples;
    for (int t = 1; t < T; ++t) curve.timesteps.push_back(t);
    curve.mean_error.assign(curve.timesteps.size(), 0.0);

    for (int s = 0; s < num_samples; ++s) {
        uint64_t noise = derive_seed(base_seed, "sensitivity-noise", static_cast<uint64_t>(s));
        NoCacheController nc;
        SamplerResult ref = sampler_run(w, nc, noise);
        for (size_t i = 0; i < curve.timesteps.size(); ++i) {
            ForcedOverrideController ctl(T);
            ctl.set(curve.timesteps[i], reuse_all(L));
            SamplerResult forced = sampler_run(w, ctl, noise);
            curve.mean_error[i] += l2_error(forced.final_sample, ref.final_sample);
        }
    }
    for (double& e : curve.mean_error) e /= num_samples;
    return curve;
}

// Final-sample error of caching k blocks at every step after the first,
// comparing consecutive block runs against arbitrary subsets of the same
// size. Trials pair the two variants on a common noise seed.
struct CascadeRow {
    int k = 0;
    double mean_consecutive = 0.0;
    double mean_random = 0.0;
};

struct CascadeTable {
    std::vector<CascadeRow> rows;
    int trials = 0;
};

inline CascadeTable cascade_study(const ModelWeights& w, const std::vector<int>& k_values,
                                  int trials, uint64_t base_seed) {
    if (trials < 1) throw std::invalid_argument("cascade_study: trials must be >= 1");
    if (k_values.empty()) throw std::invalid_argument("cascade_study: no k values given");
    const int T = w.config.num_steps;
    const int L = w.config.num_blocks;
    for (int k : k_values) {
        if (k < 0 || k > L) {
            throw std::invalid_argument("cascade_study: k = " + std::to_string(k) +
                                        " outside [0, " + std::to_string(L) + "]");
        }
    }

    CascadeTable table;
    table.trials = trials;
    table.rows.reserve(k_values.size());
    for (int k : k_values) table.rows.push_back({k, 0.0, 0.0});

    auto run_with_set = [&](const std::vector<int>& blocks, uint64_t noise) {
        ForcedOverrideController ctl(T);
        BlockOverride o = reuse_blocks(L, blocks);
        for (int t = 1; t < T; ++t) ctl.set(t, o);
        return sampler_run(w, ctl, noise);
    };

    for (int trial = 0; trial < trials; ++trial) {
        uint64_t noise = derive_seed(base_seed, "cascade-noise", static_cast<uint64_t>(trial));
        NoCacheController nc;
        SamplerResult ref = sampler_run(w, nc, noise);
        Rng pick_start(derive_seed(base_seed, "cascade-start", static_cast<uint64_t>(trial)));
        Rng pick_subset(derive_seed(base_seed, "cascade-subset", static_cast<uint64_t>(trial)));

        for (size_t i = 0; i < k_values.size(); ++i) {
            int k = k_values[i];
            if (k == 0) continue;  // empty set: both variants equal the reference

            int start = pick_start.uniform_int(0, L - k);
            std::vector<int> consecutive(k);
            std::iota(consecutive.begin(), consecutive.end(), start);

            std::vector<int> random_set;
            if (k == 1) {
                // a single cached block has no notion of adjacency; both
                // variants draw from the same distribution, so share the draw
                random_set = consecutive;
            } else if (k == L) {
                random_set.resize(L);
                std::iota(random_set.begin(), random_set.end(), 0);
            } else {
                std::vector<int> pool(L);
                std::iota(pool.begin(), pool.end(), 0);
                for (int j = 0; j < k; ++j) {
                    int pickj = pick_subset.uniform_int(j, L - 1);
                    std::swap(pool[j], pool[pickj]);
                }
                random_set.assign(pool.begin(), pool.begin() + k);
                std::sort(random_set.begin(), random_set.end());
            }

            SamplerResult rc = run_with_set(consecutive, noise);
            table.rows[i].mean_consecutive += l2_error(rc.final_sample, ref.final_sample);
            SamplerResult rr = run_with_set(random_set, noise);
            table.rows[i].mean_random += l2_error(rr.final_sample, ref.final_sample);
        }
    }
    for (auto& row : table.rows) {
        row.mean_consecutive /= trials;
        row.mean_random /= trials;
    }
    return table;
}

// Step-to-step volatility of one block's output, separated into radial
// frequency bands of the token grid.
struct VolatilityRow {
    int band = 0;
    int coefficients = 0;
    double delta = 0.0;
};

inline std::vector<VolatilityRow> spectral_volatility_study(const ModelWeights& w, int block,
                                                            int num_bands, uint64_t noise_seed) {
    const int L = w.config.num_blocks;
    if (block < 1 || block > L) {
        throw std::invalid_argument("spectral_volatility_study: block " + std::to_string(block) +
                                    " outside [1, " + std::to_string(L) + "]");
    }
    NoCacheController nc;
    SamplerResult ref = sampler_run(w, nc, derive_seed(noise_seed, "spectral-noise"),
                                    {.record_block_states = true});
    std::vector<HiddenState> trace;
    trace.reserve(ref.block_states.size());
    for (const auto& states : ref.block_states) {
        trace.push_back(states.at(static_cast<size_t>(block - 1)));
    }
    int side = trace.front().grid_side();
    SpectralBands bands = radial_band_partition(side, num_bands);
    std::vector<double> delta = band_volatility(trace, bands);
    std::vector<VolatilityRow> rows;
    rows.reserve(delta.size());
    for (int b = 0; b < num_bands; ++b) {
        rows.push_back({b, bands.counts[b], delta[b]});
    }
    return rows;
}

// All eight on/off combinations of the three policy refinements, evaluated on
// one shared noise seed against one shared reference run.
struct AblationRow {
    bool tads = false;
    bool ceb = false;
    bool fdc = false;
    RunReport report;
};

inline std::vector<AblationRow> ablation_grid(const ModelWeights& w, const PolicyConfig& base,
                                              uint64_t noise_seed) {
    NoCacheController nc;
    SamplerResult ref = sampler_run(w, nc, noise_seed);

    // base row first, single refinements, pairs, then everything on
    const bool combos[8][3] = {
        {false, false, false}, {true, false, false}, {false, true, false}, {false, false, true},
        {true, true, false},   {true, false, true},  {false, true, true},  {true, true, true},
    };
    std::vector<AblationRow> rows;
    rows.reserve(8);
    for (const auto& c : combos) {
        PolicyConfig cfg = base;
        cfg.enable_tads = c[0];
        cfg.enable_ceb = c[1];
        cfg.enable_fdc = c[2];
        PolicyController ctl(cfg);
        SamplerResult run = sampler_run(w, ctl, noise_seed);
        AblationRow row;
        row.tads = c[0];
        row.ceb = c[1];
        row.fdc = c[2];
        row.report = build_run_report(run, ref.final_sample, w.config.num_blocks);
        rows.push_back(std::move(row));
    }
    return rows;
}

struct SweepRow {
    double tau = 0.0;
    RunReport report;
};

inline std::vector<SweepRow> threshold_sweep(const ModelWeights& w, const PolicyConfig& base,
                                             const std::vector<double>& tau_values,
                                             uint64_t noise_seed) {
    if (tau_values.empty()) throw std::invalid_argument("threshold_sweep: no thresholds given");
    NoCacheController nc;
    SamplerResult ref = sampler_run(w, nc, noise_seed);
    std::vector<SweepRow> rows;
    rows.reserve(tau_values.size());
    for (double tau : tau_values) {
        PolicyConfig cfg = base;
        cfg.tau_base = tau;
        PolicyController ctl(cfg);
        SamplerResult run = sampler_run(w, ctl, noise_seed);
        rows.push_back({tau, build_run_report(run, ref.final_sample, w.config.num_blocks)});
    }
    return rows;
}

// Measured error of c consecutive whole-backbone reuse steps after a fixed
// anchor, against the product-of-block-gains bound. When the first bound
// check fails the block gain estimate is retried with four times the probes
// before the row is marked as violated.
struct ErrorGrowthRow {
    int c = 0;
    double measured = 0.0;
    double bound = 0.0;
    bool bound_ok = false;
    int probes_used = 0;
};

struct ErrorGrowthTable {
    std::vector<ErrorGrowthRow> rows;
    std::optional<double> fitted_slope;  // log-log growth order over c >= 1
    double gain_product = 0.0;           // product of per-block gain estimates
    int anchor = 0;
};

inline ErrorGrowthTable error_growth_study(const ModelWeights& w, const std::vector<int>& c_values,
                                           int anchor, int probes, uint64_t base_seed) {
    const int T = w.config.num_steps;
    const int L = w.config.num_blocks;
    if (c_values.empty()) throw std::invalid_argument("error_growth_study: no c values given");
    if (anchor < 0 || anchor >= T) {
        throw std::invalid_argument("error_growth_study: anchor outside [0, " + std::to_string(T) + ")");
    }
    for (int c : c_values) {
        if (c < 0 || anchor + c > T - 1) {
            throw std::invalid_argument("error_growth_study: c = " + std::to_string(c) +
                                        " runs past the last step from anchor " + std::to_string(anchor));
        }
    }
    if (probes < 1) throw std::invalid_argument("error_growth_study: probes must be >= 1");

    std::vector<TimestepEmbedding> embeddings;
    for (int t = 0; t < T; ++t) embeddings.push_back(timestep_embedding(t, w));

    auto gain_product_for = [&](int p) {
        double prod = 1.0;
        for (int block = 1; block <= L; ++block) {
            prod *= lipschitz_estimate(w, block, embeddings, p, 1e-3,
                                       derive_seed(base_seed, "errgrowth-probe"));
        }
        return prod;
    };
    double gain = gain_product_for(probes);

    NoCacheController nc;
    uint64_t noise = derive_seed(base_seed, "errgrowth-noise");
    SamplerResult ref = sampler_run(w, nc, noise, {.record_outputs = true});

    ErrorGrowthTable table;
    table.anchor = anchor;
    table.gain_product = gain;

    double escalated_gain = 0.0;
    bool escalated = false;
    for (int c : c_values) {
        ErrorGrowthRow row;
        row.c = c;
        row.probes_used = probes;
        if (c == 0) {
            row.measured = 0.0;
            row.bound = 0.0;
            row.bound_ok = true;
            table.rows.push_back(row);
            continue;
        }
        ForcedOverrideController ctl(T);
        for (int t = anchor + 1; t <= anchor + c; ++t) ctl.set(t, reuse_all(L));
        SamplerResult forced = sampler_run(w, ctl, noise, {.record_outputs = true});
        row.measured = l2_error(forced.outputs[static_cast<size_t>(anchor + c)],
                                ref.outputs[static_cast<size_t>(anchor + c)]);
        double drift = 0.0;
        for (int j = 1; j <= c; ++j) {
            drift = std::max(drift, l2_error(ref.trajectory[static_cast<size_t>(anchor + j)],
                                             ref.trajectory[static_cast<size_t>(anchor + j - 1)]));
        }
        row.bound = static_cast<double>(c) * gain * drift;
        row.bound_ok = row.measured <= row.bound;
        if (!row.bound_ok) {
            if (!escalated) {
                escalated_gain = gain_product_for(4 * probes);
                escalated = true;
            }
            row.bound = static_cast<double>(c) * escalated_gain * drift;
            row.bound_ok = row.measured <= row.bound;
            row.probes_used = 4 * probes;
        }
        table.rows.push_back(row);
    }

    // least-squares slope of ln(measured) against ln(c)
    std::vector<double> xs, ys;
    for (const auto& row : table.rows) {
        if (row.c >= 1 && row.measured > 0.0) {
            xs.push_back(std::log(static_cast<double>(row.c)));
            ys.push_back(std::log(row.measured));
        }
    }
    if (xs.size() >= 2) {
        double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
        double my = std::accumulate(ys.begin(), ys.end(), 0.0) / ys.size();
        double num = 0.0, den = 0.0;
        for (size_t i = 0; i < xs.size(); ++i) {
            num += (xs[i] - mx) * (ys[i] - my);
            den += (xs[i] - mx) * (xs[i] - mx);
        }
        if (den > 0.0) table.fitted_slope = num / den;
    }
    return table;
}

// Monte-Carlo comparison of the single-threshold gate against the two-band
// gate on synthetic band changes. The bands are folded Gaussians with
// correlation rho between the underlying normals, scaled so tau is one
// standard deviation. A false positive is a gate pass whose worst band moved
// more than 1.2 tau.
struct FalsePositiveRow {
    double rho = 0.0;
    double fp_single = 0.0;
    double fp_dual = 0.0;
    int trials = 0;
};

inline std::vector<FalsePositiveRow> fdc_false_positive_study(const std::vector<double>& rho_values,
                                                              int trials, double tau,
                                                              double gamma_low, double gamma_high,
                                                              uint64_t base_seed) {
    if (rho_values.empty()) throw std::invalid_argument("fdc_false_positive_study: no rho values");
    if (trials < 1) throw std::invalid_argument("fdc_false_positive_study: trials must be >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("fdc_false_positive_study: tau must be positive");
    for (double rho : rho_values) {
        if (!(rho >= 0.0) || !(rho <= 1.0)) {
            throw std::invalid_argument("fdc_false_positive_study: rho must lie in [0, 1]");
        }
    }
    std::vector<FalsePositiveRow> rows;
    rows.reserve(rho_values.size());
    for (size_t i = 0; i < rho_values.size(); ++i) {
        double rho = rho_values[i];
        Rng rng(derive_seed(base_seed, "fdcfp", static_cast<uint64_t>(i)));
        long fp_single = 0, fp_dual = 0;
        for (int trial = 0; trial < trials; ++trial) {
            double z1 = rng.normal();
            double z2 = rng.normal();
            double delta_low = std::fabs(z1) * tau;
            double delta_high = std::fabs(rho * z1 + std::sqrt(1.0 - rho * rho) * z2) * tau;
            bool bad = std::max(delta_low, delta_high) > 1.2 * tau;
            if (!bad) continue;
            if (0.5 * (delta_low + delta_high) <= tau) ++fp_single;
            if (delta_low <= tau * gamma_low && delta_high <= tau * gamma_high) ++fp_dual;
        }
        rows.push_back({rho, static_cast<double>(fp_single) / trials,
                        static_cast<double>(fp_dual) / trials, trials});
    }
    return rows;
}

// Signal-to-noise ratio of a linear-beta forward corruption schedule,
// commonly used to judge which steps tolerate approximation. Decreasing in t.
inline std::vector<double> snr_profile(int num_steps) {
    if (num_steps < 1) throw std::invalid_argument("snr_profile: num_steps must be >= 1");
    std::vector<double> snr(num_steps);
    double alpha_bar = 1.0;
    for (int t = 0; t < num_steps; ++t) {
        double beta = 1e-4 + (0.02 - 1e-4) * (num_steps == 1 ? 0.0 : static_cast<double>(t) / (num_steps - 1));
        alpha_bar *= (1.0 - beta);
        snr[t] = alpha_bar / (1.0 - alpha_bar);
    }
    return snr;
}

}  // namespace ditcache
