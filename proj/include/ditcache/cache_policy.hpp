#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ditcache/numerics.hpp"
#include "ditcache/sampler.hpp"
#include "ditcache/tensor.hpp"
#include "ditcache/toy_dit.hpp"

namespace ditcache {

struct PolicyConfig {
    double tau_base = 0.6;
    double s_min = 0.5;
    double s_max = 1.5;
    int c_max = 2;
    double split_ratio = 0.5;
    double gamma_low = 0.8;
    double gamma_high = 1.5;
    Polynomial poly = identity_polynomial();
    bool enable_tads = true;
    bool enable_ceb = true;
    bool enable_fdc = true;
    int num_steps = 20;

    void validate() const {
        if (!(tau_base >= 0.0) || !std::isfinite(tau_base)) {
            throw std::invalid_argument("policy.tau_base must be finite and >= 0");
        }
        if (!(s_min > 0.0) || !std::isfinite(s_min)) {
            throw std::invalid_argument("policy.s_min must be finite and > 0");
        }
        if (!(s_max >= s_min) || !std::isfinite(s_max)) {
            throw std::invalid_argument("policy.s_max must be finite and >= policy.s_min");
        }
        if (c_max < 0) throw std::invalid_argument("policy.c_max must be >= 0");
        if (!(split_ratio > 0.0) || !(split_ratio < 1.0)) {
            throw std::invalid_argument("policy.split_ratio must lie strictly between 0 and 1");
        }
        if (!(gamma_low > 0.0) || !std::isfinite(gamma_low)) {
            throw std::invalid_argument("policy.gamma_low must be finite and > 0");
        }
        if (!(gamma_high > 0.0) || !std::isfinite(gamma_high)) {
            throw std::invalid_argument("policy.gamma_high must be finite and > 0");
        }
        if (poly.coeffs.empty()) throw std::invalid_argument("policy.poly must have coefficients");
        for (double c : poly.coeffs) {
            if (!std::isfinite(c)) throw std::invalid_argument("policy.poly has a non-finite coefficient");
        }
        if (num_steps < 2) throw std::invalid_argument("policy.num_steps must be >= 2");
    }
};

// Mutable per-trajectory policy memory.
struct CacheState {
    std::optional<HiddenState> residual;        // backbone output minus input, last full step
    std::optional<HiddenState> prev_modulated;  // modulated input of the previous step
    double accumulated = 0.0;                   // rescaled distance since the last full step
    int consecutive = 0;                        // cache hits since the last full step
};

enum class Verdict { Hit, Miss };

enum class DecisionReason {
    Endpoint,          // first or last step, always computed
    NoResidual,        // nothing stored yet
    CebExhausted,      // consecutive-hit budget spent
    DistanceExceeded,  // accumulated distance reached the threshold
    FdcLowFailed,      // low-frequency band moved too much
    FdcHighFailed,     // high-frequency band moved too much
    Hit,
};

inline const char* reason_name(DecisionReason r) {
    switch (r) {
        case DecisionReason::Endpoint: return "endpoint";
        case DecisionReason::NoResidual: return "no_residual";
        case DecisionReason::CebExhausted: return "ceb_exhausted";
        case DecisionReason::DistanceExceeded: return "distance_exceeded";
        case DecisionReason::FdcLowFailed: return "fdc_low_failed";
        case DecisionReason::FdcHighFailed: return "fdc_high_failed";
        case DecisionReason::Hit: return "hit";
    }
    return "unknown";
}

// Full audit record of one step's decision. accumulated_after holds the
// accumulated distance after this step's polynomial update but before any
// reset a following full compute performs. The band changes are present only
// when the frequency gate was actually evaluated.
struct StepDecision {
    int t = 0;
    Verdict verdict = Verdict::Miss;
    DecisionReason reason = DecisionReason::Endpoint;
    double scale = 1.0;
    double tau_eff = 0.0;
    std::optional<double> distance;
    double accumulated_after = 0.0;
    std::optional<double> delta_low;
    std::optional<double> delta_high;
};

// Cosine timestep scaling: smallest at the trajectory ends, largest in the
// middle.
inline double tads_scale(int t, int num_steps, double s_min, double s_max) {
    if (num_steps < 1) throw std::invalid_argument("tads_scale: num_steps must be >= 1");
    if (t < 0 || t >= num_steps) {
        throw std::invalid_argument("tads_scale: step " + std::to_string(t) + " outside [0, " +
                                    std::to_string(num_steps) + ")");
    }
    if (!(s_min <= s_max)) throw std::invalid_argument("tads_scale: s_min must not exceed s_max");
    const double two_pi = 2.0 * 3.14159265358979323846;
    double phase = two_pi * static_cast<double>(t) / static_cast<double>(num_steps);
    return s_min + (s_max - s_min) * (1.0 - std::cos(phase)) / 2.0;
}

inline double effective_threshold(double tau_base, double scale, bool enable_tads) {
    return enable_tads ? tau_base * scale : tau_base;
}

inline bool ceb_allows(int consecutive, int c_max, bool enable_ceb) {
    return !enable_ceb || consecutive < c_max;
}

struct FdcResult {
    double delta_low = 0.0;
    double delta_high = 0.0;
    bool pass_low = false;
    bool pass_high = false;
};

// Split channels at floor(split_ratio * D) and compare the relative L1 change
// of each band against its own slack factor on the effective threshold. The
// low band gets the strict factor, the high band the lenient one.
inline FdcResult fdc_check(const HiddenState& m_t, const HiddenState& m_prev,
                           const PolicyConfig& cfg, double tau_eff) {
    require_same_shape(m_t, m_prev, "fdc_check");
    int d = m_t.channels;
    int split = static_cast<int>(std::floor(cfg.split_ratio * d));
    if (split < 1 || split >= d) {
        throw std::invalid_argument("fdc_check: split_ratio " + std::to_string(cfg.split_ratio) +
                                    " leaves an empty channel band for " + std::to_string(d) +
                                    " channels");
    }
    auto low = detail::l1_sums_channel_range(m_t, m_prev, 0, split);
    auto high = detail::l1_sums_channel_range(m_t, m_prev, split, d);
    if (low.ref == 0.0) throw std::runtime_error("fdc_check: low band of the reference has zero L1 mass");
    if (high.ref == 0.0) throw std::runtime_error("fdc_check: high band of the reference has zero L1 mass");
    FdcResult r;
    r.delta_low = low.diff / low.ref;
    r.delta_high = high.diff / high.ref;
    r.pass_low = r.delta_low <= tau_eff * cfg.gamma_low;
    r.pass_high = r.delta_high <= tau_eff * cfg.gamma_high;
    return r;
}

struct DistanceUpdate {
    double distance = 0.0;
    double accumulated = 0.0;
};

// d_t from the modulated inputs, pushed through the rescaling polynomial and
// added to the running total.
inline DistanceUpdate accumulate_distance(double accumulated_prev, const HiddenState& m_t,
                                          const HiddenState& m_prev, const Polynomial& poly) {
    DistanceUpdate u;
    u.distance = rel_l1_change(m_t, m_prev);
    u.accumulated = accumulated_prev + poly_eval(poly, u.distance);
    return u;
}

// One policy step. Updates the accumulated distance from the new modulated
// input, then walks the gates in a fixed order:
//   endpoint -> residual present -> consecutive budget -> accumulated
//   distance -> low band -> high band.
// The returned state always carries m_t as the new comparison anchor; a hit
// additionally bumps the consecutive counter. Distance accumulation never
// resets here; only update_after_full does that.
inline std::pair<StepDecision, CacheState> decide(int t, const CacheState& state,
                                                  const HiddenState& m_t,
                                                  const PolicyConfig& cfg) {
    cfg.validate();
    if (t < 0 || t >= cfg.num_steps) {
        throw std::invalid_argument("decide: step " + std::to_string(t) + " outside [0, " +
                                    std::to_string(cfg.num_steps) + ")");
    }
    StepDecision dec;
    dec.t = t;
    dec.scale = tads_scale(t, cfg.num_steps, cfg.s_min, cfg.s_max);
    dec.tau_eff = effective_threshold(cfg.tau_base, dec.scale, cfg.enable_tads);

    CacheState next = state;
    if (state.prev_modulated) {
        DistanceUpdate u = accumulate_distance(state.accumulated, m_t, *state.prev_modulated, cfg.poly);
        dec.distance = u.distance;
        next.accumulated = u.accumulated;
    }
    dec.accumulated_after = next.accumulated;

    if (t == 0 || t == cfg.num_steps - 1) {
        dec.reason = DecisionReason::Endpoint;
    } else if (!state.residual) {
        dec.reason = DecisionReason::NoResidual;
    } else if (!ceb_allows(state.consecutive, cfg.c_max, cfg.enable_ceb)) {
        dec.reason = DecisionReason::CebExhausted;
    } else {
        if (!state.prev_modulated) {
            throw std::runtime_error("decide: state carries a residual but no previous modulated "
                                     "input to compare against");
        }
        std::optional<FdcResult> fdc;
        if (cfg.enable_fdc) {
            fdc = fdc_check(m_t, *state.prev_modulated, cfg, dec.tau_eff);
            dec.delta_low = fdc->delta_low;
            dec.delta_high = fdc->delta_high;
        }
        if (!(next.accumulated < dec.tau_eff)) {
            dec.reason = DecisionReason::DistanceExceeded;
        } else if (fdc && !fdc->pass_low) {
            dec.reason = DecisionReason::FdcLowFailed;
        } else if (fdc && !fdc->pass_high) {
            dec.reason = DecisionReason::FdcHighFailed;
        } else {
            dec.reason = DecisionReason::Hit;
            dec.verdict = Verdict::Hit;
            ++next.consecutive;
        }
    }
    next.prev_modulated = m_t;
    return {dec, std::move(next)};
}

inline HiddenState apply_cache(const HiddenState& h0, const HiddenState& residual) {
    require_same_shape(h0, residual, "apply_cache");
    return add(h0, residual);
}

// Store the fresh whole-backbone residual and clear the hit bookkeeping.
inline CacheState update_after_full(CacheState state, const HiddenState& h0,
                                    const HiddenState& output) {
    require_same_shape(h0, output, "update_after_full");
    state.residual = sub(output, h0);
    state.accumulated = 0.0;
    state.consecutive = 0;
    return state;
}

// Sampler hook running the adaptive policy: hits synthesize the backbone
// output from the stored residual at zero block cost, misses fall back to a
// full compute, and every full compute refreshes the residual.
class PolicyController : public StepController {
  public:
    explicit PolicyController(PolicyConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

    StepDirective on_step(int t, const HiddenState& h0, const TimestepEmbedding&,
                          const HiddenState& modulated) override {
        auto [dec, next] = decide(t, state_, modulated, cfg_);
        state_ = std::move(next);
        trace_.push_back(dec);
        if (dec.verdict == Verdict::Hit) {
            return StepDirective::synthesize(apply_cache(h0, *state_.residual), 0);
        }
        return StepDirective::compute();
    }

    void after_full_compute(int, const HiddenState& h0, const HiddenState& output) override {
        state_ = update_after_full(std::move(state_), h0, output);
    }

    const PolicyConfig& config() const { return cfg_; }
    const CacheState& state() const { return state_; }
    const std::vector<StepDecision>& trace() const { return trace_; }

  private:
    PolicyConfig cfg_;
    CacheState state_;
    std::vector<StepDecision> trace_;
};

// Whole-backbone residual reuse on a fixed cadence: one full compute, then
// `interval` reuse steps, repeating.
class FixedIntervalController : public StepController {
  public:
    explicit FixedIntervalController(int interval) : interval_(interval) {
        if (interval < 0) throw std::invalid_argument("FixedIntervalController: interval must be >= 0");
    }

    StepDirective on_step(int t, const HiddenState& h0, const TimestepEmbedding&,
                          const HiddenState&) override {
        if (t % (interval_ + 1) == 0 || !residual_) {
            return StepDirective::compute();
        }
        return StepDirective::synthesize(apply_cache(h0, *residual_), 0);
    }

    void after_full_compute(int, const HiddenState& h0, const HiddenState& output) override {
        residual_ = sub(output, h0);
    }

  private:
    int interval_;
    std::optional<HiddenState> residual_;
};

// Proxy baseline: always evaluates the first block, reuses the rest of the
// backbone whenever the first block's output moved less than a flat
// threshold. Accounts one block evaluation on a hit.
class FirstBlockProxyController : public StepController {
  public:
    FirstBlockProxyController(const ModelWeights& weights, double threshold)
        : weights_(&weights), threshold_(threshold) {
        if (!(threshold >= 0.0) || !std::isfinite(threshold)) {
            throw std::invalid_argument("FirstBlockProxyController: threshold must be finite and >= 0");
        }
    }

    StepDirective on_step(int t, const HiddenState& h0, const TimestepEmbedding& e,
                          const HiddenState&) override {
        (void)t;
        HiddenState b1 = block_forward(h0, 1, e, *weights_);
        bool hit = false;
        if (prev_b1_ && rest_residual_) {
            hit = rel_l1_change(b1, *prev_b1_) < threshold_;
        }
        StepDirective dir;
        if (hit) {
            dir = StepDirective::synthesize(add(b1, *rest_residual_), 1);
        } else {
            last_b1_ = b1;  // kept so the residual excludes the first block
            dir = StepDirective::compute();
        }
        prev_b1_ = std::move(b1);
        return dir;
    }

    void after_full_compute(int, const HiddenState&, const HiddenState& output) override {
        rest_residual_ = sub(output, *last_b1_);
    }

  private:
    const ModelWeights* weights_;
    double threshold_;
    std::optional<HiddenState> prev_b1_;
    std::optional<HiddenState> last_b1_;
    std::optional<HiddenState> rest_residual_;
};

enum class BaselineKind { NoCache, UniformThreshold, FixedInterval, FirstBlockProxy };

struct BaselineSpec {
    BaselineKind kind = BaselineKind::NoCache;
    int interval = 1;      // FixedInterval only
    double fb_tau = 0.12;  // FirstBlockProxy only
};

// The uniform-threshold baseline is the adaptive policy with every
// frequency/schedule/budget refinement switched off.
inline PolicyConfig uniform_variant(PolicyConfig cfg) {
    cfg.enable_tads = false;
    cfg.enable_ceb = false;
    cfg.enable_fdc = false;
    return cfg;
}

inline std::unique_ptr<StepController> baseline_policy(const BaselineSpec& spec,
                                                       const PolicyConfig& base,
                                                       const ModelWeights* weights = nullptr) {
    switch (spec.kind) {
        case BaselineKind::NoCache:
            return std::make_unique<NoCacheController>();
        case BaselineKind::UniformThreshold:
            return std::make_unique<PolicyController>(uniform_variant(base));
        case BaselineKind::FixedInterval:
            return std::make_unique<FixedIntervalController>(spec.interval);
        case BaselineKind::FirstBlockProxy:
            if (!weights) {
                throw std::invalid_argument("baseline_policy: the first-block proxy needs model weights");
            }
            return std::make_unique<FirstBlockProxyController>(*weights, spec.fb_tau);
    }
    throw std::invalid_argument("baseline_policy: unknown kind");
}

}  // namespace ditcache
