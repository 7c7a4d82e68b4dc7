#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ditcache/toy_dit.hpp"

namespace ditcache {

enum class StepDirectiveKind {
    Compute,     // run every block
    Synthesize,  // caller supplies the backbone output directly
    Overrides,   // run with a per-block compute/reuse mask
};

struct StepDirective {
    StepDirectiveKind kind = StepDirectiveKind::Compute;
    HiddenState output;        // Synthesize only
    int blocks_evaluated = 0;  // Synthesize only: evals to account for
    BlockOverride overrides;   // Overrides only

    static StepDirective compute() { return {}; }

    static StepDirective synthesize(HiddenState out, int evals) {
        StepDirective d;
        d.kind = StepDirectiveKind::Synthesize;
        d.output = std::move(out);
        d.blocks_evaluated = evals;
        return d;
    }

    static StepDirective with_overrides(BlockOverride o) {
        StepDirective d;
        d.kind = StepDirectiveKind::Overrides;
        d.overrides = std::move(o);
        return d;
    }
};

// Per-step hook deciding how much of the backbone runs. The sampler hands it
// the backbone input, the timestep embedding and the modulated input, and
// reports back the full output whenever every block was computed.
class StepController {
  public:
    virtual ~StepController() = default;
    virtual StepDirective on_step(int t, const HiddenState& h0, const TimestepEmbedding& e,
                                  const HiddenState& modulated) = 0;
    virtual void after_full_compute(int /*t*/, const HiddenState& /*h0*/,
                                    const HiddenState& /*output*/) {}
};

class NoCacheController : public StepController {
  public:
    StepDirective on_step(int, const HiddenState&, const TimestepEmbedding&,
                          const HiddenState&) override {
        return StepDirective::compute();
    }
};

struct SamplerOptions {
    bool record_block_states = false;  // per-step per-block partial states
    bool record_outputs = false;       // per-step backbone outputs
};

struct SamplerResult {
    std::vector<HiddenState> trajectory;  // backbone input at each step
    HiddenState final_sample;
    std::vector<int> blocks_computed;  // per-step count of blocks actually run
    std::vector<std::vector<HiddenState>> block_states;  // [t][l], if recorded
    std::vector<HiddenState> outputs;                    // [t], if recorded

    long total_block_evals() const {
        long s = 0;
        for (int c : blocks_computed) s += c;
        return s;
    }
};

// Deterministic Euler sampler. Starting from seeded Gaussian noise, each step
// runs the backbone (as directed by the controller), projects the output to a
// velocity and advances x by velocity / num_steps. Per-block deltas from the
// most recent fully- or partially-computed step are kept so controllers can
// ask for block-level reuse at later steps.
inline SamplerResult sampler_run(const ModelWeights& w, StepController& controller,
                                 uint64_t noise_seed, const SamplerOptions& opts = {}) {
    const ModelConfig& cfg = w.config;
    const int T = cfg.num_steps;
    const int L = cfg.num_blocks;
    const int d = cfg.hidden_dim;
    double dt = 1.0 / static_cast<double>(T);

    Rng noise(derive_seed(noise_seed, "sampler-noise"));
    HiddenState x = random_state(1, cfg.token_count, d, noise);

    SamplerResult res;
    res.trajectory.reserve(T);
    res.blocks_computed.reserve(T);
    if (opts.record_block_states) res.block_states.resize(T);
    if (opts.record_outputs) res.outputs.reserve(T);

    std::vector<HiddenState> stored_deltas;  // per block, carried across steps

    for (int t = 0; t < T; ++t) {
        res.trajectory.push_back(x);
        TimestepEmbedding e = timestep_embedding(t, w);
        HiddenState m = norm1_modulate(x, e, w);
        StepDirective dir = controller.on_step(t, x, e, m);

        HiddenState out;
        int evals = 0;
        bool ran_blocks = false;
        FullForwardResult ff;
        switch (dir.kind) {
            case StepDirectiveKind::Compute: {
                ff = full_forward(x, e, w);
                evals = ff.blocks_computed;
                out = ff.output;
                ran_blocks = true;
                stored_deltas = ff.deltas;
                controller.after_full_compute(t, x, out);
                break;
            }
            case StepDirectiveKind::Synthesize: {
                if (t == 0) {
                    throw std::runtime_error("sampler_run: controller synthesized the very first "
                                             "step, which has nothing to reuse");
                }
                out = std::move(dir.output);
                require_same_shape(out, x, "sampler_run synthesized output");
                evals = dir.blocks_evaluated;
                break;
            }
            case StepDirectiveKind::Overrides: {
                ff = full_forward(x, e, w, &dir.overrides,
                                  stored_deltas.empty() ? nullptr : &stored_deltas);
                evals = ff.blocks_computed;
                out = ff.output;
                ran_blocks = true;
                stored_deltas = ff.deltas;
                if (ff.blocks_computed == L) controller.after_full_compute(t, x, out);
                break;
            }
        }

        res.blocks_computed.push_back(evals);
        if (opts.record_block_states && ran_blocks) {
            std::vector<HiddenState> states;
            states.reserve(L);
            HiddenState acc = x;
            for (const auto& delta : ff.deltas) {
                acc = add(acc, delta);
                states.push_back(acc);
            }
            res.block_states[t] = std::move(states);
        }
        if (opts.record_outputs) res.outputs.push_back(out);

        // velocity readout and Euler update
        std::vector<double> vel(d);
        for (int n = 0; n < x.tokens; ++n) {
            const double* row = &out.data[static_cast<size_t>(n) * d];
            detail::matvec(w.out_proj, d, d, row, vel.data());
            for (int c = 0; c < d; ++c) x.at(0, n, c) += dt * vel[c];
        }
    }
    res.final_sample = std::move(x);
    return res;
}

}  // namespace ditcache
