#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "ditcache/numerics.hpp"
#include "ditcache/rng.hpp"
#include "ditcache/tensor.hpp"

namespace ditcache {

struct ModelConfig {
    int num_blocks = 6;
    int hidden_dim = 32;
    int token_count = 64;
    int num_heads = 4;
    double weight_scale = 0.2;
    uint64_t seed = 42;
    int num_steps = 20;

    void validate() const {
        if (num_blocks < 1) throw std::invalid_argument("model.num_blocks must be >= 1");
        if (hidden_dim < 2) throw std::invalid_argument("model.hidden_dim must be >= 2");
        if (num_heads < 1) throw std::invalid_argument("model.num_heads must be >= 1");
        if (hidden_dim % num_heads != 0) {
            throw std::invalid_argument("model.hidden_dim must be divisible by model.num_heads");
        }
        if (!(weight_scale >= 0.0) || !std::isfinite(weight_scale)) {
            throw std::invalid_argument("model.weight_scale must be finite and >= 0");
        }
        if (num_steps < 2) throw std::invalid_argument("model.num_steps must be >= 2");
        // delegate token-count checks (>= 4, perfect square) to the state type
        HiddenState probe(1, token_count, hidden_dim);
        (void)probe;
    }
};

// One residual block: attention and MLP branches, each entered through a
// layer norm whose shift/scale is produced from the timestep embedding by a
// per-branch linear map.
struct BlockWeights {
    std::vector<double> attn_mod;  // 2D x D, rows 0..D-1 shift, D..2D-1 scale
    std::vector<double> wq, wk, wv, wo;  // D x D each
    std::vector<double> w1;              // 4D x D
    std::vector<double> w2;              // D x 4D
    std::vector<double> mlp_mod;         // 2D x D
};

struct ModelWeights {
    ModelConfig config;
    std::vector<BlockWeights> blocks;
    std::vector<double> embed;     // D x D, applied to sinusoidal features
    std::vector<double> out_proj;  // D x D
};

using TimestepEmbedding = std::vector<double>;

namespace detail {

// y = W x with W stored row-major as rows x cols.
inline void matvec(const std::vector<double>& w, int rows, int cols,
                   const double* x, double* y) {
    for (int r = 0; r < rows; ++r) {
        double acc = 0.0;
        const double* wr = &w[static_cast<size_t>(r) * cols];
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        y[r] = acc;
    }
}

inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

}  // namespace detail

inline ModelWeights init_model(const ModelConfig& cfg) {
    cfg.validate();
    ModelWeights w;
    w.config = cfg;
    const int d = cfg.hidden_dim;
    double scale = cfg.weight_scale / std::sqrt(static_cast<double>(d));
    Rng rng(cfg.seed);
    auto draw = [&](int rows, int cols) {
        std::vector<double> m(static_cast<size_t>(rows) * cols);
        fill_normal(m, rng, scale);
        return m;
    };
    w.blocks.resize(cfg.num_blocks);
    for (auto& blk : w.blocks) {
        blk.attn_mod = draw(2 * d, d);
        blk.wq = draw(d, d);
        blk.wk = draw(d, d);
        blk.wv = draw(d, d);
        blk.wo = draw(d, d);
        blk.w1 = draw(4 * d, d);
        blk.w2 = draw(d, 4 * d);
        blk.mlp_mod = draw(2 * d, d);
    }
    w.embed = draw(d, d);
    w.out_proj = draw(d, d);
    return w;
}

// Sinusoidal features of the normalized step position, mixed through the
// learned embedding matrix.
inline TimestepEmbedding timestep_embedding(int t, const ModelWeights& w) {
    const ModelConfig& cfg = w.config;
    if (t < 0 || t >= cfg.num_steps) {
        throw std::invalid_argument("timestep_embedding: step " + std::to_string(t) +
                                    " outside [0, " + std::to_string(cfg.num_steps) + ")");
    }
    const int d = cfg.hidden_dim;
    double pos = static_cast<double>(t) / static_cast<double>(cfg.num_steps);
    std::vector<double> feat(d);
    const double two_pi = 2.0 * 3.14159265358979323846;
    int half = d / 2;
    for (int i = 0; i < d; ++i) {
        int pair = i / 2;
        double freq = std::pow(10000.0, static_cast<double>(pair) / std::max(1, half));
        double arg = two_pi * freq * pos;
        feat[i] = (i % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
    TimestepEmbedding e(d);
    detail::matvec(w.embed, d, d, feat.data(), e.data());
    return e;
}

// Per-token layer norm over channels, epsilon 1e-6, no learned gain.
inline HiddenState layer_norm(const HiddenState& h) {
    HiddenState out = h;
    const int d = h.channels;
    for (int b = 0; b < h.batch; ++b) {
        for (int n = 0; n < h.tokens; ++n) {
            double mean = 0.0;
            for (int c = 0; c < d; ++c) mean += h.at(b, n, c);
            mean /= d;
            double var = 0.0;
            for (int c = 0; c < d; ++c) {
                double dv = h.at(b, n, c) - mean;
                var += dv * dv;
            }
            var /= d;
            double inv = 1.0 / std::sqrt(var + 1e-6);
            for (int c = 0; c < d; ++c) {
                out.at(b, n, c) = (h.at(b, n, c) - mean) * inv;
            }
        }
    }
    return out;
}

namespace detail {

// LN(h) * (1 + scale(e)) + shift(e) with (shift, scale) = mod_map * e.
inline HiddenState modulate(const HiddenState& h, const TimestepEmbedding& e,
                            const std::vector<double>& mod_map) {
    const int d = h.channels;
    if (static_cast<int>(e.size()) != d) {
        throw std::invalid_argument("modulate: embedding size does not match channel count");
    }
    std::vector<double> shift_scale(2 * d);
    matvec(mod_map, 2 * d, d, e.data(), shift_scale.data());
    HiddenState out = layer_norm(h);
    for (int b = 0; b < h.batch; ++b) {
        for (int n = 0; n < h.tokens; ++n) {
            for (int c = 0; c < d; ++c) {
                out.at(b, n, c) = out.at(b, n, c) * (1.0 + shift_scale[d + c]) + shift_scale[c];
            }
        }
    }
    return out;
}

}  // namespace detail

// The modulated input the caching policy compares step to step: the first
// block's attention-side layer norm and modulation applied to the backbone
// input.
inline HiddenState norm1_modulate(const HiddenState& h, const TimestepEmbedding& e,
                                  const ModelWeights& w) {
    if (w.blocks.empty()) throw std::invalid_argument("norm1_modulate: model has no blocks");
    return detail::modulate(h, e, w.blocks.front().attn_mod);
}

namespace detail {

// Multi-head self-attention over tokens of one batch entry, returning the
// post-projection delta. x is the already-modulated input.
inline void attention_delta(const BlockWeights& blk, int heads, const HiddenState& x,
                            int b, HiddenState& delta) {
    const int n = x.tokens;
    const int d = x.channels;
    const int hd = d / heads;
    std::vector<double> q(static_cast<size_t>(n) * d), k(q.size()), v(q.size());
    std::vector<double> concat(q.size());
    std::vector<double> xin(d);
    for (int t = 0; t < n; ++t) {
        for (int c = 0; c < d; ++c) xin[c] = x.at(b, t, c);
        matvec(blk.wq, d, d, xin.data(), &q[static_cast<size_t>(t) * d]);
        matvec(blk.wk, d, d, xin.data(), &k[static_cast<size_t>(t) * d]);
        matvec(blk.wv, d, d, xin.data(), &v[static_cast<size_t>(t) * d]);
    }
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> scores(n);
    for (int h = 0; h < heads; ++h) {
        int off = h * hd;
        for (int i = 0; i < n; ++i) {
            const double* qi = &q[static_cast<size_t>(i) * d + off];
            double mx = -1e300;
            for (int j = 0; j < n; ++j) {
                const double* kj = &k[static_cast<size_t>(j) * d + off];
                double s = 0.0;
                for (int c = 0; c < hd; ++c) s += qi[c] * kj[c];
                scores[j] = s * inv_sqrt;
                if (scores[j] > mx) mx = scores[j];
            }
            double z = 0.0;
            for (int j = 0; j < n; ++j) {
                scores[j] = std::exp(scores[j] - mx);
                z += scores[j];
            }
            double* out = &concat[static_cast<size_t>(i) * d + off];
            for (int c = 0; c < hd; ++c) out[c] = 0.0;
            for (int j = 0; j < n; ++j) {
                double p = scores[j] / z;
                const double* vj = &v[static_cast<size_t>(j) * d + off];
                for (int c = 0; c < hd; ++c) out[c] += p * vj[c];
            }
        }
    }
    std::vector<double> proj(d);
    for (int t = 0; t < n; ++t) {
        matvec(blk.wo, d, d, &concat[static_cast<size_t>(t) * d], proj.data());
        for (int c = 0; c < d; ++c) delta.at(b, t, c) = proj[c];
    }
}

}  // namespace detail

// Softmax attention weights of one head for an already-modulated input, for
// one batch entry. Row i holds the weights token i puts on every token.
inline std::vector<double> attention_probabilities(const BlockWeights& blk, int heads,
                                                   const HiddenState& x, int b, int head) {
    if (head < 0 || head >= heads) throw std::invalid_argument("attention_probabilities: bad head");
    const int n = x.tokens;
    const int d = x.channels;
    const int hd = d / heads;
    std::vector<double> q(static_cast<size_t>(n) * d), k(q.size());
    std::vector<double> xin(d);
    for (int t = 0; t < n; ++t) {
        for (int c = 0; c < d; ++c) xin[c] = x.at(b, t, c);
        detail::matvec(blk.wq, d, d, xin.data(), &q[static_cast<size_t>(t) * d]);
        detail::matvec(blk.wk, d, d, xin.data(), &k[static_cast<size_t>(t) * d]);
    }
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    int off = head * hd;
    std::vector<double> probs(static_cast<size_t>(n) * n);
    std::vector<double> scores(n);
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int c = 0; c < hd; ++c) {
                s += q[static_cast<size_t>(i) * d + off + c] * k[static_cast<size_t>(j) * d + off + c];
            }
            scores[j] = s * inv_sqrt;
            if (scores[j] > mx) mx = scores[j];
        }
        double z = 0.0;
        for (int j = 0; j < n; ++j) {
            scores[j] = std::exp(scores[j] - mx);
            z += scores[j];
        }
        for (int j = 0; j < n; ++j) probs[static_cast<size_t>(i) * n + j] = scores[j] / z;
    }
    return probs;
}

// One residual block, block positions counted from 1.
inline HiddenState block_forward(const HiddenState& h, int block, const TimestepEmbedding& e,
                                 const ModelWeights& w) {
    if (block < 1 || block > static_cast<int>(w.blocks.size())) {
        throw std::invalid_argument("block_forward: block " + std::to_string(block) +
                                    " outside [1, " + std::to_string(w.blocks.size()) + "]");
    }
    const BlockWeights& blk = w.blocks[block - 1];
    const int d = h.channels;
    const int heads = w.config.num_heads;

    HiddenState x = detail::modulate(h, e, blk.attn_mod);
    HiddenState attn(h.batch, h.tokens, h.channels);
    for (int b = 0; b < h.batch; ++b) detail::attention_delta(blk, heads, x, b, attn);
    HiddenState mid = add(h, attn);

    HiddenState y = detail::modulate(mid, e, blk.mlp_mod);
    HiddenState out = mid;
    std::vector<double> hid(static_cast<size_t>(4) * d), proj(d), yin(d);
    for (int b = 0; b < h.batch; ++b) {
        for (int n = 0; n < h.tokens; ++n) {
            for (int c = 0; c < d; ++c) yin[c] = y.at(b, n, c);
            detail::matvec(blk.w1, 4 * d, d, yin.data(), hid.data());
            for (double& v : hid) v = detail::gelu(v);
            detail::matvec(blk.w2, d, 4 * d, hid.data(), proj.data());
            for (int c = 0; c < d; ++c) out.at(b, n, c) += proj[c];
        }
    }
    return out;
}

enum class BlockDirective {
    Compute,
    ReuseFromPreviousTimestep,
};

// One directive per block, in block order.
using BlockOverride = std::vector<BlockDirective>;

struct FullForwardResult {
    HiddenState output;
    std::vector<HiddenState> deltas;  // per-block contribution H_l - H_{l-1}
    int blocks_computed = 0;
};

// Run the backbone, optionally substituting stored per-block deltas for some
// blocks. A reused block adds the delta it produced at the most recent
// timestep where it was actually computed, which the caller supplies via
// prev_deltas.
inline FullForwardResult full_forward(const HiddenState& h0, const TimestepEmbedding& e,
                                      const ModelWeights& w,
                                      const BlockOverride* overrides = nullptr,
                                      const std::vector<HiddenState>* prev_deltas = nullptr) {
    const int L = static_cast<int>(w.blocks.size());
    if (overrides && static_cast<int>(overrides->size()) != L) {
        throw std::invalid_argument("full_forward: override list length " +
                                    std::to_string(overrides->size()) + " does not match " +
                                    std::to_string(L) + " blocks");
    }
    FullForwardResult res;
    res.deltas.reserve(L);
    HiddenState h = h0;
    for (int l = 0; l < L; ++l) {
        bool reuse = overrides && (*overrides)[l] == BlockDirective::ReuseFromPreviousTimestep;
        if (reuse) {
            if (!prev_deltas || l >= static_cast<int>(prev_deltas->size())) {
                throw std::runtime_error("full_forward: block " + std::to_string(l + 1) +
                                         " asked to reuse a delta that was never stored");
            }
            require_same_shape((*prev_deltas)[l], h, "full_forward reuse");
            h = add(h, (*prev_deltas)[l]);
            res.deltas.push_back((*prev_deltas)[l]);
        } else {
            HiddenState next = block_forward(h, l + 1, e, w);
            res.deltas.push_back(sub(next, h));
            h = std::move(next);
            ++res.blocks_computed;
        }
    }
    res.output = std::move(h);
    return res;
}

// Largest observed output-change to input-change ratio of one block over
// random probe states and the given embeddings. Block positions from 1.
inline double lipschitz_estimate(const ModelWeights& w, int block,
                                 const std::vector<TimestepEmbedding>& embeddings,
                                 int probes, double eps, uint64_t probe_seed) {
    if (block < 1 || block > static_cast<int>(w.blocks.size())) {
        throw std::invalid_argument("lipschitz_estimate: block out of range");
    }
    if (probes < 1) throw std::invalid_argument("lipschitz_estimate: probes must be >= 1");
    if (!(eps > 0.0)) throw std::invalid_argument("lipschitz_estimate: eps must be positive");
    if (embeddings.empty()) throw std::invalid_argument("lipschitz_estimate: no embeddings given");

    Rng rng(derive_seed(probe_seed, "lipschitz", static_cast<uint64_t>(block)));
    const ModelConfig& cfg = w.config;
    double best = 0.0;
    for (int p = 0; p < probes; ++p) {
        HiddenState base = random_state(1, cfg.token_count, cfg.hidden_dim, rng);
        HiddenState dir = random_state(1, cfg.token_count, cfg.hidden_dim, rng);
        double norm = frobenius_norm(dir);
        if (norm == 0.0) continue;
        for (double& v : dir.data) v *= eps / norm;
        HiddenState shifted = add(base, dir);
        for (const auto& e : embeddings) {
            HiddenState out_base = block_forward(base, block, e, w);
            HiddenState out_shift = block_forward(shifted, block, e, w);
            double ratio = l2_error(out_shift, out_base) / eps;
            if (ratio > best) best = ratio;
        }
    }
    return best;
}

}  // namespace ditcache
