#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

// Per-frame attention token blocks X_attn_i plus the garment block X_attn_c
// from the reference feature extractor. Blocks are (L, d) row-token layout.
struct FrameFeatureBank {
    std::vector<Tensor> blocks;
    Tensor garment;

    int frames() const { return static_cast<int>(blocks.size()); }
    int dim() const { return blocks.empty() ? 0 : blocks.front().dim(1); }
    bool has_garment() const { return !garment.empty(); }
};

enum class FrameSelectionMode {
    train_random,         // uniform over {0..N-1} \ {i-1}
    infer_deterministic,  // half-period offset, small i -> later frames
    fixed_zero,           // ablation: always frame 0
    crossframe_baseline,  // ablation: concat(X_0, X_{i-1}) instead
};

struct FrameSelectionPolicy {
    FrameSelectionMode mode = FrameSelectionMode::infer_deterministic;
    std::uint64_t rng_seed = 0;
};

inline Tensor concat_token_rows(const std::vector<const Tensor*>& blocks) {
    if (blocks.empty()) throw DimensionError("nothing to concatenate");
    const int d = blocks.front()->dim(1);
    int rows = 0;
    for (const Tensor* b : blocks) {
        if (b->rank() != 2 || b->dim(1) != d)
            throw DimensionError("token blocks disagree in feature dim");
        rows += b->dim(0);
    }
    Tensor out({rows, d});
    int r = 0;
    for (const Tensor* b : blocks) {
        for (int i = 0; i < b->dim(0); ++i, ++r)
            for (int c = 0; c < d; ++c) out.at(r, c) = b->at(i, c);
    }
    return out;
}

struct AttentionResult {
    Tensor output;  // (L_q, d)
    Tensor probs;   // (heads, L_q, L_k) post-softmax
};

// Softmax(Q K^T / sqrt(d_head)) V. The multi-head variant splits the feature
// dim into head_count groups and concatenates the per-head results.
inline AttentionResult scaled_dot_attention_full(const Tensor& q,
                                                 const Tensor& k,
                                                 const Tensor& v,
                                                 int head_count = 1) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw DimensionError("attention inputs must be rank-2 token blocks");
    const int lq = q.dim(0), d = q.dim(1), lk = k.dim(0);
    if (k.dim(1) != d || v.dim(1) != d)
        throw DimensionError("Q/K/V feature dims disagree");
    if (v.dim(0) != lk) throw DimensionError("K and V row counts disagree");
    if (lk < 1) throw DimensionError("empty key block");
    if (head_count < 1 || d % head_count != 0)
        throw DimensionError("head_count must divide the feature dim");

    const int dh = d / head_count;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    AttentionResult res;
    res.output = Tensor({lq, d});
    res.probs = Tensor({head_count, lq, lk});
    std::vector<double> logits(static_cast<std::size_t>(lk));
    for (int h = 0; h < head_count; ++h) {
        const int c0 = h * dh;
        for (int i = 0; i < lq; ++i) {
            double peak = -1e300;
            for (int j = 0; j < lk; ++j) {
                double dot = 0.0;
                for (int c = 0; c < dh; ++c) dot += q.at(i, c0 + c) * k.at(j, c0 + c);
                logits[static_cast<std::size_t>(j)] = dot * inv_sqrt;
                peak = std::max(peak, logits[static_cast<std::size_t>(j)]);
            }
            double norm = 0.0;
            for (int j = 0; j < lk; ++j) {
                const double e = std::exp(logits[static_cast<std::size_t>(j)] - peak);
                res.probs.at(h, i, j) = e;
                norm += e;
            }
            for (int j = 0; j < lk; ++j) {
                const double p = res.probs.at(h, i, j) / norm;
                res.probs.at(h, i, j) = p;
                for (int c = 0; c < dh; ++c)
                    res.output.at(i, c0 + c) += p * v.at(j, c0 + c);
            }
        }
    }
    return res;
}

inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k,
                                   const Tensor& v, int head_count = 1) {
    return scaled_dot_attention_full(q, k, v, head_count).output;
}

inline void check_frame_index(const FrameFeatureBank& bank, int i) {
    if (bank.frames() == 0) throw DimensionError("empty feature bank");
    if (i < 0 || i >= bank.frames())
        throw DimensionError("frame index out of range");
}

// Reference concat: K/V block = [X_attn_i ; X_attn_c].
inline Tensor build_kv_reference(const FrameFeatureBank& bank, int i) {
    check_frame_index(bank, i);
    if (!bank.has_garment())
        throw ConfigError("feature bank carries no garment block");
    return concat_token_rows({&bank.blocks[static_cast<std::size_t>(i)], &bank.garment});
}

// Cross-frame baseline: [X_attn_0 ; X_attn_{i-1}], with frame 0 standing in
// for the undefined frame -1 at i = 0.
inline Tensor build_kv_crossframe_baseline(const FrameFeatureBank& bank, int i) {
    check_frame_index(bank, i);
    const int prev = i > 0 ? i - 1 : 0;
    return concat_token_rows(
        {&bank.blocks[0], &bank.blocks[static_cast<std::size_t>(prev)]});
}

// Picks the temporal partner frame j from {0..i-2, i..N-1}. Deterministic
// mode offsets by half the clip so early frames look ahead and late frames
// look back; training mode draws uniformly from the admissible set.
inline int select_frame_j(const FrameSelectionPolicy& policy, int i, int n,
                          Rng& rng) {
    if (n < 1) throw DimensionError("select_frame_j needs n >= 1");
    if (i < 0 || i >= n) throw DimensionError("frame index out of range");
    if (n == 1) return 0;
    const int excluded = i - 1;  // absent from the admissible set; -1 when i=0

    switch (policy.mode) {
        case FrameSelectionMode::train_random: {
            if (excluded < 0) {
                std::uniform_int_distribution<int> dist(0, n - 1);
                return dist(rng);
            }
            std::uniform_int_distribution<int> dist(0, n - 2);
            const int u = dist(rng);
            return u < excluded ? u : u + 1;
        }
        case FrameSelectionMode::infer_deterministic: {
            int j = (i + n / 2) % n;
            if (j == excluded) j = (j + 1) % n;
            return j;
        }
        case FrameSelectionMode::fixed_zero:
            return excluded == 0 ? i : 0;
        case FrameSelectionMode::crossframe_baseline:
            throw PolicyViolationError(
                "crossframe_baseline does not select a partner frame");
    }
    throw PolicyViolationError("unknown frame selection mode");
}

// Clothing & temporal consistency concat: [X_attn_i ; X_attn_j ; X_attn_c].
// j = i is allowed (duplicates the current frame), j = i-1 is not.
inline Tensor build_kv_ctc(const FrameFeatureBank& bank, int i, int j) {
    check_frame_index(bank, i);
    check_frame_index(bank, j);
    if (!bank.has_garment())
        throw ConfigError("feature bank carries no garment block");
    if (j == i - 1)
        throw PolicyViolationError("j = i-1 is outside the admissible index set");
    return concat_token_rows({&bank.blocks[static_cast<std::size_t>(i)],
                              &bank.blocks[static_cast<std::size_t>(j)],
                              &bank.garment});
}

}  // namespace vvt
