#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "vvt/data_model.hpp"
#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

// Token-grid partition induced by the agnostic mask: A holds the in-mask
// tokens per frame, A_bar the complement. Flat token index a = r*grid_w + c.
struct TokenRegionPartition {
    int grid_h = 0;
    int grid_w = 0;
    Tensor membership;  // (N, T) of 0/1, 1 = token in A

    int frames() const { return membership.rank() == 2 ? membership.dim(0) : 0; }
    int tokens() const { return grid_h * grid_w; }
    bool in_mask(int frame, int token) const {
        return membership.at(frame, token) != 0.0;
    }
    int count_in(int frame) const {
        int n = 0;
        for (int a = 0; a < tokens(); ++a)
            if (in_mask(frame, a)) ++n;
        return n;
    }
};

// Per-frame attention probabilities S_i^a for the target garment.
struct AttentionProbMap {
    Tensor probs;  // (N, T), values in [0,1]
    int grid_h = 0;
    int grid_w = 0;

    int frames() const { return probs.rank() == 2 ? probs.dim(0) : 0; }
    int tokens() const { return probs.rank() == 2 ? probs.dim(1) : 0; }
};

enum class LossVariant { initial, refined };

struct LossConfig {
    double lambda_n = 0.01;
    double lambda_agn = 0.5;
    LossVariant variant = LossVariant::refined;

    // lambda_N = 0.1 variant used in the ablation grid.
    static LossConfig ablation_preset() {
        LossConfig c;
        c.lambda_n = 0.1;
        return c;
    }
};

namespace detail {

// Fractional-overlap area average of one mask frame over a token cell whose
// boundaries need not align with pixels.
inline double token_coverage(const Tensor& masks, int frame, double y0,
                             double y1, double x0, double x1) {
    const int py0 = static_cast<int>(std::floor(y0));
    const int py1 = static_cast<int>(std::ceil(y1));
    const int px0 = static_cast<int>(std::floor(x0));
    const int px1 = static_cast<int>(std::ceil(x1));
    double acc = 0.0;
    for (int py = py0; py < py1; ++py) {
        const double wy = std::min(y1, static_cast<double>(py) + 1.0) -
                          std::max(y0, static_cast<double>(py));
        if (wy <= 0.0) continue;
        for (int px = px0; px < px1; ++px) {
            const double wx = std::min(x1, static_cast<double>(px) + 1.0) -
                              std::max(x0, static_cast<double>(px));
            if (wx <= 0.0) continue;
            acc += wy * wx * masks.at(frame, py, px);
        }
    }
    return acc / ((y1 - y0) * (x1 - x0));
}

inline void require_nonempty_per_frame(const TokenRegionPartition& part) {
    for (int i = 0; i < part.frames(); ++i)
        if (part.count_in(i) == 0)
            throw DegenerateMaskError("frame " + std::to_string(i) +
                                      " has no in-mask tokens");
}

inline void require_compatible(const AttentionProbMap& s,
                               const TokenRegionPartition& part) {
    if (s.frames() != part.frames() || s.tokens() != part.tokens())
        throw DimensionError("attention map and partition disagree in shape");
    require_nonempty_per_frame(part);
}

}  // namespace detail

// Token a joins A when its area-averaged mask coverage exceeds the threshold
// (strict: exactly-threshold boundary tokens go to A_bar).
inline TokenRegionPartition mask_to_partition(const AgnosticMask& mask,
                                              int grid_h, int grid_w,
                                              double threshold = 0.5) {
    if (mask.masks.rank() != 3) throw DimensionError("mask must be (N,H,W)");
    if (grid_h < 1 || grid_w < 1) throw DimensionError("token grid must be nonempty");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw DomainError("threshold must lie in (0,1)");

    const int n = mask.n(), h = mask.height(), w = mask.width();
    TokenRegionPartition part;
    part.grid_h = grid_h;
    part.grid_w = grid_w;
    part.membership = Tensor({n, grid_h * grid_w});
    bool any = false;
    for (int i = 0; i < n; ++i)
        for (int r = 0; r < grid_h; ++r)
            for (int c = 0; c < grid_w; ++c) {
                const double y0 = static_cast<double>(h) * r / grid_h;
                const double y1 = static_cast<double>(h) * (r + 1) / grid_h;
                const double x0 = static_cast<double>(w) * c / grid_w;
                const double x1 = static_cast<double>(w) * (c + 1) / grid_w;
                const double cov = detail::token_coverage(mask.masks, i, y0, y1, x0, x1);
                if (cov > threshold) {
                    part.membership.at(i, r * grid_w + c) = 1.0;
                    any = true;
                }
            }
    if (!any)
        throw DegenerateMaskError("mask produces no in-mask tokens in any frame");
    return part;
}

// S_i^a from post-softmax attention weights: max over the garment key
// columns, then mean over heads and layers. `layers` holds one (heads,L_q,L_k)
// tensor per configured layer of a single frame.
inline std::vector<double> extract_attention_probs_frame(
    const std::vector<Tensor>& layers, int garment_begin, int garment_end) {
    if (layers.empty()) throw ConfigError("no attention layers supplied");
    if (garment_end <= garment_begin)
        throw ConfigError("no garment tokens present in the key block");
    const Tensor& first = layers.front();
    if (first.rank() != 3) throw DimensionError("weights must be (heads,L_q,L_k)");
    const int queries = first.dim(1);

    std::vector<double> s(static_cast<std::size_t>(queries), 0.0);
    int reduced = 0;
    for (const Tensor& w : layers) {
        if (w.rank() != 3 || w.dim(1) != queries)
            throw DimensionError("attention layers disagree in query count");
        if (garment_begin < 0 || garment_end > w.dim(2))
            throw ConfigError("garment token slice exceeds the key block");
        const int heads = w.dim(0);
        for (int hd = 0; hd < heads; ++hd) {
            for (int q = 0; q < queries; ++q) {
                double best = 0.0;
                for (int k = garment_begin; k < garment_end; ++k)
                    best = std::max(best, w.at(hd, q, k));
                s[static_cast<std::size_t>(q)] += best;
            }
            ++reduced;
        }
    }
    for (double& v : s) v /= static_cast<double>(reduced);
    return s;
}

inline AttentionProbMap extract_attention_probs(
    const std::vector<std::vector<Tensor>>& per_frame_layers, int garment_begin,
    int garment_end, int grid_h, int grid_w) {
    const int n = static_cast<int>(per_frame_layers.size());
    if (n == 0) throw DimensionError("no frames supplied");
    AttentionProbMap map;
    map.grid_h = grid_h;
    map.grid_w = grid_w;
    map.probs = Tensor({n, grid_h * grid_w});
    for (int i = 0; i < n; ++i) {
        const std::vector<double> s = extract_attention_probs_frame(
            per_frame_layers[static_cast<std::size_t>(i)], garment_begin, garment_end);
        if (static_cast<int>(s.size()) != grid_h * grid_w)
            throw DimensionError("query count does not match the token grid");
        for (int a = 0; a < grid_h * grid_w; ++a)
            map.probs.at(i, a) = s[static_cast<std::size_t>(a)];
    }
    return map;
}

// Initial formulation: every in-mask token is pushed toward 1.
//   sum_i sum_{a in A} (1-S_i^a)^2 + lambda_N sum_i sum_{a in A_bar} (S_i^a)^2
inline double loss_agn_init(const AttentionProbMap& s,
                            const TokenRegionPartition& part, double lambda_n) {
    detail::require_compatible(s, part);
    double pos = 0.0, neg = 0.0;
    for (int i = 0; i < s.frames(); ++i)
        for (int a = 0; a < s.tokens(); ++a) {
            const double v = s.probs.at(i, a);
            if (part.in_mask(i, a)) {
                pos += (1.0 - v) * (1.0 - v);
            } else {
                neg += v * v;
            }
        }
    return pos + lambda_n * neg;
}

// Refined formulation: only the strongest in-mask token carries the positive
// term, freeing the rest of the mask for contextual fill.
//   sum_i (1 - max_{a in A} S_i^a)^2 + lambda_N sum_i sum_{a in A_bar} (S_i^a)^2
inline double loss_agn(const AttentionProbMap& s,
                       const TokenRegionPartition& part, double lambda_n) {
    detail::require_compatible(s, part);
    double total = 0.0;
    for (int i = 0; i < s.frames(); ++i) {
        double best = -1.0;
        double neg = 0.0;
        for (int a = 0; a < s.tokens(); ++a) {
            const double v = s.probs.at(i, a);
            if (part.in_mask(i, a)) {
                best = std::max(best, v);
            } else {
                neg += v * v;
            }
        }
        total += (1.0 - best) * (1.0 - best) + lambda_n * neg;
    }
    return total;
}

inline double loss_agn_variant(const AttentionProbMap& s,
                               const TokenRegionPartition& part,
                               double lambda_n, LossVariant variant) {
    return variant == LossVariant::refined ? loss_agn(s, part, lambda_n)
                                           : loss_agn_init(s, part, lambda_n);
}

// Analytic gradient of loss_agn w.r.t. S. The per-frame argmax token (lowest
// flat index on ties) receives -2(1-max), A_bar tokens receive 2*lambda_N*S,
// all other in-mask tokens 0.
inline Tensor grad_loss_agn(const AttentionProbMap& s,
                            const TokenRegionPartition& part, double lambda_n) {
    detail::require_compatible(s, part);
    Tensor grad = Tensor::zeros_like(s.probs);
    for (int i = 0; i < s.frames(); ++i) {
        int arg = -1;
        double best = -1.0;
        for (int a = 0; a < s.tokens(); ++a) {
            const double v = s.probs.at(i, a);
            if (part.in_mask(i, a)) {
                if (v > best) {
                    best = v;
                    arg = a;
                }
            } else {
                grad.at(i, a) = 2.0 * lambda_n * v;
            }
        }
        grad.at(i, arg) = -2.0 * (1.0 - best);
    }
    return grad;
}

inline Tensor grad_loss_agn_init(const AttentionProbMap& s,
                                 const TokenRegionPartition& part,
                                 double lambda_n) {
    detail::require_compatible(s, part);
    Tensor grad = Tensor::zeros_like(s.probs);
    for (int i = 0; i < s.frames(); ++i)
        for (int a = 0; a < s.tokens(); ++a) {
            const double v = s.probs.at(i, a);
            if (part.in_mask(i, a)) {
                grad.at(i, a) = -2.0 * (1.0 - v);
            } else {
                grad.at(i, a) = 2.0 * lambda_n * v;
            }
        }
    return grad;
}

inline Tensor grad_loss_agn_variant(const AttentionProbMap& s,
                                    const TokenRegionPartition& part,
                                    double lambda_n, LossVariant variant) {
    return variant == LossVariant::refined
               ? grad_loss_agn(s, part, lambda_n)
               : grad_loss_agn_init(s, part, lambda_n);
}

// Combined objective: dsm + lambda_agn * agn.
inline double loss_total(double dsm, double agn, double lambda_agn) {
    return dsm + lambda_agn * agn;
}

// Negatives per single positive argmax token, averaged over frames. With the
// 19x12 grid of a 512x384 training resolution this lands near 120, which is
// what calibrates the default lambda_N = 0.01.
inline double negative_ratio(const TokenRegionPartition& part) {
    const int n = part.frames();
    if (n == 0) return 0.0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
        acc += static_cast<double>(part.tokens() - part.count_in(i));
    return acc / static_cast<double>(n);
}

// Per-frame attention-mass sums, averaged over frames; logged every training
// step as the in/out-of-mask diagnostics.
struct AttentionMass {
    double in_mask = 0.0;
    double out_mask = 0.0;
};

inline AttentionMass attention_mass(const AttentionProbMap& s,
                                    const TokenRegionPartition& part) {
    detail::require_compatible(s, part);
    AttentionMass m;
    for (int i = 0; i < s.frames(); ++i)
        for (int a = 0; a < s.tokens(); ++a) {
            if (part.in_mask(i, a))
                m.in_mask += s.probs.at(i, a);
            else
                m.out_mask += s.probs.at(i, a);
        }
    const double n = static_cast<double>(s.frames());
    m.in_mask /= n;
    m.out_mask /= n;
    return m;
}

}  // namespace vvt
