#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "vvt/agnostic_loss.hpp"
#include "vvt/ctc_attention.hpp"
#include "vvt/data_model.hpp"
#include "vvt/edm.hpp"
#include "vvt/errors.hpp"
#include "vvt/keyframe.hpp"
#include "vvt/nn.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

// Miniature dual-network try-on generator: a small latent-space denoiser with
// pose conditioning and a bottleneck attention block fed by garment reference
// tokens and an optional temporal partner frame.
struct ToyModelConfig {
    int base_channels = 12;
    int heads = 4;
    int garment_grid = 4;  // garment pooled to grid*grid reference tokens
    int n_window = 8;

    int attention_dim() const { return 4 * base_channels; }
    int garment_tokens() const { return garment_grid * garment_grid; }

    void validate() const {
        if (base_channels < 1) throw ConfigError("base_channels must be positive");
        if (heads < 1 || attention_dim() % heads != 0)
            throw ConfigError("heads must divide the attention dim");
        if (garment_grid < 1) throw ConfigError("garment_grid must be positive");
        if (n_window < 1) throw ConfigError("n_window must be positive");
    }
};

struct TrainConfig {
    double learning_rate = 5e-5;
    int batch_size = 2;
    double lambda_agn = 0.5;
    double lambda_n = 0.01;
    bool ct_enabled = true;
    LossVariant variant = LossVariant::refined;
    int steps = 500;
    std::uint64_t seed = 0;
    NoiseLevelSchedule schedule;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        if (steps < 1) throw ConfigError("steps must be positive");
        if (batch_size < 1) throw ConfigError("batch size must be positive");
        if (lambda_agn < 0.0 || lambda_n < 0.0)
            throw ConfigError("loss weights must be nonnegative");
        schedule.validate();
    }
};

struct TrainSample {
    AgnosticBundle bundle;
    GarmentImage garment;
    VideoClip target;
};

struct TrainStepRecord {
    int step = 0;
    double dsm = 0.0;
    double agn = 0.0;
    double total = 0.0;
    double in_mask_mass = 0.0;
    double out_mask_mass = 0.0;
};

// Model parameters plus the identity of their initialization.
class ToyState {
  public:
    ToyState(ToyModelConfig cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
        cfg_.validate();
        Rng rng(seed);
        const int c = cfg_.base_channels;
        const int d = cfg_.attention_dim();
        conv_param(rng, "pose1", 3, c);
        conv_param(rng, "pose2", c, c);
        conv_param(rng, "in", 9, c);
        vec_param("noise.w", c);
        vec_param("noise.b", c);
        vec_param("noise.s", c);
        conv_param(rng, "down", c, 2 * c);
        conv_param(rng, "down2", 2 * c, 4 * c);
        mat_param(rng, "ref1.w", 3, d);
        vec_param("ref1.b", d);
        mat_param(rng, "ref2.w", d, d);
        vec_param("ref2.b", d);
        mat_param(rng, "attn.wq", d, d);
        mat_param(rng, "attn.wk", d, d);
        mat_param(rng, "attn.wv", d, d);
        params_.create("attn.wo", {d, d});  // zero: attention starts as identity
        conv_param(rng, "up2", 4 * c, 2 * c);
        conv_param(rng, "up", 2 * c, c);
        params_.create("out.w", {3, 3, c, kLatentChannels});  // zero: raw net starts at 0
        params_.create("out.b", {kLatentChannels});
    }

    const ToyModelConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }
    long trained_steps = 0;

  private:
    void conv_param(Rng& rng, const std::string& name, int ci, int co) {
        ad::Param& w = params_.create(name + ".w", {3, 3, ci, co});
        fill_normal(w.value, rng, 0.0, std::sqrt(2.0 / (9.0 * ci)));
        params_.create(name + ".b", {co});
    }
    void mat_param(Rng& rng, const std::string& name, int rows, int cols) {
        ad::Param& w = params_.create(name, {rows, cols});
        fill_normal(w.value, rng, 0.0, std::sqrt(2.0 / rows));
    }
    void vec_param(const std::string& name, int n) { params_.create(name, {n}); }

    ToyModelConfig cfg_;
    std::uint64_t seed_;
    ad::ParamStore params_;
};

namespace detail {

// Garment image pooled onto a coarse RGB token grid, row-major.
inline Tensor pool_garment(const GarmentImage& garment, int grid) {
    if (garment.image.rank() != 3 || garment.image.dim(2) != 3)
        throw DimensionError("garment image must be (H,W,3)");
    const int h = garment.height(), w = garment.width();
    if (h < grid || w < grid) throw DimensionError("garment smaller than token grid");
    Tensor out({grid * grid, 3});
    Tensor weight({grid * grid});
    for (int y = 0; y < h; ++y) {
        const int gy = y * grid / h;
        for (int x = 0; x < w; ++x) {
            const int gx = x * grid / w;
            const int tok = gy * grid + gx;
            for (int c = 0; c < 3; ++c) out.at(tok, c) += garment.image.at(y, x, c);
            weight.at(tok) += 1.0;
        }
    }
    for (int tok = 0; tok < grid * grid; ++tok)
        for (int c = 0; c < 3; ++c) out.at(tok, c) /= weight.at(tok);
    return out;
}

}  // namespace detail

struct ForwardResult {
    ad::Node* raw_out = nullptr;  // (F,h,w,4)
    ad::Node* probs = nullptr;    // (F, grid_h*grid_w) garment attention scores
    int grid_h = 0;
    int grid_w = 0;
};

// Builds the full network graph on the tape. `channels` is the assembled
// 9-channel input (noisy latents already input-scaled), `partner` the
// temporal partner per frame (empty = reference-only attention).
inline ForwardResult toy_forward(ad::Tape& tape, ad::ParamBinder& P,
                                 const ToyModelConfig& cfg, const Tensor& channels,
                                 const Tensor& pose_emb, const Tensor& garment_pooled,
                                 double c_noise, const std::vector<int>& partner) {
    using namespace ad;
    if (channels.rank() != 4 || channels.dim(3) != 9)
        throw DimensionError("expected a (F,h,w,9) input block");
    const int f = channels.dim(0), hl = channels.dim(1), wl = channels.dim(2);
    if (hl % 4 != 0 || wl % 4 != 0)
        throw DimensionError("latent dims must be divisible by 4 for the downsampling stages");
    if (!partner.empty() && static_cast<int>(partner.size()) != f)
        throw DimensionError("partner list must cover every frame");

    Node* in = tape.leaf(channels);
    Node* pose = tape.leaf(pose_emb);

    Node* pg = conv2d(tape, pose, P("pose1.w"), P("pose1.b"), 1);
    pg = silu(tape, pg);
    pg = conv2d(tape, pg, P("pose2.w"), P("pose2.b"), 1);

    Node* h0 = conv2d(tape, in, P("in.w"), P("in.b"), 1);
    h0 = add(tape, h0, pg);
    // Scale-then-shift noise conditioning; the gate is identity at init.
    Node* gate = ad::exp(tape, scale(tape, P("noise.s"), c_noise));
    h0 = channel_scale(tape, h0, gate);
    Node* nb = add(tape, scale(tape, P("noise.w"), c_noise), P("noise.b"));
    h0 = channel_bias(tape, h0, nb);
    Node* h0s = silu(tape, h0);

    Node* h1 = conv2d(tape, h0s, P("down.w"), P("down.b"), 2);
    Node* h1s = silu(tape, h1);
    Node* h2 = conv2d(tape, h1s, P("down2.w"), P("down2.b"), 2);
    h2 = silu(tape, h2);

    Node* g0 = tape.leaf(garment_pooled);
    Node* g1 = silu(tape, row_bias(tape, matmul(tape, g0, P("ref1.w")), P("ref1.b")));
    Node* gt = row_bias(tape, matmul(tape, g1, P("ref2.w")), P("ref2.b"));
    h2 = channel_bias(tape, h2, mean_rows(tape, gt));

    const int d = cfg.attention_dim();
    const int dh = d / cfg.heads;
    const int gh = hl / 4, gw = wl / 4;
    const int lg = cfg.garment_tokens();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    std::vector<Node*> out_frames, prob_rows;
    for (int i = 0; i < f; ++i) {
        Node* xi = frame_tokens(tape, h2, i);
        Node* kv_src;
        if (partner.empty()) {
            kv_src = concat_rows(tape, {xi, gt});
        } else {
            const int j = partner[static_cast<std::size_t>(i)];
            if (j == i - 1)
                throw PolicyViolationError("partner j = i-1 is not admissible");
            Node* xj = j == i ? xi : frame_tokens(tape, h2, j);
            kv_src = concat_rows(tape, {xi, xj, gt});
        }
        Node* q = matmul(tape, xi, P("attn.wq"));
        Node* k = matmul(tape, kv_src, P("attn.wk"));
        Node* v = matmul(tape, kv_src, P("attn.wv"));
        const int lk = k->value.dim(0);

        std::vector<Node*> head_outs;
        Node* gm = nullptr;
        for (int hd = 0; hd < cfg.heads; ++hd) {
            const int c0 = hd * dh, c1 = (hd + 1) * dh;
            Node* logits = scale(
                tape, matmul_nt(tape, slice_cols(tape, q, c0, c1), slice_cols(tape, k, c0, c1)),
                inv_sqrt);
            Node* p = softmax_rows(tape, logits);
            head_outs.push_back(matmul(tape, p, slice_cols(tape, v, c0, c1)));
            Node* gm_h = max_over_cols(tape, p, lk - lg, lk);
            gm = gm ? add(tape, gm, gm_h) : gm_h;
        }
        Node* o = concat_cols(tape, head_outs);
        out_frames.push_back(add(tape, xi, matmul(tape, o, P("attn.wo"))));
        prob_rows.push_back(scale(tape, gm, 1.0 / cfg.heads));
    }

    Node* att = stack_frames(tape, out_frames, gh, gw);
    Node* u2 = upsample2(tape, att);
    u2 = conv2d(tape, u2, P("up2.w"), P("up2.b"), 1);
    u2 = silu(tape, add(tape, u2, h1));
    Node* u = upsample2(tape, u2);
    u = conv2d(tape, u, P("up.w"), P("up.b"), 1);
    u = silu(tape, add(tape, u, h0));
    Node* out = conv2d(tape, u, P("out.w"), P("out.b"), 1);

    ForwardResult res;
    res.raw_out = out;
    res.probs = stack_rows(tape, prob_rows);
    res.grid_h = gh;
    res.grid_w = gw;
    return res;
}

namespace detail {

struct PreparedSample {
    LatentClip target_latents;
    LatentClip agnostic_latents;
    Tensor mask_resized;   // (F,h,w)
    Tensor pose_emb;       // (F,h,w,3)
    Tensor garment_pooled; // (G*G,3)
    TokenRegionPartition partition;  // at the bottleneck grid
    int frames = 0;
};

inline PreparedSample prepare_sample(const TrainSample& sample, int garment_grid) {
    check_video_dims(sample.target);
    const int f = sample.target.n();
    if (sample.bundle.agnostic.n() != f || sample.bundle.mask.n() != f ||
        sample.bundle.pose.n() != f)
        throw DimensionError("bundle streams disagree with the target clip");

    PreparedSample prep;
    prep.frames = f;
    prep.target_latents = encode_latent(sample.target);
    VideoClip agnostic_as_video;
    agnostic_as_video.frames = sample.bundle.agnostic.frames;
    prep.agnostic_latents = encode_latent(agnostic_as_video);
    prep.mask_resized = resize_mask_to_latent(sample.bundle.mask, kDefaultDownsample);
    prep.pose_emb = downsample_pose(sample.bundle.pose, kDefaultDownsample);
    prep.garment_pooled = pool_garment(sample.garment, garment_grid);
    const int gh = prep.target_latents.height() / 2;
    const int gw = prep.target_latents.width() / 2;
    prep.partition = mask_to_partition(sample.bundle.mask, gh, gw);
    return prep;
}

inline Tensor assemble_channels(const Tensor& scaled_noisy,
                                const PreparedSample& prep) {
    require_same_shape(scaled_noisy, prep.agnostic_latents.latents, "assemble_channels");
    const int f = scaled_noisy.dim(0), h = scaled_noisy.dim(1), w = scaled_noisy.dim(2);
    Tensor out({f, h, w, 9});
    for (int i = 0; i < f; ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < kLatentChannels; ++c) {
                    out.at(i, y, x, c) = scaled_noisy.at(i, y, x, c);
                    out.at(i, y, x, 4 + c) = prep.agnostic_latents.latents.at(i, y, x, c);
                }
                out.at(i, y, x, 8) = prep.mask_resized.at(i, y, x);
            }
    return out;
}

inline std::vector<int> pick_partners(bool ct_enabled, FrameSelectionMode mode,
                                      int frames, Rng& rng) {
    std::vector<int> partner;
    if (!ct_enabled) return partner;
    FrameSelectionPolicy policy;
    policy.mode = mode;
    partner.resize(static_cast<std::size_t>(frames));
    for (int i = 0; i < frames; ++i)
        partner[static_cast<std::size_t>(i)] = select_frame_j(policy, i, frames, rng);
    return partner;
}

}  // namespace detail

// One optimization step on loss_total = dsm + lambda_agn * agn, averaged over
// batch_size independent noise draws of the same clip.
inline TrainStepRecord train_step(ToyState& state, ad::AdamOptimizer& opt,
                                  const TrainSample& sample, const TrainConfig& cfg,
                                  Rng& rng) {
    cfg.validate();
    const ToyModelConfig& mc = state.config();
    const detail::PreparedSample prep = detail::prepare_sample(sample, mc.garment_grid);
    const LossWeights weights = edm_loss_weights(cfg.schedule.sigma_data);

    ad::Tape tape;
    ad::ParamBinder bind(tape, state.params());

    ad::Node* dsm_sum = nullptr;
    ad::Node* agn_sum = nullptr;
    double mass_in = 0.0, mass_out = 0.0, agn_value = 0.0;

    for (int b = 0; b < cfg.batch_size; ++b) {
        const double sigma = sample_sigma(cfg.schedule, rng);
        const Preconditioning pre = precondition(sigma, cfg.schedule.sigma_data);

        Tensor noisy = prep.target_latents.latents;
        {
            Tensor noise = Tensor::zeros_like(noisy);
            fill_normal(noise, rng);
            for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += sigma * noise[i];
        }
        Tensor scaled = noisy;
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= pre.c_in;

        const Tensor channels = detail::assemble_channels(scaled, prep);
        const std::vector<int> partner = detail::pick_partners(
            cfg.ct_enabled, FrameSelectionMode::train_random, prep.frames, rng);

        const ForwardResult fwd =
            toy_forward(tape, bind, mc, channels, prep.pose_emb, prep.garment_pooled,
                        pre.c_noise, partner);

        Tensor skip = noisy;
        for (std::size_t i = 0; i < skip.size(); ++i) skip[i] *= pre.c_skip;
        ad::Node* denoised = ad::add_const(tape, ad::scale(tape, fwd.raw_out, pre.c_out), skip);
        ad::Node* dsm_b = ad::scale(
            tape, ad::mse_against(tape, denoised, prep.target_latents.latents),
            weights.lambda_sigma(sigma));
        dsm_sum = dsm_sum ? ad::add(tape, dsm_sum, dsm_b) : dsm_b;

        AttentionProbMap map;
        map.probs = fwd.probs->value;
        map.grid_h = fwd.grid_h;
        map.grid_w = fwd.grid_w;
        const AttentionMass mass = attention_mass(map, prep.partition);
        mass_in += mass.in_mask;
        mass_out += mass.out_mask;
        agn_value += loss_agn_variant(map, prep.partition, cfg.lambda_n, cfg.variant);

        if (cfg.lambda_agn != 0.0) {
            ad::Node* agn_b =
                ad::agn_loss(tape, fwd.probs, prep.partition, cfg.lambda_n, cfg.variant);
            agn_sum = agn_sum ? ad::add(tape, agn_sum, agn_b) : agn_b;
        }
    }

    const double inv_b = 1.0 / static_cast<double>(cfg.batch_size);
    ad::Node* total = ad::scale(tape, dsm_sum, inv_b);
    if (agn_sum != nullptr)
        total = ad::add(tape, total, ad::scale(tape, agn_sum, cfg.lambda_agn * inv_b));

    TrainStepRecord rec;
    rec.step = static_cast<int>(state.trained_steps);
    rec.dsm = dsm_sum->value[0] * inv_b;
    rec.agn = agn_value * inv_b;
    rec.total = total->value[0];
    rec.in_mask_mass = mass_in * inv_b;
    rec.out_mask_mass = mass_out * inv_b;

    if (!std::isfinite(rec.total)) {
        std::ostringstream os;
        os << "non-finite loss at step " << state.trained_steps << ": dsm=" << rec.dsm
           << " agn=" << rec.agn << " total=" << rec.total;
        throw NumericsError(os.str());
    }

    tape.backward(total);
    opt.apply(state.params(), bind.bound());
    ++state.trained_steps;
    return rec;
}

struct OverfitResult {
    ToyState state;
    std::vector<TrainStepRecord> curve;
};

inline OverfitResult overfit_clip(const TrainSample& sample, const TrainConfig& cfg,
                                  ToyModelConfig model = {}) {
    cfg.validate();
    OverfitResult res{ToyState(model, cfg.seed), {}};
    ad::AdamOptimizer opt(ad::AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    res.curve.reserve(static_cast<std::size_t>(cfg.steps));
    for (int s = 0; s < cfg.steps; ++s)
        res.curve.push_back(train_step(res.state, opt, sample, cfg, rng));
    return res;
}

struct InferConfig {
    NoiseLevelSchedule schedule;
    bool ct_enabled = true;
    FrameSelectionMode partner_mode = FrameSelectionMode::infer_deterministic;
    std::uint64_t seed = 0;

    InferConfig() { schedule.num_steps = 12; }
};

namespace detail {

// Shared denoising pass over one window given precomputed conditioning.
inline LatentClip run_sampler(ToyState& state, const PreparedSample& prep,
                              const InferConfig& cfg, const Tensor* initial) {
    const ToyModelConfig& mc = state.config();
    const int f = prep.frames;
    const int h = prep.agnostic_latents.height(), w = prep.agnostic_latents.width();

    Rng rng(cfg.seed ^ 0xd1b54a32d192ed03ull);
    const std::vector<int> partner =
        detail::pick_partners(cfg.ct_enabled, cfg.partner_mode, f, rng);

    LatentClip x_t;
    x_t.latents = Tensor({f, h, w, kLatentChannels});
    if (initial != nullptr) {
        require_same_shape(*initial, x_t.latents, "infer initial noise");
        x_t.latents = *initial;
    } else {
        fill_normal(x_t.latents, rng);
        for (std::size_t i = 0; i < x_t.latents.size(); ++i)
            x_t.latents[i] *= cfg.schedule.sigma_max;
    }

    const RawNetFn raw_net = [&](const Tensor& scaled, double c_noise) {
        ad::Tape tape;
        ad::ParamBinder bind(tape, state.params());
        const Tensor channels = detail::assemble_channels(scaled, prep);
        const ForwardResult fwd = toy_forward(tape, bind, mc, channels, prep.pose_emb,
                                              prep.garment_pooled, c_noise, partner);
        return fwd.raw_out->value;
    };
    const DenoiserFn denoiser = [&](const LatentClip& x, double sigma) {
        return apply_denoiser(raw_net, x, sigma, cfg.schedule.sigma_data);
    };
    return euler_sample(denoiser, x_t, cfg.schedule);
}

}  // namespace detail

// Short-clip inference: Euler sampling over the whole clip at once. Clips
// longer than the configured window must go through the long-video
// orchestrator instead.
inline VideoClip infer_clip(const AgnosticBundle& bundle, const GarmentImage& garment,
                            ToyState& state, const InferConfig& cfg,
                            const Tensor* initial_noise = nullptr) {
    cfg.schedule.validate();
    const int f = bundle.agnostic.n();
    if (f < 1) throw DimensionError("empty bundle");
    if (f > state.config().n_window)
        throw ScheduleError("clip exceeds the inference window; use the long-video path");

    TrainSample view;
    view.bundle = bundle;
    view.garment = garment;
    view.target.frames = bundle.agnostic.frames;  // only dims are used
    const detail::PreparedSample prep =
        detail::prepare_sample(view, state.config().garment_grid);

    const LatentClip final_latents = detail::run_sampler(state, prep, cfg, initial_noise);
    return decode_latent(final_latents);
}

// Deterministic attention-mass probe: one forward pass at a fixed noise
// level with seeded noise and the deterministic partner policy, so runs with
// different training histories stay directly comparable.
inline AttentionMass eval_attention_mass(ToyState& state, const TrainSample& sample,
                                         double sigma, bool ct_enabled,
                                         std::uint64_t seed = 17) {
    const ToyModelConfig& mc = state.config();
    const detail::PreparedSample prep = detail::prepare_sample(sample, mc.garment_grid);
    const Preconditioning pre = precondition(sigma, 0.5);

    Rng rng(seed);
    Tensor noisy = prep.target_latents.latents;
    {
        Tensor noise = Tensor::zeros_like(noisy);
        fill_normal(noise, rng);
        for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] += sigma * noise[i];
    }
    for (std::size_t i = 0; i < noisy.size(); ++i) noisy[i] *= pre.c_in;

    const std::vector<int> partner = detail::pick_partners(
        ct_enabled, FrameSelectionMode::infer_deterministic, prep.frames, rng);

    ad::Tape tape;
    ad::ParamBinder bind(tape, state.params());
    const ForwardResult fwd =
        toy_forward(tape, bind, mc, detail::assemble_channels(noisy, prep),
                    prep.pose_emb, prep.garment_pooled, pre.c_noise, partner);

    AttentionProbMap map;
    map.probs = fwd.probs->value;
    map.grid_h = fwd.grid_h;
    map.grid_w = fwd.grid_w;
    return attention_mass(map, prep.partition);
}

// Window generator for orchestrate_long_generation: conditions on the
// orchestrator-substituted latent stream rather than re-encoding pixels.
inline WindowGeneratorFn make_window_generator(ToyState& state,
                                               const GarmentImage& garment,
                                               const InferConfig& cfg) {
    return [&state, garment, cfg](const WindowInput& win) {
        detail::PreparedSample prep;
        prep.frames = win.agnostic.n();
        prep.agnostic_latents = win.agnostic_latents;
        prep.target_latents = win.agnostic_latents;
        prep.mask_resized = resize_mask_to_latent(win.mask, kDefaultDownsample);
        prep.pose_emb = downsample_pose(win.pose, kDefaultDownsample);
        prep.garment_pooled = detail::pool_garment(garment, state.config().garment_grid);
        const int gh = prep.agnostic_latents.height() / 2;
        const int gw = prep.agnostic_latents.width() / 2;
        prep.partition = mask_to_partition(win.mask, gh, gw);

        InferConfig local = cfg;
        // Window identity feeds the noise seed so each window draws the same
        // noise independently of sweep order.
        local.seed = cfg.seed ^ (0x100000001b3ull * static_cast<std::uint64_t>(
                                     win.frame_indices.empty() ? 0 : win.frame_indices.front() + 1));
        const LatentClip latents = detail::run_sampler(state, prep, local, nullptr);
        return decode_latent(latents);
    };
}

}  // namespace vvt
