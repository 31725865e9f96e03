#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <vvt/synthetic.hpp>
#include <vvt/toy_pipeline.hpp>

namespace {

namespace ad = vvt::ad;
using vvt::InferConfig;
using vvt::MotionSpec;
using vvt::Tensor;
using vvt::ToyModelConfig;
using vvt::ToyState;
using vvt::TrainConfig;
using vvt::TrainSample;
using vvt::VideoClip;

MotionSpec small_motion() {
    MotionSpec m;
    m.torso_x0 = 4;
    m.torso_y0 = 8;
    m.torso_w = 8;
    m.torso_h = 12;
    m.dx_per_frame = 2;
    m.garment_cell = 4;
    return m;
}

TrainSample small_sample(std::uint64_t seed, int frames) {
    const vvt::SyntheticScene scene =
        vvt::generate_synthetic_clip(seed, frames, 32, 24, small_motion());
    TrainSample s;
    s.bundle = scene.bundle;
    s.garment = scene.garment;
    s.target = scene.target;
    return s;
}

ToyModelConfig small_model() {
    ToyModelConfig cfg;
    cfg.base_channels = 6;
    cfg.heads = 2;
    cfg.garment_grid = 2;
    cfg.n_window = 8;
    return cfg;
}

TEST(ToyModelConfig, Validation) {
    ToyModelConfig cfg;
    EXPECT_EQ(cfg.attention_dim(), 24);
    EXPECT_EQ(cfg.garment_tokens(), 16);
    EXPECT_NO_THROW(cfg.validate());
    cfg.heads = 5;  // 24 % 5 != 0
    EXPECT_THROW(cfg.validate(), vvt::ConfigError);
    cfg = ToyModelConfig{};
    cfg.base_channels = 0;
    EXPECT_THROW(cfg.validate(), vvt::ConfigError);
    cfg = ToyModelConfig{};
    cfg.garment_grid = 0;
    EXPECT_THROW(cfg.validate(), vvt::ConfigError);
    cfg = ToyModelConfig{};
    cfg.n_window = 0;
    EXPECT_THROW(cfg.validate(), vvt::ConfigError);
}

TEST(ToyState, InitializationContract) {
    ToyState state(small_model(), 51);
    EXPECT_EQ(state.seed(), 51u);
    EXPECT_EQ(state.trained_steps, 0);
    // Output head and attention projection start at zero so the raw net is
    // exactly zero and attention starts as a pass-through.
    EXPECT_EQ(vvt::max_abs(state.params().get("out.w").value), 0.0);
    EXPECT_EQ(vvt::max_abs(state.params().get("out.b").value), 0.0);
    EXPECT_EQ(vvt::max_abs(state.params().get("attn.wo").value), 0.0);
    EXPECT_GT(vvt::max_abs(state.params().get("attn.wq").value), 0.0);
    EXPECT_GT(vvt::max_abs(state.params().get("in.w").value), 0.0);

    ToyState again(small_model(), 51);
    EXPECT_TRUE(again.params().get("in.w").value == state.params().get("in.w").value);
    ToyState other(small_model(), 52);
    EXPECT_FALSE(other.params().get("in.w").value == state.params().get("in.w").value);
}

TEST(PoolGarment, AveragesCells) {
    vvt::GarmentImage g;
    g.image = Tensor({4, 4, 3});
    // Quadrants with distinct red values.
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            g.image.at(y, x, 0) = (y < 2 ? 0.0 : 0.5) + (x < 2 ? 0.0 : 0.25);
    const Tensor pooled = vvt::detail::pool_garment(g, 2);
    ASSERT_TRUE(pooled.same_shape(Tensor({4, 3})));
    EXPECT_EQ(pooled.at(0, 0), 0.0);
    EXPECT_EQ(pooled.at(1, 0), 0.25);
    EXPECT_EQ(pooled.at(2, 0), 0.5);
    EXPECT_EQ(pooled.at(3, 0), 0.75);
    EXPECT_EQ(pooled.at(3, 1), 0.0);

    vvt::GarmentImage tiny;
    tiny.image = Tensor({1, 4, 3});
    EXPECT_THROW(vvt::detail::pool_garment(tiny, 2), vvt::DimensionError);
    vvt::GarmentImage flat;
    flat.image = Tensor({4, 4});
    EXPECT_THROW(vvt::detail::pool_garment(flat, 2), vvt::DimensionError);
}

// With out.w/out.b zero, the raw network output is identically zero no matter
// the input, which is what makes the denoiser start at c_skip * x.
TEST(ToyForward, RawOutputZeroAtInit) {
    const TrainSample sample = small_sample(61, 2);
    ToyState state(small_model(), 61);
    const vvt::detail::PreparedSample prep =
        vvt::detail::prepare_sample(sample, state.config().garment_grid);

    ad::Tape tape;
    ad::ParamBinder bind(tape, state.params());
    const Tensor channels =
        vvt::detail::assemble_channels(prep.agnostic_latents.latents, prep);
    const vvt::ForwardResult fwd =
        toy_forward(tape, bind, state.config(), channels, prep.pose_emb,
                    prep.garment_pooled, 0.25, {});
    EXPECT_EQ(vvt::max_abs(fwd.raw_out->value), 0.0);
    ASSERT_EQ(fwd.raw_out->value.dim(0), 2);
    ASSERT_EQ(fwd.raw_out->value.dim(3), vvt::kLatentChannels);
    EXPECT_EQ(fwd.grid_h, 8);
    EXPECT_EQ(fwd.grid_w, 6);
    ASSERT_TRUE(fwd.probs->value.same_shape(Tensor({2, 48})));
    for (std::size_t i = 0; i < fwd.probs->value.size(); ++i) {
        ASSERT_GT(fwd.probs->value[i], 0.0);
        ASSERT_LT(fwd.probs->value[i], 1.0);
    }
}

TEST(ToyForward, PartnerPolicyAndShapeGuards) {
    const TrainSample sample = small_sample(67, 3);
    ToyState state(small_model(), 67);
    const vvt::detail::PreparedSample prep =
        vvt::detail::prepare_sample(sample, state.config().garment_grid);
    const Tensor channels =
        vvt::detail::assemble_channels(prep.agnostic_latents.latents, prep);

    ad::Tape tape;
    ad::ParamBinder bind(tape, state.params());
    EXPECT_THROW(toy_forward(tape, bind, state.config(), channels, prep.pose_emb,
                             prep.garment_pooled, 0.0, {2, 0, 1}),
                 vvt::PolicyViolationError);  // partner[2] == 1 == i-1
    EXPECT_THROW(toy_forward(tape, bind, state.config(), channels, prep.pose_emb,
                             prep.garment_pooled, 0.0, {0, 0}),
                 vvt::DimensionError);  // partner list too short
    EXPECT_THROW(toy_forward(tape, bind, state.config(), Tensor({3, 16, 12, 4}),
                             prep.pose_emb, prep.garment_pooled, 0.0, {}),
                 vvt::DimensionError);
}

TEST(ToyForward, PartnerChangesAttentionProbs) {
    const TrainSample sample = small_sample(71, 3);
    ToyState state(small_model(), 71);
    const vvt::detail::PreparedSample prep =
        vvt::detail::prepare_sample(sample, state.config().garment_grid);
    const Tensor channels =
        vvt::detail::assemble_channels(prep.agnostic_latents.latents, prep);

    const auto run = [&](const std::vector<int>& partner) {
        ad::Tape tape;
        ad::ParamBinder bind(tape, state.params());
        return toy_forward(tape, bind, state.config(), channels, prep.pose_emb,
                           prep.garment_pooled, 0.1, partner)
            .probs->value;
    };
    const Tensor ct_on = run({1, 2, 0});
    const Tensor ct_on_again = run({1, 2, 0});
    const Tensor ct_off = run({});
    EXPECT_TRUE(ct_on == ct_on_again);
    EXPECT_FALSE(ct_on == ct_off);
}

TEST(TrainStep, RecordArithmeticAndProgress) {
    const TrainSample sample = small_sample(73, 2);
    ToyState state(small_model(), 73);
    ad::AdamOptimizer opt(ad::AdamConfig{1e-3, 0.9, 0.999, 1e-8});
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 2;
    cfg.lambda_agn = 0.5;
    vvt::Rng rng(73);

    const Tensor before = state.params().get("out.b").value;
    const vvt::TrainStepRecord rec = vvt::train_step(state, opt, sample, cfg, rng);
    EXPECT_EQ(rec.step, 0);
    EXPECT_GT(rec.dsm, 0.0);
    EXPECT_GT(rec.agn, 0.0);
    EXPECT_NEAR(rec.total, rec.dsm + cfg.lambda_agn * rec.agn, 1e-9);
    EXPECT_GT(rec.in_mask_mass, 0.0);
    EXPECT_GT(rec.out_mask_mass, 0.0);
    EXPECT_EQ(state.trained_steps, 1);
    EXPECT_EQ(opt.step_count(), 1);
    EXPECT_FALSE(state.params().get("out.b").value == before);

    const vvt::TrainStepRecord rec2 = vvt::train_step(state, opt, sample, cfg, rng);
    EXPECT_EQ(rec2.step, 1);
    EXPECT_EQ(state.trained_steps, 2);
}

TEST(TrainStep, ZeroLambdaAgnDropsTheAttentionTerm) {
    const TrainSample sample = small_sample(79, 2);
    TrainConfig base;
    base.batch_size = 1;
    base.seed = 79;

    ToyState a(small_model(), 79);
    ToyState b(small_model(), 79);
    ad::AdamOptimizer opt_a, opt_b;
    vvt::Rng rng_a(5), rng_b(5);

    TrainConfig cfg_a = base;
    cfg_a.lambda_agn = 0.0;
    TrainConfig cfg_b = base;
    cfg_b.lambda_agn = 0.5;

    const vvt::TrainStepRecord ra = vvt::train_step(a, opt_a, sample, cfg_a, rng_a);
    const vvt::TrainStepRecord rb = vvt::train_step(b, opt_b, sample, cfg_b, rng_b);
    // Identical RNG consumption: the attention loss adds no draws, so the
    // forward passes coincide and only the total differs.
    EXPECT_EQ(ra.dsm, rb.dsm);
    EXPECT_EQ(ra.agn, rb.agn);
    EXPECT_EQ(ra.total, ra.dsm);
    EXPECT_NEAR(rb.total, rb.dsm + 0.5 * rb.agn, 1e-12);
}

TEST(TrainStep, ConfigValidation) {
    const TrainSample sample = small_sample(83, 2);
    ToyState state(small_model(), 83);
    ad::AdamOptimizer opt;
    vvt::Rng rng(1);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    EXPECT_THROW(vvt::train_step(state, opt, sample, cfg, rng), vvt::ConfigError);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    EXPECT_THROW(vvt::train_step(state, opt, sample, cfg, rng), vvt::ConfigError);
    cfg = TrainConfig{};
    cfg.lambda_n = -0.1;
    EXPECT_THROW(vvt::train_step(state, opt, sample, cfg, rng), vvt::ConfigError);
    cfg = TrainConfig{};
    cfg.steps = 0;
    EXPECT_THROW(vvt::train_step(state, opt, sample, cfg, rng), vvt::ConfigError);

    TrainSample broken = sample;
    broken.bundle.mask.masks = Tensor({1, 32, 24});
    cfg = TrainConfig{};
    EXPECT_THROW(vvt::train_step(state, opt, broken, cfg, rng), vvt::DimensionError);
}

TEST(OverfitClip, DeterministicAndReducesEvalLoss) {
    const TrainSample sample = small_sample(89, 2);
    TrainConfig cfg;
    cfg.steps = 60;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 1;
    cfg.seed = 89;

    // Fixed-noise eval at sigma = 1 before and after training.
    const auto eval_dsm = [&sample](ToyState& state) {
        const vvt::detail::PreparedSample prep =
            vvt::detail::prepare_sample(sample, state.config().garment_grid);
        vvt::Rng rng(123);
        vvt::LatentClip noise;
        noise.latents = Tensor::zeros_like(prep.target_latents.latents);
        vvt::fill_normal(noise.latents, rng);
        const vvt::RawNetFn raw = [&](const Tensor& scaled, double c_noise) {
            ad::Tape tape;
            ad::ParamBinder bind(tape, state.params());
            return toy_forward(tape, bind, state.config(),
                               vvt::detail::assemble_channels(scaled, prep),
                               prep.pose_emb, prep.garment_pooled, c_noise, {})
                .raw_out->value;
        };
        const vvt::DenoiserFn den = [&](const vvt::LatentClip& x, double sigma) {
            return vvt::apply_denoiser(raw, x, sigma, 0.5);
        };
        return vvt::dsm_loss(den, prep.target_latents, noise, 1.0);
    };

    ToyState fresh(small_model(), cfg.seed);
    const double before = eval_dsm(fresh);

    vvt::OverfitResult res = vvt::overfit_clip(sample, cfg, small_model());
    ASSERT_EQ(res.curve.size(), 60u);
    EXPECT_EQ(res.state.trained_steps, 60);
    for (std::size_t i = 0; i < res.curve.size(); ++i)
        EXPECT_EQ(res.curve[i].step, static_cast<int>(i));
    const double after = eval_dsm(res.state);
    EXPECT_LT(after, before);

    vvt::OverfitResult res2 = vvt::overfit_clip(sample, cfg, small_model());
    EXPECT_TRUE(res2.state.params().get("out.w").value ==
                res.state.params().get("out.w").value);
    EXPECT_EQ(res2.curve.back().total, res.curve.back().total);
}

TEST(InferClip, ShapesDeterminismAndWindowGuard) {
    const TrainSample sample = small_sample(97, 2);
    ToyState state(small_model(), 97);
    InferConfig cfg;
    cfg.schedule.num_steps = 4;
    cfg.seed = 11;

    const VideoClip out = vvt::infer_clip(sample.bundle, sample.garment, state, cfg);
    ASSERT_EQ(out.n(), 2);
    ASSERT_EQ(out.height(), 32);
    ASSERT_EQ(out.width(), 24);
    for (std::size_t i = 0; i < out.frames.size(); ++i) {
        ASSERT_GE(out.frames[i], 0.0);
        ASSERT_LE(out.frames[i], 1.0);
    }

    const VideoClip again = vvt::infer_clip(sample.bundle, sample.garment, state, cfg);
    EXPECT_TRUE(again.frames == out.frames);

    InferConfig other = cfg;
    other.seed = 12;
    const VideoClip moved = vvt::infer_clip(sample.bundle, sample.garment, state, other);
    EXPECT_FALSE(moved.frames == out.frames);

    MotionSpec still = small_motion();
    still.dx_per_frame = 0;  // room for more frames than the window allows
    const vvt::SyntheticScene long_scene =
        vvt::generate_synthetic_clip(97, 9, 32, 24, still);
    EXPECT_THROW(vvt::infer_clip(long_scene.bundle, long_scene.garment, state, cfg),
                 vvt::ScheduleError);
}

// Supplying the exact noise the sampler would draw reproduces the run.
TEST(InferClip, ExplicitInitialNoiseMatchesInternalDraw) {
    const TrainSample sample = small_sample(101, 2);
    ToyState state(small_model(), 101);
    InferConfig cfg;
    cfg.schedule.num_steps = 3;
    cfg.seed = 21;

    const VideoClip internal = vvt::infer_clip(sample.bundle, sample.garment, state, cfg);

    vvt::Rng rng(cfg.seed ^ 0xd1b54a32d192ed03ull);
    Tensor noise({2, 16, 12, vvt::kLatentChannels});
    vvt::fill_normal(noise, rng);  // deterministic partners consume no draws
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] *= cfg.schedule.sigma_max;
    const VideoClip replayed =
        vvt::infer_clip(sample.bundle, sample.garment, state, cfg, &noise);
    EXPECT_TRUE(replayed.frames == internal.frames);

    Tensor bad({1, 16, 12, vvt::kLatentChannels});
    EXPECT_THROW(vvt::infer_clip(sample.bundle, sample.garment, state, cfg, &bad),
                 vvt::DimensionError);
}

// With the temporal path disabled every frame denoises independently, so a
// single-frame bundle reproduces frame 0 of the two-frame run bit for bit.
TEST(InferClip, CtOffFramesAreIndependent) {
    const TrainSample sample = small_sample(103, 2);
    ToyState state(small_model(), 103);
    InferConfig cfg;
    cfg.schedule.num_steps = 3;
    cfg.ct_enabled = false;
    cfg.seed = 31;

    Tensor noise({2, 16, 12, vvt::kLatentChannels});
    vvt::Rng rng(7);
    vvt::fill_normal(noise, rng);
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] *= cfg.schedule.sigma_max;
    const VideoClip both =
        vvt::infer_clip(sample.bundle, sample.garment, state, cfg, &noise);

    vvt::AgnosticBundle first;
    first.agnostic.frames = Tensor({1, 32, 24, 3});
    first.mask.masks = Tensor({1, 32, 24});
    first.pose.frames = Tensor({1, 32, 24, 3});
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 24; ++x) {
            first.mask.masks.at(0, y, x) = sample.bundle.mask.masks.at(0, y, x);
            for (int c = 0; c < 3; ++c) {
                first.agnostic.frames.at(0, y, x, c) =
                    sample.bundle.agnostic.frames.at(0, y, x, c);
                first.pose.frames.at(0, y, x, c) = sample.bundle.pose.frames.at(0, y, x, c);
            }
        }
    Tensor noise0({1, 16, 12, vvt::kLatentChannels});
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 12; ++x)
            for (int c = 0; c < vvt::kLatentChannels; ++c)
                noise0.at(0, y, x, c) = noise.at(0, y, x, c);
    const VideoClip solo = vvt::infer_clip(first, sample.garment, state, cfg, &noise0);

    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 24; ++x)
            for (int c = 0; c < 3; ++c)
                ASSERT_EQ(solo.frames.at(0, y, x, c), both.frames.at(0, y, x, c));
}

TEST(EvalAttentionMass, DeterministicProbe) {
    const TrainSample sample = small_sample(107, 2);
    ToyState state(small_model(), 107);
    const vvt::AttentionMass a = vvt::eval_attention_mass(state, sample, 1.0, true);
    const vvt::AttentionMass b = vvt::eval_attention_mass(state, sample, 1.0, true);
    EXPECT_EQ(a.in_mask, b.in_mask);
    EXPECT_EQ(a.out_mask, b.out_mask);
    EXPECT_GT(a.in_mask, 0.0);
    EXPECT_GT(a.out_mask, 0.0);
    const vvt::AttentionMass c = vvt::eval_attention_mass(state, sample, 1.0, false);
    EXPECT_NE(a.in_mask, c.in_mask);
    const vvt::AttentionMass d = vvt::eval_attention_mass(state, sample, 1.0, true, 18);
    EXPECT_NE(a.in_mask, d.in_mask);
}

TEST(WindowGenerator, DrivesLongOrchestration) {
    const TrainSample sample = small_sample(109, 7);
    ToyState state(small_model(), 109);
    InferConfig cfg;
    cfg.schedule.num_steps = 2;
    cfg.seed = 41;

    vvt::LongGenerationParams params;
    params.n_window = 4;
    params.overlap = 1;
    params.s_max = 4;
    params.d_pose = 0.05;

    const vvt::WindowGeneratorFn gen =
        vvt::make_window_generator(state, sample.garment, cfg);
    const VideoClip out =
        vvt::orchestrate_long_generation(sample.bundle, gen, params);
    ASSERT_EQ(out.n(), 7);
    ASSERT_EQ(out.height(), 32);
    for (std::size_t i = 0; i < out.frames.size(); ++i) {
        ASSERT_GE(out.frames[i], 0.0);
        ASSERT_LE(out.frames[i], 1.0);
    }

    const VideoClip again =
        vvt::orchestrate_long_generation(sample.bundle, gen, params);
    EXPECT_TRUE(again.frames == out.frames);
}

}  // namespace
