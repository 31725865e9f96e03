#include <gtest/gtest.h>

#include <cmath>

#include <vvt/metrics.hpp>

namespace {

using vvt::SsimParams;
using vvt::Tensor;
using vvt::VideoClip;

Tensor random_frame(int h, int w, vvt::Rng& rng) {
    Tensor f({h, w, 3});
    vvt::fill_uniform(f, rng);
    return f;
}

VideoClip random_clip(int n, int h, int w, vvt::Rng& rng) {
    VideoClip clip;
    clip.frames = Tensor({n, h, w, 3});
    vvt::fill_uniform(clip.frames, rng);
    return clip;
}

TEST(Ssim, SelfComparisonIsExactlyOne) {
    vvt::Rng rng(501);
    const Tensor f = random_frame(16, 20, rng);
    EXPECT_EQ(vvt::ssim(f, f), 1.0);
    Tensor gray({16, 20});
    vvt::fill_uniform(gray, rng);
    EXPECT_EQ(vvt::ssim(gray, gray), 1.0);
}

TEST(Ssim, Symmetric) {
    vvt::Rng rng(503);
    const Tensor a = random_frame(14, 14, rng);
    const Tensor b = random_frame(14, 14, rng);
    EXPECT_EQ(vvt::ssim(a, b), vvt::ssim(b, a));
}

// Two flat frames at 0 and 1: luminance term c1/(1+c1), contrast/structure
// term exactly 1, so ssim = 1e-4/(1+1e-4).
TEST(Ssim, ConstantZeroVersusConstantOne) {
    const Tensor zero({12, 12}, 0.0);
    const Tensor one({12, 12}, 1.0);
    EXPECT_NEAR(vvt::ssim(zero, one), 9.999000099990002e-05, 1e-12);
}

TEST(Ssim, BoundedAndOrdered) {
    vvt::Rng rng(509);
    const Tensor a = random_frame(16, 16, rng);
    Tensor slight = a;
    for (std::size_t i = 0; i < slight.size(); ++i)
        slight[i] = std::min(1.0, slight[i] + 0.01);
    const Tensor far = random_frame(16, 16, rng);
    const double s_slight = vvt::ssim(a, slight);
    const double s_far = vvt::ssim(a, far);
    EXPECT_LE(s_slight, 1.0);
    EXPECT_GE(s_slight, -1.0);
    EXPECT_GT(s_slight, 0.95);
    EXPECT_GT(s_slight, s_far);
}

TEST(Ssim, ParamsChangeResult) {
    vvt::Rng rng(521);
    const Tensor a = random_frame(16, 16, rng);
    const Tensor b = random_frame(16, 16, rng);
    SsimParams wide;
    wide.window = 7;
    EXPECT_NE(vvt::ssim(a, b), vvt::ssim(a, b, wide));
}

TEST(Ssim, Errors) {
    const Tensor small({8, 8}, 0.5);
    const Tensor other({8, 9}, 0.5);
    EXPECT_THROW(vvt::ssim(small, small), vvt::DimensionError);  // below window
    const Tensor a({12, 12}, 0.5);
    const Tensor b({12, 13}, 0.5);
    EXPECT_THROW(vvt::ssim(a, b), vvt::DimensionError);
    EXPECT_THROW(vvt::ssim(Tensor({12, 12, 4}), Tensor({12, 12, 4})),
                 vvt::DimensionError);
}

TEST(ClipSsim, AveragesFrames) {
    vvt::Rng rng(523);
    const VideoClip a = random_clip(3, 12, 12, rng);
    const VideoClip b = random_clip(3, 12, 12, rng);
    double acc = 0.0;
    for (int i = 0; i < 3; ++i)
        acc += vvt::ssim(vvt::clip_frame(a, i), vvt::clip_frame(b, i));
    EXPECT_NEAR(vvt::clip_ssim(a, b), acc / 3.0, 1e-15);
    EXPECT_EQ(vvt::clip_ssim(a, a), 1.0);

    const VideoClip shorter = random_clip(2, 12, 12, rng);
    EXPECT_THROW(vvt::clip_ssim(a, shorter), vvt::DimensionError);
    VideoClip empty;
    EXPECT_THROW(vvt::clip_ssim(empty, empty), vvt::DimensionError);
}

TEST(FlickerScore, ZeroWhenMotionMatches) {
    vvt::Rng rng(541);
    VideoClip ref = random_clip(4, 6, 6, rng);
    // Snap to a 1/256 grid so the 0.125 offset below stays exact.
    for (std::size_t i = 0; i < ref.frames.size(); ++i)
        ref.frames[i] = std::floor(ref.frames[i] * 256.0) / 256.0;
    EXPECT_EQ(vvt::flicker_score(ref, ref), 0.0);

    // Constant offset preserves temporal differences exactly.
    VideoClip shifted = ref;
    for (std::size_t i = 0; i < shifted.frames.size(); ++i)
        shifted.frames[i] += 0.125;
    EXPECT_EQ(vvt::flicker_score(shifted, ref), 0.0);
}

// One generated frame off by delta in one pixel channel perturbs the two
// adjacent temporal differences: flicker = 2*delta^2 / (3HW) / (n-1).
TEST(FlickerScore, SingleSpikeOracle) {
    const int n = 4, h = 6, w = 6;
    VideoClip ref;
    ref.frames = Tensor({n, h, w, 3}, 0.5);
    VideoClip gen = ref;
    const double delta = 0.25;
    gen.frames.at(1, 2, 3, 0) += delta;
    const double expected = 2.0 * delta * delta / (3.0 * h * w) / (n - 1);
    EXPECT_NEAR(vvt::flicker_score(gen, ref), expected, 1e-15);
    EXPECT_NEAR(vvt::flicker_score(ref, gen), expected, 1e-15);
}

TEST(FlickerScore, PenalizesTemporalNoiseNotBias) {
    vvt::Rng rng(547);
    VideoClip ref;
    ref.frames = Tensor({6, 8, 8, 3}, 0.5);
    VideoClip noisy = ref;
    Tensor noise({6, 8, 8, 3});
    vvt::fill_normal(noise, rng);
    for (std::size_t i = 0; i < noise.size(); ++i)
        noisy.frames[i] += 0.1 * noise[i];
    EXPECT_GT(vvt::flicker_score(noisy, ref), 0.001);
}

TEST(FlickerScore, Errors) {
    vvt::Rng rng(557);
    const VideoClip a = random_clip(1, 6, 6, rng);
    EXPECT_THROW(vvt::flicker_score(a, a), vvt::DomainError);
    const VideoClip b = random_clip(2, 6, 6, rng);
    const VideoClip c = random_clip(3, 6, 6, rng);
    EXPECT_THROW(vvt::flicker_score(b, c), vvt::DimensionError);
}

TEST(MetricRegistry, SsimPreregistered) {
    const auto fn = vvt::perceptual_metric_interface("ssim");
    ASSERT_TRUE(fn.has_value());
    vvt::Rng rng(561);
    const VideoClip a = random_clip(2, 12, 12, rng);
    const VideoClip b = random_clip(2, 12, 12, rng);
    EXPECT_EQ((*fn)(a, b), vvt::clip_ssim(a, b));
}

TEST(MetricRegistry, UnknownNameIsEmptyNotError) {
    EXPECT_FALSE(vvt::perceptual_metric_interface("lpips").has_value());
    EXPECT_FALSE(vvt::perceptual_metric_interface("").has_value());
}

TEST(MetricRegistry, CustomMetricRoundTrip) {
    vvt::MetricRegistry::instance().register_metric(
        "const_seven", [](const VideoClip&, const VideoClip&) { return 7.0; });
    const auto fn = vvt::perceptual_metric_interface("const_seven");
    ASSERT_TRUE(fn.has_value());
    VideoClip a;
    EXPECT_EQ((*fn)(a, a), 7.0);
}

}  // namespace
