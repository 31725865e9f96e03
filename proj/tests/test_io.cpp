#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <vvt/io.hpp>
#include <vvt/synthetic.hpp>
#include <vvt/toy_pipeline.hpp>

namespace {

namespace fs = std::filesystem;
using vvt::Tensor;
using vvt::VideoClip;

class IoTest : public ::testing::Test {
  protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("vvt_io_" + std::to_string(::testing::UnitTest::GetInstance()
                                               ->random_seed()) +
                "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path dir_;
};

Tensor quantized_frame(int h, int w, int channels, vvt::Rng& rng) {
    Tensor f(channels == 1 ? std::vector<int>{h, w} : std::vector<int>{h, w, 3});
    std::uniform_int_distribution<int> level(0, 255);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = level(rng) / 255.0;
    return f;
}

TEST_F(IoTest, Quantize8RoundsAndClamps) {
    EXPECT_EQ(vvt::io::quantize8(0.0), 0);
    EXPECT_EQ(vvt::io::quantize8(1.0), 255);
    EXPECT_EQ(vvt::io::quantize8(-0.5), 0);
    EXPECT_EQ(vvt::io::quantize8(1.5), 255);
    EXPECT_EQ(vvt::io::quantize8(0.5), 128);  // 127.5 rounds away from zero
    EXPECT_EQ(vvt::io::quantize8(64.0 / 255.0), 64);
}

TEST_F(IoTest, PpmExactRoundTripOnQuantizedValues) {
    vvt::Rng rng(701);
    const Tensor f = quantized_frame(10, 14, 3, rng);
    vvt::io::write_ppm(dir_ / "a.ppm", f);
    const Tensor back = vvt::io::read_ppm(dir_ / "a.ppm");
    ASSERT_TRUE(back.same_shape(f));
    for (std::size_t i = 0; i < f.size(); ++i) ASSERT_EQ(back[i], f[i]);
}

TEST_F(IoTest, PpmQuantizationErrorBound) {
    vvt::Rng rng(703);
    Tensor f({6, 6, 3});
    vvt::fill_uniform(f, rng);
    vvt::io::write_ppm(dir_ / "b.ppm", f);
    const Tensor back = vvt::io::read_ppm(dir_ / "b.ppm");
    for (std::size_t i = 0; i < f.size(); ++i)
        ASSERT_NEAR(back[i], f[i], 0.5 / 255.0 + 1e-12);
}

TEST_F(IoTest, PgmRoundTrip) {
    vvt::Rng rng(707);
    const Tensor f = quantized_frame(8, 9, 1, rng);
    vvt::io::write_pgm(dir_ / "m.pgm", f);
    const Tensor back = vvt::io::read_pgm(dir_ / "m.pgm");
    ASSERT_TRUE(back.same_shape(f));
    for (std::size_t i = 0; i < f.size(); ++i) ASSERT_EQ(back[i], f[i]);
}

TEST_F(IoTest, NetpbmErrors) {
    EXPECT_THROW(vvt::io::write_ppm(dir_ / "bad.ppm", Tensor({4, 4})),
                 vvt::DimensionError);
    EXPECT_THROW(vvt::io::write_pgm(dir_ / "bad.pgm", Tensor({4, 4, 3})),
                 vvt::DimensionError);
    EXPECT_THROW(vvt::io::write_ppm(dir_ / "no_dir" / "x.ppm", Tensor({4, 4, 3})),
                 vvt::IoError);
    EXPECT_THROW(vvt::io::read_ppm(dir_ / "missing.ppm"), vvt::IoError);

    std::ofstream(dir_ / "garbage.ppm") << "NOTAPPM 1 2 3";
    EXPECT_THROW(vvt::io::read_ppm(dir_ / "garbage.ppm"), vvt::IoError);
    std::ofstream(dir_ / "p5.ppm") << "P5\n2 2\n255\nxxxx";
    EXPECT_THROW(vvt::io::read_ppm(dir_ / "p5.ppm"), vvt::IoError);

    std::ofstream(dir_ / "short.ppm", std::ios::binary) << "P6\n4 4\n255\nab";
    EXPECT_THROW(vvt::io::read_ppm(dir_ / "short.ppm"), vvt::IoError);
    std::ofstream(dir_ / "deep.ppm", std::ios::binary) << "P6\n2 2\n65535\n";
    EXPECT_THROW(vvt::io::read_ppm(dir_ / "deep.ppm"), vvt::IoError);
}

TEST_F(IoTest, FrameNamesArePadded) {
    EXPECT_EQ(vvt::io::frame_name(0), "frame_0000");
    EXPECT_EQ(vvt::io::frame_name(37), "frame_0037");
    EXPECT_EQ(vvt::io::frame_name(12345), "frame_12345");
}

TEST_F(IoTest, ManifestRoundTrip) {
    const std::map<std::string, std::string> kv = {
        {"n_frames", "8"}, {"height", "64"}, {"note", "a=b stays intact"}};
    vvt::io::write_manifest(dir_ / "manifest.txt", kv);
    const auto back = vvt::io::read_manifest(dir_ / "manifest.txt");
    EXPECT_EQ(back, kv);

    std::ofstream(dir_ / "broken.txt") << "just a line without equals\n";
    EXPECT_THROW(vvt::io::read_manifest(dir_ / "broken.txt"), vvt::IoError);
    EXPECT_THROW(vvt::io::read_manifest(dir_ / "missing.txt"), vvt::IoError);
}

TEST_F(IoTest, VideoDirRoundTrip) {
    vvt::Rng rng(709);
    VideoClip clip;
    clip.frames = Tensor({3, 10, 12, 3});
    std::uniform_int_distribution<int> level(0, 255);
    for (std::size_t i = 0; i < clip.frames.size(); ++i)
        clip.frames[i] = level(rng) / 255.0;
    clip.frame_rate = 12.0;

    vvt::io::write_video_dir(dir_ / "clip", clip);
    const VideoClip back = vvt::io::read_video_dir(dir_ / "clip");
    EXPECT_EQ(back.frame_rate, 12.0);
    ASSERT_TRUE(back.frames.same_shape(clip.frames));
    for (std::size_t i = 0; i < clip.frames.size(); ++i)
        ASSERT_EQ(back.frames[i], clip.frames[i]);

    EXPECT_THROW(vvt::io::read_video_dir(dir_ / "nope"), vvt::IoError);
}

TEST_F(IoTest, SceneDirRoundTrip) {
    const vvt::SyntheticScene scene = vvt::generate_synthetic_clip(711, 3, 64, 48);
    vvt::io::write_scene_dir(dir_ / "scene", scene);
    const vvt::TrainSample back = vvt::io::read_scene_dir(dir_ / "scene");

    ASSERT_EQ(back.target.n(), 3);
    ASSERT_TRUE(back.bundle.mask.masks == scene.bundle.mask.masks);  // binary survives
    EXPECT_EQ(back.bundle.agnostic.fill_value, 0.5);
    for (int c = 0; c < 3; ++c)
        EXPECT_EQ(back.bundle.pose.background_color[static_cast<std::size_t>(c)],
                  scene.bundle.pose.background_color[static_cast<std::size_t>(c)]);

    const double tol = 0.5 / 255.0 + 1e-12;
    for (std::size_t i = 0; i < scene.target.frames.size(); ++i) {
        ASSERT_NEAR(back.target.frames[i], scene.target.frames[i], tol);
        ASSERT_NEAR(back.bundle.agnostic.frames[i], scene.bundle.agnostic.frames[i], tol);
        ASSERT_NEAR(back.bundle.pose.frames[i], scene.bundle.pose.frames[i], tol);
    }
    ASSERT_TRUE(back.garment.image.same_shape(scene.garment.image));
    for (std::size_t i = 0; i < scene.garment.image.size(); ++i)
        ASSERT_NEAR(back.garment.image[i], scene.garment.image[i], tol);
}

TEST_F(IoTest, SceneDirWithoutTargetIsADeploymentBundle) {
    const vvt::SyntheticScene scene = vvt::generate_synthetic_clip(713, 2, 64, 48);
    vvt::io::write_scene_dir(dir_ / "scene", scene);
    fs::remove_all(dir_ / "scene" / "target");
    const vvt::TrainSample back = vvt::io::read_scene_dir(dir_ / "scene");
    EXPECT_EQ(back.target.n(), 0);
    EXPECT_EQ(back.bundle.agnostic.n(), 2);
}

TEST_F(IoTest, CheckpointRoundTripIsBitExact) {
    vvt::ToyModelConfig model;
    model.base_channels = 6;
    model.heads = 2;
    model.garment_grid = 2;
    vvt::ToyState state(model, 715);
    state.trained_steps = 12;
    // Dirty some moments so the round trip covers them.
    state.params().get("in.w").m.fill(0.25);
    state.params().get("in.w").v.fill(0.0625);

    vvt::io::save_checkpoint(dir_ / "ck.bin", state, 34);
    vvt::io::LoadedCheckpoint loaded = vvt::io::load_checkpoint(dir_ / "ck.bin");

    EXPECT_EQ(loaded.optimizer_steps, 34);
    EXPECT_EQ(loaded.state.trained_steps, 12);
    EXPECT_EQ(loaded.state.seed(), 715u);
    EXPECT_EQ(loaded.state.config().base_channels, 6);
    EXPECT_EQ(loaded.state.config().heads, 2);
    ASSERT_EQ(loaded.state.params().count(), state.params().count());
    for (std::size_t i = 0; i < state.params().count(); ++i) {
        const vvt::ad::Param& a = state.params().at(i);
        const vvt::ad::Param& b = loaded.state.params().get(a.name);
        ASSERT_TRUE(a.value == b.value) << a.name;
        ASSERT_TRUE(a.m == b.m) << a.name;
        ASSERT_TRUE(a.v == b.v) << a.name;
    }
}

TEST_F(IoTest, CheckpointRejectsCorruption) {
    EXPECT_THROW(vvt::io::load_checkpoint(dir_ / "missing.bin"), vvt::IoError);

    std::ofstream(dir_ / "badmagic.bin", std::ios::binary) << "NOTVVTCKtrailing";
    EXPECT_THROW(vvt::io::load_checkpoint(dir_ / "badmagic.bin"), vvt::IoError);

    vvt::ToyModelConfig model;
    model.base_channels = 6;
    model.heads = 2;
    model.garment_grid = 2;
    vvt::ToyState state(model, 717);
    vvt::io::save_checkpoint(dir_ / "ok.bin", state, 0);
    const auto full = static_cast<std::streamoff>(fs::file_size(dir_ / "ok.bin"));
    fs::resize_file(dir_ / "ok.bin", static_cast<std::uintmax_t>(full / 2));
    EXPECT_THROW(vvt::io::load_checkpoint(dir_ / "ok.bin"), vvt::IoError);
}

TEST_F(IoTest, MetricsJsonlRoundTrip) {
    std::vector<vvt::TrainStepRecord> recs(3);
    recs[0] = {0, 1.5, 0.25, 1.625, 3.7, 0.9};
    recs[1] = {1, 1.25, 0.125, 1.3125, 4.2, 0.8};
    recs[2] = {2, 0.1234567890123456, 0.0, 0.1234567890123456, 5.0, 0.7};

    std::ofstream out(dir_ / "metrics.jsonl");
    for (const auto& r : recs) vvt::io::append_metrics(out, r);
    out.close();

    const auto back = vvt::io::read_metrics(dir_ / "metrics.jsonl");
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back[i].step, recs[i].step);
        EXPECT_EQ(back[i].dsm, recs[i].dsm);
        EXPECT_EQ(back[i].agn, recs[i].agn);
        EXPECT_EQ(back[i].total, recs[i].total);
        EXPECT_EQ(back[i].in_mask_mass, recs[i].in_mask_mass);
        EXPECT_EQ(back[i].out_mask_mass, recs[i].out_mask_mass);
    }

    std::ofstream(dir_ / "bad.jsonl") << "{not json}\n";
    EXPECT_THROW(vvt::io::read_metrics(dir_ / "bad.jsonl"), vvt::IoError);
}

TEST_F(IoTest, PlanRoundTrip) {
    vvt::KeyframePlan plan;
    plan.omega = {0, 4, 8};
    plan.d_pose = 0.05;
    plan.s_max = 4;
    plan.total_frames = 9;
    vvt::SegmentPlan segments;
    segments.overlap = 2;
    segments.segments = {{0, 8}, {1, 9}};

    vvt::io::write_plan(dir_ / "plan.json", plan, segments, 8);
    const vvt::io::LoadedPlan back = vvt::io::read_plan(dir_ / "plan.json");
    EXPECT_EQ(back.keyframes.omega, plan.omega);
    EXPECT_EQ(back.keyframes.d_pose, 0.05);
    EXPECT_EQ(back.keyframes.s_max, 4);
    EXPECT_EQ(back.keyframes.total_frames, 9);
    EXPECT_EQ(back.n_window, 8);
    EXPECT_EQ(back.segments.overlap, 2);
    EXPECT_EQ(back.segments.segments, segments.segments);

    std::ofstream(dir_ / "mangled.json") << "{{{";
    EXPECT_THROW(vvt::io::read_plan(dir_ / "mangled.json"), vvt::IoError);
    EXPECT_THROW(vvt::io::read_plan(dir_ / "absent.json"), vvt::IoError);
}

}  // namespace
