#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "vvt/data_model.hpp"
#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

// Scripted rigid motion of the torso rectangle. Even offsets and sizes keep
// every scene edge aligned to the codec's 2x2 blocks, so encode/decode round
// trips these clips essentially losslessly.
struct MotionSpec {
    int torso_x0 = 8;
    int torso_y0 = 20;
    int torso_w = 16;
    int torso_h = 24;
    int dx_per_frame = 2;
    int dy_per_frame = 0;
    int garment_cell = 4;
};

struct SyntheticScene {
    VideoClip target;     // person wearing the new garment
    VideoClip source;     // person wearing the original garment
    AgnosticBundle bundle;
    GarmentImage garment;
    MotionSpec motion;
};

namespace detail {

inline bool even(int v) { return v % 2 == 0; }

inline double background_shade(int y, int h) {
    const int band = y / 2;
    const int bands = h / 2;
    return 0.15 + 0.55 * static_cast<double>(band) / static_cast<double>(bands - 1);
}

}  // namespace detail

// Procedural try-on scene: a torso rectangle slides across a shaded backdrop.
// The target clip dresses it in a checker garment, the source clip in a solid
// one; the bundle carries the agnostic frames, the exact torso mask, and a
// DensePose stand-in (body block on the fixed purple backdrop).
inline SyntheticScene generate_synthetic_clip(std::uint64_t seed, int n, int h,
                                              int w, MotionSpec motion = {}) {
    if (n < 1) throw DimensionError("need at least one frame");
    if (h < 8 || w < 8) throw DimensionError("frames must be at least 8x8");
    if (!detail::even(h) || !detail::even(w) || !detail::even(motion.torso_x0) ||
        !detail::even(motion.torso_y0) || !detail::even(motion.torso_w) ||
        !detail::even(motion.torso_h) || !detail::even(motion.dx_per_frame) ||
        !detail::even(motion.dy_per_frame))
        throw DimensionError("scene geometry must be even-aligned");
    if (motion.garment_cell < 2 || !detail::even(motion.garment_cell))
        throw DimensionError("garment cell must be even and >= 2");
    for (int i = 0; i < n; ++i) {
        const int x0 = motion.torso_x0 + i * motion.dx_per_frame;
        const int y0 = motion.torso_y0 + i * motion.dy_per_frame;
        if (x0 < 0 || y0 < 0 || x0 + motion.torso_w > w || y0 + motion.torso_h > h)
            throw DimensionError("torso leaves the frame at frame " + std::to_string(i));
    }

    Rng rng(seed);
    std::uniform_real_distribution<double> jitter(-0.03, 0.03);
    const std::array<double, 3> checker_a = {0.82 + jitter(rng), 0.18 + jitter(rng),
                                             0.20 + jitter(rng)};
    const std::array<double, 3> checker_b = {0.92 + jitter(rng), 0.88 + jitter(rng),
                                             0.12 + jitter(rng)};
    const std::array<double, 3> source_garment = {0.20, 0.30, 0.75};
    const std::array<double, 3> body_color = {0.20, 0.55, 0.85};
    const std::array<double, 3> pose_bg = densepose_background();

    SyntheticScene scene;
    scene.motion = motion;
    scene.target.frames = Tensor({n, h, w, 3});
    scene.source.frames = Tensor({n, h, w, 3});
    scene.bundle.mask.masks = Tensor({n, h, w});
    scene.bundle.pose.frames = Tensor({n, h, w, 3});

    const auto checker = [&](int ly, int lx) -> const std::array<double, 3>& {
        const int c = motion.garment_cell;
        return ((ly / c + lx / c) % 2 == 0) ? checker_a : checker_b;
    };

    for (int i = 0; i < n; ++i) {
        const int x0 = motion.torso_x0 + i * motion.dx_per_frame;
        const int y0 = motion.torso_y0 + i * motion.dy_per_frame;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const bool inside = y >= y0 && y < y0 + motion.torso_h && x >= x0 &&
                                    x < x0 + motion.torso_w;
                const double shade = detail::background_shade(y, h);
                for (int c = 0; c < 3; ++c) {
                    const double tgt = inside ? checker(y - y0, x - x0)[static_cast<std::size_t>(c)]
                                              : shade;
                    const double src = inside ? source_garment[static_cast<std::size_t>(c)] : shade;
                    const double pos = inside ? body_color[static_cast<std::size_t>(c)]
                                              : pose_bg[static_cast<std::size_t>(c)];
                    scene.target.frames.at(i, y, x, c) = tgt;
                    scene.source.frames.at(i, y, x, c) = src;
                    scene.bundle.pose.frames.at(i, y, x, c) = pos;
                }
                scene.bundle.mask.masks.at(i, y, x) = inside ? 1.0 : 0.0;
            }
    }

    scene.bundle.agnostic = compose_agnostic(scene.source, scene.bundle.mask);
    scene.garment.category = GarmentCategory::upper;
    scene.garment.image = Tensor({motion.torso_h, motion.torso_w, 3});
    for (int y = 0; y < motion.torso_h; ++y)
        for (int x = 0; x < motion.torso_w; ++x)
            for (int c = 0; c < 3; ++c)
                scene.garment.image.at(y, x, c) = checker(y, x)[static_cast<std::size_t>(c)];
    return scene;
}

// Closed-form RMS pose distance between consecutive frames of a horizontally
// sliding torso: 2*torso_h*|dx| pixels swap between body color and backdrop.
inline double expected_pose_step_distance(int h, int w, const MotionSpec& motion) {
    const std::array<double, 3> body_color = {0.20, 0.55, 0.85};
    const std::array<double, 3> pose_bg = densepose_background();
    double per_pixel = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double d = body_color[static_cast<std::size_t>(c)] - pose_bg[static_cast<std::size_t>(c)];
        per_pixel += d * d;
    }
    const int dx = motion.dx_per_frame > 0 ? motion.dx_per_frame : -motion.dx_per_frame;
    const double changed = 2.0 * motion.torso_h * dx;
    return std::sqrt(changed * per_pixel / (static_cast<double>(h) * w * 3.0));
}

}  // namespace vvt
