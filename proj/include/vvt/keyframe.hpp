#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "vvt/data_model.hpp"
#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

// RMS L2 distance between two DensePose frames (H,W,3). The monochromatic
// background makes this a motion proxy that ignores scene texture.
inline double pose_distance(const Tensor& pose_a, const Tensor& pose_b) {
    require_same_shape(pose_a, pose_b, "pose_distance");
    return std::sqrt(mse(pose_a, pose_b));
}

inline Tensor pose_frame(const DensePoseClip& clip, int i) {
    const int h = clip.height(), w = clip.width();
    Tensor f({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c) f.at(y, x, c) = clip.frames.at(i, y, x, c);
    return f;
}

// Lazily computed pairwise pose distances, memoized on first touch.
class PoseDistanceMatrixView {
  public:
    explicit PoseDistanceMatrixView(const DensePoseClip& clip)
        : clip_(&clip),
          frames_(clip.n()),
          cache_(static_cast<std::size_t>(frames_) * static_cast<std::size_t>(frames_), -1.0) {}

    int frames() const { return frames_; }

    double operator()(int i, int j) const {
        if (i < 0 || j < 0 || i >= frames_ || j >= frames_)
            throw DimensionError("pose distance index out of range");
        if (i == j) return 0.0;
        if (i > j) std::swap(i, j);
        double& slot = cache_[static_cast<std::size_t>(i) * static_cast<std::size_t>(frames_) +
                              static_cast<std::size_t>(j)];
        if (slot < 0.0)
            slot = pose_distance(pose_frame(*clip_, i), pose_frame(*clip_, j));
        return slot;
    }

  private:
    const DensePoseClip* clip_;
    int frames_;
    mutable std::vector<double> cache_;
};

struct KeyframePlan {
    std::vector<int> omega;  // sorted keyframe indices
    double d_pose = 0.0;
    int s_max = 0;
    int total_frames = 0;
};

inline void validate_keyframe_plan(const KeyframePlan& plan) {
    if (plan.omega.empty() || plan.omega.front() != 0)
        throw ScheduleError("keyframe plan must start at frame 0");
    if (plan.omega.back() != plan.total_frames - 1)
        throw ScheduleError("keyframe plan must end at the last frame");
    for (std::size_t k = 1; k < plan.omega.size(); ++k) {
        const int gap = plan.omega[k] - plan.omega[k - 1];
        if (gap <= 0) throw ScheduleError("keyframe indices must strictly increase");
        if (gap > plan.s_max) throw ScheduleError("keyframe gap exceeds s_max");
    }
}

enum class KeyframeSelectMode {
    greedy,   // farthest admissible next keyframe; sparse plans
    literal,  // the printed pseudocode loop, kept for comparison
};

// Greedy rule: from keyframe i, jump to the largest j <= i+s_max whose pose
// distance stays under d_pose; if none qualifies, advance by one. The last
// frame is always a keyframe.
inline KeyframePlan select_keyframes(const DensePoseClip& pose, double d_pose,
                                     int s_max,
                                     KeyframeSelectMode mode = KeyframeSelectMode::greedy) {
    const int f = pose.n();
    if (f < 1) throw DimensionError("empty clip");
    if (!(d_pose > 0.0)) throw DomainError("d_pose must be positive");
    if (s_max < 1) throw DomainError("s_max must be >= 1");

    PoseDistanceMatrixView dist(pose);
    KeyframePlan plan;
    plan.d_pose = d_pose;
    plan.s_max = s_max;
    plan.total_frames = f;
    plan.omega.push_back(0);

    if (mode == KeyframeSelectMode::literal) {
        // Algorithm as printed: inserts the current anchor whenever the next
        // frame is close enough or the stride is still small.
        int i = 0;
        for (int j = 1; j < f; ++j) {
            if (dist(i, j) < d_pose || j - i < s_max) {
                if (std::find(plan.omega.begin(), plan.omega.end(), i) ==
                    plan.omega.end())
                    plan.omega.push_back(i);
                std::sort(plan.omega.begin(), plan.omega.end());
                i = j;
            }
        }
        return plan;
    }

    int i = 0;
    while (i < f - 1) {
        int next = i + 1;
        const int hi = std::min(i + s_max, f - 1);
        for (int j = hi; j > i; --j) {
            if (dist(i, j) < d_pose) {
                next = j;
                break;
            }
        }
        plan.omega.push_back(next);
        i = next;
    }
    validate_keyframe_plan(plan);
    return plan;
}

// Substitutes generated keyframe latents into the agnostic latent stream.
// Frames outside omega stay bit-identical.
inline LatentClip replace_keyframe_latents(const LatentClip& agnostic_latents,
                                           const std::map<int, Tensor>& generated,
                                           const std::vector<int>& omega) {
    LatentClip out = agnostic_latents;
    const int n = out.n(), h = out.height(), w = out.width();
    for (int idx : omega) {
        if (idx < 0 || idx >= n)
            throw DimensionError("keyframe index out of range");
        const auto it = generated.find(idx);
        if (it == generated.end())
            throw ScheduleError("no generated latent for keyframe " + std::to_string(idx));
        const Tensor& frame = it->second;
        if (frame.rank() != 3 || frame.dim(0) != h || frame.dim(1) != w ||
            frame.dim(2) != kLatentChannels)
            throw DimensionError("generated latent frame has the wrong shape");
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < kLatentChannels; ++c)
                    out.latents.at(idx, y, x, c) = frame.at(y, x, c);
    }
    return out;
}

struct SegmentPlan {
    std::vector<std::pair<int, int>> segments;  // [start, end) windows
    int overlap = 0;
};

// Fixed-stride overlapping windows covering [0,F); the final window is
// right-aligned so it ends exactly at F.
inline SegmentPlan plan_segments(int total_frames, int n_window, int overlap) {
    if (total_frames < 1) throw DimensionError("need at least one frame");
    if (n_window < 1) throw ScheduleError("window must be positive");
    if (overlap < 0 || overlap >= n_window)
        throw ScheduleError("overlap must satisfy 0 <= overlap < window");

    SegmentPlan plan;
    plan.overlap = overlap;
    if (total_frames <= n_window) {
        plan.segments.emplace_back(0, total_frames);
        return plan;
    }
    const int stride = n_window - overlap;
    for (int start = 0;; start += stride) {
        if (start + n_window >= total_frames) {
            plan.segments.emplace_back(total_frames - n_window, total_frames);
            break;
        }
        plan.segments.emplace_back(start, start + n_window);
    }
    return plan;
}

// One generator invocation's view of the clip: gathered pixel-level agnostic
// frames plus the agnostic latent stream with earlier outputs substituted.
struct WindowInput {
    std::vector<int> frame_indices;
    AgnosticVideo agnostic;
    LatentClip agnostic_latents;
    AgnosticMask mask;
    DensePoseClip pose;
};

using WindowGeneratorFn = std::function<VideoClip(const WindowInput&)>;

struct LongGenerationParams {
    double d_pose = 0.05;
    int s_max = 8;
    int n_window = 8;
    int overlap = 2;  // n_window/4 by default

    static LongGenerationParams with_window(int n_window) {
        LongGenerationParams p;
        p.n_window = n_window;
        p.overlap = std::max(1, n_window / 4);
        p.s_max = n_window;
        return p;
    }
};

namespace detail {

inline WindowInput gather_window(const AgnosticBundle& bundle,
                                 const LatentClip& latents,
                                 const std::vector<int>& indices) {
    const int h = bundle.agnostic.height(), w = bundle.agnostic.width();
    const int lh = latents.height(), lw = latents.width();
    const int m = static_cast<int>(indices.size());
    WindowInput win;
    win.frame_indices = indices;
    win.agnostic.fill_value = bundle.agnostic.fill_value;
    win.agnostic.frames = Tensor({m, h, w, 3});
    win.mask.masks = Tensor({m, h, w});
    win.pose.frames = Tensor({m, h, w, 3});
    win.pose.background_color = bundle.pose.background_color;
    win.agnostic_latents.downsample_factor = latents.downsample_factor;
    win.agnostic_latents.latents = Tensor({m, lh, lw, kLatentChannels});
    for (int k = 0; k < m; ++k) {
        const int idx = indices[static_cast<std::size_t>(k)];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 3; ++c) {
                    win.agnostic.frames.at(k, y, x, c) =
                        bundle.agnostic.frames.at(idx, y, x, c);
                    win.pose.frames.at(k, y, x, c) = bundle.pose.frames.at(idx, y, x, c);
                }
                win.mask.masks.at(k, y, x) = bundle.mask.masks.at(idx, y, x);
            }
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x)
                for (int c = 0; c < kLatentChannels; ++c)
                    win.agnostic_latents.latents.at(k, y, x, c) =
                        latents.latents.at(idx, y, x, c);
    }
    return win;
}

inline Tensor encode_single_frame(const Tensor& frames, int idx, int h, int w) {
    VideoClip one;
    one.frames = Tensor({1, h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                one.frames.at(0, y, x, c) = frames.at(idx, y, x, c);
    const LatentClip lat = encode_latent(one);
    Tensor out({lat.height(), lat.width(), kLatentChannels});
    for (int y = 0; y < lat.height(); ++y)
        for (int x = 0; x < lat.width(); ++x)
            for (int c = 0; c < kLatentChannels; ++c)
                out.at(y, x, c) = lat.latents.at(0, y, x, c);
    return out;
}

}  // namespace detail

// Pose-guided long-video orchestration: generate sparse keyframes first,
// substitute their latents into the agnostic stream, then sweep overlapping
// segments in order, carrying each segment's outputs into the next through
// the shared latent stream. Overlap frames keep the earlier segment's output.
inline VideoClip orchestrate_long_generation(const AgnosticBundle& bundle,
                                             const WindowGeneratorFn& generator,
                                             const LongGenerationParams& params) {
    const int f = bundle.agnostic.n();
    if (f < 1) throw DimensionError("empty bundle");
    if (bundle.mask.n() != f || bundle.pose.n() != f)
        throw DimensionError("bundle streams disagree in frame count");
    const int h = bundle.agnostic.height(), w = bundle.agnostic.width();

    VideoClip agnostic_as_video;
    agnostic_as_video.frames = bundle.agnostic.frames;
    LatentClip latents = encode_latent(agnostic_as_video);

    const auto run_window = [&](const std::vector<int>& indices) {
        if (static_cast<int>(indices.size()) > params.n_window)
            throw ScheduleError("generator window violation");
        const VideoClip gen = generator(detail::gather_window(bundle, latents, indices));
        if (gen.n() != static_cast<int>(indices.size()) || gen.height() != h ||
            gen.width() != w)
            throw ScheduleError("generator returned a mismatched window");
        return gen;
    };

    if (f <= params.n_window) {
        std::vector<int> all(static_cast<std::size_t>(f));
        for (int k = 0; k < f; ++k) all[static_cast<std::size_t>(k)] = k;
        return run_window(all);
    }

    const KeyframePlan plan = select_keyframes(bundle.pose, params.d_pose, params.s_max);

    // Keyframes are generated in contiguous batches of their index list.
    std::map<int, Tensor> keyframe_latents;
    for (std::size_t at = 0; at < plan.omega.size(); at += static_cast<std::size_t>(params.n_window)) {
        const std::size_t end = std::min(plan.omega.size(), at + static_cast<std::size_t>(params.n_window));
        const std::vector<int> chunk(plan.omega.begin() + static_cast<std::ptrdiff_t>(at),
                                     plan.omega.begin() + static_cast<std::ptrdiff_t>(end));
        const VideoClip gen = run_window(chunk);
        for (std::size_t k = 0; k < chunk.size(); ++k)
            keyframe_latents[chunk[k]] =
                detail::encode_single_frame(gen.frames, static_cast<int>(k), h, w);
    }
    latents = replace_keyframe_latents(latents, keyframe_latents, plan.omega);

    const SegmentPlan segments = plan_segments(f, params.n_window, params.overlap);
    VideoClip out;
    out.frames = Tensor({f, h, w, 3});
    std::vector<bool> done(static_cast<std::size_t>(f), false);
    for (const auto& [start, end] : segments.segments) {
        std::vector<int> indices;
        for (int idx = start; idx < end; ++idx) indices.push_back(idx);
        const VideoClip gen = run_window(indices);
        out.frame_rate = gen.frame_rate;
        for (int k = 0; k < gen.n(); ++k) {
            const int idx = indices[static_cast<std::size_t>(k)];
            // Earlier segments win on overlap; latents always carry the
            // first-generated result forward.
            if (done[static_cast<std::size_t>(idx)]) continue;
            done[static_cast<std::size_t>(idx)] = true;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c)
                        out.frames.at(idx, y, x, c) = gen.frames.at(k, y, x, c);
            const Tensor lat = detail::encode_single_frame(gen.frames, k, h, w);
            for (int y = 0; y < latents.height(); ++y)
                for (int x = 0; x < latents.width(); ++x)
                    for (int c = 0; c < kLatentChannels; ++c)
                        latents.latents.at(idx, y, x, c) = lat.at(y, x, c);
        }
    }
    return out;
}

}  // namespace vvt
