#pragma once

#include <array>
#include <functional>
#include <utility>

#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

inline constexpr int kLatentChannels = 4;
inline constexpr int kDefaultDownsample = 2;
inline constexpr double kDefaultFillValue = 0.5;

// DensePose renders use this fixed backdrop so frame differences track body
// motion rather than scene content.
inline constexpr std::array<int, 3> kDensePoseBackground8 = {65, 0, 82};

inline std::array<double, 3> densepose_background() {
    return {65.0 / 255.0, 0.0, 82.0 / 255.0};
}

// Person video x: frames in [0,1], shape (N,H,W,3).
struct VideoClip {
    Tensor frames;
    double frame_rate = 8.0;

    int n() const { return frames.rank() == 4 ? frames.dim(0) : 0; }
    int height() const { return frames.rank() == 4 ? frames.dim(1) : 0; }
    int width() const { return frames.rank() == 4 ? frames.dim(2) : 0; }
};

// Binary garment-region mask x_m, shape (N,H,W). 1 marks pixels to erase.
struct AgnosticMask {
    Tensor masks;

    int n() const { return masks.rank() == 3 ? masks.dim(0) : 0; }
    int height() const { return masks.rank() == 3 ? masks.dim(1) : 0; }
    int width() const { return masks.rank() == 3 ? masks.dim(2) : 0; }
};

// Agnostic video x_a: source pixels outside the mask, fill_value inside.
struct AgnosticVideo {
    Tensor frames;
    double fill_value = kDefaultFillValue;

    int n() const { return frames.rank() == 4 ? frames.dim(0) : 0; }
    int height() const { return frames.rank() == 4 ? frames.dim(1) : 0; }
    int width() const { return frames.rank() == 4 ? frames.dim(2) : 0; }
};

// DensePose clip p: body-part color blocks on a monochromatic background.
struct DensePoseClip {
    Tensor frames;
    std::array<double, 3> background_color = densepose_background();

    int n() const { return frames.rank() == 4 ? frames.dim(0) : 0; }
    int height() const { return frames.rank() == 4 ? frames.dim(1) : 0; }
    int width() const { return frames.rank() == 4 ? frames.dim(2) : 0; }
};

enum class GarmentCategory { upper, lower, dress };

// Target garment c, front view, shape (H_c,W_c,3).
struct GarmentImage {
    Tensor image;
    GarmentCategory category = GarmentCategory::upper;

    int height() const { return image.rank() == 3 ? image.dim(0) : 0; }
    int width() const { return image.rank() == 3 ? image.dim(1) : 0; }
};

// Latent video, shape (N,h,w,4), h = H/downsample, w = W/downsample.
struct LatentClip {
    Tensor latents;
    int downsample_factor = kDefaultDownsample;

    int n() const { return latents.rank() == 4 ? latents.dim(0) : 0; }
    int height() const { return latents.rank() == 4 ? latents.dim(1) : 0; }
    int width() const { return latents.rank() == 4 ? latents.dim(2) : 0; }
};

// 9-channel denoiser input: [noisy latent 0..3][agnostic latent 4..7][mask 8],
// plus the pose embedding injected into the input feature map.
struct DenoiserInput {
    Tensor channels;        // (N,h,w,9)
    Tensor pose_embedding;  // (N,h,w,d_p)
};

// Everything frame-aligned to one person video.
struct AgnosticBundle {
    AgnosticVideo agnostic;
    AgnosticMask mask;
    DensePoseClip pose;
};

inline void check_video_dims(const VideoClip& v) {
    if (v.frames.rank() != 4 || v.frames.dim(3) != 3)
        throw DimensionError("video frames must have shape (N,H,W,3)");
    if (v.n() < 1) throw DimensionError("video needs at least one frame");
    if (v.height() < 8 || v.width() < 8)
        throw DimensionError("video frames must be at least 8x8");
}

inline void check_mask_matches(const VideoClip& v, const AgnosticMask& m) {
    if (m.masks.rank() != 3 || m.n() != v.n() || m.height() != v.height() ||
        m.width() != v.width())
        throw DimensionError("mask shape does not match video");
}

// x_a = x (*) x_m with a fixed fill color inside the mask. The erased region
// uses mid-gray by default so dark garments stay distinguishable from it.
inline AgnosticVideo compose_agnostic(const VideoClip& video,
                                      const AgnosticMask& mask,
                                      double fill_value = kDefaultFillValue) {
    check_video_dims(video);
    check_mask_matches(video, mask);
    if (fill_value < 0.0 || fill_value > 1.0)
        throw DomainError("fill_value must lie in [0,1]");

    AgnosticVideo out;
    out.fill_value = fill_value;
    out.frames = video.frames;
    const int n = video.n(), h = video.height(), w = video.width();
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (mask.masks.at(i, y, x) != 0.0) {
                    for (int c = 0; c < 3; ++c)
                        out.frames.at(i, y, x, c) = fill_value;
                }
            }
    return out;
}

namespace detail {

// Fixed orthonormal projection rows for the space-to-depth latent codec.
// Depth layout: k = s*3 + c with s in {TL,TR,BL,BR}. Rows 0..2 capture the
// per-channel block mean, row 3 a left-right luma gradient, so spatially
// constant 2x2 blocks reconstruct almost exactly (a rounding ulp at worst).
inline const std::array<std::array<double, 12>, 4>& latent_basis() {
    static const std::array<std::array<double, 12>, 4> basis = [] {
        std::array<std::array<double, 12>, 4> b{};
        for (int s = 0; s < 4; ++s)
            for (int c = 0; c < 3; ++c) {
                b[static_cast<std::size_t>(c)][static_cast<std::size_t>(s * 3 + c)] = 0.5;
            }
        const double g = 1.0 / std::sqrt(12.0);
        for (int s = 0; s < 4; ++s) {
            const bool left = (s % 2 == 0);
            for (int c = 0; c < 3; ++c)
                b[3][static_cast<std::size_t>(s * 3 + c)] = left ? g : -g;
        }
        return b;
    }();
    return basis;
}

}  // namespace detail

// Toy latent codec: space-to-depth by factor 2 followed by the fixed linear
// projection above. Deterministic stand-in for a trained VAE.
inline LatentClip encode_latent(const VideoClip& video) {
    check_video_dims(video);
    const int n = video.n(), h = video.height(), w = video.width();
    if (h % kDefaultDownsample != 0 || w % kDefaultDownsample != 0)
        throw DimensionError("frame dims must be divisible by the downsample factor");

    LatentClip out;
    out.downsample_factor = kDefaultDownsample;
    const int lh = h / 2, lw = w / 2;
    out.latents = Tensor({n, lh, lw, kLatentChannels});
    const auto& basis = detail::latent_basis();
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x) {
                double block[12];
                for (int s = 0; s < 4; ++s)
                    for (int c = 0; c < 3; ++c)
                        block[s * 3 + c] =
                            video.frames.at(i, 2 * y + s / 2, 2 * x + s % 2, c);
                for (int o = 0; o < kLatentChannels; ++o) {
                    double acc = 0.0;
                    for (int k = 0; k < 12; ++k)
                        acc += basis[static_cast<std::size_t>(o)][static_cast<std::size_t>(k)] * block[k];
                    out.latents.at(i, y, x, o) = acc;
                }
            }
    return out;
}

inline VideoClip decode_latent(const LatentClip& latent,
                               double frame_rate = 8.0) {
    if (latent.latents.rank() != 4 || latent.latents.dim(3) != kLatentChannels)
        throw DimensionError("latents must have shape (N,h,w,4)");
    if (latent.downsample_factor != kDefaultDownsample)
        throw DimensionError("codec only supports downsample_factor 2");

    const int n = latent.n(), lh = latent.height(), lw = latent.width();
    VideoClip out;
    out.frame_rate = frame_rate;
    out.frames = Tensor({n, lh * 2, lw * 2, 3});
    const auto& basis = detail::latent_basis();
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x)
                for (int s = 0; s < 4; ++s)
                    for (int c = 0; c < 3; ++c) {
                        double acc = 0.0;
                        for (int o = 0; o < kLatentChannels; ++o)
                            acc += basis[static_cast<std::size_t>(o)][static_cast<std::size_t>(s * 3 + c)] *
                                   latent.latents.at(i, y, x, o);
                        out.frames.at(i, 2 * y + s / 2, 2 * x + s % 2, c) =
                            std::clamp(acc, 0.0, 1.0);
                    }
    return out;
}

// R(x_m): area-average downsampling of the mask to latent resolution.
// Averaging (not nearest) keeps partial coverage for the token partition.
inline Tensor resize_mask_to_latent(const AgnosticMask& mask, int factor) {
    if (mask.masks.rank() != 3) throw DimensionError("mask must be (N,H,W)");
    if (factor < 1) throw DomainError("factor must be positive");
    const int n = mask.n(), h = mask.height(), w = mask.width();
    if (h % factor != 0 || w % factor != 0)
        throw DimensionError("mask dims must be divisible by factor");

    const int lh = h / factor, lw = w / factor;
    Tensor out({n, lh, lw});
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx)
                        acc += mask.masks.at(i, y * factor + dy, x * factor + dx);
                out.at(i, y, x) = acc * inv;
            }
    return out;
}

// Encodes a DensePose clip into a per-frame spatial embedding at latent
// resolution. The toy pipeline supplies a learned two-layer conv encoder;
// the default is plain area-average downsampling of the pose RGB.
using PoseEncoderFn = std::function<Tensor(const DensePoseClip&)>;

inline Tensor downsample_pose(const DensePoseClip& pose, int factor) {
    if (pose.frames.rank() != 4 || pose.frames.dim(3) != 3)
        throw DimensionError("pose frames must be (N,H,W,3)");
    const int n = pose.n(), h = pose.height(), w = pose.width();
    if (h % factor != 0 || w % factor != 0)
        throw DimensionError("pose dims must be divisible by factor");
    const int lh = h / factor, lw = w / factor;
    Tensor out({n, lh, lw, 3});
    const double inv = 1.0 / (static_cast<double>(factor) * factor);
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < lh; ++y)
            for (int x = 0; x < lw; ++x)
                for (int c = 0; c < 3; ++c) {
                    double acc = 0.0;
                    for (int dy = 0; dy < factor; ++dy)
                        for (int dx = 0; dx < factor; ++dx)
                            acc += pose.frames.at(i, y * factor + dy,
                                                  x * factor + dx, c);
                    out.at(i, y, x, c) = acc * inv;
                }
    return out;
}

// Concatenates [noisy|agnostic|resized mask] into the fixed 9-channel block
// and attaches the encoded pose embedding.
inline DenoiserInput assemble_denoiser_input(
    const LatentClip& noisy, const LatentClip& agnostic,
    const Tensor& mask_resized, const DensePoseClip& pose,
    const PoseEncoderFn& encode_pose = {}) {
    if (noisy.latents.rank() != 4 || noisy.latents.dim(3) != kLatentChannels)
        throw DimensionError("noisy latents must be (N,h,w,4)");
    require_same_shape(noisy.latents, agnostic.latents, "assemble_denoiser_input");
    const int n = noisy.n(), h = noisy.height(), w = noisy.width();
    if (mask_resized.rank() != 3 || mask_resized.dim(0) != n ||
        mask_resized.dim(1) != h || mask_resized.dim(2) != w)
        throw DimensionError("resized mask must be (N,h,w) at latent resolution");

    DenoiserInput out;
    out.channels = Tensor({n, h, w, 9});
    for (int i = 0; i < n; ++i)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < 4; ++c) {
                    out.channels.at(i, y, x, c) = noisy.latents.at(i, y, x, c);
                    out.channels.at(i, y, x, 4 + c) = agnostic.latents.at(i, y, x, c);
                }
                out.channels.at(i, y, x, 8) = mask_resized.at(i, y, x);
            }

    if (encode_pose) {
        out.pose_embedding = encode_pose(pose);
    } else {
        const int factor = pose.height() / h;
        if (factor < 1 || pose.height() != h * factor || pose.width() != w * factor)
            throw DimensionError("pose resolution is not a multiple of the latent grid");
        out.pose_embedding = downsample_pose(pose, factor);
    }
    if (out.pose_embedding.rank() != 4 || out.pose_embedding.dim(0) != n ||
        out.pose_embedding.dim(1) != h || out.pose_embedding.dim(2) != w)
        throw DimensionError("pose embedding must be (N,h,w,d_p)");
    return out;
}

}  // namespace vvt
