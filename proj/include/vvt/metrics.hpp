#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vvt/data_model.hpp"
#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double range = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double mid = (size - 1) / 2.0;
    double norm = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - mid;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        norm += w[static_cast<std::size_t>(i)];
    }
    for (double& v : w) v /= norm;
    return w;
}

// Luma plane from an (H,W,3) or (H,W) frame.
inline Tensor to_luma(const Tensor& frame) {
    if (frame.rank() == 2) return frame;
    if (frame.rank() != 3 || frame.dim(2) != 3)
        throw DimensionError("ssim frames must be (H,W) or (H,W,3)");
    Tensor out({frame.dim(0), frame.dim(1)});
    for (int y = 0; y < frame.dim(0); ++y)
        for (int x = 0; x < frame.dim(1); ++x)
            out.at(y, x) = 0.299 * frame.at(y, x, 0) + 0.587 * frame.at(y, x, 1) +
                           0.114 * frame.at(y, x, 2);
    return out;
}

}  // namespace detail

// Gaussian-windowed SSIM over the valid region (window fully inside the
// frame), averaged over window positions. Canonical constants so values are
// comparable to published implementations.
inline double ssim(const Tensor& frame_a, const Tensor& frame_b,
                   const SsimParams& params = {}) {
    const Tensor a = detail::to_luma(frame_a);
    const Tensor b = detail::to_luma(frame_b);
    require_same_shape(a, b, "ssim");
    const int h = a.dim(0), w = a.dim(1), win = params.window;
    if (h < win || w < win)
        throw DimensionError("frame smaller than the SSIM window");

    const std::vector<double> g = detail::gaussian_window(win, params.sigma);
    const double c1 = params.k1 * params.range * params.k1 * params.range;
    const double c2 = params.k2 * params.range * params.k2 * params.range;

    double acc = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + win <= h; ++y0)
        for (int x0 = 0; x0 + win <= w; ++x0) {
            double mu_a = 0.0, mu_b = 0.0, saa = 0.0, sbb = 0.0, sab = 0.0;
            for (int dy = 0; dy < win; ++dy)
                for (int dx = 0; dx < win; ++dx) {
                    const double wgt = g[static_cast<std::size_t>(dy)] * g[static_cast<std::size_t>(dx)];
                    const double va = a.at(y0 + dy, x0 + dx);
                    const double vb = b.at(y0 + dy, x0 + dx);
                    mu_a += wgt * va;
                    mu_b += wgt * vb;
                    // Grouping the pixel product first keeps the three second
                    // moments on identical rounding paths, so ssim(x,x) == 1
                    // and ssim(a,b) == ssim(b,a) hold bitwise.
                    saa += wgt * (va * va);
                    sbb += wgt * (vb * vb);
                    sab += wgt * (va * vb);
                }
            const double var_a = saa - mu_a * mu_a;
            const double var_b = sbb - mu_b * mu_b;
            const double cov = sab - mu_a * mu_b;
            const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
            ++count;
        }
    return acc / static_cast<double>(count);
}

inline Tensor clip_frame(const VideoClip& clip, int i) {
    Tensor f({clip.height(), clip.width(), 3});
    for (int y = 0; y < clip.height(); ++y)
        for (int x = 0; x < clip.width(); ++x)
            for (int c = 0; c < 3; ++c) f.at(y, x, c) = clip.frames.at(i, y, x, c);
    return f;
}

inline double clip_ssim(const VideoClip& a, const VideoClip& b,
                        const SsimParams& params = {}) {
    if (a.n() != b.n()) throw DimensionError("clip frame counts disagree");
    if (a.n() == 0) throw DimensionError("empty clip");
    double acc = 0.0;
    for (int i = 0; i < a.n(); ++i)
        acc += ssim(clip_frame(a, i), clip_frame(b, i), params);
    return acc / static_cast<double>(a.n());
}

// Temporal-difference disagreement: mean over t of
// MSE((gen_{t+1}-gen_t) - (ref_{t+1}-ref_t)). Zero when the generated clip
// moves exactly like the reference.
inline double flicker_score(const VideoClip& gen, const VideoClip& ref) {
    require_same_shape(gen.frames, ref.frames, "flicker_score");
    const int n = gen.n();
    if (n < 2) throw DomainError("flicker_score needs at least two frames");
    const int h = gen.height(), w = gen.width();
    double acc = 0.0;
    for (int t = 0; t + 1 < n; ++t) {
        double frame_acc = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double dg = gen.frames.at(t + 1, y, x, c) - gen.frames.at(t, y, x, c);
                    const double dr = ref.frames.at(t + 1, y, x, c) - ref.frames.at(t, y, x, c);
                    frame_acc += (dg - dr) * (dg - dr);
                }
        acc += frame_acc / (static_cast<double>(h) * w * 3.0);
    }
    return acc / static_cast<double>(n - 1);
}

struct MetricReport {
    double ssim = 0.0;
    double flicker = 0.0;
    double attention_mass_ratio = 0.0;
    std::vector<double> per_frame_ssim;
    std::string config_hash;
    std::uint64_t seed = 0;
};

// Registry for perceptual metrics. Only SSIM ships; LPIPS/VFID-style metrics
// plug in through the same clip-pair signature.
using ClipMetricFn = std::function<double(const VideoClip&, const VideoClip&)>;

class MetricRegistry {
  public:
    static MetricRegistry& instance() {
        static MetricRegistry reg = [] {
            MetricRegistry r;
            r.metrics_["ssim"] = [](const VideoClip& a, const VideoClip& b) {
                return clip_ssim(a, b);
            };
            return r;
        }();
        return reg;
    }

    void register_metric(const std::string& name, ClipMetricFn fn) {
        metrics_[name] = std::move(fn);
    }

    std::optional<ClipMetricFn> lookup(const std::string& name) const {
        const auto it = metrics_.find(name);
        if (it == metrics_.end()) return std::nullopt;
        return it->second;
    }

  private:
    std::map<std::string, ClipMetricFn> metrics_;
};

// Unknown names yield an empty optional, never an error.
inline std::optional<ClipMetricFn> perceptual_metric_interface(const std::string& name) {
    return MetricRegistry::instance().lookup(name);
}

}  // namespace vvt
