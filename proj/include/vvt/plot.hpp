#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "vvt/errors.hpp"
#include "vvt/tensor.hpp"

namespace vvt {

// Renders a metric curve as a plain raster image: light background, axis
// frame, connected polyline. Enough to eyeball training behavior without a
// plotting stack.
inline Tensor render_curve(const std::vector<double>& values, int height = 240,
                           int width = 400) {
    if (values.empty()) throw DimensionError("nothing to plot");
    if (height < 32 || width < 32) throw DimensionError("plot canvas too small");

    const std::array<double, 3> bg = {0.97, 0.97, 0.97};
    const std::array<double, 3> axis = {0.55, 0.55, 0.55};
    const std::array<double, 3> line = {0.10, 0.35, 0.75};

    Tensor img({height, width, 3});
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = bg[static_cast<std::size_t>(c)];

    const int margin = 12;
    const int x0 = margin, x1 = width - margin;
    const int y0 = margin, y1 = height - margin;
    const auto put = [&](int y, int x, const std::array<double, 3>& col) {
        if (y < 0 || y >= height || x < 0 || x >= width) return;
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[static_cast<std::size_t>(c)];
    };
    for (int x = x0; x <= x1; ++x) {
        put(y1, x, axis);
        put(y0, x, axis);
    }
    for (int y = y0; y <= y1; ++y) {
        put(y, x0, axis);
        put(y, x1, axis);
    }

    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (hi - lo < 1e-12) {
        hi += 0.5;
        lo -= 0.5;
    }

    const int n = static_cast<int>(values.size());
    const auto px = [&](int i) {
        return n == 1 ? (x0 + x1) / 2
                      : x0 + static_cast<int>(std::lround(
                                 static_cast<double>(i) * (x1 - x0) / (n - 1)));
    };
    const auto py = [&](double v) {
        return y1 - static_cast<int>(std::lround((v - lo) / (hi - lo) * (y1 - y0)));
    };

    int prev_x = px(0), prev_y = py(values[0]);
    put(prev_y, prev_x, line);
    for (int i = 1; i < n; ++i) {
        const int cx = px(i), cy = py(values[static_cast<std::size_t>(i)]);
        const int steps = std::max(std::abs(cx - prev_x), std::abs(cy - prev_y));
        for (int s = 0; s <= steps; ++s) {
            const double t = steps == 0 ? 0.0 : static_cast<double>(s) / steps;
            put(static_cast<int>(std::lround(prev_y + t * (cy - prev_y))),
                static_cast<int>(std::lround(prev_x + t * (cx - prev_x))), line);
        }
        prev_x = cx;
        prev_y = cy;
    }
    return img;
}

}  // namespace vvt
