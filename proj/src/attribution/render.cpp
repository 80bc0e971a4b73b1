#include "hmeval/render.hpp"

#include <algorithm>
#include <cmath>

namespace hmeval {
namespace {

constexpr double kGray = 128.0;

std::uint8_t channel(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

}  // namespace

Image8 render_heatmap(const Heatmap& heatmap, RenderMode mode) {
    Image8 img(heatmap.width, heatmap.height, 3, static_cast<std::uint8_t>(kGray));
    double peak = 0.0;
    for (double v : heatmap.scores) peak = std::max(peak, std::abs(v));
    if (peak == 0.0) return img;
    for (std::size_t y = 0; y < heatmap.height; ++y) {
        for (std::size_t x = 0; x < heatmap.width; ++x) {
            double t = heatmap.at(y, x) / peak;
            if (mode == RenderMode::Magnitude) t = std::abs(t);
            std::uint8_t* px = img.pixel(y, x);
            const double m = std::abs(t);
            const std::uint8_t hot = channel(kGray + 127.0 * m);
            const std::uint8_t cold = channel(kGray - 128.0 * m);
            px[0] = t >= 0.0 ? hot : cold;
            px[1] = cold;
            px[2] = t >= 0.0 ? cold : hot;
        }
    }
    return img;
}

}  // namespace hmeval
