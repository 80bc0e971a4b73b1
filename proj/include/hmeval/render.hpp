#pragma once

#include "hmeval/attribution.hpp"
#include "hmeval/image.hpp"

namespace hmeval {

enum class RenderMode {
    SignedDiverging,  // blue (negative) - gray (0) - red (positive), symmetric in max|h|
    Magnitude,        // gray (0) - red (max|h|)
};

/// RGB rendering normalized by max|h|; an all-zero heatmap is uniform gray 128.
Image8 render_heatmap(const Heatmap& heatmap, RenderMode mode);

}  // namespace hmeval
