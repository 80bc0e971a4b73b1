#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "hmeval/image.hpp"

namespace hmeval {

/// Shannon entropy (bits) of the 256-bin gray histogram. RGB pixels are
/// mapped to gray as round(0.299 R + 0.587 G + 0.114 B).
double image_entropy(const Image8& image);

enum class Codec { Png, Jpeg90 };

/// Encoded byte length; encoder failures throw instead of returning a size.
std::size_t compressed_size(const Image8& image, Codec codec);

struct ComplexityEntry {
    double entropy_bits = 0.0;
    std::size_t png_bytes = 0;
    std::size_t jpeg_bytes = 0;
};

ComplexityEntry measure_complexity(const Image8& image);

struct ComplexitySummary {
    double mean_entropy = 0.0;
    double median_entropy = 0.0;
    double mean_png = 0.0;
    double median_png = 0.0;
    double mean_jpeg = 0.0;
    double median_jpeg = 0.0;
};

ComplexitySummary summarize(const std::vector<ComplexityEntry>& entries);

}  // namespace hmeval
