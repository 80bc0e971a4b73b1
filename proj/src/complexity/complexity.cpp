#include "hmeval/complexity.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "hmeval/error.hpp"

namespace hmeval {
namespace {

std::uint8_t luma(const std::uint8_t* px) {
    const double y = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    return static_cast<std::uint8_t>(std::clamp(std::lround(y), 0L, 255L));
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

double mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

}  // namespace

double image_entropy(const Image8& image) {
    if (image.channels != 1 && image.channels != 3)
        fail(ErrorKind::InvalidArgument, "entropy expects a gray or RGB image");
    std::array<std::size_t, 256> hist{};
    const std::size_t n = image.width * image.height;
    if (n == 0) return 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const std::uint8_t* px = image.pixels.data() + p * image.channels;
        ++hist[image.channels == 3 ? luma(px) : px[0]];
    }
    double h = 0.0;
    for (std::size_t count : hist) {
        if (count == 0) continue;
        const double p = static_cast<double>(count) / static_cast<double>(n);
        h -= p * std::log2(p);
    }
    return h;
}

std::size_t compressed_size(const Image8& image, Codec codec) {
    const auto bytes = codec == Codec::Png ? encode_png(image) : encode_jpeg(image, 90);
    if (bytes.empty()) fail(ErrorKind::Encoder, "encoder produced no output");
    return bytes.size();
}

ComplexityEntry measure_complexity(const Image8& image) {
    return {image_entropy(image), compressed_size(image, Codec::Png),
            compressed_size(image, Codec::Jpeg90)};
}

ComplexitySummary summarize(const std::vector<ComplexityEntry>& entries) {
    std::vector<double> e, p, j;
    for (const auto& x : entries) {
        e.push_back(x.entropy_bits);
        p.push_back(static_cast<double>(x.png_bytes));
        j.push_back(static_cast<double>(x.jpeg_bytes));
    }
    return {mean(e), median(e), mean(p), median(p), mean(j), median(j)};
}

}  // namespace hmeval
