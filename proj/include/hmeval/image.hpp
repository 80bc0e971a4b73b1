#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace hmeval {

/// 8-bit interleaved image with 1 (gray) or 3 (RGB) channels.
struct Image8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> pixels;

    Image8() = default;
    Image8(std::size_t w, std::size_t h, std::size_t c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

    std::uint8_t* pixel(std::size_t y, std::size_t x) { return &pixels[(y * width + x) * channels]; }
    const std::uint8_t* pixel(std::size_t y, std::size_t x) const {
        return &pixels[(y * width + x) * channels];
    }

    friend bool operator==(const Image8&, const Image8&) = default;
};

// PNG: zlib level 9, adaptive row filters, no interlacing, 8 bits/channel.
std::vector<std::uint8_t> encode_png(const Image8& image);
// Baseline JPEG, given quality, libjpeg default 4:2:0 chroma subsampling.
std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality);

Image8 decode_png(const std::filesystem::path& path);
Image8 read_pnm(const std::filesystem::path& path);
/// Dispatches on extension: .png, .ppm, .pgm, .pnm.
Image8 read_image(const std::filesystem::path& path);

void write_png(const Image8& image, const std::filesystem::path& path);
void write_bytes(const std::vector<std::uint8_t>& bytes, const std::filesystem::path& path);

}  // namespace hmeval
