#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmeval/tensor.hpp"
#include "hmeval/trainer.hpp"

namespace hmeval {

enum class Split { Train, Test };

/// Images are channels x height x width with values in [0, 1].
struct Dataset {
    std::vector<Tensor> images;
    std::vector<std::size_t> labels;
    Split split = Split::Test;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return images.size(); }
    const Shape& image_shape() const { return images.at(0).shape(); }
    Examples examples() const { return {images, labels}; }

    /// First `n` records (or all if n >= size()).
    Dataset head(std::size_t n) const;
    /// Throws Validation if any invariant is broken.
    void validate() const;
};

enum class DatasetFormat { Idx, CifarBinary, ImageDirectory };

DatasetFormat parse_dataset_format(std::string_view name);
std::string_view dataset_format_name(DatasetFormat format);

struct DatasetSource {
    DatasetFormat format = DatasetFormat::Idx;
    std::filesystem::path path;
    /// IDX only; derived from `path` ("images-idx3" -> "labels-idx1") when empty.
    std::optional<std::filesystem::path> labels;
    Split split = Split::Test;
};

Dataset load_dataset(const DatasetSource& source);

/// IDX pair (optionally gzip-compressed): images 0x00000803, labels 0x00000801.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split);
/// One CIFAR-10 binary batch file, or a directory whose *.bin files are read
/// in lexicographic order.
Dataset load_cifar_binary(const std::filesystem::path& path, Split split);
/// root/<class name>/*.{png,ppm,pgm}; classes and files in lexicographic order.
Dataset load_image_directory(const std::filesystem::path& root, Split split);

/// Per-location, per-channel mean over the dataset.
Tensor mean_image(const Dataset& dataset);

/// Per-channel mean and standard deviation over all pixels, as an InputNorm.
InputNorm channel_standardization(const Dataset& dataset);

}  // namespace hmeval
