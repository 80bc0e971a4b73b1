#include "hmeval/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>

#include <zlib.h>

#include "hmeval/error.hpp"
#include "hmeval/image.hpp"

namespace hmeval {
namespace {

// Reads a file, transparently inflating gzip content.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) fail(ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::uint8_t chunk[1 << 16];
    for (;;) {
        const int n = gzread(f, chunk, sizeof chunk);
        if (n < 0) {
            int code = 0;
            std::string message = gzerror(f, &code);
            gzclose(f);
            fail(ErrorKind::Format, path.string() + ": " + message);
        }
        if (n == 0) break;
        out.insert(out.end(), chunk, chunk + n);
    }
    if (gzclose(f) != Z_OK) fail(ErrorKind::Truncated, path.string() + ": compressed stream truncated");
    return out;
}

std::uint32_t be32(const std::vector<std::uint8_t>& buf, std::size_t offset,
                   const std::filesystem::path& path) {
    if (offset + 4 > buf.size()) {
        fail(ErrorKind::Truncated, path.string() + ": header truncated at offset " + std::to_string(offset));
    }
    return std::uint32_t{buf[offset]} << 24 | std::uint32_t{buf[offset + 1]} << 16 |
           std::uint32_t{buf[offset + 2]} << 8 | std::uint32_t{buf[offset + 3]};
}

std::filesystem::path derive_labels_path(const std::filesystem::path& images) {
    std::string name = images.filename().string();
    const auto pos = name.find("images-idx3");
    if (pos == std::string::npos) {
        fail(ErrorKind::InvalidArgument, images.string() +
                                             ": cannot derive labels file name; pass it explicitly");
    }
    name.replace(pos, 11, "labels-idx1");
    return images.parent_path() / name;
}

Tensor image_to_tensor(const Image8& img) {
    Tensor t({img.channels, img.height, img.width});
    const std::size_t plane = img.height * img.width;
    for (std::size_t p = 0; p < plane; ++p)
        for (std::size_t c = 0; c < img.channels; ++c)
            t[c * plane + p] = img.pixels[p * img.channels + c] / 255.0;
    return t;
}

}  // namespace

Dataset Dataset::head(std::size_t n) const {
    Dataset out;
    n = std::min(n, size());
    out.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n));
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    out.split = split;
    out.class_names = class_names;
    return out;
}

void Dataset::validate() const {
    if (images.size() != labels.size()) {
        fail(ErrorKind::Validation, std::to_string(images.size()) + " images but " +
                                        std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].shape() != images[0].shape())
            fail(ErrorKind::Validation, "image " + std::to_string(i) + " has a different shape");
        if (labels[i] >= class_names.size())
            fail(ErrorKind::Validation, "label of record " + std::to_string(i) + " out of range");
        for (double v : images[i].values())
            if (!(v >= 0.0 && v <= 1.0))
                fail(ErrorKind::Validation, "image " + std::to_string(i) + " has a pixel outside [0,1]");
    }
}

DatasetFormat parse_dataset_format(std::string_view name) {
    if (name == "idx") return DatasetFormat::Idx;
    if (name == "cifar-binary") return DatasetFormat::CifarBinary;
    if (name == "image-directory") return DatasetFormat::ImageDirectory;
    fail(ErrorKind::InvalidArgument, "unknown dataset format '" + std::string(name) +
                                         "' (idx, cifar-binary, image-directory)");
}

std::string_view dataset_format_name(DatasetFormat format) {
    switch (format) {
        case DatasetFormat::Idx: return "idx";
        case DatasetFormat::CifarBinary: return "cifar-binary";
        case DatasetFormat::ImageDirectory: return "image-directory";
    }
    return "unknown";
}

Dataset load_dataset(const DatasetSource& source) {
    switch (source.format) {
        case DatasetFormat::Idx:
            return load_idx(source.path, source.labels ? *source.labels : derive_labels_path(source.path),
                            source.split);
        case DatasetFormat::CifarBinary: return load_cifar_binary(source.path, source.split);
        case DatasetFormat::ImageDirectory: return load_image_directory(source.path, source.split);
    }
    fail(ErrorKind::InvalidArgument, "unknown dataset format");
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 Split split) {
    const auto images = read_maybe_gzip(images_path);
    const auto labels = read_maybe_gzip(labels_path);
    if (be32(images, 0, images_path) != 0x00000803)
        fail(ErrorKind::Format, images_path.string() + ": bad IDX image magic");
    if (be32(labels, 0, labels_path) != 0x00000801)
        fail(ErrorKind::Format, labels_path.string() + ": bad IDX label magic");
    const std::size_t count = be32(images, 4, images_path);
    const std::size_t rows = be32(images, 8, images_path);
    const std::size_t cols = be32(images, 12, images_path);
    const std::size_t label_count = be32(labels, 4, labels_path);
    if (label_count != count) {
        fail(ErrorKind::Format, "IDX image count " + std::to_string(count) +
                                    " does not match label count " + std::to_string(label_count));
    }
    const std::size_t pixels = rows * cols;
    if (images.size() < 16 + count * pixels) {
        const std::size_t record = images.size() < 16 ? 0 : (images.size() - 16) / std::max<std::size_t>(pixels, 1);
        fail(ErrorKind::Truncated, images_path.string() + ": truncated in record " +
                                       std::to_string(record) + " (offset " +
                                       std::to_string(16 + record * pixels) + ")");
    }
    if (labels.size() < 8 + count) {
        fail(ErrorKind::Truncated, labels_path.string() + ": truncated at offset " +
                                       std::to_string(labels.size()));
    }
    Dataset ds;
    ds.split = split;
    std::size_t max_label = 0;
    ds.images.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Tensor t({1, rows, cols});
        const std::uint8_t* src = images.data() + 16 + i * pixels;
        for (std::size_t p = 0; p < pixels; ++p) t[p] = src[p] / 255.0;
        ds.images.push_back(std::move(t));
        ds.labels.push_back(labels[8 + i]);
        max_label = std::max<std::size_t>(max_label, labels[8 + i]);
    }
    for (std::size_t c = 0; c < std::max<std::size_t>(10, max_label + 1); ++c)
        ds.class_names.push_back(std::to_string(c));
    return ds;
}

Dataset load_cifar_binary(const std::filesystem::path& path, Split split) {
    constexpr std::size_t kRecord = 3073;
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(path)) {
        for (const auto& entry : std::filesystem::directory_iterator(path))
            if (entry.path().extension() == ".bin") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        if (files.empty()) fail(ErrorKind::Io, path.string() + ": no .bin batch files");
    } else {
        files.push_back(path);
    }
    Dataset ds;
    ds.split = split;
    const auto meta = (std::filesystem::is_directory(path) ? path : path.parent_path()) / "batches.meta.txt";
    if (std::ifstream names(meta); names) {
        for (std::string line; std::getline(names, line);)
            if (!line.empty()) ds.class_names.push_back(line);
    }
    if (ds.class_names.size() != 10) {
        ds.class_names.clear();
        for (int c = 0; c < 10; ++c) ds.class_names.push_back(std::to_string(c));
    }
    for (const auto& file : files) {
        const auto bytes = read_maybe_gzip(file);
        if (bytes.size() % kRecord != 0) {
            const std::size_t full = bytes.size() / kRecord;
            fail(ErrorKind::Truncated, file.string() + ": truncated record " + std::to_string(full) +
                                           " at offset " + std::to_string(full * kRecord));
        }
        for (std::size_t off = 0; off < bytes.size(); off += kRecord) {
            const std::size_t label = bytes[off];
            if (label >= 10) {
                fail(ErrorKind::Format, file.string() + ": label " + std::to_string(label) +
                                            " at offset " + std::to_string(off) + " is not 0..9");
            }
            Tensor t({3, 32, 32});
            for (std::size_t k = 0; k < 3072; ++k) t[k] = bytes[off + 1 + k] / 255.0;
            ds.images.push_back(std::move(t));
            ds.labels.push_back(label);
        }
    }
    return ds;
}

Dataset load_image_directory(const std::filesystem::path& root, Split split) {
    if (!std::filesystem::is_directory(root)) fail(ErrorKind::Io, root.string() + " is not a directory");
    std::vector<std::filesystem::path> classes;
    for (const auto& entry : std::filesystem::directory_iterator(root))
        if (entry.is_directory()) classes.push_back(entry.path());
    std::sort(classes.begin(), classes.end());
    if (classes.empty()) fail(ErrorKind::Io, root.string() + ": no class subdirectories");
    Dataset ds;
    ds.split = split;
    for (std::size_t label = 0; label < classes.size(); ++label) {
        ds.class_names.push_back(classes[label].filename().string());
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(classes[label])) {
            const auto ext = entry.path().extension();
            if (ext == ".png" || ext == ".ppm" || ext == ".pgm") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            Tensor t = image_to_tensor(read_image(file));
            if (!ds.images.empty() && t.shape() != ds.images.front().shape()) {
                fail(ErrorKind::Format, file.string() + ": size " + shape_string(t.shape()) +
                                            " differs from " + shape_string(ds.images.front().shape()));
            }
            ds.images.push_back(std::move(t));
            ds.labels.push_back(label);
        }
    }
    if (ds.images.empty()) fail(ErrorKind::Io, root.string() + ": no images found");
    return ds;
}

Tensor mean_image(const Dataset& dataset) {
    if (dataset.size() == 0) fail(ErrorKind::InvalidArgument, "mean_image of an empty dataset");
    Tensor mean(dataset.image_shape());
    for (const Tensor& img : dataset.images)
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += img[i];
    const double n = static_cast<double>(dataset.size());
    for (double& v : mean.values()) v /= n;
    return mean;
}

InputNorm channel_standardization(const Dataset& dataset) {
    if (dataset.size() == 0) fail(ErrorKind::InvalidArgument, "standardization of an empty dataset");
    const Shape& shape = dataset.image_shape();
    const std::size_t channels = shape.size() == 3 ? shape[0] : 1;
    const std::size_t plane = shape_size(shape) / channels;
    InputNorm norm{std::vector<double>(channels), std::vector<double>(channels)};
    for (std::size_t c = 0; c < channels; ++c) {
        double sum = 0.0, sq = 0.0;
        for (const Tensor& img : dataset.images) {
            for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
                sum += img[i];
                sq += img[i] * img[i];
            }
        }
        const double n = static_cast<double>(plane * dataset.size());
        const double m = sum / n;
        const double var = std::max(0.0, sq / n - m * m);
        if (!(var > 1e-12))
            fail(ErrorKind::Degenerate, "channel " + std::to_string(c) + " has no variance");
        norm.shift[c] = m;
        norm.scale[c] = std::sqrt(var);
    }
    return norm;
}

}  // namespace hmeval
