#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "hmeval/tensor.hpp"

namespace hmeval {

/// Fully connected layer. Weights are stored output-major: w[j * in + i]
/// connects input i to output j.
struct Linear {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    Linear() = default;
    Linear(std::size_t in_features, std::size_t out_features)
        : in(in_features), out(out_features), weights(in * out, 0.0), bias(out, 0.0) {}

    double& weight(std::size_t j, std::size_t i) { return weights[j * in + i]; }
    double weight(std::size_t j, std::size_t i) const { return weights[j * in + i]; }

    friend bool operator==(const Linear&, const Linear&) = default;
};

/// 2-D convolution over a channels x height x width input with optional
/// zero padding. Filter bank layout: [out][in][kernel_h][kernel_w].
struct Conv2D {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    Conv2D() = default;
    Conv2D(std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride_ = 1,
           std::size_t padding_ = 0)
        : in_channels(in_ch), out_channels(out_ch), kernel_h(kernel), kernel_w(kernel),
          stride(stride_), padding(padding_),
          weights(out_ch * in_ch * kernel * kernel, 0.0), bias(out_ch, 0.0) {}

    std::size_t filter_size() const { return in_channels * kernel_h * kernel_w; }
    double& weight(std::size_t o, std::size_t c, std::size_t ky, std::size_t kx) {
        return weights[((o * in_channels + c) * kernel_h + ky) * kernel_w + kx];
    }

    friend bool operator==(const Conv2D&, const Conv2D&) = default;
};

/// Max pooling; window and stride must tile the input exactly.
struct MaxPool2D {
    std::size_t window = 2;
    std::size_t stride = 2;

    friend bool operator==(const MaxPool2D&, const MaxPool2D&) = default;
};

struct ReLU {
    friend bool operator==(const ReLU&, const ReLU&) = default;
};

struct Flatten {
    friend bool operator==(const Flatten&, const Flatten&) = default;
};

using Layer = std::variant<Linear, Conv2D, MaxPool2D, ReLU, Flatten>;

std::string_view layer_name(const Layer& layer);

/// Output shape of `layer` for `input`; throws Validation on inconsistency.
Shape layer_output_shape(const Layer& layer, const Shape& input);

/// Flat input indices of the maximum of each pooling window (first
/// occurrence in row-major order wins).
using ArgmaxMap = std::vector<std::uint32_t>;

Tensor linear_forward(const Linear& layer, const Tensor& input, bool with_bias = true);
Tensor conv_forward(const Conv2D& layer, const Tensor& input, bool with_bias = true);
Tensor maxpool_forward(const MaxPool2D& layer, const Tensor& input, ArgmaxMap* argmax);
Tensor relu_forward(const Tensor& input);

/// Runs one layer. `argmax` is filled for MaxPool2D and cleared otherwise.
Tensor layer_forward(const Layer& layer, const Tensor& input, ArgmaxMap* argmax = nullptr);

// Transposed maps used by every backward pass.
Tensor linear_backward_input(const Linear& layer, const Tensor& upstream);
Tensor conv_backward_input(const Conv2D& layer, const Tensor& upstream, const Shape& input_shape);
Tensor unpool(const ArgmaxMap& argmax, const Tensor& upstream, const Shape& input_shape);

/// Accumulates parameter gradients into `grad_w` / `grad_b`.
void linear_backward_params(const Linear& layer, const Tensor& input, const Tensor& upstream,
                            std::span<double> grad_w, std::span<double> grad_b);
void conv_backward_params(const Conv2D& layer, const Tensor& input, const Tensor& upstream,
                          std::span<double> grad_w, std::span<double> grad_b);

}  // namespace hmeval
