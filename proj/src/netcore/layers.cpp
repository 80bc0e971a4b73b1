#include "hmeval/layers.hpp"

#include <algorithm>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {
namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

[[noreturn]] void invalid(std::string_view layer, const std::string& what) {
    fail(ErrorKind::Validation, std::string(layer) + ": " + what);
}

// Output positions ox in [lo, hi) whose input column ox*stride + k - pad
// falls inside [0, extent).
struct Span {
    std::size_t lo, hi;
};

Span valid_outputs(std::size_t out_extent, std::size_t in_extent, std::size_t k,
                   std::size_t stride, std::size_t pad) {
    const auto offset = static_cast<long>(k) - static_cast<long>(pad);
    long lo = 0;
    if (offset < 0) lo = (-offset + static_cast<long>(stride) - 1) / static_cast<long>(stride);
    long last = static_cast<long>(in_extent) - 1 - offset;
    long hi = last < 0 ? 0 : last / static_cast<long>(stride) + 1;
    hi = std::min(hi, static_cast<long>(out_extent));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

void require_rank3(const Tensor& t, std::string_view what) {
    if (t.rank() != 3) {
        fail(ErrorKind::ShapeMismatch,
             std::string(what) + " expects a rank-3 input, got " + shape_string(t.shape()));
    }
}

}  // namespace

std::string_view layer_name(const Layer& layer) {
    return std::visit(overloaded{
                          [](const Linear&) { return std::string_view("Linear"); },
                          [](const Conv2D&) { return std::string_view("Conv2D"); },
                          [](const MaxPool2D&) { return std::string_view("MaxPool2D"); },
                          [](const ReLU&) { return std::string_view("ReLU"); },
                          [](const Flatten&) { return std::string_view("Flatten"); },
                      },
                      layer);
}

Shape layer_output_shape(const Layer& layer, const Shape& input) {
    return std::visit(
        overloaded{
            [&](const Linear& l) -> Shape {
                if (l.weights.size() != l.in * l.out || l.bias.size() != l.out)
                    invalid("Linear", "parameter extents do not match " + std::to_string(l.out) +
                                          "x" + std::to_string(l.in));
                if (input.size() != 1 || input[0] != l.in)
                    invalid("Linear", "expects input [" + std::to_string(l.in) + "], got " +
                                          shape_string(input));
                return {l.out};
            },
            [&](const Conv2D& c) -> Shape {
                if (c.weights.size() != c.out_channels * c.filter_size() ||
                    c.bias.size() != c.out_channels)
                    invalid("Conv2D", "filter bank extents are inconsistent");
                if (c.stride == 0 || c.kernel_h == 0 || c.kernel_w == 0)
                    invalid("Conv2D", "kernel and stride must be >= 1");
                if (input.size() != 3 || input[0] != c.in_channels)
                    invalid("Conv2D", "expects " + std::to_string(c.in_channels) +
                                          " input channels, got " + shape_string(input));
                const auto h = input[1] + 2 * c.padding;
                const auto w = input[2] + 2 * c.padding;
                if (h < c.kernel_h || w < c.kernel_w)
                    invalid("Conv2D", "kernel larger than padded input " + shape_string(input));
                return {c.out_channels, (h - c.kernel_h) / c.stride + 1,
                        (w - c.kernel_w) / c.stride + 1};
            },
            [&](const MaxPool2D& p) -> Shape {
                if (p.window == 0 || p.stride == 0)
                    invalid("MaxPool2D", "window and stride must be >= 1");
                if (input.size() != 3) invalid("MaxPool2D", "expects a rank-3 input");
                for (std::size_t axis : {1u, 2u}) {
                    if (input[axis] < p.window || (input[axis] - p.window) % p.stride != 0)
                        invalid("MaxPool2D", "window " + std::to_string(p.window) + " / stride " +
                                                 std::to_string(p.stride) +
                                                 " does not tile input " + shape_string(input));
                }
                return {input[0], (input[1] - p.window) / p.stride + 1,
                        (input[2] - p.window) / p.stride + 1};
            },
            [&](const ReLU&) -> Shape { return input; },
            [&](const Flatten&) -> Shape { return {shape_size(input)}; },
        },
        layer);
}

Tensor linear_forward(const Linear& layer, const Tensor& input, bool with_bias) {
    if (input.size() != layer.in) {
        fail(ErrorKind::ShapeMismatch, "Linear expects " + std::to_string(layer.in) +
                                           " inputs, got " + shape_string(input.shape()));
    }
    Tensor out({layer.out});
    const double* x = input.data();
    for (std::size_t j = 0; j < layer.out; ++j) {
        const double* w = layer.weights.data() + j * layer.in;
        double acc = with_bias ? layer.bias[j] : 0.0;
        for (std::size_t i = 0; i < layer.in; ++i) acc += w[i] * x[i];
        out[j] = acc;
    }
    return out;
}

Tensor conv_forward(const Conv2D& layer, const Tensor& input, bool with_bias) {
    require_rank3(input, "Conv2D");
    const Shape out_shape = layer_output_shape(layer, input.shape());
    const std::size_t in_h = input.dim(1), in_w = input.dim(2);
    const std::size_t out_h = out_shape[1], out_w = out_shape[2];
    const std::size_t s = layer.stride, pad = layer.padding;
    Tensor out(out_shape);
    const double* w = layer.weights.data();
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        double* plane = out.data() + o * out_h * out_w;
        if (with_bias) std::fill(plane, plane + out_h * out_w, layer.bias[o]);
        for (std::size_t c = 0; c < layer.in_channels; ++c) {
            const double* src = input.data() + c * in_h * in_w;
            for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                const Span rows = valid_outputs(out_h, in_h, ky, s, pad);
                for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                    const double wv = *w++;
                    const Span cols = valid_outputs(out_w, in_w, kx, s, pad);
                    for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                        const double* row = src + (oy * s + ky - pad) * in_w;
                        double* dst = plane + oy * out_w;
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                            dst[ox] += wv * row[ox * s + kx - pad];
                    }
                }
            }
        }
    }
    return out;
}

Tensor maxpool_forward(const MaxPool2D& layer, const Tensor& input, ArgmaxMap* argmax) {
    require_rank3(input, "MaxPool2D");
    const Shape out_shape = layer_output_shape(layer, input.shape());
    const std::size_t in_h = input.dim(1), in_w = input.dim(2);
    Tensor out(out_shape);
    if (argmax) argmax->assign(out.size(), 0);
    std::size_t k = 0;
    for (std::size_t c = 0; c < out_shape[0]; ++c) {
        for (std::size_t oy = 0; oy < out_shape[1]; ++oy) {
            for (std::size_t ox = 0; ox < out_shape[2]; ++ox, ++k) {
                std::size_t best = (c * in_h + oy * layer.stride) * in_w + ox * layer.stride;
                double best_value = input[best];
                for (std::size_t dy = 0; dy < layer.window; ++dy) {
                    for (std::size_t dx = 0; dx < layer.window; ++dx) {
                        const std::size_t idx =
                            (c * in_h + oy * layer.stride + dy) * in_w + ox * layer.stride + dx;
                        if (input[idx] > best_value) {
                            best_value = input[idx];
                            best = idx;
                        }
                    }
                }
                out[k] = best_value;
                if (argmax) (*argmax)[k] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return out;
}

Tensor relu_forward(const Tensor& input) {
    Tensor out = input;
    for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
    return out;
}

Tensor layer_forward(const Layer& layer, const Tensor& input, ArgmaxMap* argmax) {
    if (argmax) argmax->clear();
    return std::visit(overloaded{
                          [&](const Linear& l) { return linear_forward(l, input); },
                          [&](const Conv2D& c) { return conv_forward(c, input); },
                          [&](const MaxPool2D& p) { return maxpool_forward(p, input, argmax); },
                          [&](const ReLU&) { return relu_forward(input); },
                          [&](const Flatten&) { return input.reshaped({input.size()}); },
                      },
                      layer);
}

Tensor linear_backward_input(const Linear& layer, const Tensor& upstream) {
    if (upstream.size() != layer.out) {
        fail(ErrorKind::ShapeMismatch, "Linear backward expects " + std::to_string(layer.out) +
                                           " upstream values, got " +
                                           shape_string(upstream.shape()));
    }
    Tensor grad({layer.in});
    double* g = grad.data();
    for (std::size_t j = 0; j < layer.out; ++j) {
        const double u = upstream[j];
        if (u == 0.0) continue;
        const double* w = layer.weights.data() + j * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) g[i] += w[i] * u;
    }
    return grad;
}

Tensor conv_backward_input(const Conv2D& layer, const Tensor& upstream, const Shape& input_shape) {
    const Shape out_shape = layer_output_shape(layer, input_shape);
    if (upstream.shape() != out_shape) {
        fail(ErrorKind::ShapeMismatch, "Conv2D backward expects upstream " +
                                           shape_string(out_shape) + ", got " +
                                           shape_string(upstream.shape()));
    }
    const std::size_t in_h = input_shape[1], in_w = input_shape[2];
    const std::size_t out_h = out_shape[1], out_w = out_shape[2];
    const std::size_t s = layer.stride, pad = layer.padding;
    Tensor grad(input_shape);
    const double* w = layer.weights.data();
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        const double* plane = upstream.data() + o * out_h * out_w;
        for (std::size_t c = 0; c < layer.in_channels; ++c) {
            double* dst = grad.data() + c * in_h * in_w;
            for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                const Span rows = valid_outputs(out_h, in_h, ky, s, pad);
                for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                    const double wv = *w++;
                    const Span cols = valid_outputs(out_w, in_w, kx, s, pad);
                    for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                        double* row = dst + (oy * s + ky - pad) * in_w;
                        const double* src = plane + oy * out_w;
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                            row[ox * s + kx - pad] += wv * src[ox];
                    }
                }
            }
        }
    }
    return grad;
}

Tensor unpool(const ArgmaxMap& argmax, const Tensor& upstream, const Shape& input_shape) {
    if (argmax.size() != upstream.size()) {
        fail(ErrorKind::ShapeMismatch, "unpool: argmax map has " + std::to_string(argmax.size()) +
                                           " entries, upstream has " +
                                           std::to_string(upstream.size()));
    }
    Tensor grad(input_shape);
    for (std::size_t k = 0; k < argmax.size(); ++k) grad[argmax[k]] += upstream[k];
    return grad;
}

void linear_backward_params(const Linear& layer, const Tensor& input, const Tensor& upstream,
                            std::span<double> grad_w, std::span<double> grad_b) {
    for (std::size_t j = 0; j < layer.out; ++j) {
        const double u = upstream[j];
        grad_b[j] += u;
        if (u == 0.0) continue;
        double* gw = grad_w.data() + j * layer.in;
        for (std::size_t i = 0; i < layer.in; ++i) gw[i] += u * input[i];
    }
}

void conv_backward_params(const Conv2D& layer, const Tensor& input, const Tensor& upstream,
                          std::span<double> grad_w, std::span<double> grad_b) {
    const std::size_t in_h = input.dim(1), in_w = input.dim(2);
    const std::size_t out_h = upstream.dim(1), out_w = upstream.dim(2);
    const std::size_t s = layer.stride, pad = layer.padding;
    double* gw = grad_w.data();
    for (std::size_t o = 0; o < layer.out_channels; ++o) {
        const double* plane = upstream.data() + o * out_h * out_w;
        double bias_acc = 0.0;
        for (std::size_t k = 0; k < out_h * out_w; ++k) bias_acc += plane[k];
        grad_b[o] += bias_acc;
        for (std::size_t c = 0; c < layer.in_channels; ++c) {
            const double* src = input.data() + c * in_h * in_w;
            for (std::size_t ky = 0; ky < layer.kernel_h; ++ky) {
                const Span rows = valid_outputs(out_h, in_h, ky, s, pad);
                for (std::size_t kx = 0; kx < layer.kernel_w; ++kx) {
                    const Span cols = valid_outputs(out_w, in_w, kx, s, pad);
                    double acc = 0.0;
                    for (std::size_t oy = rows.lo; oy < rows.hi; ++oy) {
                        const double* row = src + (oy * s + ky - pad) * in_w;
                        const double* up = plane + oy * out_w;
                        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox)
                            acc += up[ox] * row[ox * s + kx - pad];
                    }
                    *gw++ += acc;
                }
            }
        }
    }
}

}  // namespace hmeval
