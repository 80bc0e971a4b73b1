#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "hmeval/layers.hpp"
#include "hmeval/tensor.hpp"

namespace hmeval {

/// Per-channel input standardization (x - shift) / scale applied before the
/// first layer. Empty vectors mean identity. Traces and heatmaps live in the
/// standardized space; gradients are reported with respect to the raw input.
struct InputNorm {
    std::vector<double> shift;
    std::vector<double> scale;

    bool identity() const noexcept { return shift.empty(); }
    friend bool operator==(const InputNorm&, const InputNorm&) = default;
};

/// Sequential layer stack with a declared input shape. The class count is
/// the length of the final (rank-1) output.
///
/// Every mutation through mutable_layer() assigns a fresh revision, which
/// lets backward passes reject traces recorded against older parameters.
class Model {
public:
    Model(Shape input_shape, std::vector<Layer> layers, InputNorm norm = {});

    const Shape& input_shape() const noexcept { return input_shape_; }
    const std::vector<Layer>& layers() const noexcept { return layers_; }
    const InputNorm& input_norm() const noexcept { return norm_; }
    void set_input_norm(InputNorm norm);
    /// Raw input mapped into the space the first layer sees.
    Tensor normalize_input(const Tensor& raw) const;
    std::size_t layer_count() const noexcept { return layers_.size(); }
    std::size_t class_count() const noexcept { return shapes_.back()[0]; }

    /// Shape entering layer i; i == layer_count() gives the logits shape.
    const Shape& shape_at(std::size_t i) const { return shapes_.at(i); }

    Layer& mutable_layer(std::size_t i);
    std::uint64_t revision() const noexcept { return revision_; }
    std::size_t parameter_count() const;

    friend bool operator==(const Model& a, const Model& b) {
        return a.input_shape_ == b.input_shape_ && a.layers_ == b.layers_ && a.norm_ == b.norm_;
    }

private:
    Shape input_shape_;
    std::vector<Layer> layers_;
    std::vector<Shape> shapes_;
    InputNorm norm_;
    std::uint64_t revision_ = 0;
};

/// Recorded forward pass of the standardized input. inputs[l] / outputs[l] are the activations
/// entering / leaving layer l; argmax[l] is non-empty only for pooling.
struct ForwardTrace {
    std::uint64_t model_revision = 0;
    std::vector<Tensor> inputs;
    std::vector<Tensor> outputs;
    std::vector<ArgmaxMap> argmax;

    const Tensor& input() const { return inputs.front(); }
    const Tensor& logits() const { return outputs.back(); }
};

ForwardTrace forward(const Model& model, const Tensor& input);

/// Logits only; skips trace bookkeeping.
Tensor logits(const Model& model, const Tensor& input);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax_index(const Tensor& scores);
std::size_t predict(const Model& model, const Tensor& input);

void require_current(const Model& model, const ForwardTrace& trace);

enum class ReluBackward {
    Indicator,  // multiply by 1{z > 0}: gradient
    Rectify,    // max(0, signal): deconvolution
};

/// Propagates `output_signal` (logits-shaped) down to the raw input using the
/// transposed filters, argmax unpooling and the chosen ReLU rule.
Tensor backward_signal(const Model& model, const ForwardTrace& trace, Tensor output_signal,
                       ReluBackward relu_rule);

/// d logit[target] / d input, same shape as the input.
Tensor gradient_input(const Model& model, const ForwardTrace& trace, std::size_t target);

/// He-normal weights, zero biases.
void init_parameters(Model& model, std::uint64_t seed);

}  // namespace hmeval
