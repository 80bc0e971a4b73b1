#include "hmeval/model.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {
namespace {

std::uint64_t next_revision() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

void check_finite(const Tensor& t, std::size_t layer, std::string_view name) {
    if (!t.all_finite()) {
        fail(ErrorKind::Numeric, "non-finite activation after layer " + std::to_string(layer) +
                                     " (" + std::string(name) + ")");
    }
}

}  // namespace

Model::Model(Shape input_shape, std::vector<Layer> layers, InputNorm norm)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)), revision_(next_revision()) {
    if (layers_.empty()) fail(ErrorKind::Validation, "model has no layers");
    if (shape_size(input_shape_) == 0)
        fail(ErrorKind::Validation, "model input shape " + shape_string(input_shape_) + " is empty");
    shapes_.reserve(layers_.size() + 1);
    shapes_.push_back(input_shape_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        try {
            shapes_.push_back(layer_output_shape(layers_[i], shapes_.back()));
        } catch (const Error& e) {
            fail(ErrorKind::Validation, "layer " + std::to_string(i) + ": " + e.what());
        }
    }
    if (shapes_.back().size() != 1) {
        fail(ErrorKind::Validation, "final layer must produce a rank-1 output, got " +
                                        shape_string(shapes_.back()));
    }
    set_input_norm(std::move(norm));
}

void Model::set_input_norm(InputNorm norm) {
    if (!norm.identity() || !norm.scale.empty()) {
        const std::size_t channels = input_shape_.size() == 3 ? input_shape_[0] : 1;
        if (norm.shift.size() != channels || norm.scale.size() != channels) {
            fail(ErrorKind::Validation, "input normalization needs " + std::to_string(channels) +
                                            " shift/scale pairs");
        }
        for (std::size_t c = 0; c < channels; ++c) {
            if (!std::isfinite(norm.shift[c]) || !std::isfinite(norm.scale[c]) ||
                !(norm.scale[c] > 0.0)) {
                fail(ErrorKind::Validation, "input normalization channel " + std::to_string(c) +
                                                " needs finite shift and positive scale");
            }
        }
    }
    norm_ = std::move(norm);
    revision_ = next_revision();
}

Tensor Model::normalize_input(const Tensor& raw) const {
    if (norm_.identity()) return raw;
    Tensor out = raw;
    const std::size_t channels = norm_.shift.size();
    const std::size_t plane = out.size() / channels;
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = c * plane; i < (c + 1) * plane; ++i)
            out[i] = (out[i] - norm_.shift[c]) / norm_.scale[c];
    }
    return out;
}

Layer& Model::mutable_layer(std::size_t i) {
    revision_ = next_revision();
    return layers_.at(i);
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const Layer& layer : layers_) {
        if (const auto* l = std::get_if<Linear>(&layer)) n += l->weights.size() + l->bias.size();
        if (const auto* c = std::get_if<Conv2D>(&layer)) n += c->weights.size() + c->bias.size();
    }
    return n;
}

namespace {

void require_input(const Model& model, const Tensor& input) {
    if (input.shape() != model.input_shape()) {
        fail(ErrorKind::ShapeMismatch, "input shape " + shape_string(input.shape()) +
                                           " does not match model input " +
                                           shape_string(model.input_shape()));
    }
}

}  // namespace

ForwardTrace forward(const Model& model, const Tensor& input) {
    require_input(model, input);
    ForwardTrace trace;
    trace.model_revision = model.revision();
    const std::size_t n = model.layer_count();
    trace.inputs.reserve(n);
    trace.outputs.reserve(n);
    trace.argmax.resize(n);
    Tensor current = model.normalize_input(input);
    for (std::size_t l = 0; l < n; ++l) {
        const Layer& layer = model.layers()[l];
        Tensor next = layer_forward(layer, current, &trace.argmax[l]);
        check_finite(next, l, layer_name(layer));
        trace.inputs.push_back(std::move(current));
        trace.outputs.push_back(next);
        current = std::move(next);
    }
    return trace;
}

Tensor logits(const Model& model, const Tensor& input) {
    require_input(model, input);
    Tensor current = model.normalize_input(input);
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        current = layer_forward(model.layers()[l], current);
    }
    check_finite(current, model.layer_count() - 1, "output");
    return current;
}

std::size_t argmax_index(const Tensor& scores) {
    if (scores.size() == 0) fail(ErrorKind::InvalidArgument, "argmax of an empty tensor");
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i) {
        if (scores[i] > scores[best]) best = i;
    }
    return best;
}

std::size_t predict(const Model& model, const Tensor& input) {
    return argmax_index(logits(model, input));
}

void require_current(const Model& model, const ForwardTrace& trace) {
    if (trace.model_revision != model.revision() || trace.inputs.size() != model.layer_count()) {
        fail(ErrorKind::StaleTrace, "trace was recorded against a different model revision");
    }
}

Tensor backward_signal(const Model& model, const ForwardTrace& trace, Tensor signal,
                       ReluBackward relu_rule) {
    require_current(model, trace);
    if (signal.shape() != trace.logits().shape()) {
        fail(ErrorKind::ShapeMismatch, "output signal shape " + shape_string(signal.shape()) +
                                           " does not match logits " +
                                           shape_string(trace.logits().shape()));
    }
    for (std::size_t l = model.layer_count(); l-- > 0;) {
        const Layer& layer = model.layers()[l];
        const Shape& in_shape = model.shape_at(l);
        if (const auto* lin = std::get_if<Linear>(&layer)) {
            signal = linear_backward_input(*lin, signal);
        } else if (const auto* conv = std::get_if<Conv2D>(&layer)) {
            signal = conv_backward_input(*conv, signal, in_shape);
        } else if (std::holds_alternative<MaxPool2D>(layer)) {
            signal = unpool(trace.argmax[l], signal, in_shape);
        } else if (std::holds_alternative<ReLU>(layer)) {
            const Tensor& pre = trace.inputs[l];
            for (std::size_t i = 0; i < signal.size(); ++i) {
                if (relu_rule == ReluBackward::Indicator) {
                    if (!(pre[i] > 0.0)) signal[i] = 0.0;
                } else if (signal[i] < 0.0) {
                    signal[i] = 0.0;
                }
            }
        } else {
            signal = signal.reshaped(in_shape);
        }
    }
    const InputNorm& norm = model.input_norm();
    if (!norm.identity()) {
        const std::size_t plane = signal.size() / norm.scale.size();
        for (std::size_t i = 0; i < signal.size(); ++i) signal[i] /= norm.scale[i / plane];
    }
    return signal;
}

Tensor gradient_input(const Model& model, const ForwardTrace& trace, std::size_t target) {
    if (target >= model.class_count()) {
        fail(ErrorKind::InvalidArgument, "class " + std::to_string(target) + " out of range");
    }
    Tensor seed(trace.logits().shape());
    seed[target] = 1.0;
    return backward_signal(model, trace, std::move(seed), ReluBackward::Indicator);
}

void init_parameters(Model& model, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        Layer& layer = model.mutable_layer(l);
        auto fill = [&](std::vector<double>& w, std::vector<double>& b, std::size_t fan_in) {
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
            for (double& v : w) v = dist(rng);
            std::fill(b.begin(), b.end(), 0.0);
        };
        if (auto* lin = std::get_if<Linear>(&layer)) fill(lin->weights, lin->bias, lin->in);
        if (auto* conv = std::get_if<Conv2D>(&layer)) fill(conv->weights, conv->bias, conv->filter_size());
    }
}

}  // namespace hmeval
