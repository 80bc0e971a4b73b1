#include "hmeval/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {
namespace {

struct LayerGrad {
    std::vector<double> w;
    std::vector<double> b;
};

std::vector<LayerGrad> zero_grads(const Model& model) {
    std::vector<LayerGrad> grads(model.layer_count());
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        const Layer& layer = model.layers()[l];
        if (const auto* lin = std::get_if<Linear>(&layer)) {
            grads[l] = {std::vector<double>(lin->weights.size()), std::vector<double>(lin->bias.size())};
        } else if (const auto* conv = std::get_if<Conv2D>(&layer)) {
            grads[l] = {std::vector<double>(conv->weights.size()), std::vector<double>(conv->bias.size())};
        }
    }
    return grads;
}

// Accumulates d(cross-entropy)/d(params) for one example; returns the loss.
double accumulate_example(const Model& model, const Tensor& image, std::size_t label,
                          std::vector<LayerGrad>& grads) {
    const ForwardTrace trace = forward(model, image);
    const Tensor& z = trace.logits();
    const double zmax = *std::max_element(z.values().begin(), z.values().end());
    double denom = 0.0;
    for (double v : z.values()) denom += std::exp(v - zmax);
    Tensor signal(z.shape());
    for (std::size_t k = 0; k < z.size(); ++k) signal[k] = std::exp(z[k] - zmax) / denom;
    const double loss = -std::log(std::max(signal[label], 1e-300));
    signal[label] -= 1.0;

    for (std::size_t l = model.layer_count(); l-- > 0;) {
        const Layer& layer = model.layers()[l];
        const Tensor& in = trace.inputs[l];
        if (const auto* lin = std::get_if<Linear>(&layer)) {
            linear_backward_params(*lin, in, signal, grads[l].w, grads[l].b);
            if (l > 0) signal = linear_backward_input(*lin, signal);
        } else if (const auto* conv = std::get_if<Conv2D>(&layer)) {
            conv_backward_params(*conv, in, signal, grads[l].w, grads[l].b);
            if (l > 0) signal = conv_backward_input(*conv, signal, in.shape());
        } else if (std::holds_alternative<MaxPool2D>(layer)) {
            signal = unpool(trace.argmax[l], signal, in.shape());
        } else if (std::holds_alternative<ReLU>(layer)) {
            for (std::size_t i = 0; i < signal.size(); ++i)
                if (!(in[i] > 0.0)) signal[i] = 0.0;
        } else {
            signal = signal.reshaped(in.shape());
        }
    }
    return loss;
}

void apply_step(Model& model, std::vector<LayerGrad>& grads, double scale) {
    for (std::size_t l = 0; l < model.layer_count(); ++l) {
        if (grads[l].w.empty()) continue;
        Layer& layer = model.mutable_layer(l);
        std::vector<double>* w = nullptr;
        std::vector<double>* b = nullptr;
        if (auto* lin = std::get_if<Linear>(&layer)) {
            w = &lin->weights;
            b = &lin->bias;
        } else if (auto* conv = std::get_if<Conv2D>(&layer)) {
            w = &conv->weights;
            b = &conv->bias;
        }
        for (std::size_t i = 0; i < w->size(); ++i) (*w)[i] -= scale * grads[l].w[i];
        for (std::size_t i = 0; i < b->size(); ++i) (*b)[i] -= scale * grads[l].b[i];
        std::fill(grads[l].w.begin(), grads[l].w.end(), 0.0);
        std::fill(grads[l].b.begin(), grads[l].b.end(), 0.0);
    }
}

}  // namespace

double accuracy(const Model& model, const Examples& data) {
    if (data.size() == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (predict(model, data.images[i]) == data.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<Checkpoint> train_sgd(Model model, const Examples& train, const Examples& test,
                                  const TrainConfig& config, const TrainProgress& progress) {
    if (train.size() == 0) fail(ErrorKind::InvalidArgument, "training set is empty");
    if (train.images.size() != train.labels.size() || test.images.size() != test.labels.size())
        fail(ErrorKind::InvalidArgument, "image and label counts differ");
    if (!(config.learning_rate > 0.0))
        fail(ErrorKind::InvalidArgument, "learning rate must be > 0");
    if (config.batch_size == 0) fail(ErrorKind::InvalidArgument, "batch size must be >= 1");
    if (!std::is_sorted(config.checkpoint_iterations.begin(), config.checkpoint_iterations.end(),
                        std::less_equal<>{}))
        fail(ErrorKind::InvalidArgument, "checkpoint iterations must be strictly increasing");
    for (std::size_t label : train.labels) {
        if (label >= model.class_count())
            fail(ErrorKind::InvalidArgument, "label " + std::to_string(label) +
                                                 " exceeds class count " +
                                                 std::to_string(model.class_count()));
    }

    const std::size_t batches_per_epoch = (train.size() + config.batch_size - 1) / config.batch_size;
    const std::size_t total = batches_per_epoch * config.epochs;

    std::vector<Checkpoint> checkpoints;
    auto snapshot = [&](std::size_t iteration) {
        checkpoints.push_back({model, iteration, accuracy(model, test)});
        if (progress) progress(checkpoints.back());
    };
    auto wanted = [&](std::size_t iteration) {
        if (iteration == total) return true;
        if (!config.checkpoint_iterations.empty()) {
            return std::binary_search(config.checkpoint_iterations.begin(),
                                      config.checkpoint_iterations.end(), iteration);
        }
        return config.checkpoint_interval > 0 && iteration % config.checkpoint_interval == 0;
    };

    snapshot(0);
    std::mt19937_64 rng(config.seed);
    std::vector<std::size_t> order(train.size());
    std::vector<LayerGrad> grads = zero_grads(model);
    std::size_t iteration = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            for (std::size_t k = start; k < end; ++k) {
                accumulate_example(model, train.images[order[k]], train.labels[order[k]], grads);
            }
            apply_step(model, grads, config.learning_rate / static_cast<double>(end - start));
            ++iteration;
            if (wanted(iteration)) snapshot(iteration);
        }
    }
    return checkpoints;
}

}  // namespace hmeval
