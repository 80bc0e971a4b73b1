#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hmeval/model.hpp"

namespace hmeval {

/// Non-owning view of labelled images.
struct Examples {
    std::span<const Tensor> images;
    std::span<const std::size_t> labels;

    std::size_t size() const noexcept { return images.size(); }
};

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t epochs = 1;
    std::uint64_t seed = 1;
    /// Snapshot every N iterations (0 disables periodic snapshots).
    std::size_t checkpoint_interval = 0;
    /// Explicit snapshot iterations; strictly increasing, overrides the interval.
    std::vector<std::size_t> checkpoint_iterations;
};

struct Checkpoint {
    Model model;
    std::size_t iteration = 0;
    double test_accuracy = 0.0;
};

using TrainProgress = std::function<void(const Checkpoint&)>;

/// Plain minibatch SGD on softmax cross-entropy. The first checkpoint is
/// always the initial model (iteration 0) and the last one the final model.
std::vector<Checkpoint> train_sgd(Model model, const Examples& train, const Examples& test,
                                  const TrainConfig& config, const TrainProgress& progress = {});

double accuracy(const Model& model, const Examples& data);

}  // namespace hmeval
