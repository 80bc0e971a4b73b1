#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "hmeval/dataset.hpp"
#include "hmeval/model.hpp"
#include "hmeval/rng.hpp"

namespace hmeval::testkit {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

// One of a few conv/pool/ReLU/linear stacks on a C x 8 x 8 input with
// normal(0, 0.5) weights.
Model random_conv_net(Rng& rng, bool with_bias = true);

// Linear/ReLU stack on a rank-1 input.
Model random_mlp(Rng& rng, std::size_t inputs, bool with_bias = true);

// Forward pass written from the layer definitions with plain index
// arithmetic, sharing no code with the library.
std::vector<double> naive_logits(const Model& model, const Tensor& input);

// Central differences of logit[target] with respect to every input entry.
std::vector<double> finite_difference_gradient(const Model& model, const Tensor& input,
                                               std::size_t target, double step);

// True when every ReLU pre-activation is at least `margin` from 0 and every
// pooling window's maximum beats its runner-up by `margin`. Finite
// differences are only meaningful away from these kinks.
bool away_from_kinks(const Model& model, const ForwardTrace& trace, double margin);

// Redraws the input until it is away from kinks (up to `attempts` draws).
Tensor smooth_input(const Model& model, Rng& rng, double margin, int attempts = 200);

// ||a - b|| / max(||a||, ||b||, tiny), Euclidean norms.
double relative_error(std::span<const double> a, std::span<const double> b);

// Empty directory under the system temp dir, unique per name and process.
std::filesystem::path fresh_dir(std::string_view name);

// Big-endian IDX files; images are uint8 records of rows x cols.
void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      const std::vector<std::vector<std::uint8_t>>& records);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

std::filesystem::path mnist_dir();
Dataset mnist_test(std::size_t n);
Dataset mnist_train(std::size_t n);

}  // namespace hmeval::testkit
