#pragma once

#include <cstddef>
#include <cstdint>

#include "hmeval/model.hpp"

namespace hmeval {

/// conv5(8) relu pool2 conv5(16) relu pool2 flatten linear(64) relu linear(classes).
/// Fits 1x28x28 and 3x32x32 inputs. Parameters are He-initialized from `seed`.
Model make_small_cnn(const Shape& input_shape, std::size_t classes, std::uint64_t seed);

}  // namespace hmeval
