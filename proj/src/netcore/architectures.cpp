#include "hmeval/architectures.hpp"

#include "hmeval/error.hpp"

namespace hmeval {

Model make_small_cnn(const Shape& input_shape, std::size_t classes, std::uint64_t seed) {
    if (input_shape.size() != 3) {
        fail(ErrorKind::InvalidArgument, "small CNN needs a channels x height x width input");
    }
    auto side = [](std::size_t s) { return ((s - 4) / 2 - 4) / 2; };
    if (input_shape[1] < 16 || input_shape[2] < 16 || (input_shape[1] - 4) % 2 || (input_shape[2] - 4) % 2 ||
        ((input_shape[1] - 4) / 2 - 4) % 2 || ((input_shape[2] - 4) / 2 - 4) % 2) {
        fail(ErrorKind::InvalidArgument, "input " + shape_string(input_shape) +
                                             " does not tile the small CNN pooling layers");
    }
    const std::size_t flat = 16 * side(input_shape[1]) * side(input_shape[2]);
    Model model(input_shape, {Conv2D(input_shape[0], 8, 5), ReLU{}, MaxPool2D{2, 2},
                              Conv2D(8, 16, 5), ReLU{}, MaxPool2D{2, 2}, Flatten{},
                              Linear(flat, 64), ReLU{}, Linear(64, classes)});
    init_parameters(model, seed);
    return model;
}

}  // namespace hmeval
