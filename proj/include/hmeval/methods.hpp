#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hmeval/attribution.hpp"

namespace hmeval {

/// Named heatmap methods as used on the command line and in reports.
enum class Method {
    SensitivityL2,
    SensitivityLInf,
    DeconvL2,
    DeconvLInf,
    LrpEps001,
    LrpEps100,
    LrpAlphaBeta2,
    Random,
};

std::string_view method_name(Method method);
std::vector<Method> all_methods();
/// Throws InvalidArgument listing the valid names.
Method parse_method(std::string_view name);
std::string valid_method_names();

/// Computes the heatmap of `method` for class `target` from a forward trace.
/// `seed` is only used by Method::Random.
Heatmap compute_heatmap(Method method, const Model& model, const ForwardTrace& trace,
                        std::size_t target, std::uint64_t seed);

}  // namespace hmeval
