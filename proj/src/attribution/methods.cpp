#include "hmeval/methods.hpp"

#include <array>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {
namespace {

struct Entry {
    Method method;
    std::string_view name;
};

constexpr std::array<Entry, 8> kMethods = {{
    {Method::SensitivityL2, "sensitivity-q2"},
    {Method::SensitivityLInf, "sensitivity-qinf"},
    {Method::DeconvL2, "deconv-q2"},
    {Method::DeconvLInf, "deconv-qinf"},
    {Method::LrpEps001, "lrp-eps-0.01"},
    {Method::LrpEps100, "lrp-eps-100"},
    {Method::LrpAlphaBeta2, "lrp-ab-2"},
    {Method::Random, "random"},
}};

}  // namespace

std::string_view method_name(Method method) {
    for (const auto& e : kMethods)
        if (e.method == method) return e.name;
    return "unknown";
}

std::vector<Method> all_methods() {
    std::vector<Method> out;
    for (const auto& e : kMethods) out.push_back(e.method);
    return out;
}

std::string valid_method_names() {
    std::string out;
    for (const auto& e : kMethods) {
        if (!out.empty()) out += ", ";
        out += e.name;
    }
    return out;
}

Method parse_method(std::string_view name) {
    for (const auto& e : kMethods)
        if (e.name == name) return e.method;
    fail(ErrorKind::InvalidArgument,
         "unknown method '" + std::string(name) + "'; valid methods: " + valid_method_names());
}

Heatmap compute_heatmap(Method method, const Model& model, const ForwardTrace& trace,
                        std::size_t target, std::uint64_t seed) {
    Heatmap h;
    switch (method) {
        case Method::SensitivityL2:
            h = sensitivity_heatmap(gradient_input(model, trace, target), NormOrder::L2);
            break;
        case Method::SensitivityLInf:
            h = sensitivity_heatmap(gradient_input(model, trace, target), NormOrder::LInf);
            break;
        case Method::DeconvL2:
            h = deconv_heatmap(deconv_signal(model, trace, target), NormOrder::L2);
            break;
        case Method::DeconvLInf:
            h = deconv_heatmap(deconv_signal(model, trace, target), NormOrder::LInf);
            break;
        case Method::LrpEps001: h = lrp(model, trace, target, LrpParams::eps(0.01)); break;
        case Method::LrpEps100: h = lrp(model, trace, target, LrpParams::eps(100.0)); break;
        case Method::LrpAlphaBeta2:
            h = lrp(model, trace, target, LrpParams::alpha_beta(2.0, -1.0));
            break;
        case Method::Random: {
            const SpatialLayout s = spatial_layout(model.input_shape());
            h = random_heatmap(s.height, s.width, seed);
            break;
        }
    }
    h.method = std::string(method_name(method));
    return h;
}

}  // namespace hmeval
