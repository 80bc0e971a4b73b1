#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hmeval/model.hpp"
#include "hmeval/tensor.hpp"

namespace hmeval {

/// Per-pixel scores over the spatial extent of the explained input.
struct Heatmap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> scores;             // row-major, height * width
    std::optional<Tensor> channel_signal;   // per-channel values before pooling
    std::string method;

    Heatmap() = default;
    Heatmap(std::size_t h, std::size_t w, std::string method_name = {})
        : height(h), width(w), scores(h * w, 0.0), method(std::move(method_name)) {}

    double& at(std::size_t y, std::size_t x) { return scores[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return scores[y * width + x]; }
    double sum() const;
};

/// Channels, height, width of an input shape. Rank-1 inputs are one row.
struct SpatialLayout {
    std::size_t channels, height, width;
};
SpatialLayout spatial_layout(const Shape& shape);

enum class NormOrder { L2, LInf };

/// ℓq norm across channels at each pixel.
Heatmap pool_channels(const Tensor& signal, NormOrder q);

/// h_p = ‖(∂f/∂x_{p,c})_c‖_q.
Heatmap sensitivity_heatmap(const Tensor& gradient, NormOrder q);

/// Deconvolution backward signal: unit seed at `target`, argmax unpooling,
/// transposed filters, negative parts clipped at every ReLU.
Tensor deconv_signal(const Model& model, const ForwardTrace& trace, std::size_t target);
Heatmap deconv_heatmap(const Tensor& signal, NormOrder q);

struct LrpParams {
    enum class Rule { Epsilon, AlphaBeta };

    Rule rule = Rule::AlphaBeta;
    double epsilon = 0.0;
    double alpha = 2.0;
    double beta = -1.0;

    static LrpParams eps(double epsilon);
    static LrpParams alpha_beta(double alpha, double beta);

    void validate() const;
};

/// Relevances at every layer boundary: relevance[l] has the shape entering
/// layer l; relevance.back() is the output seed.
struct LrpRelevances {
    std::vector<Tensor> relevance;
    std::vector<double> layer_sums;
};

LrpRelevances lrp_relevances(const Model& model, const ForwardTrace& trace, std::size_t target,
                             const LrpParams& params);

/// LRP heatmap: input relevance summed over channels (signed).
Heatmap lrp(const Model& model, const ForwardTrace& trace, std::size_t target,
            const LrpParams& params);

/// i.i.d. U[0,1) scores.
Heatmap random_heatmap(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace hmeval
