#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hmeval/dataset.hpp"
#include "hmeval/rng.hpp"

namespace hmeval {

/// Concentration parameters of a K-component Dirichlet. For C-channel
/// pixels K = C + 1: a pixel (c_1..c_C) in [0,1]^C is embedded on the
/// simplex as (c_1, ..., c_C, C - Σc) / C.
struct DirichletParams {
    std::vector<double> alpha;

    std::size_t components() const noexcept { return alpha.size(); }
    double total() const;
    std::vector<double> mean() const;
};

std::vector<double> embed_pixel(std::span<const double> channels);

/// Moment-matching fit from simplex points stored row-major (`components`
/// values per point). Throws Degenerate when the data has no variance.
DirichletParams fit_dirichlet_simplex(std::span<const double> points, std::size_t components);

/// Single global fit over every pixel of every image.
DirichletParams fit_dirichlet(const Dataset& dataset);

/// Draws u ~ Dir(alpha) and returns (C u_1, ..., C u_C), rejecting draws
/// with any channel above 1. Throws Sampling after 10000 straight rejections.
std::vector<double> sample_dirichlet(const DirichletParams& params, Rng& rng);

/// Raw Dirichlet draw on the simplex.
std::vector<double> sample_simplex(const DirichletParams& params, Rng& rng);

struct DatasetStats {
    Tensor mean_image;                        // empty when not computed
    std::optional<DirichletParams> dirichlet;
};

DatasetStats compute_stats(const Dataset& dataset, bool fit_dirichlet_params);

}  // namespace hmeval
