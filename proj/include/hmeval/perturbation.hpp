#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "hmeval/attribution.hpp"
#include "hmeval/dirichlet.hpp"
#include "hmeval/model.hpp"
#include "hmeval/rng.hpp"

namespace hmeval {

struct Region {
    std::size_t y = 0;
    std::size_t x = 0;
    std::size_t height = 9;
    std::size_t width = 9;

    friend bool operator==(const Region&, const Region&) = default;
};

/// Non-overlapping full windows anchored at the top-left corner, in
/// row-major order. Strips narrower than the window are left out.
std::vector<Region> build_region_grid(std::size_t height, std::size_t width, std::size_t window = 9);

struct RegionOrdering {
    std::vector<Region> regions;   // most relevant first
    std::vector<double> scores;    // non-increasing
    std::vector<std::size_t> grid_index;

    std::size_t size() const noexcept { return regions.size(); }
};

/// Region score = sum of h_p inside the region; descending, ties by grid index.
RegionOrdering order_regions(const Heatmap& heatmap, std::span<const Region> regions);

enum class Operator { Uniform, Dirichlet, Constant, Blur };

std::string_view operator_name(Operator op);
Operator parse_operator(std::string_view name);
bool is_stochastic(Operator op);

struct PerturbationConfig {
    Operator op = Operator::Uniform;
    std::size_t steps = 100;
    std::size_t repeats = 10;
    std::uint64_t seed = 0;
    std::size_t window = 9;
    double blur_sigma = 3.0;

    /// Trajectories actually run: 1 for deterministic operators.
    std::size_t effective_repeats() const { return is_stochastic(op) ? repeats : 1; }
};

/// Whole-image Gaussian blur, kernel radius ceil(3 sigma), clamped edges.
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Replaces the pixels of `region` in place; values are clamped to [0, 1].
void perturb_region_inplace(Tensor& image, const Region& region, Operator op, Rng& rng,
                            const DatasetStats& stats, double blur_sigma = 3.0);

Tensor perturb_region(const Tensor& image, const Region& region, Operator op, Rng& rng,
                      const DatasetStats& stats, double blur_sigma = 3.0);

enum class Direction { MoRF, LeRF };
std::string_view direction_name(Direction d);

/// f(x^(k)) for k = 0..L, averaged pointwise over repeats.
struct PerturbationCurve {
    std::vector<double> values;
    Direction direction = Direction::MoRF;
    std::size_t target = 0;

    std::size_t steps() const noexcept { return values.empty() ? 0 : values.size() - 1; }
};

/// Runs the trajectory against the logit of the class predicted on the
/// unperturbed image. Repeat r of image i draws from derive_seed(seed, i, r).
PerturbationCurve perturbation_curve(const Model& model, const Tensor& image,
                                     const RegionOrdering& ordering,
                                     const PerturbationConfig& config, const DatasetStats& stats,
                                     Direction direction, std::size_t image_index = 0);

PerturbationCurve morf_curve(const Model& model, const Tensor& image, const RegionOrdering& ordering,
                             const PerturbationConfig& config, const DatasetStats& stats,
                             std::size_t image_index = 0);

/// Same trajectory with the ordering reversed (least relevant first).
PerturbationCurve lerf_curve(const Model& model, const Tensor& image, const RegionOrdering& ordering,
                             const PerturbationConfig& config, const DatasetStats& stats,
                             std::size_t image_index = 0);

/// (1/(L+1)) Σ_k (f(x^(0)) - f(x^(k))) for one curve.
double curve_aopc(const PerturbationCurve& curve);
/// (1/(L+1)) Σ_k (f_LeRF(k) - f_MoRF(k)) for one image.
double curve_abpc(const PerturbationCurve& lerf, const PerturbationCurve& morf);

/// Dataset averages; reject empty input and mismatched step counts.
double aopc(std::span<const PerturbationCurve> morf_curves);
double abpc(std::span<const PerturbationCurve> lerf_curves,
            std::span<const PerturbationCurve> morf_curves);

/// AOPC evaluated for every prefix length L' = 0..L of the curves.
std::vector<double> aopc_by_step(std::span<const PerturbationCurve> morf_curves);

}  // namespace hmeval
