#include "hmeval/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {

std::vector<Region> build_region_grid(std::size_t height, std::size_t width, std::size_t window) {
    if (window == 0) fail(ErrorKind::InvalidArgument, "region window must be >= 1");
    if (window > std::min(height, width)) {
        fail(ErrorKind::InvalidArgument, "region window " + std::to_string(window) +
                                             " exceeds image " + std::to_string(height) + "x" +
                                             std::to_string(width));
    }
    std::vector<Region> regions;
    for (std::size_t y = 0; y + window <= height; y += window)
        for (std::size_t x = 0; x + window <= width; x += window)
            regions.push_back({y, x, window, window});
    return regions;
}

RegionOrdering order_regions(const Heatmap& heatmap, std::span<const Region> regions) {
    std::vector<double> score(regions.size(), 0.0);
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const Region& reg = regions[r];
        if (reg.y + reg.height > heatmap.height || reg.x + reg.width > heatmap.width) {
            fail(ErrorKind::InvalidArgument, "region " + std::to_string(r) + " lies outside the heatmap");
        }
        double acc = 0.0;
        for (std::size_t y = reg.y; y < reg.y + reg.height; ++y)
            for (std::size_t x = reg.x; x < reg.x + reg.width; ++x) acc += heatmap.at(y, x);
        score[r] = acc;
    }
    std::vector<std::size_t> idx(regions.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    RegionOrdering out;
    for (std::size_t i : idx) {
        out.regions.push_back(regions[i]);
        out.scores.push_back(score[i]);
        out.grid_index.push_back(i);
    }
    return out;
}

std::string_view operator_name(Operator op) {
    switch (op) {
        case Operator::Uniform: return "uniform";
        case Operator::Dirichlet: return "dirichlet";
        case Operator::Constant: return "constant";
        case Operator::Blur: return "blur";
    }
    return "unknown";
}

Operator parse_operator(std::string_view name) {
    for (Operator op : {Operator::Uniform, Operator::Dirichlet, Operator::Constant, Operator::Blur})
        if (operator_name(op) == name) return op;
    fail(ErrorKind::InvalidArgument, "unknown perturbation operator '" + std::string(name) +
                                         "' (uniform, dirichlet, constant, blur)");
}

bool is_stochastic(Operator op) {
    return op == Operator::Uniform || op == Operator::Dirichlet;
}

std::string_view direction_name(Direction d) {
    return d == Direction::MoRF ? "morf" : "lerf";
}

namespace {

std::vector<double> gaussian_kernel(double sigma, std::size_t& radius) {
    radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double total = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += k[i];
    }
    for (double& v : k) v /= total;
    return k;
}

// One separable pass. Written as center + Σ w (neighbor - center) so that a
// locally constant signal is reproduced bit-exactly.
void blur_pass(const Tensor& src, Tensor& dst, const std::vector<double>& k, std::size_t radius,
               bool horizontal) {
    const std::size_t channels = src.dim(0), h = src.dim(1), w = src.dim(2);
    const auto r = static_cast<long>(radius);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const double center = src.at(c, y, x);
                double acc = 0.0;
                for (long d = -r; d <= r; ++d) {
                    double v;
                    if (horizontal) {
                        const long xx = std::clamp<long>(static_cast<long>(x) + d, 0, static_cast<long>(w) - 1);
                        v = src.at(c, y, static_cast<std::size_t>(xx));
                    } else {
                        const long yy = std::clamp<long>(static_cast<long>(y) + d, 0, static_cast<long>(h) - 1);
                        v = src.at(c, static_cast<std::size_t>(yy), x);
                    }
                    acc += k[static_cast<std::size_t>(d + r)] * (v - center);
                }
                dst.at(c, y, x) = center + acc;
            }
        }
    }
}

Tensor as_rank3(const Tensor& image) {
    if (image.rank() == 3) return image;
    const SpatialLayout s = spatial_layout(image.shape());
    return image.reshaped({s.channels, s.height, s.width});
}

}  // namespace

Tensor gaussian_blur(const Tensor& image, double sigma) {
    if (!(sigma > 0.0)) fail(ErrorKind::InvalidArgument, "blur sigma must be > 0");
    const Tensor src = as_rank3(image);
    std::size_t radius = 0;
    const auto k = gaussian_kernel(sigma, radius);
    Tensor tmp(src.shape()), out(src.shape());
    blur_pass(src, tmp, k, radius, true);
    blur_pass(tmp, out, k, radius, false);
    return out.reshaped(image.shape());
}

void perturb_region_inplace(Tensor& image, const Region& region, Operator op, Rng& rng,
                            const DatasetStats& stats, double blur_sigma) {
    const SpatialLayout s = spatial_layout(image.shape());
    if (region.y + region.height > s.height || region.x + region.width > s.width) {
        fail(ErrorKind::InvalidArgument, "region lies outside the image");
    }
    const std::size_t plane = s.height * s.width;
    auto index = [&](std::size_t c, std::size_t y, std::size_t x) { return c * plane + y * s.width + x; };

    switch (op) {
        case Operator::Uniform: {
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            for (std::size_t y = region.y; y < region.y + region.height; ++y)
                for (std::size_t x = region.x; x < region.x + region.width; ++x)
                    for (std::size_t c = 0; c < s.channels; ++c) image[index(c, y, x)] = unit(rng);
            break;
        }
        case Operator::Dirichlet: {
            if (!stats.dirichlet) fail(ErrorKind::InvalidArgument, "Dirichlet operator requires fitted Dirichlet statistics");
            if (stats.dirichlet->components() != s.channels + 1)
                fail(ErrorKind::InvalidArgument, "Dirichlet statistics do not match the channel count");
            for (std::size_t y = region.y; y < region.y + region.height; ++y) {
                for (std::size_t x = region.x; x < region.x + region.width; ++x) {
                    const auto rgb = sample_dirichlet(*stats.dirichlet, rng);
                    for (std::size_t c = 0; c < s.channels; ++c)
                        image[index(c, y, x)] = std::clamp(rgb[c], 0.0, 1.0);
                }
            }
            break;
        }
        case Operator::Constant: {
            if (stats.mean_image.size() == 0) fail(ErrorKind::InvalidArgument, "Constant operator requires the dataset mean image");
            if (stats.mean_image.size() != image.size())
                fail(ErrorKind::ShapeMismatch, "mean image shape does not match the image");
            for (std::size_t c = 0; c < s.channels; ++c)
                for (std::size_t y = region.y; y < region.y + region.height; ++y)
                    for (std::size_t x = region.x; x < region.x + region.width; ++x)
                        image[index(c, y, x)] = std::clamp(stats.mean_image[index(c, y, x)], 0.0, 1.0);
            break;
        }
        case Operator::Blur: {
            const Tensor blurred = gaussian_blur(image, blur_sigma);
            for (std::size_t c = 0; c < s.channels; ++c)
                for (std::size_t y = region.y; y < region.y + region.height; ++y)
                    for (std::size_t x = region.x; x < region.x + region.width; ++x)
                        image[index(c, y, x)] = std::clamp(blurred[index(c, y, x)], 0.0, 1.0);
            break;
        }
    }
}

Tensor perturb_region(const Tensor& image, const Region& region, Operator op, Rng& rng,
                      const DatasetStats& stats, double blur_sigma) {
    Tensor out = image;
    perturb_region_inplace(out, region, op, rng, stats, blur_sigma);
    return out;
}

PerturbationCurve perturbation_curve(const Model& model, const Tensor& image,
                                     const RegionOrdering& ordering,
                                     const PerturbationConfig& config, const DatasetStats& stats,
                                     Direction direction, std::size_t image_index) {
    if (config.steps > ordering.size()) {
        fail(ErrorKind::InvalidArgument, "perturbation steps " + std::to_string(config.steps) +
                                             " exceed the " + std::to_string(ordering.size()) +
                                             " available regions");
    }
    if (config.repeats == 0) fail(ErrorKind::InvalidArgument, "repeats must be >= 1");
    const Tensor base_logits = logits(model, image);
    PerturbationCurve curve;
    curve.direction = direction;
    curve.target = argmax_index(base_logits);
    curve.values.assign(config.steps + 1, 0.0);

    const std::size_t repeats = config.effective_repeats();
    const std::size_t n = ordering.size();
    for (std::size_t r = 0; r < repeats; ++r) {
        Rng rng(derive_seed({config.seed, image_index, r}));
        Tensor x = image;
        for (std::size_t k = 1; k <= config.steps; ++k) {
            const Region& region = direction == Direction::MoRF ? ordering.regions[k - 1]
                                                                : ordering.regions[n - k];
            perturb_region_inplace(x, region, config.op, rng, stats, config.blur_sigma);
            curve.values[k] += logits(model, x)[curve.target];
        }
    }
    curve.values[0] = base_logits[curve.target];
    for (std::size_t k = 1; k <= config.steps; ++k) curve.values[k] /= static_cast<double>(repeats);
    return curve;
}

PerturbationCurve morf_curve(const Model& model, const Tensor& image, const RegionOrdering& ordering,
                             const PerturbationConfig& config, const DatasetStats& stats,
                             std::size_t image_index) {
    return perturbation_curve(model, image, ordering, config, stats, Direction::MoRF, image_index);
}

PerturbationCurve lerf_curve(const Model& model, const Tensor& image, const RegionOrdering& ordering,
                             const PerturbationConfig& config, const DatasetStats& stats,
                             std::size_t image_index) {
    return perturbation_curve(model, image, ordering, config, stats, Direction::LeRF, image_index);
}

double curve_aopc(const PerturbationCurve& curve) {
    if (curve.values.empty()) fail(ErrorKind::InvalidArgument, "empty perturbation curve");
    double acc = 0.0;
    for (double v : curve.values) acc += curve.values[0] - v;
    return acc / static_cast<double>(curve.values.size());
}

double curve_abpc(const PerturbationCurve& lerf, const PerturbationCurve& morf) {
    if (lerf.values.size() != morf.values.size() || lerf.values.empty())
        fail(ErrorKind::InvalidArgument, "LeRF and MoRF curves differ in length");
    double acc = 0.0;
    for (std::size_t k = 0; k < lerf.values.size(); ++k) acc += lerf.values[k] - morf.values[k];
    return acc / static_cast<double>(lerf.values.size());
}

namespace {

void require_common_length(std::span<const PerturbationCurve> curves) {
    if (curves.empty()) fail(ErrorKind::InvalidArgument, "no perturbation curves");
    for (const auto& c : curves)
        if (c.values.size() != curves[0].values.size() || c.values.empty())
            fail(ErrorKind::InvalidArgument, "perturbation curves differ in length");
}

}  // namespace

double aopc(std::span<const PerturbationCurve> morf_curves) {
    require_common_length(morf_curves);
    double acc = 0.0;
    for (const auto& c : morf_curves) acc += curve_aopc(c);
    return acc / static_cast<double>(morf_curves.size());
}

double abpc(std::span<const PerturbationCurve> lerf_curves,
            std::span<const PerturbationCurve> morf_curves) {
    require_common_length(lerf_curves);
    require_common_length(morf_curves);
    if (lerf_curves.size() != morf_curves.size())
        fail(ErrorKind::InvalidArgument, "LeRF and MoRF curve sets have different sizes");
    double acc = 0.0;
    for (std::size_t i = 0; i < lerf_curves.size(); ++i) acc += curve_abpc(lerf_curves[i], morf_curves[i]);
    return acc / static_cast<double>(lerf_curves.size());
}

std::vector<double> aopc_by_step(std::span<const PerturbationCurve> morf_curves) {
    require_common_length(morf_curves);
    const std::size_t len = morf_curves[0].values.size();
    std::vector<double> out(len, 0.0);
    for (const auto& c : morf_curves) {
        double running = 0.0;
        for (std::size_t k = 0; k < len; ++k) {
            running += c.values[0] - c.values[k];
            out[k] += running / static_cast<double>(k + 1);
        }
    }
    for (double& v : out) v /= static_cast<double>(morf_curves.size());
    return out;
}

}  // namespace hmeval
