#include "hmeval/dirichlet.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {
namespace {

// Lower bound on any fitted concentration. Near-binary data (e.g. digit
// strokes on black) drives the moment estimate of the total towards zero.
constexpr double kMinConcentration = 1e-3;
constexpr int kMaxRejections = 10000;

}  // namespace

double DirichletParams::total() const {
    return std::accumulate(alpha.begin(), alpha.end(), 0.0);
}

std::vector<double> DirichletParams::mean() const {
    const double t = total();
    std::vector<double> m(alpha);
    for (double& v : m) v /= t;
    return m;
}

std::vector<double> embed_pixel(std::span<const double> channels) {
    const double c = static_cast<double>(channels.size());
    std::vector<double> u(channels.size() + 1);
    double rest = c;
    for (std::size_t k = 0; k < channels.size(); ++k) {
        u[k] = channels[k] / c;
        rest -= channels[k];
    }
    u.back() = std::max(rest, 0.0) / c;
    return u;
}

DirichletParams fit_dirichlet_simplex(std::span<const double> points, std::size_t components) {
    if (components < 2) fail(ErrorKind::InvalidArgument, "Dirichlet needs >= 2 components");
    if (points.empty() || points.size() % components != 0)
        fail(ErrorKind::InvalidArgument, "simplex point buffer is empty or ragged");
    const std::size_t n = points.size() / components;
    std::vector<double> mean(components, 0.0), var(components, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < components; ++k) mean[k] += points[i * components + k];
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < components; ++k) {
            const double d = points[i * components + k] - mean[k];
            var[k] += d * d;
        }
    }
    double spread = 0.0, total_var = 0.0;
    for (std::size_t k = 0; k < components; ++k) {
        var[k] /= static_cast<double>(n);
        spread += mean[k] * (1.0 - mean[k]);
        total_var += var[k];
    }
    if (!(total_var > 1e-15)) {
        fail(ErrorKind::Degenerate,
             "pixel data has no variance; a Dirichlet fit is undefined, use the Constant operator");
    }
    // Var(u_k) = m_k (1 - m_k) / (a0 + 1), pooled over components.
    const double a0 = std::max(spread / total_var - 1.0, kMinConcentration);
    DirichletParams p;
    p.alpha.resize(components);
    for (std::size_t k = 0; k < components; ++k) p.alpha[k] = std::max(a0 * mean[k], kMinConcentration);
    return p;
}

DirichletParams fit_dirichlet(const Dataset& dataset) {
    if (dataset.size() == 0) fail(ErrorKind::InvalidArgument, "cannot fit a Dirichlet to an empty dataset");
    const Shape& shape = dataset.image_shape();
    const std::size_t channels = shape.size() == 3 ? shape[0] : 1;
    const std::size_t plane = shape_size(shape) / channels;
    const std::size_t k = channels + 1;
    std::vector<double> points;
    points.reserve(dataset.size() * plane * k);
    std::vector<double> px(channels);
    for (const Tensor& img : dataset.images) {
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t c = 0; c < channels; ++c) px[c] = img[c * plane + p];
            const auto u = embed_pixel(px);
            points.insert(points.end(), u.begin(), u.end());
        }
    }
    return fit_dirichlet_simplex(points, k);
}

std::vector<double> sample_simplex(const DirichletParams& params, Rng& rng) {
    std::vector<double> g(params.components());
    for (;;) {
        double sum = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            std::gamma_distribution<double> gamma(params.alpha[k], 1.0);
            g[k] = gamma(rng);
            sum += g[k];
        }
        // Tiny concentrations can underflow every gamma draw to zero.
        if (sum > 0.0) {
            for (double& v : g) v /= sum;
            return g;
        }
    }
}

std::vector<double> sample_dirichlet(const DirichletParams& params, Rng& rng) {
    if (params.components() < 2) fail(ErrorKind::InvalidArgument, "Dirichlet needs >= 2 components");
    for (double a : params.alpha)
        if (!(a > 0.0)) fail(ErrorKind::InvalidArgument, "Dirichlet concentrations must be > 0");
    const std::size_t channels = params.components() - 1;
    const double scale = static_cast<double>(channels);
    std::vector<double> out(channels);
    for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
        const auto u = sample_simplex(params, rng);
        bool ok = true;
        for (std::size_t c = 0; c < channels; ++c) {
            out[c] = scale * u[c];
            if (out[c] > 1.0) ok = false;
        }
        if (ok) return out;
    }
    fail(ErrorKind::Sampling, "Dirichlet sampler rejected " + std::to_string(kMaxRejections) +
                                  " consecutive draws (rejection rate > 99.9%)");
}

DatasetStats compute_stats(const Dataset& dataset, bool fit_dirichlet_params) {
    DatasetStats stats;
    stats.mean_image = mean_image(dataset);
    if (fit_dirichlet_params) stats.dirichlet = fit_dirichlet(dataset);
    return stats;
}

}  // namespace hmeval
