#include "hmeval/attribution.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "hmeval/error.hpp"

namespace hmeval {

double Heatmap::sum() const {
    return std::accumulate(scores.begin(), scores.end(), 0.0);
}

SpatialLayout spatial_layout(const Shape& shape) {
    switch (shape.size()) {
        case 1: return {1, 1, shape[0]};
        case 2: return {1, shape[0], shape[1]};
        case 3: return {shape[0], shape[1], shape[2]};
        default: fail(ErrorKind::ShapeMismatch, "no spatial layout for " + shape_string(shape));
    }
}

Heatmap pool_channels(const Tensor& signal, NormOrder q) {
    const SpatialLayout s = spatial_layout(signal.shape());
    Heatmap h(s.height, s.width);
    const std::size_t plane = s.height * s.width;
    for (std::size_t p = 0; p < plane; ++p) {
        double acc = 0.0;
        for (std::size_t c = 0; c < s.channels; ++c) {
            const double v = std::abs(signal[c * plane + p]);
            acc = q == NormOrder::L2 ? acc + v * v : std::max(acc, v);
        }
        h.scores[p] = q == NormOrder::L2 ? std::sqrt(acc) : acc;
    }
    h.channel_signal = signal;
    return h;
}

Heatmap sensitivity_heatmap(const Tensor& gradient, NormOrder q) {
    Heatmap h = pool_channels(gradient, q);
    h.method = q == NormOrder::L2 ? "sensitivity-q2" : "sensitivity-qinf";
    return h;
}

Tensor deconv_signal(const Model& model, const ForwardTrace& trace, std::size_t target) {
    if (target >= model.class_count()) {
        fail(ErrorKind::InvalidArgument, "class " + std::to_string(target) + " out of range");
    }
    Tensor seed(trace.logits().shape());
    seed[target] = 1.0;
    return backward_signal(model, trace, std::move(seed), ReluBackward::Rectify);
}

Heatmap deconv_heatmap(const Tensor& signal, NormOrder q) {
    Heatmap h = pool_channels(signal, q);
    h.method = q == NormOrder::L2 ? "deconv-q2" : "deconv-qinf";
    return h;
}

LrpParams LrpParams::eps(double epsilon) {
    LrpParams p;
    p.rule = Rule::Epsilon;
    p.epsilon = epsilon;
    return p;
}

LrpParams LrpParams::alpha_beta(double alpha, double beta) {
    LrpParams p;
    p.rule = Rule::AlphaBeta;
    p.alpha = alpha;
    p.beta = beta;
    return p;
}

void LrpParams::validate() const {
    if (rule == Rule::Epsilon) {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon))
            fail(ErrorKind::InvalidArgument, "LRP epsilon must be finite and >= 0");
    } else if (!std::isfinite(alpha) || !std::isfinite(beta) ||
               std::abs(alpha + beta - 1.0) > 1e-12) {
        fail(ErrorKind::InvalidArgument, "LRP alpha + beta must equal 1");
    }
}

namespace {

// The filtering rules need the layer's linear map with transformed weights
// and no bias. These helpers make that uniform over Linear and Conv2D.
template <class L>
L with_weights(const L& layer, double (*transform)(double)) {
    L out = layer;
    for (double& w : out.weights) w = transform(w);
    return out;
}

double positive_part(double v) { return v > 0.0 ? v : 0.0; }
double negative_part(double v) { return v < 0.0 ? v : 0.0; }

Tensor apply(const Linear& l, const Tensor& a) { return linear_forward(l, a, false); }
Tensor apply(const Conv2D& c, const Tensor& a) { return conv_forward(c, a, false); }
Tensor transpose(const Linear& l, const Tensor& s, const Shape&) { return linear_backward_input(l, s); }
Tensor transpose(const Conv2D& c, const Tensor& s, const Shape& in) { return conv_backward_input(c, s, in); }

template <class L>
Tensor epsilon_rule(const L& layer, const Tensor& a, const Tensor& upper, double epsilon) {
    Tensor z = apply(layer, a);
    for (std::size_t j = 0; j < z.size(); ++j) {
        const double stabilizer = z[j] >= 0.0 ? epsilon : -epsilon;
        z[j] = upper[j] / (z[j] + stabilizer);
    }
    Tensor lower = transpose(layer, z, a.shape());
    for (std::size_t i = 0; i < lower.size(); ++i) lower[i] *= a[i];
    return lower;
}

template <class L>
Tensor alpha_beta_rule(const L& layer, const Tensor& a, const Tensor& upper, double alpha,
                       double beta) {
    const L wp = with_weights(layer, positive_part);
    const L wn = with_weights(layer, negative_part);
    Tensor ap = a, an = a;
    for (double& v : ap.values()) v = positive_part(v);
    for (double& v : an.values()) v = negative_part(v);

    // zp_j = Σ_i (a_i w_ij)^+,  zn_j = Σ_i (a_i w_ij)^-
    Tensor zp = apply(wp, ap), zn = apply(wn, ap);
    {
        const Tensor zp2 = apply(wn, an), zn2 = apply(wp, an);
        for (std::size_t j = 0; j < zp.size(); ++j) {
            zp[j] += zp2[j];
            zn[j] += zn2[j];
        }
    }
    Tensor sp(zp.shape()), sn(zn.shape());
    for (std::size_t j = 0; j < zp.size(); ++j) {
        const bool has_pos = zp[j] != 0.0, has_neg = zn[j] != 0.0;
        // An empty side hands its share to the other one so R_j is kept whole.
        const double cp = has_pos ? (has_neg ? alpha : 1.0) : 0.0;
        const double cn = has_neg ? (has_pos ? beta : 1.0) : 0.0;
        sp[j] = has_pos ? cp * upper[j] / zp[j] : 0.0;
        sn[j] = has_neg ? cn * upper[j] / zn[j] : 0.0;
    }
    const Tensor pos_from_ap = transpose(wp, sp, a.shape());
    const Tensor pos_from_an = transpose(wn, sp, a.shape());
    const Tensor neg_from_ap = transpose(wn, sn, a.shape());
    const Tensor neg_from_an = transpose(wp, sn, a.shape());
    Tensor lower(a.shape());
    for (std::size_t i = 0; i < lower.size(); ++i) {
        lower[i] = ap[i] * (pos_from_ap[i] + neg_from_ap[i]) +
                   an[i] * (pos_from_an[i] + neg_from_an[i]);
    }
    return lower;
}

template <class L>
Tensor filter_rule(const L& layer, const Tensor& a, const Tensor& upper, const LrpParams& params) {
    return params.rule == LrpParams::Rule::Epsilon
               ? epsilon_rule(layer, a, upper, params.epsilon)
               : alpha_beta_rule(layer, a, upper, params.alpha, params.beta);
}

std::string method_name(const LrpParams& p) {
    auto num = [](double v) {
        std::string s = std::to_string(v);
        s.erase(s.find_last_not_of('0') + 1);
        if (!s.empty() && s.back() == '.') s.pop_back();
        return s;
    };
    if (p.rule == LrpParams::Rule::Epsilon) return "lrp-eps-" + num(p.epsilon);
    return "lrp-ab-" + num(p.alpha);
}

}  // namespace

LrpRelevances lrp_relevances(const Model& model, const ForwardTrace& trace, std::size_t target,
                             const LrpParams& params) {
    params.validate();
    require_current(model, trace);
    if (target >= model.class_count()) {
        fail(ErrorKind::InvalidArgument, "class " + std::to_string(target) + " out of range");
    }
    const std::size_t n = model.layer_count();
    LrpRelevances out;
    out.relevance.resize(n + 1);
    out.layer_sums.resize(n + 1);
    Tensor seed(trace.logits().shape());
    seed[target] = trace.logits()[target];
    out.relevance[n] = std::move(seed);
    out.layer_sums[n] = out.relevance[n].sum();

    for (std::size_t l = n; l-- > 0;) {
        const Layer& layer = model.layers()[l];
        const Tensor& upper = out.relevance[l + 1];
        const Tensor& a = trace.inputs[l];
        Tensor lower;
        if (const auto* lin = std::get_if<Linear>(&layer)) {
            lower = filter_rule(*lin, a, upper, params);
        } else if (const auto* conv = std::get_if<Conv2D>(&layer)) {
            lower = filter_rule(*conv, a, upper, params);
        } else if (std::holds_alternative<MaxPool2D>(layer)) {
            lower = unpool(trace.argmax[l], upper, a.shape());
        } else if (std::holds_alternative<ReLU>(layer)) {
            lower = upper;
        } else {
            lower = upper.reshaped(a.shape());
        }
        if (!lower.all_finite()) {
            fail(ErrorKind::Numeric, "non-finite relevance below layer " + std::to_string(l) +
                                         " (" + std::string(layer_name(layer)) + ")");
        }
        out.layer_sums[l] = lower.sum();
        out.relevance[l] = std::move(lower);
    }
    return out;
}

Heatmap lrp(const Model& model, const ForwardTrace& trace, std::size_t target,
            const LrpParams& params) {
    LrpRelevances r = lrp_relevances(model, trace, target, params);
    const Tensor& input_relevance = r.relevance.front();
    const SpatialLayout s = spatial_layout(input_relevance.shape());
    Heatmap h(s.height, s.width, method_name(params));
    const std::size_t plane = s.height * s.width;
    for (std::size_t c = 0; c < s.channels; ++c)
        for (std::size_t p = 0; p < plane; ++p) h.scores[p] += input_relevance[c * plane + p];
    h.channel_signal = input_relevance;
    return h;
}

Heatmap random_heatmap(std::size_t height, std::size_t width, std::uint64_t seed) {
    Heatmap h(height, width, "random");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& v : h.scores) v = unit(rng);
    return h;
}

}  // namespace hmeval
