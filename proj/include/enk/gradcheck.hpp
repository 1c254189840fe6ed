#pragma once

// Central finite-difference verification of the hand-derived backward
// passes. Two suites: the convolution operator on random miniature
// instances, and whole-graph loss gradients for each model family. Both are
// fully seeded, so a run either always passes or always fails for a given
// build. Relative error uses max(1, |analytic|, |numeric|) in the
// denominator so tiny gradients are compared absolutely.

#include <cstdint>
#include <string>
#include <vector>

#include "enk/conv.hpp"
#include "enk/graph.hpp"
#include "enk/loss.hpp"
#include "enk/models.hpp"
#include "enk/rng.hpp"

namespace enk {

struct GradCheckGroup {
    std::string name;
    double max_rel = 0.0;
    std::size_t checks = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    double step = 0.0;
    double tolerance = 0.0;

    bool passed() const {
        for (const GradCheckGroup& g : groups)
            if (g.max_rel > tolerance) return false;
        return true;
    }
    double worst() const {
        double m = 0.0;
        for (const GradCheckGroup& g : groups) m = m > g.max_rel ? m : g.max_rel;
        return m;
    }
};

inline double rel_err(double analytic, double numeric) {
    double denom = 1.0;
    if (std::abs(analytic) > denom) denom = std::abs(analytic);
    if (std::abs(numeric) > denom) denom = std::abs(numeric);
    return std::abs(analytic - numeric) / denom;
}

namespace detail {

inline GradCheckGroup& group_named(GradCheckReport& r, const std::string& name) {
    for (GradCheckGroup& g : r.groups)
        if (g.name == name) return g;
    r.groups.push_back({name, 0.0, 0});
    return r.groups.back();
}

inline void record(GradCheckReport& r, const std::string& name, double analytic, double numeric) {
    GradCheckGroup& g = group_named(r, name);
    const double e = rel_err(analytic, numeric);
    if (e > g.max_rel) g.max_rel = e;
    ++g.checks;
}

}  // namespace detail

// Random loss weights make the scalar objective sensitive to every output
// element; the analytic gradient then factors through d_out = weights.
inline GradCheckReport gradcheck_conv(std::size_t instances = 20, std::uint64_t seed = 1,
                                      double step = 1e-5, double tolerance = 1e-5) {
    GradCheckReport report;
    report.step = step;
    report.tolerance = tolerance;

    for (std::size_t inst = 0; inst < instances; ++inst) {
        Rng rng(mix_seed(seed, 0x9cad0000u + inst));
        const std::size_t c = 1 + rng.index(3), h = 2 + rng.index(3), w = 4 + rng.index(6);
        const std::size_t f = 1 + rng.index(3), kh = 1 + rng.index(h), kw = 1 + rng.index(w);

        Tensor x({c, h, w});
        for (double& v : x.values()) v = rng.normal(0.0, 1.0);
        EnkConvParams p;
        p.kernel = Tensor({f, c, kh, kw});
        for (double& v : p.kernel.values()) v = rng.normal(0.0, 1.0);
        p.bias = Tensor({f});
        for (double& v : p.bias.values()) v = rng.normal(0.0, 1.0);
        p.b = rng.uniform(-0.5, 0.5);

        Tensor weights({f, h - kh + 1, w - kw + 1});
        for (double& v : weights.values()) v = rng.normal(0.0, 1.0);

        auto objective = [&](const Tensor& xx, const EnkConvParams& pp) {
            const Tensor y = enk_forward_naive(xx, pp);
            double acc = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) acc += weights[i] * y[i];
            return acc;
        };

        const ConvGrads grads = enk_backward(x, p, weights);

        auto central = [&](double& slot) {
            const double keep = slot;
            slot = keep + step;
            const double hi = objective(x, p);
            slot = keep - step;
            const double lo = objective(x, p);
            slot = keep;
            return (hi - lo) / (2.0 * step);
        };

        for (std::size_t i = 0; i < x.size(); ++i)
            detail::record(report, "input", grads.d_input[i], central(x.values()[i]));
        for (std::size_t i = 0; i < p.kernel.size(); ++i)
            detail::record(report, "kernel", grads.d_kernel[i], central(p.kernel.values()[i]));
        for (std::size_t i = 0; i < p.bias.size(); ++i)
            detail::record(report, "bias", grads.d_bias[i], central(p.bias.values()[i]));
        detail::record(report, "b", grads.d_b, central(p.b));
    }
    return report;
}

namespace detail {

// Names aligned one to one with the views trainable_params returns.
inline std::vector<std::string> param_group_names(const ModelGraph& g) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        const std::string tag = std::string(layer_kind_name(g.layers[i])) + std::to_string(i);
        if (std::holds_alternative<ConvLayer>(g.layers[i])) {
            names.push_back(tag + ".kernel");
            names.push_back(tag + ".bias");
        } else if (const auto* e = std::get_if<EnkConvLayer>(&g.layers[i])) {
            if (e->weights_trainable) {
                names.push_back(tag + ".kernel");
                names.push_back(tag + ".bias");
            }
            names.push_back(tag + ".b");
        } else if (std::holds_alternative<DenseLayer>(g.layers[i])) {
            names.push_back(tag + ".weight");
            names.push_back(tag + ".bias");
        }
    }
    return names;
}

inline void gradcheck_one_graph(GradCheckReport& report, ModelGraph& g, const std::string& prefix,
                                std::uint64_t seed, double step) {
    Rng rng(mix_seed(seed, 0x96ca0000u));
    Tensor x{g.input_shape};
    for (double& v : x.values()) v = rng.normal(0.0, 1.0);
    const std::size_t classes = graph_output_shape(g)[0];
    const std::uint16_t label = static_cast<std::uint16_t>(rng.index(classes));

    auto objective = [&](const Tensor& xx) {
        Tape tape;
        const Tensor scores = graph_forward(g, xx, tape, false, nullptr);
        return cross_entropy_loss(scores, label).loss;
    };

    Tape tape;
    const Tensor scores = graph_forward(g, x, tape, false, nullptr);
    const LossResult lr = cross_entropy_loss(scores, label);
    GraphGrads grads = graph_backward(g, tape, lr.d_scores);

    const std::vector<std::span<double>> params = trainable_params(g);
    const std::vector<std::span<const double>> views = trainable_grads(g, grads);
    const std::vector<std::string> names = param_group_names(g);
    if (names.size() != params.size()) throw GraphError("gradcheck: group naming out of sync");

    for (std::size_t v = 0; v < params.size(); ++v) {
        for (std::size_t i = 0; i < params[v].size(); ++i) {
            double& slot = params[v][i];
            const double keep = slot;
            slot = keep + step;
            const double hi = objective(x);
            slot = keep - step;
            const double lo = objective(x);
            slot = keep;
            record(report, prefix + "/" + names[v], views[v][i], (hi - lo) / (2.0 * step));
        }
    }

    for (std::size_t i = 0; i < x.size(); ++i) {
        double& slot = x.values()[i];
        const double keep = slot;
        slot = keep + step;
        const double hi = objective(x);
        slot = keep - step;
        const double lo = objective(x);
        slot = keep;
        record(report, prefix + "/input", grads.d_input[i], (hi - lo) / (2.0 * step));
    }
}

}  // namespace detail

// Whole-graph check: every family at miniature widths in its enk variant
// (which exercises the frozen slot's b), plus one stack with a fully
// trainable time-encoding convolution.
inline GradCheckReport gradcheck_graphs(std::uint64_t seed = 1, double step = 1e-5,
                                        double tolerance = 1e-4) {
    GradCheckReport report;
    report.step = step;
    report.tolerance = tolerance;

    for (Family f : all_families()) {
        ModelSpec spec;
        spec.family = f;
        spec.variant = Variant::enk;
        spec.channels = 8;
        spec.samples = 32;
        spec.classes = 2;
        spec.init_seed = mix_seed(seed, 0xfa30u);
        spec.widths = miniature_widths(f);
        ModelGraph g = build_model(spec);
        detail::gradcheck_one_graph(report, g, family_name(f), seed, step);
    }

    {
        Rng rng(mix_seed(seed, 0x7e57u));
        EnkConvLayer enk;
        enk.params.kernel = tensor_new({2, 1, 2, 3});
        for (double& v : enk.params.kernel.values()) v = rng.normal(0.0, 1.0);
        enk.params.bias = tensor_new({2});
        for (double& v : enk.params.bias.values()) v = rng.normal(0.0, 1.0);
        enk.params.b = 0.25;
        std::vector<Layer> layers;
        layers.push_back(enk);
        layers.push_back(EluLayer{});
        layers.push_back(FlattenLayer{});
        DenseLayer dense;
        dense.weight = tensor_new({2, 2 * 4 * 8});
        for (double& v : dense.weight.values()) v = rng.normal(0.0, 0.2);
        dense.bias = tensor_new({2});
        layers.push_back(dense);
        ModelGraph g = make_graph({1, 5, 10}, std::move(layers));
        detail::gradcheck_one_graph(report, g, "trainable-enk", seed, step);
    }

    return report;
}

}  // namespace enk
