#pragma once

// Builders for the three toy CNN classifier families. Each family comes in
// three variants that differ only in the slot right after the first
// convolution:
//
//   org:   nothing in the slot
//   enk:   a time-encoding convolution with a frozen passthrough kernel, so
//          the only trainable addition is the scalar b (one parameter)
//   gauss: an additive-noise layer, no parameters at all
//
// Every family ends its feature stack with an average pool spanning the full
// remaining extent. That collapses the feature map to one value per filter
// before the classifier head, which keeps the head's input size independent
// of the temporal width and therefore identical across variants even though
// the enk slot shrinks the width by its kernel extent minus one.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "enk/data.hpp"
#include "enk/graph.hpp"
#include "enk/rng.hpp"

namespace enk {

enum class Family { compact_toy, shallow_toy, deep_toy };
enum class Variant { org, enk, gauss };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::compact_toy: return "compact-toy";
        case Family::shallow_toy: return "shallow-toy";
        case Family::deep_toy: return "deep-toy";
    }
    return "?";
}

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::org: return "org";
        case Variant::enk: return "enk";
        case Variant::gauss: return "gauss";
    }
    return "?";
}

inline Family family_from_name(const std::string& s) {
    if (s == "compact-toy") return Family::compact_toy;
    if (s == "shallow-toy") return Family::shallow_toy;
    if (s == "deep-toy") return Family::deep_toy;
    throw ParamError("unknown family '" + s + "' (compact-toy, shallow-toy, deep-toy)");
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "org") return Variant::org;
    if (s == "enk") return Variant::enk;
    if (s == "gauss") return Variant::gauss;
    throw ParamError("unknown variant '" + s + "' (org, enk, gauss)");
}

inline const std::vector<Family>& all_families() {
    static const std::vector<Family> v = {Family::compact_toy, Family::shallow_toy, Family::deep_toy};
    return v;
}

inline const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v = {Variant::org, Variant::enk, Variant::gauss};
    return v;
}

// Per-family structural knobs. filters and kernel_w have one entry per conv
// block; pool_w has one entry per inner pool stage. The final full-extent
// average pool is implicit and not listed here.
struct FamilyWidths {
    std::vector<std::size_t> filters;
    std::vector<std::size_t> kernel_w;
    std::vector<std::size_t> pool_w;
    std::size_t enk_kernel_w = 16;
};

inline FamilyWidths default_widths(Family f) {
    switch (f) {
        case Family::compact_toy: return {{4, 8}, {16, 8}, {4}, 16};
        case Family::shallow_toy: return {{6}, {25}, {}, 16};
        case Family::deep_toy: return {{4, 6, 8, 10}, {8, 1, 8, 8}, {2, 2, 2}, 16};
    }
    return {};
}

// Small enough for finite-difference sweeps on a [1, 8, 32] input.
inline FamilyWidths miniature_widths(Family f) {
    switch (f) {
        case Family::compact_toy: return {{2, 3}, {4, 2}, {2}, 4};
        case Family::shallow_toy: return {{2}, {6}, {}, 4};
        case Family::deep_toy: return {{2, 3, 4, 5}, {4, 1, 2, 2}, {2, 2, 2}, 4};
    }
    return {};
}

struct ModelSpec {
    Family family = Family::compact_toy;
    Variant variant = Variant::org;
    std::size_t channels = 0;
    std::size_t samples = 0;
    std::size_t classes = 2;
    std::uint64_t init_seed = 1;
    double noise_sigma = 0.1;  // gauss variant only
    FamilyWidths widths;       // empty filters means default_widths(family)
};

inline ModelSpec model_spec_for(Family f, Variant v, const DataPreset& p, std::uint64_t init_seed) {
    ModelSpec s;
    s.family = f;
    s.variant = v;
    s.channels = p.synth.channels;
    s.samples = p.synth.samples;
    s.classes = p.synth.class_count;
    s.init_seed = init_seed;
    s.widths = default_widths(f);
    return s;
}

namespace detail {

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

// One rng stream per parameterized layer, keyed by its ordinal among the
// layers the org variant also has. The enk slot kernel is deterministic and
// consumes no stream, so all variants of a spec share identical weights in
// their common layers.
inline ConvLayer init_conv(std::size_t filters, std::size_t in_ch, std::size_t kh, std::size_t kw,
                           std::uint64_t init_seed, std::size_t ordinal) {
    Rng rng(mix_seed(init_seed, 0xc0de0000u + ordinal));
    const double limit = glorot_limit(in_ch * kh * kw, filters * kh * kw);
    ConvLayer l;
    l.params.kernel = Tensor({filters, in_ch, kh, kw});
    for (double& v : l.params.kernel.values()) v = (rng.uniform() * 2.0 - 1.0) * limit;
    l.params.bias = Tensor({filters});
    l.params.b = 0.0;
    return l;
}

inline DenseLayer init_dense(std::size_t out, std::size_t in, std::uint64_t init_seed, std::size_t ordinal) {
    Rng rng(mix_seed(init_seed, 0xc0de0000u + ordinal));
    const double limit = glorot_limit(in, out);
    DenseLayer l;
    l.weight = Tensor({out, in});
    for (double& v : l.weight.values()) v = (rng.uniform() * 2.0 - 1.0) * limit;
    l.bias = Tensor({out});
    return l;
}

// Frozen slot layer: the kernel routes each input channel straight to the
// matching output filter through its first tap, so at b = 0 the slot is the
// identity on features up to the width it trims. Everything but b stays
// fixed, which is what keeps the variant's parameter delta at exactly one.
inline EnkConvLayer make_enk_slot(std::size_t channels, std::size_t kw) {
    EnkConvLayer l;
    l.params.kernel = Tensor({channels, channels, 1, kw});
    for (std::size_t f = 0; f < channels; ++f) l.params.kernel(f, f, 0, 0) = 1.0;
    l.params.bias = Tensor({channels});
    l.params.b = 0.0;
    l.weights_trainable = false;
    return l;
}

struct ShapeCursor {
    std::size_t c, h, w;

    void after_conv(std::size_t filters, std::size_t kh, std::size_t kw) {
        c = filters;
        h = h - kh + 1;
        w = w - kw + 1;
    }
    void after_pool(std::size_t ph, std::size_t pw) {
        h /= ph;
        w /= pw;
    }
};

}  // namespace detail

inline ModelGraph build_model(const ModelSpec& spec) {
    if (spec.channels == 0 || spec.samples == 0) throw ParamError("model input shape must be positive");
    if (spec.classes < 2) throw ParamError("model needs at least two classes");
    FamilyWidths w = spec.widths.filters.empty() ? default_widths(spec.family) : spec.widths;
    if (w.filters.size() != w.kernel_w.size())
        throw ParamError("widths: filters and kernel_w must have matching length");

    std::vector<Layer> layers;
    detail::ShapeCursor cur{1, spec.channels, spec.samples};
    std::size_t ordinal = 0;

    auto add_conv = [&](std::size_t block, std::size_t kh) {
        layers.push_back(detail::init_conv(w.filters[block], cur.c, kh, w.kernel_w[block], spec.init_seed,
                                           ordinal++));
        cur.after_conv(w.filters[block], kh, w.kernel_w[block]);
    };
    auto add_slot = [&] {
        if (spec.variant == Variant::enk) {
            layers.push_back(detail::make_enk_slot(cur.c, w.enk_kernel_w));
            cur.after_conv(cur.c, 1, w.enk_kernel_w);
        } else if (spec.variant == Variant::gauss) {
            layers.push_back(GaussianNoiseLayer{spec.noise_sigma});
        }
    };
    auto add_head = [&] {
        layers.push_back(AvgPoolLayer{cur.h, cur.w});
        cur.after_pool(cur.h, cur.w);
        layers.push_back(FlattenLayer{});
        layers.push_back(detail::init_dense(spec.classes, cur.c, spec.init_seed, ordinal++));
    };

    switch (spec.family) {
        case Family::compact_toy:
            // narrow temporal block, then a block spanning the full sensor
            // axis
            add_conv(0, 1);
            add_slot();
            layers.push_back(EluLayer{});
            layers.push_back(AvgPoolLayer{1, w.pool_w.at(0)});
            cur.after_pool(1, w.pool_w.at(0));
            add_conv(1, cur.h);
            layers.push_back(EluLayer{});
            add_head();
            break;
        case Family::shallow_toy:
            // one wide temporal block
            add_conv(0, 1);
            add_slot();
            layers.push_back(EluLayer{});
            add_head();
            break;
        case Family::deep_toy:
            // temporal, sensor-collapsing, then two more temporal blocks,
            // each stage followed by a max pool
            add_conv(0, 1);
            add_slot();
            layers.push_back(EluLayer{});
            layers.push_back(MaxPoolLayer{1, w.pool_w.at(0)});
            cur.after_pool(1, w.pool_w.at(0));
            add_conv(1, cur.h);
            layers.push_back(EluLayer{});
            layers.push_back(MaxPoolLayer{1, w.pool_w.at(1)});
            cur.after_pool(1, w.pool_w.at(1));
            add_conv(2, 1);
            layers.push_back(EluLayer{});
            layers.push_back(MaxPoolLayer{1, w.pool_w.at(2)});
            cur.after_pool(1, w.pool_w.at(2));
            add_conv(3, 1);
            layers.push_back(EluLayer{});
            add_head();
            break;
    }

    return make_graph({1, spec.channels, spec.samples}, std::move(layers));
}

}  // namespace enk
