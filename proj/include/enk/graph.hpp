#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "enk/binio.hpp"
#include "enk/error.hpp"
#include "enk/layers.hpp"
#include "enk/rng.hpp"
#include "enk/tensor.hpp"

namespace enk {

enum class Mode { train, eval };

// Per-forward activation record: acts[0] is the input, acts[i+1] the output
// of layer i. Backward replays it in exact reverse order.
struct Tape {
    std::vector<Tensor> acts;
};

// Ordered layer list plus the declared input shape. The embedded cache is
// written by the caching forward in train mode, which is why a graph being
// trained has a single owner; eval passes never touch it and are safe to run
// concurrently on a shared graph.
struct ModelGraph {
    std::vector<std::size_t> input_shape;
    std::vector<Layer> layers;
    Mode mode = Mode::train;
    Tape cache;
};

// Walks the shape chain once and rejects incompatibilities up front, naming
// the offending layer.
inline ModelGraph make_graph(std::vector<std::size_t> input_shape, std::vector<Layer> layers) {
    if (layers.empty()) throw GraphError("graph has no layers");
    if (input_shape.empty()) throw GraphError("graph input shape is empty");
    std::vector<std::size_t> shape = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        try {
            shape = layer_output_shape(layers[i], shape);
        } catch (const Error& e) {
            throw GraphError("layer " + std::to_string(i) + " (" + layer_kind_name(layers[i]) +
                             "): " + e.what());
        }
    }
    return ModelGraph{std::move(input_shape), std::move(layers), Mode::train, {}};
}

inline std::vector<std::size_t> graph_output_shape(const ModelGraph& g) {
    std::vector<std::size_t> shape = g.input_shape;
    for (const Layer& l : g.layers) shape = layer_output_shape(l, shape);
    return shape;
}

namespace detail {

inline Tensor run_forward(const ModelGraph& g, const Tensor& x, Tape* tape, bool training, Rng* rng) {
    if (g.layers.empty()) throw GraphError("graph has no layers");
    if (x.shape() != g.input_shape) throw GraphError("layer 0: input shape does not match graph input");
    Tensor cur = x;
    if (tape) {
        tape->acts.clear();
        tape->acts.reserve(g.layers.size() + 1);
        tape->acts.push_back(cur);
    }
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        try {
            cur = layer_forward(g.layers[i], cur, training, rng);
        } catch (const GraphError&) {
            throw;
        } catch (const Error& e) {
            throw GraphError("layer " + std::to_string(i) + " (" + layer_kind_name(g.layers[i]) +
                             "): " + e.what());
        }
        if (tape) tape->acts.push_back(cur);
    }
    return cur;
}

}  // namespace detail

// Caching forward: in train mode activations land in g.cache for a later
// graph_backward(g.cache, ...); in eval mode nothing is cached and the noise
// layer is inert, so repeated calls are bit-identical.
inline Tensor graph_forward(ModelGraph& g, const Tensor& x, Rng* rng = nullptr) {
    const bool training = g.mode == Mode::train;
    return detail::run_forward(g, x, training ? &g.cache : nullptr, training, rng);
}

// Externally taped forward over a const graph. This is the concurrent-path
// entry: each worker owns its tape, the shared graph is never written.
inline Tensor graph_forward(const ModelGraph& g, const Tensor& x, Tape& tape, bool training,
                            Rng* rng = nullptr) {
    return detail::run_forward(g, x, &tape, training, rng);
}

// Pure eval pass, no tape.
inline Tensor graph_eval(const ModelGraph& g, const Tensor& x) {
    return detail::run_forward(g, x, nullptr, false, nullptr);
}

// One gradient slot per layer, monostate for parameter-free kinds.
using LayerGradSlot = std::variant<std::monostate, ConvGrads, DenseGrads>;

struct GraphGrads {
    std::vector<LayerGradSlot> slots;
    Tensor d_input;
};

inline GraphGrads graph_backward(const ModelGraph& g, const Tape& tape, const Tensor& d_scores) {
    if (tape.acts.size() != g.layers.size() + 1) {
        throw GraphError("backward requires the tape of a completed forward pass");
    }
    GraphGrads out;
    out.slots.resize(g.layers.size());
    Tensor d = d_scores;
    for (std::size_t i = g.layers.size(); i-- > 0;) {
        LayerBackward lb;
        try {
            lb = layer_backward(g.layers[i], tape.acts[i], tape.acts[i + 1], d);
        } catch (const Error& e) {
            throw GraphError("layer " + std::to_string(i) + " (" + layer_kind_name(g.layers[i]) +
                             "): " + e.what());
        }
        if (lb.conv) out.slots[i] = std::move(*lb.conv);
        if (lb.dense) out.slots[i] = std::move(*lb.dense);
        d = std::move(lb.d_input);
    }
    out.d_input = std::move(d);
    return out;
}

// Gradient of the scores with respect to the output of layer layer_idx,
// stopping the reverse walk there. Feeds class-activation mapping.
inline Tensor graph_backward_to(const ModelGraph& g, const Tape& tape, const Tensor& d_scores,
                                std::size_t layer_idx) {
    if (tape.acts.size() != g.layers.size() + 1) {
        throw GraphError("backward requires the tape of a completed forward pass");
    }
    if (layer_idx >= g.layers.size()) throw ParamError("layer index out of range");
    Tensor d = d_scores;
    for (std::size_t i = g.layers.size(); i-- > layer_idx + 1;) {
        d = layer_backward(g.layers[i], tape.acts[i], tape.acts[i + 1], d).d_input;
    }
    return d;
}

// Elementwise accumulation for batch averaging. Slot kinds must line up,
// which they do for grads of the same graph.
inline void grads_accumulate(GraphGrads& into, const GraphGrads& from) {
    if (into.slots.size() != from.slots.size()) throw GraphError("gradient slot count mismatch");
    for (std::size_t i = 0; i < into.slots.size(); ++i) {
        if (std::holds_alternative<ConvGrads>(from.slots[i])) {
            auto& a = std::get<ConvGrads>(into.slots[i]);
            const auto& b = std::get<ConvGrads>(from.slots[i]);
            a.d_kernel = tensor_add(a.d_kernel, b.d_kernel);
            a.d_bias = tensor_add(a.d_bias, b.d_bias);
            a.d_b += b.d_b;
        } else if (std::holds_alternative<DenseGrads>(from.slots[i])) {
            auto& a = std::get<DenseGrads>(into.slots[i]);
            const auto& b = std::get<DenseGrads>(from.slots[i]);
            a.d_weight = tensor_add(a.d_weight, b.d_weight);
            a.d_bias = tensor_add(a.d_bias, b.d_bias);
        }
    }
}

inline void grads_scale(GraphGrads& g, double s) {
    for (LayerGradSlot& slot : g.slots) {
        if (std::holds_alternative<ConvGrads>(slot)) {
            auto& c = std::get<ConvGrads>(slot);
            c.d_kernel = tensor_scale(c.d_kernel, s);
            c.d_bias = tensor_scale(c.d_bias, s);
            c.d_b *= s;
        } else if (std::holds_alternative<DenseGrads>(slot)) {
            auto& d = std::get<DenseGrads>(slot);
            d.d_weight = tensor_scale(d.d_weight, s);
            d.d_bias = tensor_scale(d.d_bias, s);
        }
    }
}

// Trainable scalar census across the graph.
inline std::size_t param_count(const ModelGraph& g) {
    std::size_t n = 0;
    for (const Layer& l : g.layers) n += layer_param_count(l);
    return n;
}

// Contiguous views over the trainable parameters, in layer order, with a
// fixed within-layer order (kernel/weight, bias, then b). The update rule is
// elementwise, so any enumeration order yields the same result; this one is
// pinned for reproducibility of the moment-buffer layout.
inline std::vector<std::span<double>> trainable_params(ModelGraph& g) {
    std::vector<std::span<double>> views;
    for (Layer& l : g.layers) {
        if (auto* c = std::get_if<ConvLayer>(&l)) {
            views.push_back(c->params.kernel.values());
            views.push_back(c->params.bias.values());
        } else if (auto* e = std::get_if<EnkConvLayer>(&l)) {
            if (e->weights_trainable) {
                views.push_back(e->params.kernel.values());
                views.push_back(e->params.bias.values());
            }
            views.push_back(std::span<double>(&e->params.b, 1));
        } else if (auto* d = std::get_if<DenseLayer>(&l)) {
            views.push_back(d->weight.values());
            views.push_back(d->bias.values());
        }
    }
    return views;
}

// Gradient views matching trainable_params element for element.
inline std::vector<std::span<const double>> trainable_grads(const ModelGraph& g, GraphGrads& grads) {
    if (grads.slots.size() != g.layers.size()) throw GraphError("gradient slot count mismatch");
    std::vector<std::span<const double>> views;
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (std::holds_alternative<ConvLayer>(g.layers[i])) {
            auto& c = std::get<ConvGrads>(grads.slots[i]);
            views.push_back(c.d_kernel.values());
            views.push_back(c.d_bias.values());
        } else if (auto* e = std::get_if<EnkConvLayer>(&g.layers[i])) {
            auto& c = std::get<ConvGrads>(grads.slots[i]);
            if (e->weights_trainable) {
                views.push_back(c.d_kernel.values());
                views.push_back(c.d_bias.values());
            }
            views.push_back(std::span<const double>(&c.d_b, 1));
        } else if (std::holds_alternative<DenseLayer>(g.layers[i])) {
            auto& d = std::get<DenseGrads>(grads.slots[i]);
            views.push_back(d.d_weight.values());
            views.push_back(d.d_bias.values());
        }
    }
    return views;
}

// ---------------------------------------------------------------------------
// Checkpoint format, little-endian:
//   magic "ENKM", version u32 = 1, layer count u32,
//   input rank u32, input extents u32 each,
//   then per layer: kind tag u8 (the Layer variant index) and a kind-specific
//   record. Conv kinds write filters/channels/kh/kw u32 then kernel and bias
//   as f64; enk-conv prefixes a flags byte (bit 0 = weights trainable) and
//   appends b as one f64. Dense writes out/in u32 then weight and bias f64.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_tensor_payload(binio::Writer& w, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) w.f64(t[i]);
}

inline Tensor read_tensor_payload(binio::Reader& r, std::vector<std::size_t> shape, const char* what) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = r.f64(what);
    return t;
}

inline EnkConvParams read_conv_params(binio::Reader& r) {
    const std::size_t f = r.u32("conv filters");
    const std::size_t c = r.u32("conv channels");
    const std::size_t kh = r.u32("conv kh");
    const std::size_t kw = r.u32("conv kw");
    if (f == 0 || c == 0 || kh == 0 || kw == 0) {
        throw FormatError("conv extents must be >= 1", r.offset());
    }
    EnkConvParams p;
    p.kernel = read_tensor_payload(r, {f, c, kh, kw}, "conv kernel");
    p.bias = read_tensor_payload(r, {f}, "conv bias");
    return p;
}

inline void write_conv_params(binio::Writer& w, const EnkConvParams& p) {
    w.u32(static_cast<std::uint32_t>(p.filters()));
    w.u32(static_cast<std::uint32_t>(p.in_channels()));
    w.u32(static_cast<std::uint32_t>(p.kh()));
    w.u32(static_cast<std::uint32_t>(p.kw()));
    write_tensor_payload(w, p.kernel);
    write_tensor_payload(w, p.bias);
}

}  // namespace detail

inline void save_checkpoint(const ModelGraph& g, const std::filesystem::path& path) {
    if (g.layers.empty()) throw GraphError("refusing to save an empty graph");
    binio::Writer w(path);
    w.magic("ENKM");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(g.layers.size()));
    w.u32(static_cast<std::uint32_t>(g.input_shape.size()));
    for (std::size_t e : g.input_shape) w.u32(static_cast<std::uint32_t>(e));
    for (const Layer& l : g.layers) {
        w.u8(static_cast<std::uint8_t>(l.index()));
        if (const auto* c = std::get_if<ConvLayer>(&l)) {
            detail::write_conv_params(w, c->params);
        } else if (const auto* e = std::get_if<EnkConvLayer>(&l)) {
            w.u8(e->weights_trainable ? 1 : 0);
            detail::write_conv_params(w, e->params);
            w.f64(e->params.b);
        } else if (const auto* n = std::get_if<GaussianNoiseLayer>(&l)) {
            w.f64(n->sigma);
        } else if (const auto* el = std::get_if<EluLayer>(&l)) {
            w.f64(el->alpha);
        } else if (const auto* ap = std::get_if<AvgPoolLayer>(&l)) {
            w.u32(static_cast<std::uint32_t>(ap->ph));
            w.u32(static_cast<std::uint32_t>(ap->pw));
        } else if (const auto* mp = std::get_if<MaxPoolLayer>(&l)) {
            w.u32(static_cast<std::uint32_t>(mp->ph));
            w.u32(static_cast<std::uint32_t>(mp->pw));
        } else if (const auto* d = std::get_if<DenseLayer>(&l)) {
            w.u32(static_cast<std::uint32_t>(d->weight.extent(0)));
            w.u32(static_cast<std::uint32_t>(d->weight.extent(1)));
            detail::write_tensor_payload(w, d->weight);
            detail::write_tensor_payload(w, d->bias);
        }
        // relu, flatten, softmax carry no payload
    }
    w.close();
}

inline ModelGraph load_checkpoint(const std::filesystem::path& path) {
    binio::Reader r(path);
    r.expect_magic("ENKM");
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version), r.offset() - 4);
    }
    const std::uint32_t layer_count = r.u32("layer count");
    if (layer_count == 0) throw FormatError("checkpoint has no layers", r.offset() - 4);
    const std::uint32_t rank = r.u32("input rank");
    if (rank == 0 || rank > 8) throw FormatError("implausible input rank", r.offset() - 4);
    std::vector<std::size_t> input_shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) input_shape[i] = r.u32("input extent");

    std::vector<Layer> layers;
    layers.reserve(layer_count);
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const std::size_t tag_at = r.offset();
        const std::uint8_t tag = r.u8("layer kind");
        switch (tag) {
            case 0: {
                ConvLayer c;
                c.params = detail::read_conv_params(r);
                layers.emplace_back(std::move(c));
                break;
            }
            case 1: {
                EnkConvLayer e;
                e.weights_trainable = (r.u8("enk flags") & 1) != 0;
                e.params = detail::read_conv_params(r);
                e.params.b = r.f64("enk b");
                layers.emplace_back(std::move(e));
                break;
            }
            case 2:
                layers.emplace_back(GaussianNoiseLayer{r.f64("noise sigma")});
                break;
            case 3:
                layers.emplace_back(ReluLayer{});
                break;
            case 4:
                layers.emplace_back(EluLayer{r.f64("elu alpha")});
                break;
            case 5: {
                const std::size_t ph = r.u32("pool ph");
                const std::size_t pw = r.u32("pool pw");
                layers.emplace_back(AvgPoolLayer{ph, pw});
                break;
            }
            case 6: {
                const std::size_t ph = r.u32("pool ph");
                const std::size_t pw = r.u32("pool pw");
                layers.emplace_back(MaxPoolLayer{ph, pw});
                break;
            }
            case 7:
                layers.emplace_back(FlattenLayer{});
                break;
            case 8: {
                const std::size_t out = r.u32("dense out");
                const std::size_t in = r.u32("dense in");
                if (out == 0 || in == 0) throw FormatError("dense extents must be >= 1", r.offset());
                DenseLayer d;
                d.weight = detail::read_tensor_payload(r, {out, in}, "dense weight");
                d.bias = detail::read_tensor_payload(r, {out}, "dense bias");
                layers.emplace_back(std::move(d));
                break;
            }
            case 9:
                layers.emplace_back(SoftmaxLayer{});
                break;
            default:
                throw FormatError("unknown layer kind tag " + std::to_string(tag), tag_at);
        }
    }
    try {
        ModelGraph g = make_graph(std::move(input_shape), std::move(layers));
        g.mode = Mode::eval;
        return g;
    } catch (const GraphError& e) {
        throw FormatError(std::string("checkpoint layers are inconsistent: ") + e.what(), 0);
    }
}

}  // namespace enk
