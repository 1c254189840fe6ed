#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "enk/conv.hpp"
#include "enk/error.hpp"
#include "enk/rng.hpp"
#include "enk/tensor.hpp"

namespace enk {

// Layer parameter records. One struct per kind; the graph stores them in a
// variant whose alternative order is frozen because it doubles as the
// checkpoint kind tag.

struct ConvLayer {
    EnkConvParams params;  // b is carried but never applied nor trained
};

// weights_trainable=false freezes kernel and bias so only b enters the
// trainable census. Model builders insert the layer in that state, which is
// how adding time encoding costs exactly one learnable scalar.
struct EnkConvLayer {
    EnkConvParams params;
    bool weights_trainable = true;
};

struct GaussianNoiseLayer {
    double sigma = 0.1;
};

struct ReluLayer {};

struct EluLayer {
    double alpha = 1.0;
};

// Pool windows move with stride equal to their extents; rows or columns left
// over past the last full window are dropped.
struct AvgPoolLayer {
    std::size_t ph = 1, pw = 1;
};

struct MaxPoolLayer {
    std::size_t ph = 1, pw = 1;
};

struct FlattenLayer {};

struct DenseLayer {
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]
};

struct SoftmaxLayer {};

using Layer = std::variant<ConvLayer, EnkConvLayer, GaussianNoiseLayer, ReluLayer, EluLayer,
                           AvgPoolLayer, MaxPoolLayer, FlattenLayer, DenseLayer, SoftmaxLayer>;

// variant index == checkpoint kind tag
inline constexpr const char* kLayerKindNames[] = {
    "conv",     "enk-conv", "gaussian-noise", "relu",  "elu",
    "avg-pool", "max-pool", "flatten",        "dense", "softmax"};

inline const char* layer_kind_name(const Layer& l) { return kLayerKindNames[l.index()]; }

struct DenseGrads {
    Tensor d_weight;
    Tensor d_bias;
};

struct LayerBackward {
    Tensor d_input;
    std::optional<ConvGrads> conv;    // conv / enk-conv layers
    std::optional<DenseGrads> dense;  // dense layers
};

namespace detail {

inline void check_conv_shape(const EnkConvParams& p, const std::vector<std::size_t>& in) {
    if (in.size() != 3) throw DimsError("conv input must be rank 3 [channels, rows, cols]");
    if (p.kernel.rank() != 4) throw DimsError("conv kernel must be rank 4");
    if (in[0] != p.in_channels()) {
        throw DimsError("channel mismatch: input has " + std::to_string(in[0]) +
                        ", kernel expects " + std::to_string(p.in_channels()));
    }
}

inline void check_pool_shape(std::size_t ph, std::size_t pw, const std::vector<std::size_t>& in) {
    if (in.size() != 3) throw DimsError("pool input must be rank 3");
    if (ph == 0 || pw == 0) throw DimsError("pool window extents must be >= 1");
    if (ph > in[1] || pw > in[2]) {
        throw DimsError("pool window " + std::to_string(ph) + "x" + std::to_string(pw) +
                        " exceeds input " + std::to_string(in[1]) + "x" + std::to_string(in[2]));
    }
}

}  // namespace detail

// Shape the layer would produce for the given input shape; throws DimsError
// on incompatibility. Used once at graph build so runtime passes cannot hit
// shape surprises.
inline std::vector<std::size_t> layer_output_shape(const Layer& l, const std::vector<std::size_t>& in) {
    struct V {
        const std::vector<std::size_t>& in;

        std::vector<std::size_t> operator()(const ConvLayer& c) const { return conv_out(c.params); }
        std::vector<std::size_t> operator()(const EnkConvLayer& c) const { return conv_out(c.params); }
        std::vector<std::size_t> operator()(const GaussianNoiseLayer& n) const {
            if (n.sigma < 0.0) throw ParamError("noise sigma must be >= 0");
            return in;
        }
        std::vector<std::size_t> operator()(const ReluLayer&) const { return in; }
        std::vector<std::size_t> operator()(const EluLayer&) const { return in; }
        std::vector<std::size_t> operator()(const AvgPoolLayer& p) const { return pool_out(p.ph, p.pw); }
        std::vector<std::size_t> operator()(const MaxPoolLayer& p) const { return pool_out(p.ph, p.pw); }
        std::vector<std::size_t> operator()(const FlattenLayer&) const {
            std::size_t n = 1;
            for (std::size_t e : in) n *= e;
            return {n};
        }
        std::vector<std::size_t> operator()(const DenseLayer& d) const {
            if (in.size() != 1) throw DimsError("dense input must be rank 1 (flatten first)");
            if (d.weight.rank() != 2) throw DimsError("dense weight must be rank 2 [out, in]");
            if (d.bias.rank() != 1 || d.bias.extent(0) != d.weight.extent(0)) {
                throw DimsError("dense bias must have one entry per output");
            }
            if (in[0] != d.weight.extent(1)) {
                throw DimsError("dense expects " + std::to_string(d.weight.extent(1)) +
                                " inputs, got " + std::to_string(in[0]));
            }
            return {d.weight.extent(0)};
        }
        std::vector<std::size_t> operator()(const SoftmaxLayer&) const {
            if (in.size() != 1) throw DimsError("softmax input must be rank 1");
            return in;
        }

        std::vector<std::size_t> conv_out(const EnkConvParams& p) const {
            detail::check_conv_shape(p, in);
            const ConvDims d = ConvDims::valid(in[1], in[2], p.kh(), p.kw());
            return {p.filters(), d.hout, d.wout};
        }
        std::vector<std::size_t> pool_out(std::size_t ph, std::size_t pw) const {
            detail::check_pool_shape(ph, pw, in);
            return {in[0], in[1] / ph, in[2] / pw};
        }
    };
    return std::visit(V{in}, l);
}

// Trainable scalar count. Frozen EnK layers contribute only b; that minus the
// fully trainable case is what makes the with/without-EnK census differ by 1.
inline std::size_t layer_param_count(const Layer& l) {
    if (const auto* c = std::get_if<ConvLayer>(&l)) {
        return c->params.kernel.size() + c->params.bias.size();
    }
    if (const auto* e = std::get_if<EnkConvLayer>(&l)) {
        return e->weights_trainable ? e->params.kernel.size() + e->params.bias.size() + 1 : 1;
    }
    if (const auto* d = std::get_if<DenseLayer>(&l)) {
        return d->weight.size() + d->bias.size();
    }
    return 0;
}

namespace detail {

inline Tensor pool_forward(const Tensor& x, std::size_t ph, std::size_t pw, bool take_max) {
    check_pool_shape(ph, pw, x.shape());
    const std::size_t c = x.extent(0), hout = x.extent(1) / ph, wout = x.extent(2) / pw;
    Tensor y({c, hout, wout});
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < hout; ++i) {
            for (std::size_t j = 0; j < wout; ++j) {
                double acc = take_max ? x(ch, i * ph, j * pw) : 0.0;
                for (std::size_t a = 0; a < ph; ++a) {
                    for (std::size_t b = 0; b < pw; ++b) {
                        const double v = x(ch, i * ph + a, j * pw + b);
                        acc = take_max ? std::max(acc, v) : acc + v;
                    }
                }
                y(ch, i, j) = take_max ? acc : acc / static_cast<double>(ph * pw);
            }
        }
    }
    return y;
}

inline Tensor softmax_vec(const Tensor& x) {
    double m = x[0];
    for (std::size_t i = 1; i < x.size(); ++i) m = std::max(m, x[i]);
    Tensor y(x.shape());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - m);
        z += y[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) y[i] /= z;
    return y;
}

}  // namespace detail

// Forward evaluation of one layer. rng feeds only the noise layer and only
// in training mode; eval passes are noise-free and deterministic.
inline Tensor layer_forward(const Layer& l, const Tensor& x, bool training, Rng* rng) {
    struct V {
        const Tensor& x;
        bool training;
        Rng* rng;

        Tensor operator()(const ConvLayer& c) const { return conv2d_forward(x, c.params); }
        Tensor operator()(const EnkConvLayer& c) const { return enk_forward_decomposed(x, c.params); }
        Tensor operator()(const GaussianNoiseLayer& n) const {
            if (n.sigma < 0.0) throw ParamError("noise sigma must be >= 0");
            if (!training || rng == nullptr) return x;
            return gaussian_noise_forward(x, n.sigma, true, *rng);
        }
        Tensor operator()(const ReluLayer&) const {
            Tensor y(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            return y;
        }
        Tensor operator()(const EluLayer& e) const {
            Tensor y(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) {
                y[i] = x[i] > 0.0 ? x[i] : e.alpha * std::expm1(x[i]);
            }
            return y;
        }
        Tensor operator()(const AvgPoolLayer& p) const { return detail::pool_forward(x, p.ph, p.pw, false); }
        Tensor operator()(const MaxPoolLayer& p) const { return detail::pool_forward(x, p.ph, p.pw, true); }
        Tensor operator()(const FlattenLayer&) const {
            return Tensor::from_values({x.size()}, std::vector<double>(x.values().begin(), x.values().end()));
        }
        Tensor operator()(const DenseLayer& d) const {
            layer_output_shape(Layer{d}, x.shape());  // revalidate against the actual input
            const std::size_t out = d.weight.extent(0), in = d.weight.extent(1);
            Tensor y({out});
            for (std::size_t o = 0; o < out; ++o) {
                double acc = d.bias[o];
                for (std::size_t i = 0; i < in; ++i) acc += d.weight(o, i) * x[i];
                y[o] = acc;
            }
            return y;
        }
        Tensor operator()(const SoftmaxLayer&) const {
            if (x.rank() != 1) throw DimsError("softmax input must be rank 1");
            return detail::softmax_vec(x);
        }
    };
    return std::visit(V{x, training, rng}, l);
}

// Backward through one layer given its forward input x and output y.
// Activation derivatives are recomputed from x; pooling argmax is recomputed
// with the same scan order as the forward, so ties route to the first
// maximal element.
inline LayerBackward layer_backward(const Layer& l, const Tensor& x, const Tensor& y,
                                    const Tensor& d_out) {
    struct V {
        const Tensor& x;
        const Tensor& y;
        const Tensor& d_out;

        LayerBackward operator()(const ConvLayer& c) const {
            LayerBackward r;
            r.conv = conv2d_backward(x, c.params, d_out);
            r.d_input = r.conv->d_input;
            return r;
        }
        LayerBackward operator()(const EnkConvLayer& c) const {
            LayerBackward r;
            r.conv = enk_backward(x, c.params, d_out);
            r.d_input = r.conv->d_input;
            return r;
        }
        LayerBackward operator()(const GaussianNoiseLayer&) const {
            require_same_shape();
            return {d_out, {}, {}};
        }
        LayerBackward operator()(const ReluLayer&) const {
            require_same_shape();
            Tensor d(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > 0.0 ? d_out[i] : 0.0;
            return {std::move(d), {}, {}};
        }
        LayerBackward operator()(const EluLayer& e) const {
            require_same_shape();
            Tensor d(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) {
                d[i] = x[i] > 0.0 ? d_out[i] : d_out[i] * e.alpha * std::exp(x[i]);
            }
            return {std::move(d), {}, {}};
        }
        LayerBackward operator()(const AvgPoolLayer& p) const {
            check_d_out_shape(layer_output_shape(Layer{p}, x.shape()));
            Tensor d(x.shape(), 0.0);
            const double inv = 1.0 / static_cast<double>(p.ph * p.pw);
            for (std::size_t ch = 0; ch < d_out.extent(0); ++ch) {
                for (std::size_t i = 0; i < d_out.extent(1); ++i) {
                    for (std::size_t j = 0; j < d_out.extent(2); ++j) {
                        const double g = d_out(ch, i, j) * inv;
                        for (std::size_t a = 0; a < p.ph; ++a) {
                            for (std::size_t b = 0; b < p.pw; ++b) {
                                d(ch, i * p.ph + a, j * p.pw + b) += g;
                            }
                        }
                    }
                }
            }
            return {std::move(d), {}, {}};
        }
        LayerBackward operator()(const MaxPoolLayer& p) const {
            check_d_out_shape(layer_output_shape(Layer{p}, x.shape()));
            Tensor d(x.shape(), 0.0);
            for (std::size_t ch = 0; ch < d_out.extent(0); ++ch) {
                for (std::size_t i = 0; i < d_out.extent(1); ++i) {
                    for (std::size_t j = 0; j < d_out.extent(2); ++j) {
                        std::size_t bi = i * p.ph, bj = j * p.pw;
                        double best = x(ch, bi, bj);
                        for (std::size_t a = 0; a < p.ph; ++a) {
                            for (std::size_t b = 0; b < p.pw; ++b) {
                                const double v = x(ch, i * p.ph + a, j * p.pw + b);
                                if (v > best) {
                                    best = v;
                                    bi = i * p.ph + a;
                                    bj = j * p.pw + b;
                                }
                            }
                        }
                        d(ch, bi, bj) += d_out(ch, i, j);
                    }
                }
            }
            return {std::move(d), {}, {}};
        }
        LayerBackward operator()(const FlattenLayer&) const {
            if (d_out.size() != x.size()) throw DimsError("flatten backward size mismatch");
            Tensor d(x.shape());
            for (std::size_t i = 0; i < x.size(); ++i) d[i] = d_out[i];
            return {std::move(d), {}, {}};
        }
        LayerBackward operator()(const DenseLayer& dl) const {
            check_d_out_shape({dl.weight.extent(0)});
            const std::size_t out = dl.weight.extent(0), in = dl.weight.extent(1);
            LayerBackward r;
            r.d_input = Tensor({in}, 0.0);
            DenseGrads g{Tensor({out, in}), Tensor({out})};
            for (std::size_t o = 0; o < out; ++o) {
                const double go = d_out[o];
                g.d_bias[o] = go;
                for (std::size_t i = 0; i < in; ++i) {
                    g.d_weight(o, i) = go * x[i];
                    r.d_input[i] += dl.weight(o, i) * go;
                }
            }
            r.dense = std::move(g);
            return r;
        }
        LayerBackward operator()(const SoftmaxLayer&) const {
            require_same_shape();
            double dot = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * d_out[i];
            Tensor d(x.shape());
            for (std::size_t i = 0; i < y.size(); ++i) d[i] = y[i] * (d_out[i] - dot);
            return {std::move(d), {}, {}};
        }

        void require_same_shape() const {
            if (!d_out.same_shape(x)) throw DimsError("d_out shape does not match layer input");
        }
        void check_d_out_shape(const std::vector<std::size_t>& want) const {
            if (d_out.shape() != want) throw DimsError("d_out shape does not match layer output");
        }
    };
    return std::visit(V{x, y, d_out}, l);
}

}  // namespace enk
