#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "enk/error.hpp"
#include "enk/parallel.hpp"
#include "enk/rng.hpp"
#include "enk/tensor.hpp"

namespace enk {

// Valid (no padding), stride-1 convolution geometry.
struct ConvDims {
    std::size_t h = 0, w = 0;    // input rows / cols
    std::size_t kh = 0, kw = 0;  // kernel rows / cols
    std::size_t hout = 0, wout = 0;

    static ConvDims valid(std::size_t h, std::size_t w, std::size_t kh, std::size_t kw) {
        if (kh == 0 || kw == 0) throw DimsError("kernel extents must be >= 1");
        if (kh > h || kw > w) {
            throw DimsError("kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                            " exceeds input " + std::to_string(h) + "x" + std::to_string(w));
        }
        return ConvDims{h, w, kh, kw, h - kh + 1, w - kw + 1};
    }
};

// Parameters of one (time-encoded) convolution layer.
//
// The time encoding is a single scalar b shared by every filter and channel:
// at output column q the effective kernel is K + (q+1)*b, identical for all
// output rows. b = 0 recovers the plain convolution.
template <class T = double>
struct EnkConvParamsT {
    TensorT<T> kernel;  // [filters, in_channels, kh, kw]
    TensorT<T> bias;    // [filters]
    T b{};              // time scale, kernel-weight units per column step

    std::size_t filters() const { return kernel.extent(0); }
    std::size_t in_channels() const { return kernel.extent(1); }
    std::size_t kh() const { return kernel.extent(2); }
    std::size_t kw() const { return kernel.extent(3); }
};

using EnkConvParams = EnkConvParamsT<double>;

template <class T = double>
struct ConvGradsT {
    TensorT<T> d_input;   // shape of x
    TensorT<T> d_kernel;  // shape of kernel
    TensorT<T> d_bias;    // shape of bias
    T d_b{};
};

using ConvGrads = ConvGradsT<double>;

namespace detail {

template <class T>
ConvDims check_conv_args(const TensorT<T>& x, const EnkConvParamsT<T>& p) {
    if (x.rank() != 3) throw DimsError("conv input must be rank 3 [channels, rows, cols]");
    if (p.kernel.rank() != 4) throw DimsError("conv kernel must be rank 4 [filters, channels, kh, kw]");
    if (p.kernel.extent(1) != x.extent(0)) {
        throw DimsError("channel mismatch: input has " + std::to_string(x.extent(0)) +
                        ", kernel expects " + std::to_string(p.kernel.extent(1)));
    }
    if (p.bias.rank() != 1 || p.bias.extent(0) != p.kernel.extent(0)) {
        throw DimsError("bias must have one entry per filter");
    }
    return ConvDims::valid(x.extent(1), x.extent(2), p.kernel.extent(2), p.kernel.extent(3));
}

// Direct sliding-window evaluation shared by the plain and time-encoded
// forward so that time_scale = 0 reproduces the plain convolution with the
// same operation ordering, not merely the same value.
//
//   Y[f,p,q] = bias[f] + sum_ch sum_a sum_c x[ch,p+a,q+c] * (K[f,ch,a,c] + (q+1)*time_scale)
template <class T>
TensorT<T> conv_direct(const TensorT<T>& x, const EnkConvParamsT<T>& p, T time_scale) {
    const ConvDims d = check_conv_args(x, p);
    const std::size_t channels = x.extent(0);
    const std::size_t filters = p.filters();
    TensorT<T> y({filters, d.hout, d.wout});

    const T* xd = x.data();
    const T* kd = p.kernel.data();
    T* yd = y.data();
    const std::size_t x_ch_stride = d.h * d.w;
    const std::size_t k_f_stride = channels * d.kh * d.kw;

    parallel_for(filters, [&](std::size_t f) {
        const T* kf = kd + f * k_f_stride;
        const T fbias = p.bias[f];
        for (std::size_t pp = 0; pp < d.hout; ++pp) {
            for (std::size_t q = 0; q < d.wout; ++q) {
                const T offset = static_cast<T>(q + 1) * time_scale;
                T acc = fbias;
                const T* kc = kf;
                for (std::size_t ch = 0; ch < channels; ++ch) {
                    const T* xrow = xd + ch * x_ch_stride + pp * d.w + q;
                    for (std::size_t a = 0; a < d.kh; ++a) {
                        for (std::size_t c = 0; c < d.kw; ++c) {
                            acc += xrow[c] * (kc[c] + offset);
                        }
                        xrow += d.w;
                        kc += d.kw;
                    }
                }
                yd[(f * d.hout + pp) * d.wout + q] = acc;
            }
        }
    });
    return y;
}

}  // namespace detail

// Plain valid cross-correlation (no kernel flip), stride 1. p.b is ignored.
template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const EnkConvParamsT<T>& p) {
    return detail::conv_direct(x, p, T{});
}

// Reference path for the time-encoded convolution: literal sliding window
// with the per-column kernel offset folded into the dot product.
template <class T>
TensorT<T> enk_forward_naive(const TensorT<T>& x, const EnkConvParamsT<T>& p) {
    return detail::conv_direct(x, p, p.b);
}

// S[p,q] = sum over channels and the kh x kw footprint of x at window (p,q).
// Computed from a summed-area table over the channel-summed input, so the
// cost is independent of the kernel extents.
template <class T>
TensorT<T> window_sum(const TensorT<T>& x, std::size_t kh, std::size_t kw) {
    if (x.rank() != 3) throw DimsError("window_sum input must be rank 3");
    const ConvDims d = ConvDims::valid(x.extent(1), x.extent(2), kh, kw);
    const std::size_t channels = x.extent(0);

    // I[i][j] = sum of channel-summed x over rows < i, cols < j.
    std::vector<T> table((d.h + 1) * (d.w + 1), T{});
    const std::size_t tw = d.w + 1;
    const T* xd = x.data();
    for (std::size_t i = 0; i < d.h; ++i) {
        T rowsum{};
        for (std::size_t j = 0; j < d.w; ++j) {
            T v{};
            for (std::size_t ch = 0; ch < channels; ++ch) v += xd[(ch * d.h + i) * d.w + j];
            rowsum += v;
            table[(i + 1) * tw + (j + 1)] = table[i * tw + (j + 1)] + rowsum;
        }
    }

    TensorT<T> s({d.hout, d.wout});
    for (std::size_t p = 0; p < d.hout; ++p) {
        for (std::size_t q = 0; q < d.wout; ++q) {
            s(p, q) = table[(p + d.kh) * tw + (q + d.kw)] - table[p * tw + (q + d.kw)] -
                      table[(p + d.kh) * tw + q] + table[p * tw + q];
        }
    }
    return s;
}

// Fast path. Expanding the offset kernel splits the output into a plain
// convolution plus a rank-one correction:
//
//   Y = Conv(x, K) + b * D .* S,   D[p,q] = q+1 broadcast over rows/filters
//
// with S the windowed sum above. One convolution and one summed-area pass
// instead of a per-column kernel rebuild.
template <class T>
TensorT<T> enk_forward_decomposed(const TensorT<T>& x, const EnkConvParamsT<T>& p) {
    TensorT<T> y = conv2d_forward(x, p);
    if (p.b == T{}) return y;
    const TensorT<T> s = window_sum(x, p.kh(), p.kw());
    const std::size_t hout = s.extent(0), wout = s.extent(1);
    T* yd = y.data();
    const T* sd = s.data();
    for (std::size_t f = 0; f < p.filters(); ++f) {
        for (std::size_t pp = 0; pp < hout; ++pp) {
            for (std::size_t q = 0; q < wout; ++q) {
                yd[(f * hout + pp) * wout + q] += p.b * static_cast<T>(q + 1) * sd[pp * wout + q];
            }
        }
    }
    return y;
}

namespace detail {

// Backward pass for Y[f,p,q] = bias[f] + sum x[ch,p+a,q+c] * (K[f,ch,a,c] + (q+1)*b).
//
// Differentiating the forward term by term:
//   dL/dK[f,ch,a,c] = sum_{p,q} d_out[f,p,q] * x[ch,p+a,q+c]
//       (the offset does not involve K, so this matches the plain conv)
//   dL/db           = sum_{f,p,q} d_out[f,p,q] * (q+1) * S[p,q]
//       (each window contributes its full footprint sum once per unit of b)
//   dL/dx[ch,i,j]   = sum_{f, windows (p,q) covering (i,j)}
//                        d_out[f,p,q] * (K[f,ch,i-p,j-q] + (q+1)*b)
//   dL/dbias[f]     = sum_{p,q} d_out[f,p,q]
template <class T>
ConvGradsT<T> conv_backward_impl(const TensorT<T>& x, const EnkConvParamsT<T>& p,
                                 const TensorT<T>& d_out, T time_scale, bool with_db) {
    const ConvDims d = check_conv_args(x, p);
    const std::size_t channels = x.extent(0);
    const std::size_t filters = p.filters();
    if (d_out.rank() != 3 || d_out.extent(0) != filters || d_out.extent(1) != d.hout ||
        d_out.extent(2) != d.wout) {
        throw DimsError("d_out shape does not match forward output shape");
    }

    ConvGradsT<T> g;
    g.d_input = TensorT<T>(x.shape());
    g.d_kernel = TensorT<T>(p.kernel.shape());
    g.d_bias = TensorT<T>(p.bias.shape());
    g.d_b = T{};

    const T* xd = x.data();
    const T* kd = p.kernel.data();
    const T* od = d_out.data();
    const std::size_t x_ch_stride = d.h * d.w;
    const std::size_t k_f_stride = channels * d.kh * d.kw;

    for (std::size_t f = 0; f < filters; ++f) {
        const T* kf = kd + f * k_f_stride;
        T* dkf = g.d_kernel.data() + f * k_f_stride;
        T dbias{};
        for (std::size_t pp = 0; pp < d.hout; ++pp) {
            for (std::size_t q = 0; q < d.wout; ++q) {
                const T go = od[(f * d.hout + pp) * d.wout + q];
                dbias += go;
                const T offset = static_cast<T>(q + 1) * time_scale;
                const T* kc = kf;
                T* dkc = dkf;
                for (std::size_t ch = 0; ch < channels; ++ch) {
                    const std::size_t base = ch * x_ch_stride + pp * d.w + q;
                    T* dxrow = g.d_input.data() + base;
                    const T* xrow = xd + base;
                    for (std::size_t a = 0; a < d.kh; ++a) {
                        for (std::size_t c = 0; c < d.kw; ++c) {
                            dkc[c] += go * xrow[c];
                            dxrow[c] += go * (kc[c] + offset);
                        }
                        xrow += d.w;
                        dxrow += d.w;
                        kc += d.kw;
                        dkc += d.kw;
                    }
                }
            }
        }
        g.d_bias[f] = dbias;
    }

    if (with_db) {
        const TensorT<T> s = window_sum(x, d.kh, d.kw);
        T db{};
        for (std::size_t f = 0; f < filters; ++f) {
            for (std::size_t pp = 0; pp < d.hout; ++pp) {
                for (std::size_t q = 0; q < d.wout; ++q) {
                    db += od[(f * d.hout + pp) * d.wout + q] * static_cast<T>(q + 1) * s(pp, q);
                }
            }
        }
        g.d_b = db;
    }
    return g;
}

}  // namespace detail

template <class T>
ConvGradsT<T> enk_backward(const TensorT<T>& x, const EnkConvParamsT<T>& p, const TensorT<T>& d_out) {
    return detail::conv_backward_impl(x, p, d_out, p.b, /*with_db=*/true);
}

// Plain convolution backward: the time offset terms vanish and d_b stays 0.
template <class T>
ConvGradsT<T> conv2d_backward(const TensorT<T>& x, const EnkConvParamsT<T>& p, const TensorT<T>& d_out) {
    return detail::conv_backward_impl(x, p, d_out, T{}, /*with_db=*/false);
}

// Additive i.i.d. Gaussian noise in training mode, identity in eval mode.
// The backward is the identity either way (the noise does not depend on x).
inline Tensor gaussian_noise_forward(const Tensor& x, double sigma, bool training, Rng& rng) {
    if (sigma < 0.0) throw ParamError("noise sigma must be >= 0");
    if (!training || sigma == 0.0) return x;
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + rng.normal(0.0, sigma);
    return out;
}

}  // namespace enk
