#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "smogcast/tensor.hpp"

namespace smogcast {

/// Same-padding convolution geometry. Kernel extents must be odd so the
/// padding is symmetric and output spatial extents equal input extents.
struct ConvSpec {
    int kernel_d = 1;
    int kernel_h = 0;
    int kernel_w = 0;
    int in_channels = 0;
    int out_channels = 0;
};

namespace detail {

inline void require_odd(int k, const char* what) {
    if (k <= 0 || k % 2 == 0)
        throw std::invalid_argument(std::string(what) + ": kernel extents must be odd, got " + std::to_string(k));
}

}  // namespace detail

template <typename S>
ConvSpec conv2d_spec(const TensorT<S>& weights) {
    if (weights.rank() != 4)
        throw std::invalid_argument("conv2d weights must be [kh,kw,Cin,Cout], got " + shape_str(weights.shape()));
    ConvSpec spec;
    spec.kernel_h = weights.dim(0);
    spec.kernel_w = weights.dim(1);
    spec.in_channels = weights.dim(2);
    spec.out_channels = weights.dim(3);
    detail::require_odd(spec.kernel_h, "conv2d");
    detail::require_odd(spec.kernel_w, "conv2d");
    return spec;
}

template <typename S>
ConvSpec conv3d_spec(const TensorT<S>& weights) {
    if (weights.rank() != 5)
        throw std::invalid_argument("conv3d weights must be [kd,kh,kw,Cin,Cout], got " + shape_str(weights.shape()));
    ConvSpec spec;
    spec.kernel_d = weights.dim(0);
    spec.kernel_h = weights.dim(1);
    spec.kernel_w = weights.dim(2);
    spec.in_channels = weights.dim(3);
    spec.out_channels = weights.dim(4);
    detail::require_odd(spec.kernel_d, "conv3d");
    detail::require_odd(spec.kernel_h, "conv3d");
    detail::require_odd(spec.kernel_w, "conv3d");
    return spec;
}

namespace detail {

template <typename S>
void check_conv2d_args(const TensorT<S>& input, const TensorT<S>& weights, const TensorT<S>& bias,
                       const ConvSpec& spec) {
    if (input.rank() != 3)
        throw std::invalid_argument("conv2d input must be [H,W,Cin], got " + shape_str(input.shape()));
    if (input.dim(2) != spec.in_channels)
        throw std::invalid_argument("conv2d: input channels " + std::to_string(input.dim(2)) +
                                    " do not match weights " + shape_str(weights.shape()));
    if (bias.rank() != 1 || bias.dim(0) != spec.out_channels)
        throw std::invalid_argument("conv2d: bias must be [Cout]");
}

template <typename S>
void check_conv3d_args(const TensorT<S>& input, const TensorT<S>& weights, const TensorT<S>& bias,
                       const ConvSpec& spec) {
    if (input.rank() != 4)
        throw std::invalid_argument("conv3d input must be [T,H,W,Cin], got " + shape_str(input.shape()));
    if (input.dim(3) != spec.in_channels)
        throw std::invalid_argument("conv3d: input channels " + std::to_string(input.dim(3)) +
                                    " do not match weights " + shape_str(weights.shape()));
    if (bias.rank() != 1 || bias.dim(0) != spec.out_channels)
        throw std::invalid_argument("conv3d: bias must be [Cout]");
}

}  // namespace detail

/// out[y,x,co] = bias[co] + sum_{dy,dx,ci} input[y+dy-kh/2, x+dx-kw/2, ci] * weights[dy,dx,ci,co]
/// with zero fill outside the borders. Accumulation order per output element
/// is fixed (dy, dx, ci) so results are deterministic run to run.
template <typename S>
TensorT<S> conv2d_forward(const TensorT<S>& input, const TensorT<S>& weights, const TensorT<S>& bias) {
    const ConvSpec spec = conv2d_spec(weights);
    detail::check_conv2d_args(input, weights, bias, spec);
    const int h = input.dim(0), w = input.dim(1);
    const int ci_n = spec.in_channels, co_n = spec.out_channels;
    const int kh = spec.kernel_h, kw = spec.kernel_w;
    const int ph = kh / 2, pw = kw / 2;

    TensorT<S> out({h, w, co_n});
    const S* in = input.data();
    const S* wt = weights.data();
    const S* b = bias.data();
    S* o = out.data();

#pragma omp parallel for schedule(static) if (h >= 4 && static_cast<long>(h) * w * co_n * ci_n >= 16384)
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            S* op = o + (static_cast<std::size_t>(y) * w + x) * co_n;
            for (int co = 0; co < co_n; ++co) op[co] = b[co];
            for (int dy = 0; dy < kh; ++dy) {
                const int iy = y + dy - ph;
                if (iy < 0 || iy >= h) continue;
                for (int dx = 0; dx < kw; ++dx) {
                    const int ix = x + dx - pw;
                    if (ix < 0 || ix >= w) continue;
                    const S* ip = in + (static_cast<std::size_t>(iy) * w + ix) * ci_n;
                    const S* wp = wt + (static_cast<std::size_t>(dy) * kw + dx) * ci_n * co_n;
                    for (int ci = 0; ci < ci_n; ++ci) {
                        const S v = ip[ci];
                        const S* wr = wp + static_cast<std::size_t>(ci) * co_n;
                        for (int co = 0; co < co_n; ++co) op[co] += v * wr[co];
                    }
                }
            }
        }
    }
    out.require_finite("conv2d_forward output");
    return out;
}

template <typename S>
struct Conv2dGrads {
    TensorT<S> input;
    TensorT<S> weights;
    TensorT<S> bias;
};

template <typename S>
TensorT<S> conv2d_backward_input(const TensorT<S>& weights, const TensorT<S>& grad_out,
                                 int in_h, int in_w) {
    const ConvSpec spec = conv2d_spec(weights);
    if (grad_out.rank() != 3 || grad_out.dim(2) != spec.out_channels)
        throw std::invalid_argument("conv2d_backward: grad_out shape mismatch " + shape_str(grad_out.shape()));
    const int h = in_h, w = in_w;
    const int ci_n = spec.in_channels, co_n = spec.out_channels;
    const int kh = spec.kernel_h, kw = spec.kernel_w;
    const int ph = kh / 2, pw = kw / 2;

    TensorT<S> gx({h, w, ci_n});
    const S* gy = grad_out.data();
    const S* wt = weights.data();
    S* g = gx.data();

#pragma omp parallel for schedule(static) if (h >= 4 && static_cast<long>(h) * w * co_n * ci_n >= 16384)
    for (int iy = 0; iy < h; ++iy) {
        for (int ix = 0; ix < w; ++ix) {
            S* gp = g + (static_cast<std::size_t>(iy) * w + ix) * ci_n;
            for (int dy = 0; dy < kh; ++dy) {
                const int oy = iy - dy + ph;
                if (oy < 0 || oy >= h) continue;
                for (int dx = 0; dx < kw; ++dx) {
                    const int ox = ix - dx + pw;
                    if (ox < 0 || ox >= w) continue;
                    const S* gyp = gy + (static_cast<std::size_t>(oy) * w + ox) * co_n;
                    const S* wp = wt + (static_cast<std::size_t>(dy) * kw + dx) * ci_n * co_n;
                    for (int ci = 0; ci < ci_n; ++ci) {
                        const S* wr = wp + static_cast<std::size_t>(ci) * co_n;
                        S acc = S(0);
                        for (int co = 0; co < co_n; ++co) acc += wr[co] * gyp[co];
                        gp[ci] += acc;
                    }
                }
            }
        }
    }
    return gx;
}

template <typename S>
void conv2d_backward_weights_accum(const TensorT<S>& input, const TensorT<S>& grad_out,
                                   TensorT<S>& grad_weights, TensorT<S>& grad_bias) {
    const ConvSpec spec = conv2d_spec(grad_weights);
    detail::check_conv2d_args(input, grad_weights, grad_bias, spec);
    if (grad_out.rank() != 3 || grad_out.dim(0) != input.dim(0) || grad_out.dim(1) != input.dim(1) ||
        grad_out.dim(2) != spec.out_channels)
        throw std::invalid_argument("conv2d_backward: grad_out shape mismatch " + shape_str(grad_out.shape()));
    const int h = input.dim(0), w = input.dim(1);
    const int ci_n = spec.in_channels, co_n = spec.out_channels;
    const int kh = spec.kernel_h, kw = spec.kernel_w;
    const int ph = kh / 2, pw = kw / 2;

    const S* in = input.data();
    const S* gy = grad_out.data();
    S* gw = grad_weights.data();
    S* gb = grad_bias.data();

    // Serial on purpose: every weight gradient accumulates across all (y,x),
    // and the accumulation order must stay fixed.
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const S* gyp = gy + (static_cast<std::size_t>(y) * w + x) * co_n;
            for (int co = 0; co < co_n; ++co) gb[co] += gyp[co];
            for (int dy = 0; dy < kh; ++dy) {
                const int iy = y + dy - ph;
                if (iy < 0 || iy >= h) continue;
                for (int dx = 0; dx < kw; ++dx) {
                    const int ix = x + dx - pw;
                    if (ix < 0 || ix >= w) continue;
                    const S* ip = in + (static_cast<std::size_t>(iy) * w + ix) * ci_n;
                    S* gwp = gw + (static_cast<std::size_t>(dy) * kw + dx) * ci_n * co_n;
                    for (int ci = 0; ci < ci_n; ++ci) {
                        const S v = ip[ci];
                        S* gwr = gwp + static_cast<std::size_t>(ci) * co_n;
                        for (int co = 0; co < co_n; ++co) gwr[co] += v * gyp[co];
                    }
                }
            }
        }
    }
}

template <typename S>
Conv2dGrads<S> conv2d_backward(const TensorT<S>& input, const TensorT<S>& weights,
                               const TensorT<S>& grad_out) {
    Conv2dGrads<S> grads;
    grads.input = conv2d_backward_input(weights, grad_out, input.dim(0), input.dim(1));
    grads.weights = TensorT<S>(weights.shape());
    grads.bias = TensorT<S>({weights.dim(3)});
    conv2d_backward_weights_accum(input, grad_out, grads.weights, grads.bias);
    grads.input.require_finite("conv2d_backward grad_input");
    grads.weights.require_finite("conv2d_backward grad_weights");
    return grads;
}

/// 3-D analogue of conv2d_forward with same padding on depth, height, width.
template <typename S>
TensorT<S> conv3d_forward(const TensorT<S>& input, const TensorT<S>& weights, const TensorT<S>& bias) {
    const ConvSpec spec = conv3d_spec(weights);
    detail::check_conv3d_args(input, weights, bias, spec);
    const int t = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int ci_n = spec.in_channels, co_n = spec.out_channels;
    const int kd = spec.kernel_d, kh = spec.kernel_h, kw = spec.kernel_w;
    const int pd = kd / 2, ph = kh / 2, pw = kw / 2;

    TensorT<S> out({t, h, w, co_n});
    const S* in = input.data();
    const S* wt = weights.data();
    const S* b = bias.data();
    S* o = out.data();

#pragma omp parallel for schedule(static) if (h >= 4 && static_cast<long>(t) * h * w * co_n * ci_n >= 16384)
    for (int y = 0; y < h; ++y) {
        for (int z = 0; z < t; ++z) {
            for (int x = 0; x < w; ++x) {
                S* op = o + ((static_cast<std::size_t>(z) * h + y) * w + x) * co_n;
                for (int co = 0; co < co_n; ++co) op[co] = b[co];
                for (int dz = 0; dz < kd; ++dz) {
                    const int iz = z + dz - pd;
                    if (iz < 0 || iz >= t) continue;
                    for (int dy = 0; dy < kh; ++dy) {
                        const int iy = y + dy - ph;
                        if (iy < 0 || iy >= h) continue;
                        for (int dx = 0; dx < kw; ++dx) {
                            const int ix = x + dx - pw;
                            if (ix < 0 || ix >= w) continue;
                            const S* ip = in + ((static_cast<std::size_t>(iz) * h + iy) * w + ix) * ci_n;
                            const S* wp = wt + ((static_cast<std::size_t>(dz) * kh + dy) * kw + dx) * ci_n * co_n;
                            for (int ci = 0; ci < ci_n; ++ci) {
                                const S v = ip[ci];
                                const S* wr = wp + static_cast<std::size_t>(ci) * co_n;
                                for (int co = 0; co < co_n; ++co) op[co] += v * wr[co];
                            }
                        }
                    }
                }
            }
        }
    }
    out.require_finite("conv3d_forward output");
    return out;
}

template <typename S>
struct Conv3dGrads {
    TensorT<S> input;
    TensorT<S> weights;
    TensorT<S> bias;
};

template <typename S>
Conv3dGrads<S> conv3d_backward(const TensorT<S>& input, const TensorT<S>& weights,
                               const TensorT<S>& grad_out) {
    const ConvSpec spec = conv3d_spec(weights);
    if (grad_out.rank() != 4 || grad_out.dim(0) != input.dim(0) || grad_out.dim(1) != input.dim(1) ||
        grad_out.dim(2) != input.dim(2) || grad_out.dim(3) != spec.out_channels)
        throw std::invalid_argument("conv3d_backward: grad_out shape mismatch " + shape_str(grad_out.shape()));
    const int t = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int ci_n = spec.in_channels, co_n = spec.out_channels;
    const int kd = spec.kernel_d, kh = spec.kernel_h, kw = spec.kernel_w;
    const int pd = kd / 2, ph = kh / 2, pw = kw / 2;

    Conv3dGrads<S> grads;
    grads.input = TensorT<S>(input.shape());
    grads.weights = TensorT<S>(weights.shape());
    grads.bias = TensorT<S>({co_n});

    const S* in = input.data();
    const S* gy = grad_out.data();
    const S* wt = weights.data();
    S* gx = grads.input.data();
    S* gw = grads.weights.data();
    S* gb = grads.bias.data();

#pragma omp parallel for schedule(static) if (h >= 4 && static_cast<long>(t) * h * w * co_n * ci_n >= 16384)
    for (int iy = 0; iy < h; ++iy) {
        for (int iz = 0; iz < t; ++iz) {
            for (int ix = 0; ix < w; ++ix) {
                S* gp = gx + ((static_cast<std::size_t>(iz) * h + iy) * w + ix) * ci_n;
                for (int dz = 0; dz < kd; ++dz) {
                    const int oz = iz - dz + pd;
                    if (oz < 0 || oz >= t) continue;
                    for (int dy = 0; dy < kh; ++dy) {
                        const int oy = iy - dy + ph;
                        if (oy < 0 || oy >= h) continue;
                        for (int dx = 0; dx < kw; ++dx) {
                            const int ox = ix - dx + pw;
                            if (ox < 0 || ox >= w) continue;
                            const S* gyp = gy + ((static_cast<std::size_t>(oz) * h + oy) * w + ox) * co_n;
                            const S* wp = wt + ((static_cast<std::size_t>(dz) * kh + dy) * kw + dx) * ci_n * co_n;
                            for (int ci = 0; ci < ci_n; ++ci) {
                                const S* wr = wp + static_cast<std::size_t>(ci) * co_n;
                                S acc = S(0);
                                for (int co = 0; co < co_n; ++co) acc += wr[co] * gyp[co];
                                gp[ci] += acc;
                            }
                        }
                    }
                }
            }
        }
    }

    for (int z = 0; z < t; ++z) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const S* gyp = gy + ((static_cast<std::size_t>(z) * h + y) * w + x) * co_n;
                for (int co = 0; co < co_n; ++co) gb[co] += gyp[co];
                for (int dz = 0; dz < kd; ++dz) {
                    const int iz = z + dz - pd;
                    if (iz < 0 || iz >= t) continue;
                    for (int dy = 0; dy < kh; ++dy) {
                        const int iy = y + dy - ph;
                        if (iy < 0 || iy >= h) continue;
                        for (int dx = 0; dx < kw; ++dx) {
                            const int ix = x + dx - pw;
                            if (ix < 0 || ix >= w) continue;
                            const S* ip = in + ((static_cast<std::size_t>(iz) * h + iy) * w + ix) * ci_n;
                            S* gwp = gw + ((static_cast<std::size_t>(dz) * kh + dy) * kw + dx) * ci_n * co_n;
                            for (int ci = 0; ci < ci_n; ++ci) {
                                const S v = ip[ci];
                                S* gwr = gwp + static_cast<std::size_t>(ci) * co_n;
                                for (int co = 0; co < co_n; ++co) gwr[co] += v * gyp[co];
                            }
                        }
                    }
                }
            }
        }
    }
    grads.input.require_finite("conv3d_backward grad_input");
    grads.weights.require_finite("conv3d_backward grad_weights");
    return grads;
}

// --- elementwise suite -----------------------------------------------------

template <typename S>
TensorT<S> sigmoid(const TensorT<S>& x) {
    TensorT<S> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = S(1) / (S(1) + std::exp(-x[i]));
    return out;
}

/// Gradient through sigmoid given its output y: gx = gy * y * (1 - y).
template <typename S>
TensorT<S> sigmoid_backward(const TensorT<S>& y, const TensorT<S>& grad_out) {
    require_same_shape(y, grad_out, "sigmoid_backward");
    TensorT<S> gx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = grad_out[i] * y[i] * (S(1) - y[i]);
    return gx;
}

template <typename S>
TensorT<S> tanh_activation(const TensorT<S>& x) {
    TensorT<S> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
    return out;
}

/// Gradient through tanh given its output y: gx = gy * (1 - y^2).
template <typename S>
TensorT<S> tanh_backward(const TensorT<S>& y, const TensorT<S>& grad_out) {
    require_same_shape(y, grad_out, "tanh_backward");
    TensorT<S> gx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = grad_out[i] * (S(1) - y[i] * y[i]);
    return gx;
}

template <typename S>
TensorT<S> hadamard(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "hadamard");
    TensorT<S> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    out.require_finite("hadamard output");
    return out;
}

template <typename S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
    require_same_shape(a, b, "add");
    TensorT<S> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    out.require_finite("add output");
    return out;
}

template <typename S>
TensorT<S> scale(const TensorT<S>& a, S factor) {
    TensorT<S> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
    out.require_finite("scale output");
    return out;
}

template <typename S>
void accumulate(TensorT<S>& dst, const TensorT<S>& src) {
    require_same_shape(dst, src, "accumulate");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

/// Sum over all non-channel axes; used for convolution bias gradients.
template <typename S>
void channel_sum_accum(const TensorT<S>& x, TensorT<S>& out) {
    const int c = x.dim(x.rank() - 1);
    if (out.rank() != 1 || out.dim(0) != c)
        throw std::invalid_argument("channel_sum: output must be [C]");
    const std::size_t rows = x.size() / static_cast<std::size_t>(c);
    const S* p = x.data();
    for (std::size_t r = 0; r < rows; ++r, p += c)
        for (int k = 0; k < c; ++k) out[k] += p[k];
}

/// sqrt of the sum of squares of every element across all listed tensors,
/// accumulated in double in listing order.
template <typename S>
double global_norm(const std::vector<const TensorT<S>*>& tensors) {
    double sum = 0.0;
    for (const TensorT<S>* t : tensors) {
        const S* p = t->data();
        for (std::size_t i = 0; i < t->size(); ++i) {
            const double v = static_cast<double>(p[i]);
            sum += v * v;
        }
    }
    return std::sqrt(sum);
}

}  // namespace smogcast
