#pragma once

#include <vector>

#include "smogcast/tensor.hpp"

namespace smogcast {

enum class BnMode { Train, Infer };

/// Per-channel batch normalization over the last axis. Statistics are taken
/// across every non-channel axis (batch, time, spatial). Learnable scale and
/// shift plus running statistics, 4*C parameters total.
template <typename S>
struct BatchNormParamsT {
    TensorT<S> gamma, beta;
    TensorT<S> running_mean, running_var;
    S momentum = S(0.99);
    S epsilon = S(1e-3);

    static BatchNormParamsT init(int channels) {
        BatchNormParamsT p;
        p.gamma = TensorT<S>::full({channels}, S(1));
        p.beta = TensorT<S>({channels});
        p.running_mean = TensorT<S>({channels});
        p.running_var = TensorT<S>::full({channels}, S(1));
        return p;
    }

    int channels() const { return gamma.dim(0); }
    std::size_t param_count() const { return 4 * static_cast<std::size_t>(channels()); }
};

template <typename S>
struct BatchNormCacheT {
    TensorT<S> x_hat;              // normalized input, same shape as x
    std::vector<double> mean;      // per-channel batch mean
    std::vector<double> var;       // per-channel population variance
    std::vector<double> inv_std;   // 1/sqrt(var + eps)
};

namespace detail {

template <typename S>
void check_bn_input(const TensorT<S>& x, const BatchNormParamsT<S>& params) {
    if (x.rank() < 1 || x.dim(x.rank() - 1) != params.channels())
        throw std::invalid_argument("batchnorm: channel mismatch, input " + shape_str(x.shape()) +
                                    " vs C=" + std::to_string(params.channels()));
}

}  // namespace detail

/// Train-mode forward using batch statistics. Pure: running stats are not
/// touched here; apply bn_update_running with the returned cache when
/// executing a training step.
template <typename S>
TensorT<S> bn_forward_train(const TensorT<S>& x, const BatchNormParamsT<S>& params,
                            BatchNormCacheT<S>* cache = nullptr) {
    detail::check_bn_input(x, params);
    const int c = params.channels();
    const std::size_t rows = x.size() / static_cast<std::size_t>(c);
    const double n = static_cast<double>(rows);

    std::vector<double> mean(static_cast<std::size_t>(c), 0.0);
    std::vector<double> var(static_cast<std::size_t>(c), 0.0);
    const S* p = x.data();
    for (std::size_t r = 0; r < rows; ++r, p += c)
        for (int k = 0; k < c; ++k) mean[static_cast<std::size_t>(k)] += static_cast<double>(p[k]);
    for (int k = 0; k < c; ++k) mean[static_cast<std::size_t>(k)] /= n;
    p = x.data();
    for (std::size_t r = 0; r < rows; ++r, p += c)
        for (int k = 0; k < c; ++k) {
            const double d = static_cast<double>(p[k]) - mean[static_cast<std::size_t>(k)];
            var[static_cast<std::size_t>(k)] += d * d;
        }
    for (int k = 0; k < c; ++k) var[static_cast<std::size_t>(k)] /= n;

    std::vector<double> inv_std(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k)
        inv_std[static_cast<std::size_t>(k)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(k)] +
                                                               static_cast<double>(params.epsilon));

    TensorT<S> out(x.shape());
    TensorT<S> x_hat(x.shape());
    p = x.data();
    S* o = out.data();
    S* xh = x_hat.data();
    for (std::size_t r = 0; r < rows; ++r, p += c, o += c, xh += c)
        for (int k = 0; k < c; ++k) {
            const std::size_t ck = static_cast<std::size_t>(k);
            const S normalized = static_cast<S>((static_cast<double>(p[k]) - mean[ck]) * inv_std[ck]);
            xh[k] = normalized;
            o[k] = params.gamma[ck] * normalized + params.beta[ck];
        }

    if (cache) {
        cache->x_hat = std::move(x_hat);
        cache->mean = std::move(mean);
        cache->var = std::move(var);
        cache->inv_std = std::move(inv_std);
    }
    out.require_finite("batchnorm train output");
    return out;
}

/// Inference-mode forward using the stored running statistics.
template <typename S>
TensorT<S> bn_forward_infer(const TensorT<S>& x, const BatchNormParamsT<S>& params) {
    detail::check_bn_input(x, params);
    const int c = params.channels();
    for (int k = 0; k < c; ++k)
        if (params.running_var[static_cast<std::size_t>(k)] < S(0))
            throw std::invalid_argument("batchnorm: negative running variance");

    std::vector<S> scale(static_cast<std::size_t>(c)), shift(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) {
        const std::size_t ck = static_cast<std::size_t>(k);
        const S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(params.running_var[ck]) +
                                                     static_cast<double>(params.epsilon)));
        scale[ck] = params.gamma[ck] * inv;
        shift[ck] = params.beta[ck] - params.running_mean[ck] * scale[ck];
    }

    TensorT<S> out(x.shape());
    const std::size_t rows = x.size() / static_cast<std::size_t>(c);
    const S* p = x.data();
    S* o = out.data();
    for (std::size_t r = 0; r < rows; ++r, p += c, o += c)
        for (int k = 0; k < c; ++k)
            o[k] = p[k] * scale[static_cast<std::size_t>(k)] + shift[static_cast<std::size_t>(k)];
    out.require_finite("batchnorm infer output");
    return out;
}

/// running = momentum * running + (1 - momentum) * batch_stat
template <typename S>
void bn_update_running(BatchNormParamsT<S>& params, const BatchNormCacheT<S>& cache) {
    const int c = params.channels();
    for (int k = 0; k < c; ++k) {
        const std::size_t ck = static_cast<std::size_t>(k);
        params.running_mean[ck] = static_cast<S>(static_cast<double>(params.momentum) *
                                                     static_cast<double>(params.running_mean[ck]) +
                                                 (1.0 - static_cast<double>(params.momentum)) * cache.mean[ck]);
        params.running_var[ck] = static_cast<S>(static_cast<double>(params.momentum) *
                                                    static_cast<double>(params.running_var[ck]) +
                                                (1.0 - static_cast<double>(params.momentum)) * cache.var[ck]);
    }
}

/// Spec-shaped entry point: train mode normalizes with batch statistics and
/// updates running stats in place; infer mode uses the running stats.
template <typename S>
TensorT<S> batchnorm_forward(const TensorT<S>& x, BatchNormParamsT<S>& params, BnMode mode) {
    if (mode == BnMode::Infer) return bn_forward_infer(x, params);
    BatchNormCacheT<S> cache;
    TensorT<S> out = bn_forward_train(x, params, &cache);
    bn_update_running(params, cache);
    return out;
}

template <typename S>
struct BatchNormGradsT {
    TensorT<S> input;
    TensorT<S> gamma;
    TensorT<S> beta;
};

/// Train-mode backward through the batch statistics:
/// dx = gamma * inv_std * (dy - mean(dy) - x_hat * mean(dy * x_hat))
template <typename S>
BatchNormGradsT<S> bn_backward(const BatchNormCacheT<S>& cache, const BatchNormParamsT<S>& params,
                               const TensorT<S>& grad_out) {
    require_same_shape(cache.x_hat, grad_out, "bn_backward");
    const int c = params.channels();
    const std::size_t rows = grad_out.size() / static_cast<std::size_t>(c);
    const double n = static_cast<double>(rows);

    std::vector<double> sum_dy(static_cast<std::size_t>(c), 0.0);
    std::vector<double> sum_dy_xhat(static_cast<std::size_t>(c), 0.0);
    const S* gy = grad_out.data();
    const S* xh = cache.x_hat.data();
    for (std::size_t r = 0; r < rows; ++r, gy += c, xh += c)
        for (int k = 0; k < c; ++k) {
            const std::size_t ck = static_cast<std::size_t>(k);
            sum_dy[ck] += static_cast<double>(gy[k]);
            sum_dy_xhat[ck] += static_cast<double>(gy[k]) * static_cast<double>(xh[k]);
        }

    BatchNormGradsT<S> grads;
    grads.input = TensorT<S>(grad_out.shape());
    grads.gamma = TensorT<S>({c});
    grads.beta = TensorT<S>({c});
    for (int k = 0; k < c; ++k) {
        const std::size_t ck = static_cast<std::size_t>(k);
        grads.gamma[ck] = static_cast<S>(sum_dy_xhat[ck]);
        grads.beta[ck] = static_cast<S>(sum_dy[ck]);
    }

    gy = grad_out.data();
    xh = cache.x_hat.data();
    S* gx = grads.input.data();
    for (std::size_t r = 0; r < rows; ++r, gy += c, xh += c, gx += c)
        for (int k = 0; k < c; ++k) {
            const std::size_t ck = static_cast<std::size_t>(k);
            const double term = static_cast<double>(gy[k]) - sum_dy[ck] / n -
                                static_cast<double>(xh[k]) * sum_dy_xhat[ck] / n;
            gx[k] = static_cast<S>(static_cast<double>(params.gamma[ck]) * cache.inv_std[ck] * term);
        }
    return grads;
}

using BatchNormParams = BatchNormParamsT<float>;

}  // namespace smogcast
