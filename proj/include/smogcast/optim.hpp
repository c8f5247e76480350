#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "smogcast/ops.hpp"
#include "smogcast/tensor.hpp"

namespace smogcast {

/// If the joint l2 norm of the gradient set exceeds clipnorm, scale every
/// gradient by clipnorm / norm; otherwise leave them unchanged.
template <typename S>
double clip_by_global_norm(std::vector<TensorT<S>*>& grads, double clipnorm) {
    if (clipnorm <= 0.0) throw std::invalid_argument("clip_by_global_norm: clipnorm must be positive");
    std::vector<const TensorT<S>*> view(grads.begin(), grads.end());
    const double norm = global_norm(view);
    if (!std::isfinite(norm))
        throw std::runtime_error("clip_by_global_norm: non-finite gradient norm");
    if (norm > clipnorm) {
        const S factor = static_cast<S>(clipnorm / norm);
        for (TensorT<S>* g : grads)
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] *= factor;
    }
    return norm;
}

/// Adam moment accumulators mirroring one set of trainable tensors, plus the
/// shared hyperparameters. lr is mutable during training (plateau reduction).
template <typename S>
struct AdamStateT {
    std::vector<TensorT<S>> m;
    std::vector<TensorT<S>> v;
    std::int64_t step_count = 0;
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clipnorm = 1.0;

    template <typename P>
    static AdamStateT for_params(const std::vector<P>& params) {
        AdamStateT state;
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const auto* t : params) {
            state.m.emplace_back(t->shape());
            state.v.emplace_back(t->shape());
        }
        return state;
    }
};

/// t += 1; m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2;
/// theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Gradients are expected to be clipped already.
template <typename S>
void adam_step(std::vector<TensorT<S>*>& params, const std::vector<const TensorT<S>*>& grads,
               AdamStateT<S>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/state count mismatch");
    state.step_count += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

    for (std::size_t k = 0; k < params.size(); ++k) {
        TensorT<S>& theta = *params[k];
        const TensorT<S>& g = *grads[k];
        TensorT<S>& m = state.m[k];
        TensorT<S>& v = state.v[k];
        require_same_shape(theta, g, "adam_step");
        require_same_shape(theta, m, "adam_step state");

        const S b1 = static_cast<S>(state.beta1), b2 = static_cast<S>(state.beta2);
        const S one_minus_b1 = static_cast<S>(1.0 - state.beta1);
        const S one_minus_b2 = static_cast<S>(1.0 - state.beta2);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = b1 * m[i] + one_minus_b1 * g[i];
            v[i] = b2 * v[i] + one_minus_b2 * g[i] * g[i];
            const double m_hat = static_cast<double>(m[i]) / bc1;
            const double v_hat = static_cast<double>(v[i]) / bc2;
            theta[i] = static_cast<S>(static_cast<double>(theta[i]) -
                                      state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon));
        }
    }
}

using AdamState = AdamStateT<float>;

}  // namespace smogcast
