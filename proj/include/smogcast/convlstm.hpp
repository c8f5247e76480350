#pragma once

#include <cstdint>
#include <vector>

#include "smogcast/ops.hpp"
#include "smogcast/tensor.hpp"

namespace smogcast {

/// Weights of one ConvLSTM cell. Input-to-hidden kernels are [k,k,Cin,Cf],
/// hidden-to-hidden kernels [k,k,Cf,Cf], biases [Cf]. All kernels share one
/// (kh,kw).
template <typename S>
struct ConvLstmCellParamsT {
    TensorT<S> w_xi, w_xf, w_xc, w_xo;
    TensorT<S> w_hi, w_hf, w_hc, w_ho;
    TensorT<S> b_i, b_f, b_c, b_o;

    static ConvLstmCellParamsT zeros(int kernel, int in_channels, int filters) {
        ConvLstmCellParamsT p;
        const Shape wx{kernel, kernel, in_channels, filters};
        const Shape wh{kernel, kernel, filters, filters};
        const Shape b{filters};
        p.w_xi = TensorT<S>(wx); p.w_xf = TensorT<S>(wx); p.w_xc = TensorT<S>(wx); p.w_xo = TensorT<S>(wx);
        p.w_hi = TensorT<S>(wh); p.w_hf = TensorT<S>(wh); p.w_hc = TensorT<S>(wh); p.w_ho = TensorT<S>(wh);
        p.b_i = TensorT<S>(b); p.b_f = TensorT<S>(b); p.b_c = TensorT<S>(b); p.b_o = TensorT<S>(b);
        return p;
    }

    int kernel() const { return w_xi.dim(0); }
    int in_channels() const { return w_xi.dim(2); }
    int filters() const { return w_xi.dim(3); }

    /// 4 * (k^2 * (Cin + Cf) * Cf + Cf)
    std::size_t param_count() const {
        const std::size_t k2 = static_cast<std::size_t>(kernel()) * kernel();
        const std::size_t cin = static_cast<std::size_t>(in_channels());
        const std::size_t cf = static_cast<std::size_t>(filters());
        return 4 * (k2 * (cin + cf) * cf + cf);
    }

    std::vector<TensorT<S>*> tensors() {
        return {&w_xi, &w_xf, &w_xc, &w_xo, &w_hi, &w_hf, &w_hc, &w_ho, &b_i, &b_f, &b_c, &b_o};
    }
    std::vector<const TensorT<S>*> tensors() const {
        return {&w_xi, &w_xf, &w_xc, &w_xo, &w_hi, &w_hf, &w_hc, &w_ho, &b_i, &b_f, &b_c, &b_o};
    }
};

/// Hidden state H and cell state C, both [H,W,Cf].
template <typename S>
struct CellStateT {
    TensorT<S> h;
    TensorT<S> c;

    static CellStateT zeros(int height, int width, int filters) {
        return {TensorT<S>({height, width, filters}), TensorT<S>({height, width, filters})};
    }
};

/// Everything the backward pass needs from one forward step.
template <typename S>
struct CellStepCacheT {
    TensorT<S> x;       // input at this step
    TensorT<S> h_prev;  // incoming hidden state
    TensorT<S> c_prev;  // incoming cell state
    TensorT<S> i, f, g, o;  // gate activations (g is the tanh candidate)
    TensorT<S> c;       // new cell state
    TensorT<S> tanh_c;  // tanh of the new cell state
};

/// i = sig(Wxi*x + Whi*H- + bi); f = sig(Wxf*x + Whf*H- + bf)
/// g = tanh(Wxc*x + Whc*H- + bc); C = f.C- + i.g
/// o = sig(Wxo*x + Who*H- + bo);  H = o.tanh(C)
template <typename S>
CellStateT<S> cell_step(const TensorT<S>& x, const CellStateT<S>& prev,
                        const ConvLstmCellParamsT<S>& params,
                        CellStepCacheT<S>* cache = nullptr) {
    if (x.rank() != 3)
        throw std::invalid_argument("cell_step: input must be [H,W,Cin], got " + shape_str(x.shape()));
    if (prev.h.dim(0) != x.dim(0) || prev.h.dim(1) != x.dim(1))
        throw std::invalid_argument("cell_step: state spatial extents do not match input");

    auto gate = [&](const TensorT<S>& wx, const TensorT<S>& wh, const TensorT<S>& b) {
        TensorT<S> a = conv2d_forward(x, wx, b);
        accumulate(a, conv2d_forward(prev.h, wh, TensorT<S>({b.dim(0)})));
        return a;
    };

    TensorT<S> i = sigmoid(gate(params.w_xi, params.w_hi, params.b_i));
    TensorT<S> f = sigmoid(gate(params.w_xf, params.w_hf, params.b_f));
    TensorT<S> g = tanh_activation(gate(params.w_xc, params.w_hc, params.b_c));
    TensorT<S> o = sigmoid(gate(params.w_xo, params.w_ho, params.b_o));

    TensorT<S> c = add(hadamard(f, prev.c), hadamard(i, g));
    TensorT<S> tc = tanh_activation(c);
    TensorT<S> h = hadamard(o, tc);
    h.require_finite("cell_step hidden state");

    if (cache) {
        cache->x = x;
        cache->h_prev = prev.h;
        cache->c_prev = prev.c;
        cache->i = i;
        cache->f = f;
        cache->g = g;
        cache->o = o;
        cache->c = c;
        cache->tanh_c = tc;
    }
    return {std::move(h), std::move(c)};
}

template <typename S>
struct CellGradsT {
    TensorT<S> x;
    CellStateT<S> prev;
};

/// 1 - y^2 for a tensor that already holds tanh outputs.
template <typename S>
TensorT<S> tanh_backward_unit(const TensorT<S>& tanh_y) {
    TensorT<S> out(tanh_y.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = S(1) - tanh_y[i] * tanh_y[i];
    return out;
}

/// Reverse-mode step. grad_h/grad_c are the upstream gradients flowing into
/// H_t and C_t. Parameter gradients accumulate into param_grads (which must
/// be zero-shaped like the params on the first call).
template <typename S>
CellGradsT<S> cell_backward(const CellStepCacheT<S>& cache, const ConvLstmCellParamsT<S>& params,
                            const TensorT<S>& grad_h, const TensorT<S>& grad_c,
                            ConvLstmCellParamsT<S>& param_grads) {
    if (cache.x.empty())
        throw std::invalid_argument("cell_backward: missing forward cache");
    require_same_shape(grad_h, cache.o, "cell_backward grad_h");

    // H = o . tanh(C)
    TensorT<S> d_o = hadamard(grad_h, cache.tanh_c);
    TensorT<S> dc = add(grad_c, hadamard(hadamard(grad_h, cache.o), tanh_backward_unit(cache.tanh_c)));

    // C = f . C- + i . g
    TensorT<S> di = hadamard(dc, cache.g);
    TensorT<S> dg = hadamard(dc, cache.i);
    TensorT<S> df = hadamard(dc, cache.c_prev);
    TensorT<S> dc_prev = hadamard(dc, cache.f);

    // through the gate nonlinearities to pre-activations
    TensorT<S> dai = sigmoid_backward(cache.i, di);
    TensorT<S> daf = sigmoid_backward(cache.f, df);
    TensorT<S> dao = sigmoid_backward(cache.o, d_o);
    TensorT<S> dag = tanh_backward(cache.g, dg);

    const int h = cache.x.dim(0), w = cache.x.dim(1);
    CellGradsT<S> grads;
    grads.x = TensorT<S>({h, w, params.in_channels()});
    grads.prev.h = TensorT<S>({h, w, params.filters()});
    grads.prev.c = std::move(dc_prev);

    auto gate_backward = [&](const TensorT<S>& da, const TensorT<S>& wx, const TensorT<S>& wh,
                             TensorT<S>& gwx, TensorT<S>& gwh, TensorT<S>& gb) {
        accumulate(grads.x, conv2d_backward_input(wx, da, h, w));
        accumulate(grads.prev.h, conv2d_backward_input(wh, da, h, w));
        conv2d_backward_weights_accum(cache.x, da, gwx, gb);
        TensorT<S> unused_bias({params.filters()});
        conv2d_backward_weights_accum(cache.h_prev, da, gwh, unused_bias);
    };

    gate_backward(dai, params.w_xi, params.w_hi, param_grads.w_xi, param_grads.w_hi, param_grads.b_i);
    gate_backward(daf, params.w_xf, params.w_hf, param_grads.w_xf, param_grads.w_hf, param_grads.b_f);
    gate_backward(dag, params.w_xc, params.w_hc, param_grads.w_xc, param_grads.w_hc, param_grads.b_c);
    gate_backward(dao, params.w_xo, params.w_ho, param_grads.w_xo, param_grads.w_ho, param_grads.b_o);

    return grads;
}

/// Iterates cell_step over the time axis from a zero initial state.
/// With return_sequences the output is [T,H,W,Cf] (every hidden state);
/// without it only the final hidden state [H,W,Cf] is returned.
template <typename S>
TensorT<S> layer_forward(const TensorT<S>& seq, const ConvLstmCellParamsT<S>& params,
                         bool return_sequences = true,
                         std::vector<CellStepCacheT<S>>* caches = nullptr) {
    if (seq.rank() != 4)
        throw std::invalid_argument("layer_forward: input must be [T,H,W,Cin], got " + shape_str(seq.shape()));
    const int t_n = seq.dim(0), h = seq.dim(1), w = seq.dim(2), cin = seq.dim(3);
    if (t_n < 1) throw std::invalid_argument("layer_forward: empty sequence");
    if (cin != params.in_channels())
        throw std::invalid_argument("layer_forward: channel mismatch");

    const int cf = params.filters();
    CellStateT<S> state = CellStateT<S>::zeros(h, w, cf);
    if (caches) caches->resize(static_cast<std::size_t>(t_n));

    TensorT<S> out;
    if (return_sequences) out = TensorT<S>({t_n, h, w, cf});

    const std::size_t frame_in = static_cast<std::size_t>(h) * w * cin;
    const std::size_t frame_out = static_cast<std::size_t>(h) * w * cf;
    for (int t = 0; t < t_n; ++t) {
        TensorT<S> x({h, w, cin});
        std::copy(seq.data() + t * frame_in, seq.data() + (t + 1) * frame_in, x.data());
        CellStepCacheT<S>* cache = caches ? &(*caches)[static_cast<std::size_t>(t)] : nullptr;
        state = cell_step(x, state, params, cache);
        if (return_sequences)
            std::copy(state.h.data(), state.h.data() + frame_out, out.data() + t * frame_out);
    }
    return return_sequences ? out : state.h;
}

/// BPTT over a cached layer_forward run. grad_seq is [T,H,W,Cf] (gradient of
/// every emitted hidden state). Returns the gradient w.r.t. the input
/// sequence; parameter gradients accumulate into param_grads.
template <typename S>
TensorT<S> layer_backward(const std::vector<CellStepCacheT<S>>& caches,
                          const ConvLstmCellParamsT<S>& params, const TensorT<S>& grad_seq,
                          ConvLstmCellParamsT<S>& param_grads) {
    const int t_n = static_cast<int>(caches.size());
    if (t_n == 0) throw std::invalid_argument("layer_backward: missing caches");
    if (grad_seq.rank() != 4 || grad_seq.dim(0) != t_n)
        throw std::invalid_argument("layer_backward: grad_seq shape mismatch");

    const int h = caches[0].x.dim(0), w = caches[0].x.dim(1);
    const int cin = params.in_channels(), cf = params.filters();
    TensorT<S> grad_in({t_n, h, w, cin});

    TensorT<S> gh_next({h, w, cf});
    TensorT<S> gc_next({h, w, cf});
    const std::size_t frame_in = static_cast<std::size_t>(h) * w * cin;
    const std::size_t frame_out = static_cast<std::size_t>(h) * w * cf;

    for (int t = t_n - 1; t >= 0; --t) {
        TensorT<S> gh({h, w, cf});
        std::copy(grad_seq.data() + t * frame_out, grad_seq.data() + (t + 1) * frame_out, gh.data());
        accumulate(gh, gh_next);
        CellGradsT<S> g = cell_backward(caches[static_cast<std::size_t>(t)], params, gh, gc_next, param_grads);
        std::copy(g.x.data(), g.x.data() + frame_in, grad_in.data() + t * frame_in);
        gh_next = std::move(g.prev.h);
        gc_next = std::move(g.prev.c);
    }
    return grad_in;
}

using ConvLstmCellParams = ConvLstmCellParamsT<float>;
using CellState = CellStateT<float>;

}  // namespace smogcast
