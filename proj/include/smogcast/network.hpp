#pragma once

#include <string>
#include <vector>

#include "smogcast/batchnorm.hpp"
#include "smogcast/convlstm.hpp"
#include "smogcast/metrics.hpp"
#include "smogcast/ops.hpp"
#include "smogcast/rng.hpp"
#include "smogcast/tensor.hpp"

namespace smogcast {

/// Fixed layer stack: 6 input channels, two ConvLSTM layers of 16 and 32
/// filters with 3x3 kernels, batch normalization around them, and a 3x3x3
/// single-filter Conv3D head with sigmoid output.
struct NetArch {
    static constexpr int kInChannels = 6;
    static constexpr int kFilters1 = 16;
    static constexpr int kFilters2 = 32;
    static constexpr int kKernel = 3;
    static constexpr int kHeadKernel = 3;
};

template <typename S>
struct NetworkParamsT {
    BatchNormParamsT<S> bn0;
    ConvLstmCellParamsT<S> cell1;
    BatchNormParamsT<S> bn1;
    ConvLstmCellParamsT<S> cell2;
    BatchNormParamsT<S> bn2;
    TensorT<S> head_w;  // [3,3,3,32,1]
    TensorT<S> head_b;  // [1]

    static NetworkParamsT zeros() {
        NetworkParamsT p;
        p.bn0 = BatchNormParamsT<S>::init(NetArch::kInChannels);
        p.cell1 = ConvLstmCellParamsT<S>::zeros(NetArch::kKernel, NetArch::kInChannels, NetArch::kFilters1);
        p.bn1 = BatchNormParamsT<S>::init(NetArch::kFilters1);
        p.cell2 = ConvLstmCellParamsT<S>::zeros(NetArch::kKernel, NetArch::kFilters1, NetArch::kFilters2);
        p.bn2 = BatchNormParamsT<S>::init(NetArch::kFilters2);
        p.head_w = TensorT<S>({NetArch::kHeadKernel, NetArch::kHeadKernel, NetArch::kHeadKernel,
                               NetArch::kFilters2, 1});
        p.head_b = TensorT<S>({1});
        return p;
    }

    /// Kernels uniform in +-1/sqrt(fan_in), biases zero except the forget
    /// gate bias at +1, batch norm at identity.
    static NetworkParamsT init(std::uint64_t seed) {
        NetworkParamsT p = zeros();
        Rng rng(seed);
        auto fill = [&rng](TensorT<S>& w, int fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < w.size(); ++i)
                w[i] = static_cast<S>(rng.uniform(-bound, bound));
        };
        auto fill_cell = [&fill](ConvLstmCellParamsT<S>& cell) {
            const int k2 = cell.kernel() * cell.kernel();
            for (TensorT<S>* w : {&cell.w_xi, &cell.w_xf, &cell.w_xc, &cell.w_xo})
                fill(*w, k2 * cell.in_channels());
            for (TensorT<S>* w : {&cell.w_hi, &cell.w_hf, &cell.w_hc, &cell.w_ho})
                fill(*w, k2 * cell.filters());
            for (std::size_t i = 0; i < cell.b_f.size(); ++i) cell.b_f[i] = S(1);
        };
        fill_cell(p.cell1);
        fill_cell(p.cell2);
        fill(p.head_w, NetArch::kHeadKernel * NetArch::kHeadKernel * NetArch::kHeadKernel *
                           NetArch::kFilters2);
        return p;
    }

    /// Trainable tensors in the fixed serialization order (running stats
    /// excluded; they receive no gradient).
    std::vector<TensorT<S>*> trainable_tensors() {
        std::vector<TensorT<S>*> out{&bn0.gamma, &bn0.beta};
        for (TensorT<S>* t : cell1.tensors()) out.push_back(t);
        out.push_back(&bn1.gamma);
        out.push_back(&bn1.beta);
        for (TensorT<S>* t : cell2.tensors()) out.push_back(t);
        out.push_back(&bn2.gamma);
        out.push_back(&bn2.beta);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }
    std::vector<const TensorT<S>*> trainable_tensors() const {
        std::vector<const TensorT<S>*> out{&bn0.gamma, &bn0.beta};
        for (const TensorT<S>* t : cell1.tensors()) out.push_back(t);
        out.push_back(&bn1.gamma);
        out.push_back(&bn1.beta);
        for (const TensorT<S>* t : cell2.tensors()) out.push_back(t);
        out.push_back(&bn2.gamma);
        out.push_back(&bn2.beta);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }

    std::size_t trainable_count() const {
        std::size_t n = 0;
        for (const TensorT<S>* t : trainable_tensors()) n += t->size();
        return n;
    }

    std::size_t total_count() const {
        return trainable_count() + 2 * (static_cast<std::size_t>(bn0.channels()) + bn1.channels() +
                                        bn2.channels());
    }
};

/// Gradients for every trainable tensor, mirroring NetworkParamsT layout.
template <typename S>
struct NetworkGradsT {
    TensorT<S> bn0_gamma, bn0_beta;
    ConvLstmCellParamsT<S> cell1;
    TensorT<S> bn1_gamma, bn1_beta;
    ConvLstmCellParamsT<S> cell2;
    TensorT<S> bn2_gamma, bn2_beta;
    TensorT<S> head_w, head_b;

    static NetworkGradsT zeros_like(const NetworkParamsT<S>& p) {
        NetworkGradsT g;
        g.bn0_gamma = TensorT<S>(p.bn0.gamma.shape());
        g.bn0_beta = TensorT<S>(p.bn0.beta.shape());
        g.cell1 = ConvLstmCellParamsT<S>::zeros(p.cell1.kernel(), p.cell1.in_channels(), p.cell1.filters());
        g.bn1_gamma = TensorT<S>(p.bn1.gamma.shape());
        g.bn1_beta = TensorT<S>(p.bn1.beta.shape());
        g.cell2 = ConvLstmCellParamsT<S>::zeros(p.cell2.kernel(), p.cell2.in_channels(), p.cell2.filters());
        g.bn2_gamma = TensorT<S>(p.bn2.gamma.shape());
        g.bn2_beta = TensorT<S>(p.bn2.beta.shape());
        g.head_w = TensorT<S>(p.head_w.shape());
        g.head_b = TensorT<S>(p.head_b.shape());
        return g;
    }

    /// Same order as NetworkParamsT::trainable_tensors.
    std::vector<TensorT<S>*> tensors() {
        std::vector<TensorT<S>*> out{&bn0_gamma, &bn0_beta};
        for (TensorT<S>* t : cell1.tensors()) out.push_back(t);
        out.push_back(&bn1_gamma);
        out.push_back(&bn1_beta);
        for (TensorT<S>* t : cell2.tensors()) out.push_back(t);
        out.push_back(&bn2_gamma);
        out.push_back(&bn2_beta);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }
    std::vector<const TensorT<S>*> tensors() const {
        std::vector<const TensorT<S>*> out{&bn0_gamma, &bn0_beta};
        for (const TensorT<S>* t : cell1.tensors()) out.push_back(t);
        out.push_back(&bn1_gamma);
        out.push_back(&bn1_beta);
        for (const TensorT<S>* t : cell2.tensors()) out.push_back(t);
        out.push_back(&bn2_gamma);
        out.push_back(&bn2_beta);
        out.push_back(&head_w);
        out.push_back(&head_b);
        return out;
    }
};

template <typename S>
struct NetworkCacheT {
    BatchNormCacheT<S> bn0, bn1, bn2;
    std::vector<std::vector<CellStepCacheT<S>>> layer1;  // per batch item
    std::vector<std::vector<CellStepCacheT<S>>> layer2;
    TensorT<S> bn2_out;      // [B,T,H,W,32], head conv input
    TensorT<S> predictions;  // [B,T,H,W,1], after sigmoid
};

namespace detail {

template <typename S>
TensorT<S> batch_item(const TensorT<S>& batch, int b, Shape item_shape) {
    const std::size_t n = shape_numel(item_shape);
    TensorT<S> out(std::move(item_shape));
    std::copy(batch.data() + b * n, batch.data() + (b + 1) * n, out.data());
    return out;
}

template <typename S>
void set_batch_item(TensorT<S>& batch, int b, const TensorT<S>& item) {
    std::copy(item.data(), item.data() + item.size(), batch.data() + b * item.size());
}

}  // namespace detail

/// bn0 -> ConvLSTM(16) -> bn1 -> ConvLSTM(32) -> bn2 -> Conv3D head -> sigmoid.
/// Pure: running statistics are not modified; the training step applies
/// network_update_running_stats with the cache afterwards.
template <typename S>
TensorT<S> network_forward(const TensorT<S>& batch, const NetworkParamsT<S>& params, BnMode mode,
                           NetworkCacheT<S>* cache = nullptr) {
    if (batch.rank() != 5)
        throw std::invalid_argument("network_forward: input must be [B,T,H,W,C], got " +
                                    shape_str(batch.shape()));
    if (batch.dim(4) != NetArch::kInChannels)
        throw std::invalid_argument("network_forward: expected " + std::to_string(NetArch::kInChannels) +
                                    " channels, got " + std::to_string(batch.dim(4)));
    const int b_n = batch.dim(0), t_n = batch.dim(1), h = batch.dim(2), w = batch.dim(3);

    auto bn = [&](const TensorT<S>& x, const BatchNormParamsT<S>& p, BatchNormCacheT<S>* bn_cache) {
        if (mode == BnMode::Train) return bn_forward_train(x, p, bn_cache);
        return bn_forward_infer(x, p);
    };

    TensorT<S> x0 = bn(batch, params.bn0, cache ? &cache->bn0 : nullptr);

    TensorT<S> seq1({b_n, t_n, h, w, NetArch::kFilters1});
    if (cache) cache->layer1.resize(static_cast<std::size_t>(b_n));
    for (int b = 0; b < b_n; ++b) {
        TensorT<S> item = detail::batch_item(x0, b, {t_n, h, w, NetArch::kInChannels});
        auto* caches = cache ? &cache->layer1[static_cast<std::size_t>(b)] : nullptr;
        detail::set_batch_item(seq1, b, layer_forward(item, params.cell1, true, caches));
    }

    TensorT<S> x1 = bn(seq1, params.bn1, cache ? &cache->bn1 : nullptr);

    TensorT<S> seq2({b_n, t_n, h, w, NetArch::kFilters2});
    if (cache) cache->layer2.resize(static_cast<std::size_t>(b_n));
    for (int b = 0; b < b_n; ++b) {
        TensorT<S> item = detail::batch_item(x1, b, {t_n, h, w, NetArch::kFilters1});
        auto* caches = cache ? &cache->layer2[static_cast<std::size_t>(b)] : nullptr;
        detail::set_batch_item(seq2, b, layer_forward(item, params.cell2, true, caches));
    }

    TensorT<S> x2 = bn(seq2, params.bn2, cache ? &cache->bn2 : nullptr);
    if (cache) cache->bn2_out = x2;

    TensorT<S> out({b_n, t_n, h, w, 1});
    for (int b = 0; b < b_n; ++b) {
        TensorT<S> item = detail::batch_item(x2, b, {t_n, h, w, NetArch::kFilters2});
        detail::set_batch_item(out, b, conv3d_forward(item, params.head_w, params.head_b));
    }

    TensorT<S> pred = sigmoid(out);
    pred.require_finite("network_forward output");
    if (cache) cache->predictions = pred;
    return pred;
}

/// Fold the cached batch statistics into the running statistics. Mutating
/// companion to a train-mode network_forward; call once per training step.
template <typename S>
void network_update_running_stats(NetworkParamsT<S>& params, const NetworkCacheT<S>& cache) {
    bn_update_running(params.bn0, cache.bn0);
    bn_update_running(params.bn1, cache.bn1);
    bn_update_running(params.bn2, cache.bn2);
}

/// Train-mode forward + full backpropagation with BCE loss. Returns the loss
/// and gradients for every trainable tensor; running statistics are neither
/// read for normalization nor written (use network_update_running_stats).
template <typename S>
std::pair<double, NetworkGradsT<S>> network_backward(const TensorT<S>& batch, const TensorT<S>& targets,
                                                     const NetworkParamsT<S>& params,
                                                     NetworkCacheT<S>* cache_out = nullptr) {
    NetworkCacheT<S> local_cache;
    NetworkCacheT<S>& cache = cache_out ? *cache_out : local_cache;
    TensorT<S> pred = network_forward(batch, params, BnMode::Train, &cache);
    require_same_shape(targets, pred, "network_backward targets");

    const double loss = bce(targets, pred);
    const int b_n = batch.dim(0), t_n = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    const double inv_n = 1.0 / static_cast<double>(pred.size());

    // BCE through sigmoid: d loss / d logit = (prediction - target) / N
    TensorT<S> grad_logits(pred.shape());
    for (std::size_t i = 0; i < pred.size(); ++i)
        grad_logits[i] = static_cast<S>((static_cast<double>(pred[i]) - static_cast<double>(targets[i])) * inv_n);

    NetworkGradsT<S> grads = NetworkGradsT<S>::zeros_like(params);

    // head conv3d
    TensorT<S> grad_bn2_out({b_n, t_n, h, w, NetArch::kFilters2});
    for (int b = 0; b < b_n; ++b) {
        TensorT<S> item = detail::batch_item(cache.bn2_out, b, {t_n, h, w, NetArch::kFilters2});
        TensorT<S> gl = detail::batch_item(grad_logits, b, {t_n, h, w, 1});
        Conv3dGrads<S> cg = conv3d_backward(item, params.head_w, gl);
        accumulate(grads.head_w, cg.weights);
        accumulate(grads.head_b, cg.bias);
        detail::set_batch_item(grad_bn2_out, b, cg.input);
    }

    BatchNormGradsT<S> g_bn2 = bn_backward(cache.bn2, params.bn2, grad_bn2_out);
    grads.bn2_gamma = std::move(g_bn2.gamma);
    grads.bn2_beta = std::move(g_bn2.beta);

    TensorT<S> grad_seq1_bn({b_n, t_n, h, w, NetArch::kFilters1});
    for (int b = 0; b < b_n; ++b) {
        TensorT<S> gseq = detail::batch_item(g_bn2.input, b, {t_n, h, w, NetArch::kFilters2});
        TensorT<S> gx = layer_backward(cache.layer2[static_cast<std::size_t>(b)], params.cell2, gseq,
                                       grads.cell2);
        detail::set_batch_item(grad_seq1_bn, b, gx);
    }

    BatchNormGradsT<S> g_bn1 = bn_backward(cache.bn1, params.bn1, grad_seq1_bn);
    grads.bn1_gamma = std::move(g_bn1.gamma);
    grads.bn1_beta = std::move(g_bn1.beta);

    TensorT<S> grad_x0({b_n, t_n, h, w, NetArch::kInChannels});
    for (int b = 0; b < b_n; ++b) {
        TensorT<S> gseq = detail::batch_item(g_bn1.input, b, {t_n, h, w, NetArch::kFilters1});
        TensorT<S> gx = layer_backward(cache.layer1[static_cast<std::size_t>(b)], params.cell1, gseq,
                                       grads.cell1);
        detail::set_batch_item(grad_x0, b, gx);
    }

    BatchNormGradsT<S> g_bn0 = bn_backward(cache.bn0, params.bn0, grad_x0);
    grads.bn0_gamma = std::move(g_bn0.gamma);
    grads.bn0_beta = std::move(g_bn0.beta);

    return {loss, std::move(grads)};
}

/// One row of the layer summary table.
struct LayerRow {
    std::string name;
    Shape output_shape;  // (T,H,W,C); batch axis omitted
    std::size_t params;
};

/// Per-layer names, output shapes, and parameter counts for the fixed stack
/// at grid (t,h,w).
inline std::vector<LayerRow> param_table(int t, int h, int w) {
    auto cell_params = [](int cin, int cf) {
        return static_cast<std::size_t>(4) * (9 * static_cast<std::size_t>(cin + cf) * cf + cf);
    };
    const int c0 = NetArch::kInChannels, c1 = NetArch::kFilters1, c2 = NetArch::kFilters2;
    return {
        {"input", {t, h, w, c0}, 0},
        {"batch_norm_input", {t, h, w, c0}, 4 * static_cast<std::size_t>(c0)},
        {"conv_lstm_16", {t, h, w, c1}, cell_params(c0, c1)},
        {"batch_norm_16", {t, h, w, c1}, 4 * static_cast<std::size_t>(c1)},
        {"conv_lstm_32", {t, h, w, c2}, cell_params(c1, c2)},
        {"batch_norm_32", {t, h, w, c2}, 4 * static_cast<std::size_t>(c2)},
        {"conv3d_head", {t, h, w, 1},
         static_cast<std::size_t>(27) * c2 + 1},
    };
}

using NetworkParams = NetworkParamsT<float>;
using NetworkGrads = NetworkGradsT<float>;
using NetworkCache = NetworkCacheT<float>;

}  // namespace smogcast
