#pragma once

#include <cstdint>
#include <vector>

#include "dain/error.hpp"
#include "dain/ops.hpp"
#include "dain/tensor.hpp"

namespace dain {

/// Class-probability vector with its argmax.
struct Prediction {
    Tensor probs;  // [num_classes], nonnegative, sums to 1
    int top_class = 0;

    static Prediction from_probs(Tensor p) {
        Prediction out;
        int best = 0;
        for (int i = 1; i < p.dim(0); ++i)
            if (p(i) > p(best)) best = i;
        out.top_class = best;
        out.probs = std::move(p);
        return out;
    }
};

/// Unweighted average of probability vectors.
inline Tensor average_probs(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "average_probs");
    Tensor out(a.shape);
    for (std::size_t i = 0; i < a.numel(); ++i) out.data[i] = 0.5f * (a.data[i] + b.data[i]);
    return out;
}

/**
 * Majority vote over per-view argmax classes. Ties are broken by the larger
 * sum of per-view probabilities over the tied classes, then by the lowest
 * class index.
 */
inline int multiview_vote(const std::vector<Prediction>& preds) {
    if (preds.empty()) throw ArgumentError("multiview_vote: empty view list");
    const int k = preds.front().probs.dim(0);
    std::vector<int> votes(static_cast<std::size_t>(k), 0);
    std::vector<double> prob_sums(static_cast<std::size_t>(k), 0.0);
    for (const auto& p : preds) {
        if (p.probs.dim(0) != k) throw DimensionError("multiview_vote: inconsistent class counts");
        votes[static_cast<std::size_t>(p.top_class)]++;
        for (int c = 0; c < k; ++c) prob_sums[static_cast<std::size_t>(c)] += p.probs(c);
    }
    int best = 0;
    for (int c = 1; c < k; ++c) {
        const auto bc = static_cast<std::size_t>(best), cc = static_cast<std::size_t>(c);
        if (votes[cc] > votes[bc] ||
            (votes[cc] == votes[bc] && prob_sums[cc] > prob_sums[bc]))
            best = c;  // lowest index already wins exact prob ties
    }
    return best;
}

struct MultiviewPoolCache {
    std::vector<int> shape;          // element shape
    std::vector<std::int32_t> argview;  // winning view per element
    bool valid = false;
};

/// Pointwise maximum across the view axis; the lowest maximizing view index
/// receives the gradient.
inline Tensor multiview_pool(const std::vector<Tensor>& maps, MultiviewPoolCache* cache = nullptr) {
    if (maps.empty()) throw ArgumentError("multiview_pool: empty view list");
    for (const auto& m : maps) require_same_shape(m, maps.front(), "multiview_pool");
    Tensor out = maps.front();
    std::vector<std::int32_t> argview(out.numel(), 0);
    for (std::size_t v = 1; v < maps.size(); ++v)
        for (std::size_t i = 0; i < out.numel(); ++i)
            if (maps[v].data[i] > out.data[i]) {  // strict: earliest view wins ties
                out.data[i] = maps[v].data[i];
                argview[i] = static_cast<std::int32_t>(v);
            }
    if (cache) {
        cache->shape = out.shape;
        cache->argview = std::move(argview);
        cache->valid = true;
    }
    return out;
}

inline std::vector<Tensor> multiview_pool_backward(const Tensor& grad_out, const MultiviewPoolCache& cache,
                                                   std::size_t n_views) {
    if (!cache.valid) throw StateError("multiview_pool_backward: no forward cache");
    if (grad_out.numel() != cache.argview.size())
        throw DimensionError("multiview_pool_backward: grad shape mismatch");
    std::vector<Tensor> grads(n_views, Tensor(cache.shape));
    for (std::size_t i = 0; i < grad_out.numel(); ++i)
        grads[static_cast<std::size_t>(cache.argview[i])].data[i] = grad_out.data[i];
    return grads;
}

struct MultiviewFilter3dCache {
    Conv3dCache conv;
    MultiviewPoolCache pool;
    int n_views = 0;
    bool valid = false;
};

/**
 * Learned view-axis aggregation: stack per-view [D,H,W] maps into [D,N,H,W],
 * convolve depthwise with per-channel 3x3x3 kernels, then take the pointwise
 * maximum across views.
 */
inline Tensor multiview_filter3d(const std::vector<Tensor>& maps, const Tensor& kernels,
                                 MultiviewFilter3dCache* cache = nullptr) {
    if (maps.empty()) throw ArgumentError("multiview_filter3d: empty view list");
    const Tensor& first = maps.front();
    if (first.rank() != 3) throw DimensionError("multiview_filter3d: maps must be [D,H,W]");
    for (const auto& m : maps) require_same_shape(m, first, "multiview_filter3d");
    const int d = first.dim(0), h = first.dim(1), w = first.dim(2);
    const int n = static_cast<int>(maps.size());

    Tensor stack({d, n, h, w});
    for (int v = 0; v < n; ++v)
        for (int ch = 0; ch < d; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) stack(ch, v, y, x) = maps[static_cast<std::size_t>(v)](ch, y, x);

    MultiviewFilter3dCache local;
    const Tensor filtered = conv3d_depthwise(stack, kernels, &local.conv);

    // Unstack and pool across the view axis.
    std::vector<Tensor> slices;
    slices.reserve(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        Tensor s({d, h, w});
        for (int ch = 0; ch < d; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) s(ch, y, x) = filtered(ch, v, y, x);
        slices.push_back(std::move(s));
    }
    Tensor out = multiview_pool(slices, &local.pool);
    local.n_views = n;
    local.valid = true;
    if (cache) *cache = std::move(local);
    return out;
}

struct MultiviewFilter3dGrads {
    std::vector<Tensor> maps;
    Tensor kernels;
};

inline MultiviewFilter3dGrads multiview_filter3d_backward(const Tensor& grad_out,
                                                          const MultiviewFilter3dCache& cache) {
    if (!cache.valid) throw StateError("multiview_filter3d_backward: no forward cache");
    const int n = cache.n_views;
    const std::vector<Tensor> slice_grads =
        multiview_pool_backward(grad_out, cache.pool, static_cast<std::size_t>(n));

    const Tensor& stack_in = cache.conv.input;
    const int d = stack_in.dim(0), h = stack_in.dim(2), w = stack_in.dim(3);
    Tensor filtered_grad({d, n, h, w});
    for (int v = 0; v < n; ++v)
        for (int ch = 0; ch < d; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    filtered_grad(ch, v, y, x) = slice_grads[static_cast<std::size_t>(v)](ch, y, x);

    const Conv3dGrads cg = conv3d_depthwise_backward(filtered_grad, cache.conv);

    MultiviewFilter3dGrads out;
    out.kernels = cg.kernels;
    out.maps.reserve(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) {
        Tensor g({d, h, w});
        for (int ch = 0; ch < d; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) g(ch, y, x) = cg.input(ch, v, y, x);
        out.maps.push_back(std::move(g));
    }
    return out;
}

} // namespace dain
