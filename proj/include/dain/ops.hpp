#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dain/error.hpp"
#include "dain/rng.hpp"
#include "dain/tensor.hpp"

namespace dain {

// Hand-written forward/backward pairs. Each forward can populate a cache
// struct that its backward consumes; a backward invoked on an invalid cache
// throws StateError. Reductions accumulate in double.

// ---------------------------------------------------------------------------
// conv2d: input [Cin,H,W] * kernels [Cout,Cin,kH,kW] + bias [Cout]
// ---------------------------------------------------------------------------

struct Conv2dCache {
    Tensor input;
    Tensor kernels;
    int stride = 1;
    int pad = 0;
    bool valid = false;
};

inline Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias,
                     int stride, int pad, Conv2dCache* cache = nullptr) {
    if (input.rank() != 3) throw DimensionError("conv2d: input must be [C,H,W]");
    if (kernels.rank() != 4) throw DimensionError("conv2d: kernels must be [Cout,Cin,kH,kW]");
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (kernels.dim(1) != cin)
        throw DimensionError("conv2d: kernel Cin " + std::to_string(kernels.dim(1)) +
                             " does not match input channels " + std::to_string(cin));
    if (bias.rank() != 1 || bias.dim(0) != cout) throw DimensionError("conv2d: bias must be [Cout]");
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    if (pad < 0) throw ArgumentError("conv2d: pad must be >= 0");
    if (kh > h + 2 * pad || kw > w + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");

    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    Tensor out({cout, ho, wo});
    std::vector<double> acc(static_cast<std::size_t>(ho) * wo);

    for (int co = 0; co < cout; ++co) {
        std::fill(acc.begin(), acc.end(), static_cast<double>(bias(co)));
        for (int ci = 0; ci < cin; ++ci) {
            for (int ky = 0; ky < kh; ++ky) {
                for (int kx = 0; kx < kw; ++kx) {
                    const double kv = kernels(co, ci, ky, kx);
                    if (kv == 0.0) continue;
                    for (int oy = 0; oy < ho; ++oy) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        const float* in_row = &input.data[(static_cast<std::size_t>(ci) * h + iy) * w];
                        double* acc_row = &acc[static_cast<std::size_t>(oy) * wo];
                        for (int ox = 0; ox < wo; ++ox) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= w) continue;
                            acc_row[ox] += kv * in_row[ix];
                        }
                    }
                }
            }
        }
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox)
                out(co, oy, ox) = static_cast<float>(acc[static_cast<std::size_t>(oy) * wo + ox]);
    }

    if (cache) {
        cache->input = input;
        cache->kernels = kernels;
        cache->stride = stride;
        cache->pad = pad;
        cache->valid = true;
    }
    return out;
}

struct Conv2dGrads {
    Tensor input;
    Tensor kernels;
    Tensor bias;
};

inline Conv2dGrads conv2d_backward(const Tensor& grad_out, const Conv2dCache& cache) {
    if (!cache.valid) throw StateError("conv2d_backward: no forward cache");
    const Tensor& input = cache.input;
    const Tensor& kernels = cache.kernels;
    const int stride = cache.stride, pad = cache.pad;
    const int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    if (grad_out.rank() != 3 || grad_out.dim(0) != cout || grad_out.dim(1) != ho || grad_out.dim(2) != wo)
        throw DimensionError("conv2d_backward: grad_out shape does not match forward output");

    std::vector<double> gin(input.numel(), 0.0);
    std::vector<double> gker(kernels.numel(), 0.0);
    std::vector<double> gbias(static_cast<std::size_t>(cout), 0.0);

    for (int co = 0; co < cout; ++co) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox) {
                const double go = grad_out(co, oy, ox);
                if (go == 0.0) continue;
                gbias[co] += go;
                for (int ci = 0; ci < cin; ++ci) {
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride + ky - pad;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride + kx - pad;
                            if (ix < 0 || ix >= w) continue;
                            const std::size_t in_idx = (static_cast<std::size_t>(ci) * h + iy) * w + ix;
                            const std::size_t k_idx =
                                ((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx;
                            gin[in_idx] += go * kernels.data[k_idx];
                            gker[k_idx] += go * input.data[in_idx];
                        }
                    }
                }
            }
        }
    }

    Conv2dGrads g{Tensor(input.shape), Tensor(kernels.shape), Tensor({cout})};
    for (std::size_t i = 0; i < gin.size(); ++i) g.input.data[i] = static_cast<float>(gin[i]);
    for (std::size_t i = 0; i < gker.size(); ++i) g.kernels.data[i] = static_cast<float>(gker[i]);
    for (int i = 0; i < cout; ++i) g.bias(i) = static_cast<float>(gbias[i]);
    return g;
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

struct ReluCache {
    Tensor input;
    bool valid = false;
};

inline Tensor relu(const Tensor& input, ReluCache* cache = nullptr) {
    Tensor out(input.shape);
    for (std::size_t i = 0; i < input.numel(); ++i) out.data[i] = input.data[i] > 0.0f ? input.data[i] : 0.0f;
    if (cache) {
        cache->input = input;
        cache->valid = true;
    }
    return out;
}

/// Gradient passes where the forward input was strictly positive; an input of
/// exactly zero routes no gradient.
inline Tensor relu_backward(const Tensor& grad_out, const ReluCache& cache) {
    if (!cache.valid) throw StateError("relu_backward: no forward cache");
    require_same_shape(grad_out, cache.input, "relu_backward");
    Tensor gin(cache.input.shape);
    for (std::size_t i = 0; i < gin.numel(); ++i)
        gin.data[i] = cache.input.data[i] > 0.0f ? grad_out.data[i] : 0.0f;
    return gin;
}

// ---------------------------------------------------------------------------
// maxpool2d: per-channel window maximum, first occurrence wins ties
// ---------------------------------------------------------------------------

struct MaxPoolCache {
    std::vector<int> shape_in;         // [C,H,W]
    std::vector<std::int32_t> argmax;  // flat input index per output element
    bool valid = false;
};

inline Tensor maxpool2d(const Tensor& input, int window, int stride, MaxPoolCache* cache = nullptr) {
    if (input.rank() != 3) throw DimensionError("maxpool2d: input must be [C,H,W]");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (window > h || window > w) throw DimensionError("maxpool2d: window larger than input");
    if (window < 1 || stride < 1) throw ArgumentError("maxpool2d: window and stride must be >= 1");
    const int ho = (h - window) / stride + 1;
    const int wo = (w - window) / stride + 1;
    Tensor out({c, ho, wo});
    std::vector<std::int32_t> argmax(out.numel());

    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < ho; ++oy) {
            for (int ox = 0; ox < wo; ++ox, ++o) {
                float best = -std::numeric_limits<float>::infinity();
                std::int32_t best_idx = -1;
                for (int ky = 0; ky < window; ++ky) {
                    const int iy = oy * stride + ky;
                    for (int kx = 0; kx < window; ++kx) {
                        const int ix = ox * stride + kx;
                        const std::int32_t idx =
                            static_cast<std::int32_t>((static_cast<std::size_t>(ch) * h + iy) * w + ix);
                        const float v = input.data[static_cast<std::size_t>(idx)];
                        if (v > best) {  // strict: first occurrence in scan order wins ties
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }

    if (cache) {
        cache->shape_in = input.shape;
        cache->argmax = std::move(argmax);
        cache->valid = true;
    }
    return out;
}

inline Tensor maxpool2d_backward(const Tensor& grad_out, const MaxPoolCache& cache) {
    if (!cache.valid) throw StateError("maxpool2d_backward: no forward cache");
    if (grad_out.numel() != cache.argmax.size())
        throw DimensionError("maxpool2d_backward: grad_out does not match forward output");
    Tensor gin(cache.shape_in);
    for (std::size_t o = 0; o < cache.argmax.size(); ++o)
        gin.data[static_cast<std::size_t>(cache.argmax[o])] += grad_out.data[o];
    return gin;
}

// ---------------------------------------------------------------------------
// dense: out = W x + b, weights [m,n], input [n]
// ---------------------------------------------------------------------------

struct DenseCache {
    Tensor input;
    Tensor weights;
    bool valid = false;
};

inline Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias,
                    DenseCache* cache = nullptr) {
    if (weights.rank() != 2) throw DimensionError("dense: weights must be [m,n]");
    const int m = weights.dim(0), n = weights.dim(1);
    if (static_cast<std::size_t>(n) != input.numel())
        throw DimensionError("dense: weight inner dim " + std::to_string(n) +
                             " does not match input length " + std::to_string(input.numel()));
    if (bias.rank() != 1 || bias.dim(0) != m) throw DimensionError("dense: bias must be [m]");
    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        double acc = bias(i);
        const float* wrow = &weights.data[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) acc += static_cast<double>(wrow[j]) * input.data[j];
        out(i) = static_cast<float>(acc);
    }
    if (cache) {
        cache->input = input;
        cache->weights = weights;
        cache->valid = true;
    }
    return out;
}

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

inline DenseGrads dense_backward(const Tensor& grad_out, const DenseCache& cache) {
    if (!cache.valid) throw StateError("dense_backward: no forward cache");
    const int m = cache.weights.dim(0), n = cache.weights.dim(1);
    if (grad_out.numel() != static_cast<std::size_t>(m))
        throw DimensionError("dense_backward: grad_out length mismatch");
    DenseGrads g{Tensor(cache.input.shape), Tensor(cache.weights.shape), Tensor({m})};
    for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += static_cast<double>(grad_out.data[i]) * cache.weights(i, j);
        g.input.data[static_cast<std::size_t>(j)] = static_cast<float>(acc);
    }
    for (int i = 0; i < m; ++i) {
        const float go = grad_out.data[i];
        g.bias(i) = go;
        float* grow = &g.weights.data[static_cast<std::size_t>(i) * n];
        for (int j = 0; j < n; ++j) grow[j] = go * cache.input.data[j];
    }
    return g;
}

// ---------------------------------------------------------------------------
// softmax and cross-entropy
// ---------------------------------------------------------------------------

struct SoftmaxResult {
    double loss = 0.0;
    Tensor probs;
};

/// Max-stabilized softmax. Probabilities are computed in double and stored f32.
inline Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1 || logits.numel() == 0) throw DimensionError("softmax: logits must be [K], K>=1");
    const int k = logits.dim(0);
    double mx = logits(0);
    for (int i = 1; i < k; ++i) mx = std::max(mx, static_cast<double>(logits(i)));
    std::vector<double> e(static_cast<std::size_t>(k));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        e[i] = std::exp(static_cast<double>(logits(i)) - mx);
        sum += e[i];
    }
    Tensor probs({k});
    for (int i = 0; i < k; ++i) probs(i) = static_cast<float>(e[i] / sum);
    return probs;
}

/// Full-Jacobian softmax backward: dz_i = p_i (g_i - sum_j g_j p_j).
inline Tensor softmax_backward(const Tensor& grad_probs, const Tensor& probs) {
    require_same_shape(grad_probs, probs, "softmax_backward");
    const int k = probs.dim(0);
    double dot = 0.0;
    for (int i = 0; i < k; ++i) dot += static_cast<double>(grad_probs(i)) * probs(i);
    Tensor gz({k});
    for (int i = 0; i < k; ++i)
        gz(i) = static_cast<float>(static_cast<double>(probs(i)) * (grad_probs(i) - dot));
    return gz;
}

/// Fused softmax + cross-entropy. Loss is computed via log-sum-exp so that
/// extreme logits stay finite.
inline SoftmaxResult softmax_cross_entropy(const Tensor& logits, int label) {
    if (logits.rank() != 1) throw DimensionError("softmax_cross_entropy: logits must be [K]");
    const int k = logits.dim(0);
    if (label < 0 || label >= k)
        throw ArgumentError("softmax_cross_entropy: label " + std::to_string(label) + " out of range [0," +
                            std::to_string(k) + ")");
    double mx = logits(0);
    for (int i = 1; i < k; ++i) mx = std::max(mx, static_cast<double>(logits(i)));
    double sum = 0.0;
    for (int i = 0; i < k; ++i) sum += std::exp(static_cast<double>(logits(i)) - mx);
    SoftmaxResult r;
    r.probs = Tensor({k});
    for (int i = 0; i < k; ++i)
        r.probs(i) = static_cast<float>(std::exp(static_cast<double>(logits(i)) - mx) / sum);
    r.loss = -(static_cast<double>(logits(label)) - mx - std::log(sum));
    if (!std::isfinite(r.loss)) throw NumericError("softmax_cross_entropy: non-finite loss");
    return r;
}

/// Gradient of softmax_cross_entropy w.r.t. logits: probs - onehot(label).
inline Tensor softmax_cross_entropy_backward(const Tensor& probs, int label) {
    Tensor g = probs;
    g(label) -= 1.0f;
    return g;
}

// ---------------------------------------------------------------------------
// dropout (inverted: scaled at train time, identity at inference)
// ---------------------------------------------------------------------------

struct DropoutCache {
    std::vector<std::uint8_t> kept;
    float scale = 1.0f;
    bool training = false;
    bool valid = false;
};

inline Tensor dropout(const Tensor& input, float rate, RngState& rng, bool training,
                      DropoutCache* cache = nullptr) {
    if (rate < 0.0f || rate >= 1.0f) throw ArgumentError("dropout: rate must be in [0,1)");
    Tensor out = input;
    DropoutCache local;
    local.training = training && rate > 0.0f;
    if (local.training) {
        local.scale = 1.0f / (1.0f - rate);
        local.kept.resize(input.numel());
        for (std::size_t i = 0; i < input.numel(); ++i) {
            const bool keep = rng.uniform_f32() >= rate;
            local.kept[i] = keep ? 1 : 0;
            out.data[i] = keep ? input.data[i] * local.scale : 0.0f;
        }
    }
    local.valid = true;
    if (cache) *cache = std::move(local);
    return out;
}

inline Tensor dropout_backward(const Tensor& grad_out, const DropoutCache& cache) {
    if (!cache.valid) throw StateError("dropout_backward: no forward cache");
    if (!cache.training) return grad_out;
    if (grad_out.numel() != cache.kept.size())
        throw DimensionError("dropout_backward: grad_out does not match forward shape");
    Tensor gin = grad_out;
    for (std::size_t i = 0; i < gin.numel(); ++i)
        gin.data[i] = cache.kept[i] ? grad_out.data[i] * cache.scale : 0.0f;
    return gin;
}

// ---------------------------------------------------------------------------
// conv3d_depthwise: stack [D,N,H,W] * kernels [D,3,3,3], zero pad 1 on the
// view/height/width axes, each channel convolved with its own kernel.
// ---------------------------------------------------------------------------

struct Conv3dCache {
    Tensor input;
    Tensor kernels;
    bool valid = false;
};

inline Tensor conv3d_depthwise(const Tensor& stack, const Tensor& kernels, Conv3dCache* cache = nullptr) {
    if (stack.rank() != 4) throw DimensionError("conv3d_depthwise: stack must be [D,N,H,W]");
    const int d = stack.dim(0), n = stack.dim(1), h = stack.dim(2), w = stack.dim(3);
    if (n < 1 || h < 1 || w < 1) throw DimensionError("conv3d_depthwise: empty stack axes");
    if (kernels.rank() != 4 || kernels.dim(0) != d || kernels.dim(1) != 3 || kernels.dim(2) != 3 ||
        kernels.dim(3) != 3)
        throw DimensionError("conv3d_depthwise: kernels must be [D,3,3,3] with D=" + std::to_string(d));

    Tensor out({d, n, h, w});
    for (int ch = 0; ch < d; ++ch) {
        for (int on = 0; on < n; ++on) {
            for (int oy = 0; oy < h; ++oy) {
                for (int ox = 0; ox < w; ++ox) {
                    double acc = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const int in_ = on + a - 1;
                        if (in_ < 0 || in_ >= n) continue;
                        for (int b = 0; b < 3; ++b) {
                            const int iy = oy + b - 1;
                            if (iy < 0 || iy >= h) continue;
                            for (int c = 0; c < 3; ++c) {
                                const int ix = ox + c - 1;
                                if (ix < 0 || ix >= w) continue;
                                acc += static_cast<double>(stack(ch, in_, iy, ix)) * kernels(ch, a, b, c);
                            }
                        }
                    }
                    out(ch, on, oy, ox) = static_cast<float>(acc);
                }
            }
        }
    }

    if (cache) {
        cache->input = stack;
        cache->kernels = kernels;
        cache->valid = true;
    }
    return out;
}

struct Conv3dGrads {
    Tensor input;
    Tensor kernels;
};

inline Conv3dGrads conv3d_depthwise_backward(const Tensor& grad_out, const Conv3dCache& cache) {
    if (!cache.valid) throw StateError("conv3d_depthwise_backward: no forward cache");
    const Tensor& input = cache.input;
    const Tensor& kernels = cache.kernels;
    require_same_shape(grad_out, input, "conv3d_depthwise_backward");
    const int d = input.dim(0), n = input.dim(1), h = input.dim(2), w = input.dim(3);

    std::vector<double> gin(input.numel(), 0.0);
    std::vector<double> gker(kernels.numel(), 0.0);
    for (int ch = 0; ch < d; ++ch) {
        for (int on = 0; on < n; ++on) {
            for (int oy = 0; oy < h; ++oy) {
                for (int ox = 0; ox < w; ++ox) {
                    const double go = grad_out(ch, on, oy, ox);
                    if (go == 0.0) continue;
                    for (int a = 0; a < 3; ++a) {
                        const int in_ = on + a - 1;
                        if (in_ < 0 || in_ >= n) continue;
                        for (int b = 0; b < 3; ++b) {
                            const int iy = oy + b - 1;
                            if (iy < 0 || iy >= h) continue;
                            for (int c = 0; c < 3; ++c) {
                                const int ix = ox + c - 1;
                                if (ix < 0 || ix >= w) continue;
                                const std::size_t in_idx =
                                    ((static_cast<std::size_t>(ch) * n + in_) * h + iy) * w + ix;
                                const std::size_t k_idx =
                                    ((static_cast<std::size_t>(ch) * 3 + a) * 3 + b) * 3 + c;
                                gin[in_idx] += go * kernels.data[k_idx];
                                gker[k_idx] += go * input.data[in_idx];
                            }
                        }
                    }
                }
            }
        }
    }

    Conv3dGrads g{Tensor(input.shape), Tensor(kernels.shape)};
    for (std::size_t i = 0; i < gin.size(); ++i) g.input.data[i] = static_cast<float>(gin[i]);
    for (std::size_t i = 0; i < gker.size(); ++i) g.kernels.data[i] = static_cast<float>(gker[i]);
    return g;
}

/// Kernels that reproduce the input: 1 at the kernel center, 0 elsewhere.
inline Tensor center_one_kernels(int depth) {
    Tensor k({depth, 3, 3, 3});
    for (int d = 0; d < depth; ++d) k(d, 1, 1, 1) = 1.0f;
    return k;
}

} // namespace dain
