#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dain/error.hpp"
#include "dain/multiview.hpp"
#include "dain/ops.hpp"
#include "dain/optim.hpp"
#include "dain/rng.hpp"
#include "dain/tensor.hpp"

namespace dain {

// ---------------------------------------------------------------------------
// Specification
// ---------------------------------------------------------------------------

enum class LayerKind { Conv, Relu, Pool, Flatten, Dense, Dropout };

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int out_channels = 0, kernel = 0, stride = 1, pad = 0;  // conv
    int window = 0, pool_stride = 0;                        // pool
    int units = 0;                                          // dense
    float rate = 0.0f;                                      // dropout

    static LayerSpec conv(int out_channels, int kernel, int stride = 1, int pad = 0) {
        LayerSpec l;
        l.kind = LayerKind::Conv;
        l.out_channels = out_channels;
        l.kernel = kernel;
        l.stride = stride;
        l.pad = pad;
        return l;
    }
    static LayerSpec relu() { return LayerSpec{}; }
    static LayerSpec pool(int window, int stride) {
        LayerSpec l;
        l.kind = LayerKind::Pool;
        l.window = window;
        l.pool_stride = stride;
        return l;
    }
    static LayerSpec flatten() {
        LayerSpec l;
        l.kind = LayerKind::Flatten;
        return l;
    }
    static LayerSpec dense(int units) {
        LayerSpec l;
        l.kind = LayerKind::Dense;
        l.units = units;
        return l;
    }
    static LayerSpec dropout(float rate) {
        LayerSpec l;
        l.kind = LayerKind::Dropout;
        l.rate = rate;
        return l;
    }
};

/// Two-stream combination point and style.
enum class FusionArch { Single, Final, Intermediate, Dain };
enum class FusionOp { Sum, Max };
enum class Combiner { Voting, Pooling, Filter3d };

struct NetworkSpec {
    int input_channels = 3;
    int input_size = 32;  // square input
    std::vector<LayerSpec> backbone;
    FusionArch fusion_arch = FusionArch::Dain;
    FusionOp fusion_op = FusionOp::Sum;
    int fusion_layer = -1;  // index of the post-activation feature-map tap
    int num_classes = 2;

    /// Default desk-scale backbone: three conv-relu-pool blocks (16/32/32
    /// channels), dense 128, relu, dropout 0.5, classifier head. The fusion
    /// tap sits after the third block's ReLU.
    static NetworkSpec toy(int num_classes, FusionArch arch, FusionOp op = FusionOp::Sum,
                           int input_size = 32, int input_channels = 3) {
        NetworkSpec s;
        s.input_channels = input_channels;
        s.input_size = input_size;
        s.fusion_arch = arch;
        s.fusion_op = op;
        s.num_classes = num_classes;
        s.backbone = {LayerSpec::conv(16, 3, 1, 1), LayerSpec::relu(), LayerSpec::pool(2, 2),
                      LayerSpec::conv(32, 3, 1, 1), LayerSpec::relu(), LayerSpec::pool(2, 2),
                      LayerSpec::conv(32, 3, 1, 1), LayerSpec::relu(), LayerSpec::pool(2, 2),
                      LayerSpec::flatten(),         LayerSpec::dense(128), LayerSpec::relu(),
                      LayerSpec::dropout(0.5f),     LayerSpec::dense(num_classes)};
        s.fusion_layer = 7;
        return s;
    }
};

inline const char* to_string(FusionArch a) {
    switch (a) {
        case FusionArch::Single: return "single";
        case FusionArch::Final: return "final";
        case FusionArch::Intermediate: return "intermediate";
        case FusionArch::Dain: return "dain";
    }
    return "?";
}
inline const char* to_string(FusionOp o) { return o == FusionOp::Sum ? "sum" : "max"; }
inline const char* to_string(Combiner c) {
    switch (c) {
        case Combiner::Voting: return "voting";
        case Combiner::Pooling: return "pooling";
        case Combiner::Filter3d: return "filter3d";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Feature-map fusion
// ---------------------------------------------------------------------------

struct FuseCache {
    FusionOp op = FusionOp::Sum;
    std::vector<std::uint8_t> pick_a;  // max only: 1 where x_a won
    bool valid = false;
};

/// Pointwise combination of two equal-shape feature maps. Max ties go to x_a.
inline Tensor fuse_maps(const Tensor& x_a, const Tensor& x_b, FusionOp op, FuseCache* cache = nullptr) {
    require_same_shape(x_a, x_b, "fuse_maps");
    Tensor out(x_a.shape);
    FuseCache local;
    local.op = op;
    if (op == FusionOp::Sum) {
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = x_a.data[i] + x_b.data[i];
    } else {
        local.pick_a.resize(out.numel());
        for (std::size_t i = 0; i < out.numel(); ++i) {
            const bool a_wins = x_a.data[i] >= x_b.data[i];
            local.pick_a[i] = a_wins ? 1 : 0;
            out.data[i] = a_wins ? x_a.data[i] : x_b.data[i];
        }
    }
    local.valid = true;
    if (cache) *cache = std::move(local);
    return out;
}

/// Sum routes the gradient to both inputs; max routes it to the winner.
inline std::pair<Tensor, Tensor> fuse_maps_backward(const Tensor& grad_out, const FuseCache& cache) {
    if (!cache.valid) throw StateError("fuse_maps_backward: no forward cache");
    if (cache.op == FusionOp::Sum) return {grad_out, grad_out};
    if (grad_out.numel() != cache.pick_a.size())
        throw DimensionError("fuse_maps_backward: grad shape mismatch");
    Tensor ga(grad_out.shape), gb(grad_out.shape);
    for (std::size_t i = 0; i < grad_out.numel(); ++i) {
        if (cache.pick_a[i])
            ga.data[i] = grad_out.data[i];
        else
            gb.data[i] = grad_out.data[i];
    }
    return {std::move(ga), std::move(gb)};
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// Frozen/trainable scopes used by the staged training schedule.
enum class StageScope { LastDense, AllDense, PostFusion, All };

inline const char* to_string(StageScope s) {
    switch (s) {
        case StageScope::LastDense: return "last_dense";
        case StageScope::AllDense: return "all_dense";
        case StageScope::PostFusion: return "post_fusion";
        case StageScope::All: return "all";
    }
    return "?";
}

struct ViewInput {
    Tensor view;          // I_v
    Tensor differential;  // I_delta; may be empty for the single architecture
};

struct MultiviewResult {
    int chosen_class = 0;
    Prediction prediction;  // voting reports the mean per-view probs
};

class Network {
public:
    Network(NetworkSpec spec, RngState build_rng) : spec_(std::move(spec)) {
        validate_spec();
        allocate(build_rng);
    }

    const NetworkSpec& spec() const { return spec_; }

    bool uses_stream_b() const { return spec_.fusion_arch != FusionArch::Single; }
    bool fuses_at_m() const {
        return spec_.fusion_arch == FusionArch::Intermediate || spec_.fusion_arch == FusionArch::Dain;
    }

    std::vector<std::pair<std::string, Parameter*>> named_parameters() {
        std::vector<std::pair<std::string, Parameter*>> out;
        auto add_stream = [&](const char* tag, std::vector<LayerParams>& stream) {
            for (std::size_t i = 0; i < stream.size(); ++i) {
                if (!stream[i].present) continue;
                const std::string base = std::string(tag) + ".layer" + (i < 10 ? "0" : "") + std::to_string(i);
                out.emplace_back(base + ".weight", &stream[i].weight);
                out.emplace_back(base + ".bias", &stream[i].bias);
            }
        };
        add_stream("a", stream_a_);
        if (uses_stream_b()) add_stream("b", stream_b_);
        if (bank_pure_.value.numel() > 0) out.emplace_back("bank.pure", &bank_pure_);
        if (bank_fused_.value.numel() > 0) out.emplace_back("bank.fused", &bank_fused_);
        return out;
    }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        for (auto& [name, p] : named_parameters()) out.push_back(p);
        return out;
    }

    void zero_grads() {
        for (Parameter* p : parameters()) p->zero_grad();
    }

    /// Override the dropout rate of every dropout layer.
    void set_dropout_rate(float rate) {
        if (rate < 0.0f || rate >= 1.0f) throw ArgumentError("set_dropout_rate: rate must be in [0,1)");
        for (auto& l : spec_.backbone)
            if (l.kind == LayerKind::Dropout) l.rate = rate;
    }

    /// Freeze/unfreeze parameters for one stage of the training schedule.
    void set_trainable(StageScope scope) {
        if (scope == StageScope::PostFusion && !fuses_at_m())
            throw ArgumentError("post_fusion stage scope requires an architecture fusing at M");
        auto apply = [&](std::vector<LayerParams>& stream, bool is_a) {
            int last_dense = -1;
            for (std::size_t i = 0; i < stream.size(); ++i)
                if (stream[i].present && spec_.backbone[i].kind == LayerKind::Dense)
                    last_dense = static_cast<int>(i);
            for (std::size_t i = 0; i < stream.size(); ++i) {
                if (!stream[i].present) continue;
                bool trainable = false;
                switch (scope) {
                    case StageScope::All: trainable = true; break;
                    case StageScope::AllDense: trainable = spec_.backbone[i].kind == LayerKind::Dense; break;
                    case StageScope::LastDense: trainable = static_cast<int>(i) == last_dense; break;
                    case StageScope::PostFusion:
                        trainable = static_cast<int>(i) > spec_.fusion_layer;
                        break;
                }
                (void)is_a;
                stream[i].weight.frozen = !trainable;
                stream[i].bias.frozen = !trainable;
            }
        };
        apply(stream_a_, true);
        if (uses_stream_b()) apply(stream_b_, false);
        const bool banks_on = scope == StageScope::All || scope == StageScope::PostFusion;
        bank_pure_.frozen = !banks_on;
        bank_fused_.frozen = !banks_on;
    }

    // -- single view ---------------------------------------------------------

    Prediction forward(const Tensor& view, const Tensor* differential, bool training, RngState& rng) {
        route_reset();
        run_heads(view, differential, training, rng);
        return Prediction::from_probs(last_probs_);
    }

    /// Cross-entropy loss of one sample; with_grad accumulates parameter
    /// gradients (scaled by grad_scale) via hand-written backward passes.
    double compute_loss(const Tensor& view, const Tensor* differential, int label, bool training,
                        RngState& rng, bool with_grad, float grad_scale = 1.0f) {
        route_reset();
        return compute_loss_inner(view, differential, label, training, rng, with_grad, grad_scale);
    }

    // -- multiview -----------------------------------------------------------

    MultiviewResult forward_multiview(const std::vector<ViewInput>& views, Combiner combiner, bool training,
                                      RngState& rng) {
        check_views(views, combiner);
        route_reset();
        MultiviewResult out;
        if (combiner == Combiner::Voting) {
            std::vector<Prediction> preds;
            preds.reserve(views.size());
            Tensor mean({spec_.num_classes});
            for (const auto& v : views) {
                run_heads(v.view, two_stream_input(v), training, rng);
                Prediction p = Prediction::from_probs(last_probs_);
                for (int c = 0; c < spec_.num_classes; ++c) mean(c) += p.probs(c) / static_cast<float>(views.size());
                preds.push_back(std::move(p));
            }
            out.chosen_class = multiview_vote(preds);
            out.prediction = Prediction::from_probs(mean);
            out.prediction.top_class = out.chosen_class;
            return out;
        }
        run_heads_multiview(views, combiner, training, rng);
        out.prediction = Prediction::from_probs(last_probs_);
        out.chosen_class = out.prediction.top_class;
        return out;
    }

    double compute_loss_multiview(const std::vector<ViewInput>& views, int label, Combiner combiner,
                                  bool training, RngState& rng, bool with_grad, float grad_scale = 1.0f) {
        check_views(views, combiner);
        route_reset();
        if (combiner == Combiner::Voting) {
            // Voting trains each view independently; the sample loss is the
            // mean per-view loss.
            double acc = 0.0;
            const float scale = grad_scale / static_cast<float>(views.size());
            for (const auto& v : views)
                acc += compute_loss_inner(v.view, two_stream_input(v), label, training, rng, with_grad,
                                          scale);
            return acc / static_cast<double>(views.size());
        }
        run_heads_multiview(views, combiner, training, rng);
        const double loss = head_loss(label);
        if (with_grad) backward_heads_multiview(label, grad_scale);
        return loss;
    }

    // -- verification hooks ---------------------------------------------------

    void record_route(bool on) { route_recording_ = on; }
    std::uint64_t route_hash() const { return route_; }

    /// Shape of the feature map at the fusion tap.
    std::vector<int> fusion_map_shape() const {
        if (spec_.fusion_layer < 0) throw StateError("network has no fusion layer");
        return out_shapes_[static_cast<std::size_t>(spec_.fusion_layer)];
    }

    Parameter& pure_bank() { return bank_pure_; }
    Parameter& fused_bank() { return bank_fused_; }

    struct LayerParams {
        Parameter weight, bias;
        bool present = false;
    };

    std::vector<LayerParams>& stream_params(char which) { return which == 'a' ? stream_a_ : stream_b_; }

private:
    // ---- construction ------------------------------------------------------

    void validate_spec() {
        if (spec_.backbone.empty()) throw SpecError("network spec: empty backbone");
        if (spec_.num_classes < 2) throw SpecError("network spec: need at least 2 classes");
        if (spec_.input_channels < 1 || spec_.input_size < 1)
            throw SpecError("network spec: bad input dims");
        const auto& last = spec_.backbone.back();
        if (last.kind != LayerKind::Dense || last.units != spec_.num_classes)
            throw SpecError("network spec: backbone must end in a dense layer with num_classes units");

        // Propagate shapes; this also validates conv/pool feasibility.
        std::vector<int> shape{spec_.input_channels, spec_.input_size, spec_.input_size};
        flatten_index_ = -1;
        out_shapes_.clear();
        for (std::size_t i = 0; i < spec_.backbone.size(); ++i) {
            const LayerSpec& l = spec_.backbone[i];
            switch (l.kind) {
                case LayerKind::Conv: {
                    if (shape.size() != 3) throw SpecError("network spec: conv after flatten");
                    const int h = shape[1], w = shape[2];
                    const int ho = (h + 2 * l.pad - l.kernel) / l.stride + 1;
                    const int wo = (w + 2 * l.pad - l.kernel) / l.stride + 1;
                    if (l.kernel < 1 || ho < 1 || wo < 1)
                        throw SpecError("network spec: conv shrinks input away at layer " + std::to_string(i));
                    shape = {l.out_channels, ho, wo};
                    break;
                }
                case LayerKind::Pool: {
                    if (shape.size() != 3) throw SpecError("network spec: pool after flatten");
                    const int ho = (shape[1] - l.window) / l.pool_stride + 1;
                    const int wo = (shape[2] - l.window) / l.pool_stride + 1;
                    if (l.window < 1 || ho < 1 || wo < 1)
                        throw SpecError("network spec: pool shrinks input away at layer " + std::to_string(i));
                    shape = {shape[0], ho, wo};
                    break;
                }
                case LayerKind::Flatten: {
                    if (shape.size() != 3) throw SpecError("network spec: flatten applied twice");
                    flatten_index_ = static_cast<int>(i);
                    shape = {shape[0] * shape[1] * shape[2]};
                    break;
                }
                case LayerKind::Dense: {
                    if (shape.size() != 1)
                        throw SpecError("network spec: dense needs flattened input at layer " +
                                        std::to_string(i));
                    shape = {l.units};
                    break;
                }
                case LayerKind::Relu:
                case LayerKind::Dropout: break;
            }
            out_shapes_.push_back(shape);
        }

        if (fuses_at_m() || spec_.fusion_layer >= 0) {
            const int m = spec_.fusion_layer;
            const bool m_valid = m >= 0 && m < static_cast<int>(spec_.backbone.size()) &&
                                 spec_.backbone[static_cast<std::size_t>(m)].kind == LayerKind::Relu &&
                                 (flatten_index_ < 0 || m < flatten_index_);
            if (fuses_at_m() && !m_valid)
                throw SpecError("network spec: fusion_layer must point at a post-ReLU feature map");
            if (!fuses_at_m() && !m_valid) spec_.fusion_layer = -1;  // optional tap is unusable
        }
    }

    void allocate(RngState& build_rng) {
        const bool a_full = spec_.fusion_arch != FusionArch::Intermediate;
        allocate_stream(stream_a_, 0, build_rng,
                        a_full ? static_cast<int>(spec_.backbone.size()) - 1 : spec_.fusion_layer);
        if (uses_stream_b())
            allocate_stream(stream_b_, 1, build_rng, static_cast<int>(spec_.backbone.size()) - 1);

        if (spec_.fusion_layer >= 0) {
            const int depth = out_shapes_[static_cast<std::size_t>(spec_.fusion_layer)][0];
            // Banks start at the identity so an untrained 3D filter equals
            // plain view pooling.
            if (spec_.fusion_arch == FusionArch::Single || spec_.fusion_arch == FusionArch::Dain)
                bank_pure_ = Parameter(center_one_kernels(depth));
            if (fuses_at_m()) bank_fused_ = Parameter(center_one_kernels(depth));
        }
    }

    void allocate_stream(std::vector<LayerParams>& stream, int stream_idx, RngState& build_rng,
                         int max_layer) {
        stream.assign(spec_.backbone.size(), {});
        int last_dense = -1;
        for (std::size_t i = 0; i < spec_.backbone.size(); ++i)
            if (spec_.backbone[i].kind == LayerKind::Dense && static_cast<int>(i) <= max_layer)
                last_dense = static_cast<int>(i);

        std::vector<int> shape{spec_.input_channels, spec_.input_size, spec_.input_size};
        for (std::size_t i = 0; i < spec_.backbone.size(); ++i) {
            const LayerSpec& l = spec_.backbone[i];
            const std::vector<int>& in_shape = i == 0 ? shape : out_shapes_[i - 1];
            if (static_cast<int>(i) > max_layer) break;
            if (l.kind == LayerKind::Conv) {
                const int cin = in_shape[0];
                RngState r = build_rng.split(fnv1a_u64(static_cast<std::uint64_t>(stream_idx) * 1000 + i));
                const double s = std::sqrt(6.0 / (static_cast<double>(cin) * l.kernel * l.kernel +
                                                  static_cast<double>(l.out_channels) * l.kernel * l.kernel));
                Tensor w({l.out_channels, cin, l.kernel, l.kernel});
                for (auto& v : w.data) v = static_cast<float>(r.uniform_in(-s, s));
                stream[i].weight = Parameter(std::move(w));
                stream[i].bias = Parameter(Tensor({l.out_channels}));
                stream[i].present = true;
            } else if (l.kind == LayerKind::Dense) {
                const int n = in_shape[0];
                RngState r = build_rng.split(fnv1a_u64(static_cast<std::uint64_t>(stream_idx) * 1000 + i));
                const double s = std::sqrt(6.0 / (static_cast<double>(n) + l.units));
                Tensor w({l.units, n});
                for (auto& v : w.data) v = static_cast<float>(r.uniform_in(-s, s));
                // The classifier head trains at 10x the base learning rate.
                const float lr_scale = static_cast<int>(i) == last_dense ? 10.0f : 1.0f;
                stream[i].weight = Parameter(std::move(w), lr_scale);
                stream[i].bias = Parameter(Tensor({l.units}), lr_scale);
                stream[i].present = true;
            }
        }
    }

    // ---- per-layer execution -------------------------------------------------

    struct LayerCache {
        Conv2dCache conv;
        ReluCache relu;
        MaxPoolCache pool;
        DenseCache dense;
        DropoutCache dropout;
        std::vector<int> flatten_in_shape;
    };
    using StreamCache = std::vector<LayerCache>;

    void mix_route_bytes(const void* p, std::size_t n) {
        if (route_recording_) route_ = fnv1a(p, n, route_);
    }

    /// Run layers [from, to) of one stream.
    Tensor forward_range(std::vector<LayerParams>& stream, StreamCache& cache, Tensor input, int from,
                         int to, bool training, RngState& rng) {
        if (cache.size() != spec_.backbone.size()) cache.assign(spec_.backbone.size(), {});
        Tensor x = std::move(input);
        for (int i = from; i < to; ++i) {
            const LayerSpec& l = spec_.backbone[static_cast<std::size_t>(i)];
            LayerCache& c = cache[static_cast<std::size_t>(i)];
            switch (l.kind) {
                case LayerKind::Conv:
                    x = conv2d(x, stream[static_cast<std::size_t>(i)].weight.value,
                               stream[static_cast<std::size_t>(i)].bias.value, l.stride, l.pad, &c.conv);
                    break;
                case LayerKind::Relu: {
                    x = relu(x, &c.relu);
                    if (route_recording_) {
                        std::vector<std::uint8_t> mask(x.numel());
                        for (std::size_t j = 0; j < x.numel(); ++j)
                            mask[j] = c.relu.input.data[j] > 0.0f ? 1 : 0;
                        mix_route_bytes(mask.data(), mask.size());
                    }
                    break;
                }
                case LayerKind::Pool:
                    x = maxpool2d(x, l.window, l.pool_stride, &c.pool);
                    mix_route_bytes(c.pool.argmax.data(), c.pool.argmax.size() * sizeof(std::int32_t));
                    break;
                case LayerKind::Flatten: {
                    c.flatten_in_shape = x.shape;
                    const int flat = static_cast<int>(x.numel());
                    x = Tensor({flat}, std::move(x.data));
                    break;
                }
                case LayerKind::Dense:
                    x = dense(x, stream[static_cast<std::size_t>(i)].weight.value,
                              stream[static_cast<std::size_t>(i)].bias.value, &c.dense);
                    break;
                case LayerKind::Dropout:
                    x = dropout(x, l.rate, rng, training, &c.dropout);
                    break;
            }
        }
        return x;
    }

    /// Backward through layers [from, to) in reverse; accumulates parameter
    /// gradients and returns the gradient at the input of layer `from`.
    Tensor backward_range(std::vector<LayerParams>& stream, StreamCache& cache, Tensor grad, int from,
                          int to) {
        for (int i = to - 1; i >= from; --i) {
            const LayerSpec& l = spec_.backbone[static_cast<std::size_t>(i)];
            LayerCache& c = cache[static_cast<std::size_t>(i)];
            switch (l.kind) {
                case LayerKind::Conv: {
                    const Conv2dGrads g = conv2d_backward(grad, c.conv);
                    accumulate(stream[static_cast<std::size_t>(i)].weight.gradient, g.kernels);
                    accumulate(stream[static_cast<std::size_t>(i)].bias.gradient, g.bias);
                    grad = g.input;
                    break;
                }
                case LayerKind::Relu: grad = relu_backward(grad, c.relu); break;
                case LayerKind::Pool: grad = maxpool2d_backward(grad, c.pool); break;
                case LayerKind::Flatten: grad = Tensor(c.flatten_in_shape, std::move(grad.data)); break;
                case LayerKind::Dense: {
                    const DenseGrads g = dense_backward(grad, c.dense);
                    accumulate(stream[static_cast<std::size_t>(i)].weight.gradient, g.weights);
                    accumulate(stream[static_cast<std::size_t>(i)].bias.gradient, g.bias);
                    grad = g.input;
                    break;
                }
                case LayerKind::Dropout: grad = dropout_backward(grad, c.dropout); break;
            }
        }
        return grad;
    }

    static void accumulate(Tensor& into, const Tensor& g) {
        for (std::size_t i = 0; i < into.numel(); ++i) into.data[i] += g.data[i];
    }

    void check_input(const Tensor& t, const char* what) const {
        if (t.rank() != 3 || t.dim(0) != spec_.input_channels || t.dim(1) != spec_.input_size ||
            t.dim(2) != spec_.input_size)
            throw DimensionError(std::string(what) + ": expected [" + std::to_string(spec_.input_channels) +
                                 "," + std::to_string(spec_.input_size) + "," +
                                 std::to_string(spec_.input_size) + "], got " + t.shape_str());
    }

    const Tensor* two_stream_input(const ViewInput& v) const {
        return v.differential.empty() ? nullptr : &v.differential;
    }

    void route_reset() { route_ = 0xCBF29CE484222325ull; }

    double compute_loss_inner(const Tensor& view, const Tensor* differential, int label, bool training,
                              RngState& rng, bool with_grad, float grad_scale) {
        if (label < 0 || label >= spec_.num_classes)
            throw ArgumentError("compute_loss: label out of range");
        run_heads(view, differential, training, rng);
        const double loss = head_loss(label);
        if (with_grad) backward_heads(label, grad_scale);
        return loss;
    }

    // ---- single-view heads ---------------------------------------------------

    /// Runs the architecture and fills last_probs_ / per-head state.
    void run_heads(const Tensor& view, const Tensor* differential, bool training, RngState& rng) {
        check_input(view, "forward: I_v");
        const bool two_stream = uses_stream_b();
        if (two_stream) {
            if (!differential) throw ArgumentError("forward: two-stream architecture needs I_delta");
            check_input(*differential, "forward: I_delta");
        }
        const int end = static_cast<int>(spec_.backbone.size());
        const int m = spec_.fusion_layer;
        head_b_active_ = false;

        switch (spec_.fusion_arch) {
            case FusionArch::Single: {
                logits_a_ = forward_range(stream_a_, cache_a_, view, 0, end, training, rng);
                probs_a_ = softmax(logits_a_);
                last_probs_ = probs_a_;
                break;
            }
            case FusionArch::Final: {
                logits_a_ = forward_range(stream_a_, cache_a_, view, 0, end, training, rng);
                logits_b_ = forward_range(stream_b_, cache_b_, *differential, 0, end, training, rng);
                probs_a_ = softmax(logits_a_);
                probs_b_ = softmax(logits_b_);
                last_probs_ = average_probs(probs_a_, probs_b_);
                head_b_active_ = true;
                break;
            }
            case FusionArch::Intermediate: {
                const Tensor map_a = forward_range(stream_a_, cache_a_, view, 0, m + 1, training, rng);
                const Tensor map_b =
                    forward_range(stream_b_, cache_b_, *differential, 0, m + 1, training, rng);
                const Tensor fused = fuse_maps(map_a, map_b, spec_.fusion_op, &fuse_cache_);
                mix_fuse_route();
                logits_b_ = forward_range(stream_b_, cache_b_, fused, m + 1, end, training, rng);
                probs_b_ = softmax(logits_b_);
                last_probs_ = probs_b_;
                head_b_active_ = true;
                break;
            }
            case FusionArch::Dain: {
                const Tensor map_a = forward_range(stream_a_, cache_a_, view, 0, m + 1, training, rng);
                const Tensor map_b =
                    forward_range(stream_b_, cache_b_, *differential, 0, m + 1, training, rng);
                logits_a_ = forward_range(stream_a_, cache_a_, map_a, m + 1, end, training, rng);
                const Tensor fused = fuse_maps(map_a, map_b, spec_.fusion_op, &fuse_cache_);
                mix_fuse_route();
                logits_b_ = forward_range(stream_b_, cache_b_, fused, m + 1, end, training, rng);
                probs_a_ = softmax(logits_a_);
                probs_b_ = softmax(logits_b_);
                last_probs_ = average_probs(probs_a_, probs_b_);
                head_b_active_ = true;
                break;
            }
        }
        multiview_state_ = false;
    }

    void mix_fuse_route() {
        if (route_recording_ && fuse_cache_.op == FusionOp::Max)
            mix_route_bytes(fuse_cache_.pick_a.data(), fuse_cache_.pick_a.size());
    }

    bool averaged_heads() const {
        return spec_.fusion_arch == FusionArch::Final || spec_.fusion_arch == FusionArch::Dain;
    }

    double head_loss(int label) {
        label_ = label;
        double loss;
        if (averaged_heads()) {
            const double p = 0.5 * (static_cast<double>(probs_a_(label)) + probs_b_(label));
            loss = -std::log(p);
        } else {
            // Recompute from logits via log-sum-exp for stability.
            const Tensor& logits = spec_.fusion_arch == FusionArch::Single ? logits_a_ : logits_b_;
            double mx = logits(0);
            for (int i = 1; i < logits.dim(0); ++i) mx = std::max(mx, static_cast<double>(logits(i)));
            double sum = 0.0;
            for (int i = 0; i < logits.dim(0); ++i)
                sum += std::exp(static_cast<double>(logits(i)) - mx);
            loss = -(static_cast<double>(logits(label)) - mx - std::log(sum));
        }
        if (!std::isfinite(loss)) throw NumericError("loss is not finite");
        return loss;
    }

    /// Gradients of the loss w.r.t. each head's logits.
    std::pair<Tensor, Tensor> head_logit_grads(int label, float grad_scale) const {
        Tensor ga, gb;
        if (averaged_heads()) {
            const double p = 0.5 * (static_cast<double>(probs_a_(label)) + probs_b_(label));
            Tensor gp({spec_.num_classes});
            gp(label) = static_cast<float>(-0.5 / p * grad_scale);
            ga = softmax_backward(gp, probs_a_);
            gb = softmax_backward(gp, probs_b_);
        } else if (spec_.fusion_arch == FusionArch::Single) {
            ga = softmax_cross_entropy_backward(probs_a_, label);
            for (auto& v : ga.data) v *= grad_scale;
        } else {
            gb = softmax_cross_entropy_backward(probs_b_, label);
            for (auto& v : gb.data) v *= grad_scale;
        }
        return {std::move(ga), std::move(gb)};
    }

    void backward_heads(int label, float grad_scale) {
        if (multiview_state_) throw StateError("backward_heads: last forward was multiview");
        const int end = static_cast<int>(spec_.backbone.size());
        const int m = spec_.fusion_layer;
        auto [ga_logits, gb_logits] = head_logit_grads(label, grad_scale);

        switch (spec_.fusion_arch) {
            case FusionArch::Single:
                backward_range(stream_a_, cache_a_, ga_logits, 0, end);
                break;
            case FusionArch::Final:
                backward_range(stream_a_, cache_a_, ga_logits, 0, end);
                backward_range(stream_b_, cache_b_, gb_logits, 0, end);
                break;
            case FusionArch::Intermediate: {
                const Tensor g_fused = backward_range(stream_b_, cache_b_, gb_logits, m + 1, end);
                auto [ga_map, gb_map] = fuse_maps_backward(g_fused, fuse_cache_);
                backward_range(stream_a_, cache_a_, ga_map, 0, m + 1);
                backward_range(stream_b_, cache_b_, gb_map, 0, m + 1);
                break;
            }
            case FusionArch::Dain: {
                const Tensor ga_map_head = backward_range(stream_a_, cache_a_, ga_logits, m + 1, end);
                const Tensor g_fused = backward_range(stream_b_, cache_b_, gb_logits, m + 1, end);
                auto [ga_map_fuse, gb_map] = fuse_maps_backward(g_fused, fuse_cache_);
                Tensor ga_map = ga_map_head;
                accumulate(ga_map, ga_map_fuse);
                backward_range(stream_a_, cache_a_, ga_map, 0, m + 1);
                backward_range(stream_b_, cache_b_, gb_map, 0, m + 1);
                break;
            }
        }
    }

    // ---- multiview heads -----------------------------------------------------

    void check_views(const std::vector<ViewInput>& views, Combiner combiner) const {
        if (views.empty()) throw ArgumentError("multiview: empty view list");
        if (combiner != Combiner::Voting) {
            if (spec_.fusion_arch == FusionArch::Final)
                throw ArgumentError("multiview: final-layer fusion only supports voting");
            if (spec_.fusion_layer < 0)
                throw ArgumentError("multiview: pooling/filter3d need a fusion tap layer");
        }
    }

    /// Feature-map combination across views, then one trunk pass per active
    /// head. The pure stack combines stream A maps; the fused stack combines
    /// the per-view fused maps.
    void run_heads_multiview(const std::vector<ViewInput>& views, Combiner combiner, bool training,
                             RngState& rng) {
        const int end = static_cast<int>(spec_.backbone.size());
        const int m = spec_.fusion_layer;
        const int n = static_cast<int>(views.size());

        mv_cache_a_.assign(static_cast<std::size_t>(n), {});
        mv_cache_b_.assign(static_cast<std::size_t>(n), {});
        mv_fuse_.assign(static_cast<std::size_t>(n), {});
        std::vector<Tensor> pure_maps, fused_maps;
        for (int v = 0; v < n; ++v) {
            const ViewInput& vi = views[static_cast<std::size_t>(v)];
            check_input(vi.view, "forward_multiview: I_v");
            Tensor map_a = forward_range(stream_a_, mv_cache_a_[static_cast<std::size_t>(v)], vi.view, 0,
                                         m + 1, training, rng);
            if (fuses_at_m()) {
                if (vi.differential.empty())
                    throw ArgumentError("forward_multiview: two-stream architecture needs I_delta");
                check_input(vi.differential, "forward_multiview: I_delta");
                Tensor map_b = forward_range(stream_b_, mv_cache_b_[static_cast<std::size_t>(v)],
                                             vi.differential, 0, m + 1, training, rng);
                fused_maps.push_back(fuse_maps(map_a, map_b, spec_.fusion_op,
                                               &mv_fuse_[static_cast<std::size_t>(v)]));
                if (route_recording_ && spec_.fusion_op == FusionOp::Max)
                    mix_route_bytes(mv_fuse_[static_cast<std::size_t>(v)].pick_a.data(),
                                    mv_fuse_[static_cast<std::size_t>(v)].pick_a.size());
            }
            if (pure_head_active()) pure_maps.push_back(std::move(map_a));
        }

        head_b_active_ = fuses_at_m();
        mv_combiner_ = combiner;
        mv_n_views_ = n;

        if (pure_head_active()) {
            Tensor combined = combine_stack(pure_maps, combiner, bank_pure_, mv_comb_pure_);
            logits_a_ = forward_range(stream_a_, cache_a_, std::move(combined), m + 1, end, training, rng);
            probs_a_ = softmax(logits_a_);
        }
        if (fuses_at_m()) {
            Tensor combined = combine_stack(fused_maps, combiner, bank_fused_, mv_comb_fused_);
            logits_b_ = forward_range(stream_b_, cache_b_, std::move(combined), m + 1, end, training, rng);
            probs_b_ = softmax(logits_b_);
        }

        if (spec_.fusion_arch == FusionArch::Dain)
            last_probs_ = average_probs(probs_a_, probs_b_);
        else if (spec_.fusion_arch == FusionArch::Intermediate)
            last_probs_ = probs_b_;
        else
            last_probs_ = probs_a_;
        multiview_state_ = true;
    }

    bool pure_head_active() const {
        return spec_.fusion_arch == FusionArch::Single || spec_.fusion_arch == FusionArch::Dain;
    }

    struct CombineCache {
        MultiviewPoolCache pool;
        MultiviewFilter3dCache filter;
        Combiner combiner = Combiner::Pooling;
    };

    Tensor combine_stack(const std::vector<Tensor>& maps, Combiner combiner, Parameter& bank,
                         CombineCache& cache) {
        cache.combiner = combiner;
        Tensor out;
        if (combiner == Combiner::Pooling) {
            out = multiview_pool(maps, &cache.pool);
            mix_route_bytes(cache.pool.argview.data(), cache.pool.argview.size() * sizeof(std::int32_t));
        } else {
            out = multiview_filter3d(maps, bank.value, &cache.filter);
            mix_route_bytes(cache.filter.pool.argview.data(),
                            cache.filter.pool.argview.size() * sizeof(std::int32_t));
        }
        return out;
    }

    std::vector<Tensor> combine_stack_backward(const Tensor& grad, Parameter& bank, CombineCache& cache,
                                               int n_views) {
        if (cache.combiner == Combiner::Pooling)
            return multiview_pool_backward(grad, cache.pool, static_cast<std::size_t>(n_views));
        MultiviewFilter3dGrads g = multiview_filter3d_backward(grad, cache.filter);
        accumulate(bank.gradient, g.kernels);
        return std::move(g.maps);
    }

    void backward_heads_multiview(int label, float grad_scale) {
        const int end = static_cast<int>(spec_.backbone.size());
        const int m = spec_.fusion_layer;
        const int n = mv_n_views_;
        auto [ga_logits, gb_logits] = head_logit_grads(label, grad_scale);

        std::vector<Tensor> g_pure, g_fused;
        if (pure_head_active()) {
            const Tensor g_comb = backward_range(stream_a_, cache_a_, ga_logits, m + 1, end);
            g_pure = combine_stack_backward(g_comb, bank_pure_, mv_comb_pure_, n);
        }
        if (fuses_at_m()) {
            const Tensor g_comb = backward_range(stream_b_, cache_b_, gb_logits, m + 1, end);
            g_fused = combine_stack_backward(g_comb, bank_fused_, mv_comb_fused_, n);
        }

        for (int v = 0; v < n; ++v) {
            Tensor ga_map;
            if (pure_head_active()) ga_map = std::move(g_pure[static_cast<std::size_t>(v)]);
            if (fuses_at_m()) {
                auto [ga_fuse, gb_map] =
                    fuse_maps_backward(g_fused[static_cast<std::size_t>(v)], mv_fuse_[static_cast<std::size_t>(v)]);
                if (ga_map.empty())
                    ga_map = std::move(ga_fuse);
                else
                    accumulate(ga_map, ga_fuse);
                backward_range(stream_b_, mv_cache_b_[static_cast<std::size_t>(v)], gb_map, 0, m + 1);
            }
            backward_range(stream_a_, mv_cache_a_[static_cast<std::size_t>(v)], ga_map, 0, m + 1);
        }
    }

    // ---- state ---------------------------------------------------------------

    NetworkSpec spec_;
    std::vector<std::vector<int>> out_shapes_;
    int flatten_index_ = -1;

    std::vector<LayerParams> stream_a_, stream_b_;
    Parameter bank_pure_, bank_fused_;

    StreamCache cache_a_, cache_b_;
    FuseCache fuse_cache_;

    // multiview caches
    std::vector<StreamCache> mv_cache_a_, mv_cache_b_;
    std::vector<FuseCache> mv_fuse_;
    CombineCache mv_comb_pure_, mv_comb_fused_;
    Combiner mv_combiner_ = Combiner::Voting;
    int mv_n_views_ = 0;
    bool multiview_state_ = false;

    // head state from the last forward
    Tensor logits_a_, logits_b_, probs_a_, probs_b_, last_probs_;
    bool head_b_active_ = false;
    int label_ = -1;

    bool route_recording_ = false;
    std::uint64_t route_ = 0;
};

/// Deterministic network construction from a spec and seed.
inline Network build_network(const NetworkSpec& spec, RngState rng) { return Network(spec, rng); }

} // namespace dain
