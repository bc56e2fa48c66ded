#pragma once

#include <span>
#include <string>
#include <vector>

#include "dain/error.hpp"
#include "dain/tensor.hpp"

namespace dain {

/**
 * Trainable tensor with gradient and momentum buffers.
 *
 * `learn_rate_scale` multiplies the optimizer's base learning rate for this
 * parameter (the classifier head trains at 10x the rate of other layers).
 * Frozen parameters are skipped entirely by the optimizer: value and
 * velocity stay bitwise unchanged.
 */
struct Parameter {
    Tensor value;
    Tensor gradient;
    Tensor velocity;
    float learn_rate_scale = 1.0f;
    bool frozen = false;

    Parameter() = default;
    explicit Parameter(Tensor v, float lr_scale = 1.0f)
        : value(std::move(v)), gradient(value.shape), velocity(value.shape), learn_rate_scale(lr_scale) {}

    void zero_grad() { gradient.fill(0.0f); }
};

/// v <- momentum * v + grad; value <- value - base_lr * learn_rate_scale * v.
/// Gradients of stepped parameters are zeroed afterwards; frozen parameters
/// keep value and velocity untouched (their stale gradients are cleared too).
inline void sgd_momentum_step(std::span<Parameter* const> params, float base_lr, float momentum) {
    for (Parameter* p : params) {
        if (!p->frozen) {
            const float lr = base_lr * p->learn_rate_scale;
            for (std::size_t i = 0; i < p->value.numel(); ++i) {
                const float v = momentum * p->velocity.data[i] + p->gradient.data[i];
                p->velocity.data[i] = v;
                p->value.data[i] -= lr * v;
            }
        }
        p->zero_grad();
    }
}

inline void sgd_momentum_step(std::vector<Parameter*>& params, float base_lr, float momentum) {
    sgd_momentum_step(std::span<Parameter* const>(params.data(), params.size()), base_lr, momentum);
}

} // namespace dain
