#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "dain/error.hpp"
#include "dain/optim.hpp"
#include "dain/rng.hpp"

namespace dain {

/// One evaluation of a scalar loss closure. `route_hash` fingerprints the
/// discrete routing decisions taken during the forward pass (ReLU masks,
/// pooling argmaxes, max-fusion picks); finite differencing a coordinate
/// whose perturbation flips any of them is meaningless and gets skipped.
struct LossEval {
    double loss = 0.0;
    std::uint64_t route_hash = 0;
};

/// Closure contract: f(true) runs forward+backward and leaves gradients in
/// the registered parameters; f(false) runs forward only. Both return the
/// loss and route fingerprint.
using LossClosure = std::function<LossEval(bool with_grad)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t evaluated = 0;
    std::size_t skipped_routing = 0;
    std::size_t below_resolution = 0;  // both sides under the f32 FD noise floor

    // worst coordinate, for diagnostics
    std::size_t worst_param = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;

    bool passed(double tol = 1e-3) const { return evaluated > 0 && max_rel_err < tol; }
};

/**
 * Central-finite-difference gradient check.
 *
 * Compares the analytic gradient against (f(x+eps) - f(x-eps)) / 2eps on a
 * random coordinate subset of each parameter, reporting
 * max |a - n| / max(|a|, |n|, 1e-8) over all checked coordinates.
 */
inline GradCheckReport grad_check(const LossClosure& f, std::span<Parameter* const> params, double eps,
                                  int coords_per_param, RngState& rng) {
    const LossEval base = f(true);
    if (!std::isfinite(base.loss)) throw NumericError("grad_check: non-finite loss");

    // Snapshot analytic gradients; later closure calls may overwrite them.
    std::vector<std::vector<float>> analytic;
    analytic.reserve(params.size());
    for (const Parameter* p : params) analytic.push_back(p->gradient.data);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        const std::size_t n = p->value.numel();
        if (n == 0) continue;

        std::vector<std::size_t> coords;
        if (static_cast<int>(n) <= coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            coords.reserve(static_cast<std::size_t>(coords_per_param));
            for (int i = 0; i < coords_per_param; ++i)
                coords.push_back(static_cast<std::size_t>(rng.uniform_int(n)));
        }

        for (std::size_t ci : coords) {
            const float saved = p->value.data[ci];
            // Use the actually representable f32 steps, not the nominal eps.
            p->value.data[ci] = static_cast<float>(saved + eps);
            const double h_plus = static_cast<double>(p->value.data[ci]) - saved;
            const LossEval plus = f(false);
            p->value.data[ci] = static_cast<float>(saved - eps);
            const double h_minus = saved - static_cast<double>(p->value.data[ci]);
            const LossEval minus = f(false);
            p->value.data[ci] = saved;
            if (!std::isfinite(plus.loss) || !std::isfinite(minus.loss))
                throw NumericError("grad_check: non-finite loss under perturbation");

            if (plus.route_hash != minus.route_hash || plus.route_hash != base.route_hash) {
                ++report.skipped_routing;
                continue;
            }

            const double numeric = (plus.loss - minus.loss) / (h_plus + h_minus);
            const double a = analytic[pi][ci];

            // The forward pass stores f32 activations, so each loss value
            // carries rounding noise of a few ulps; divided by the step this
            // bounds the resolution of the numeric gradient. Differences
            // below that resolution are agreement, whatever the gradient's
            // own magnitude. Consequential gradient bugs move the difference
            // orders of magnitude past this floor.
            const double loss_ulp =
                1.2e-7 * std::max({1.0, std::fabs(plus.loss), std::fabs(minus.loss)});
            const double agreement_floor = 8.0 * loss_ulp / (h_plus + h_minus);
            if (std::fabs(a - numeric) < agreement_floor) {
                ++report.below_resolution;
                ++report.evaluated;
                continue;
            }

            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = pi;
                report.worst_coord = ci;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
            ++report.evaluated;
        }
    }
    return report;
}

inline GradCheckReport grad_check(const LossClosure& f, std::vector<Parameter*> params, double eps,
                                  int coords_per_param, RngState& rng) {
    return grad_check(f, std::span<Parameter* const>(params.data(), params.size()), eps, coords_per_param,
                      rng);
}

} // namespace dain
