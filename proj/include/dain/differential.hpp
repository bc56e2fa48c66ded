#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dain/affine.hpp"
#include "dain/error.hpp"
#include "dain/image.hpp"
#include "dain/tensor.hpp"

namespace dain {

/**
 * Differential image: the reference view minus the aligned offset view.
 * Pixels are signed, exactly zero wherever the warp sampled outside the
 * source (valid_mask false).
 */
struct DifferentialImage {
    Tensor pixels;                     // [C,H,W], signed
    AffineParams alignment;            // map used for the offset view
    std::vector<std::uint8_t> valid_mask;  // H*W

    int height() const { return image_height(pixels); }
    int width() const { return image_width(pixels); }
};

/**
 * Form the differential of a view pair. With align=true the offset view is
 * first registered onto the reference with a global affine map; otherwise
 * the images are subtracted directly. The sign convention is fixed:
 * reference minus (aligned) offset view.
 */
inline DifferentialImage make_differential(const Tensor& view, const Tensor& offset_view, bool align,
                                           int levels = 3, int max_iters = 50, double tol = 1e-4) {
    if (view.shape != offset_view.shape)
        throw DimensionError("make_differential: views must share dims");
    const int c = image_channels(view), h = image_height(view), w = image_width(view);

    DifferentialImage d;
    if (align) {
        d.alignment = estimate_affine(view, offset_view, levels, max_iters, tol);
        WarpResult warped = warp_affine(offset_view, d.alignment);
        d.pixels = Tensor(view.shape);
        d.valid_mask = std::move(warped.valid);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const bool ok = d.valid_mask[static_cast<std::size_t>(y) * w + x] != 0;
                    const float a = view.rank() == 2 ? view(y, x) : view(ch, y, x);
                    const float b = warped.image.rank() == 2 ? warped.image(y, x) : warped.image(ch, y, x);
                    const float v = ok ? a - b : 0.0f;
                    if (view.rank() == 2)
                        d.pixels(y, x) = v;
                    else
                        d.pixels(ch, y, x) = v;
                }
    } else {
        d.pixels = Tensor(view.shape);
        for (std::size_t i = 0; i < d.pixels.numel(); ++i)
            d.pixels.data[i] = view.data[i] - offset_view.data[i];
        d.valid_mask.assign(static_cast<std::size_t>(h) * w, 1);
    }
    return d;
}

/// Fraction of valid pixels whose absolute value is below `threshold`.
inline double sparsity_stats(const DifferentialImage& d, double threshold) {
    if (threshold < 0.0) throw ArgumentError("sparsity_stats: threshold must be >= 0");
    const int c = image_channels(d.pixels), h = d.height(), w = d.width();
    std::size_t valid = 0, small = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!d.valid_mask[static_cast<std::size_t>(y) * w + x]) continue;
            for (int ch = 0; ch < c; ++ch) {
                const float v = d.pixels.rank() == 2 ? d.pixels(y, x) : d.pixels(ch, y, x);
                ++valid;
                if (std::fabs(v) < threshold) ++small;
            }
        }
    if (valid == 0) throw StatError("sparsity_stats: empty valid mask");
    return static_cast<double>(small) / static_cast<double>(valid);
}

/// Mean absolute value over valid pixels.
inline double mean_abs(const DifferentialImage& d) {
    const int c = image_channels(d.pixels), h = d.height(), w = d.width();
    double acc = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (!d.valid_mask[static_cast<std::size_t>(y) * w + x]) continue;
            for (int ch = 0; ch < c; ++ch) {
                const float v = d.pixels.rank() == 2 ? d.pixels(y, x) : d.pixels(ch, y, x);
                acc += std::fabs(v);
                ++n;
            }
        }
    if (n == 0) throw StatError("mean_abs: empty valid mask");
    return acc / static_cast<double>(n);
}

} // namespace dain
