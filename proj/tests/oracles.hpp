#pragma once

// Test-only reference implementations. These stay deliberately naive and
// independent of the library's computation paths: straight-line loops, no
// shared helpers, so they can serve as oracles for the optimized code.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dain/affine.hpp"
#include "dain/rng.hpp"
#include "dain/tensor.hpp"

namespace oracle {

inline void fill_uniform(dain::Tensor& t, dain::RngState& rng, double lo, double hi) {
    for (auto& v : t.data) v = static_cast<float>(rng.uniform_in(lo, hi));
}

/// Push every element at least `margin` away from zero, preserving sign
/// (zero counts as positive). Keeps finite-difference checks away from the
/// ReLU kink.
inline void nudge_from_zero(dain::Tensor& t, float margin) {
    for (auto& v : t.data) {
        if (v >= 0.0f && v < margin) v += margin;
        if (v < 0.0f && v > -margin) v -= margin;
    }
}

inline dain::Tensor conv2d_ref(const dain::Tensor& in, const dain::Tensor& ker, const dain::Tensor& bias,
                               int stride, int pad) {
    const int cin = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int cout = ker.dim(0), kh = ker.dim(2), kw = ker.dim(3);
    const int ho = (h + 2 * pad - kh) / stride + 1;
    const int wo = (w + 2 * pad - kw) / stride + 1;
    dain::Tensor out({cout, ho, wo});
    for (int co = 0; co < cout; ++co)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double acc = bias(co);
                for (int ci = 0; ci < cin; ++ci)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride + ky - pad;
                            const int ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += static_cast<double>(in(ci, iy, ix)) * ker(co, ci, ky, kx);
                        }
                out(co, oy, ox) = static_cast<float>(acc);
            }
    return out;
}

inline dain::Tensor maxpool_ref(const dain::Tensor& in, int window, int stride) {
    const int c = in.dim(0), h = in.dim(1), w = in.dim(2);
    const int ho = (h - window) / stride + 1;
    const int wo = (w - window) / stride + 1;
    dain::Tensor out({c, ho, wo});
    for (int ch = 0; ch < c; ++ch)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                float best = -std::numeric_limits<float>::infinity();
                for (int ky = 0; ky < window; ++ky)
                    for (int kx = 0; kx < window; ++kx)
                        best = std::max(best, in(ch, oy * stride + ky, ox * stride + kx));
                out(ch, oy, ox) = best;
            }
    return out;
}

inline dain::Tensor conv3d_ref(const dain::Tensor& stack, const dain::Tensor& ker) {
    const int d = stack.dim(0), n = stack.dim(1), h = stack.dim(2), w = stack.dim(3);
    dain::Tensor out({d, n, h, w});
    for (int ch = 0; ch < d; ++ch)
        for (int on = 0; on < n; ++on)
            for (int oy = 0; oy < h; ++oy)
                for (int ox = 0; ox < w; ++ox) {
                    double acc = 0.0;
                    for (int a = 0; a < 3; ++a)
                        for (int b = 0; b < 3; ++b)
                            for (int c = 0; c < 3; ++c) {
                                const int in_ = on + a - 1, iy = oy + b - 1, ix = ox + c - 1;
                                if (in_ < 0 || in_ >= n || iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                                acc += static_cast<double>(stack(ch, in_, iy, ix)) * ker(ch, a, b, c);
                            }
                    out(ch, on, oy, ox) = static_cast<float>(acc);
                }
    return out;
}

/// Smooth textured plane in [0.05, 0.95]: a handful of low-frequency random
/// sinusoids, plenty of gradient signal everywhere.
inline dain::Tensor textured_plane(int h, int w, dain::RngState& rng, int components = 10,
                                   double freq_lo = 0.5, double freq_hi = 5.0) {
    struct Wave {
        double kx, ky, phase, amp;
    };
    std::vector<Wave> waves;
    for (int i = 0; i < components; ++i) {
        const double freq = rng.uniform_in(freq_lo, freq_hi);
        const double ang = rng.uniform_in(0.0, 6.283185307179586);
        waves.push_back({freq * std::cos(ang) * 6.283185307179586 / w,
                         freq * std::sin(ang) * 6.283185307179586 / h,
                         rng.uniform_in(0.0, 6.283185307179586), 1.0 / (1.0 + 0.5 * i)});
    }
    dain::Tensor out({h, w});
    double lo = 1e30, hi = -1e30;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0.0;
            for (const auto& wv : waves) v += wv.amp * std::sin(wv.kx * x + wv.ky * y + wv.phase);
            out(y, x) = static_cast<float>(v);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    for (auto& v : out.data) v = static_cast<float>(0.05 + 0.9 * (v - lo) / (hi - lo + 1e-12));
    return out;
}

inline dain::Tensor textured_rgb(int h, int w, dain::RngState& rng) {
    dain::Tensor base = textured_plane(h, w, rng);
    dain::Tensor out({3, h, w});
    for (int c = 0; c < 3; ++c) {
        const float gain = static_cast<float>(rng.uniform_in(0.8, 1.0));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out(c, y, x) = gain * base(y, x);
    }
    return out;
}

/// Affine acting about the image center: x -> A (x - c) + c + t.
inline dain::AffineParams centered_affine(double a11, double a12, double a21, double a22, double tx,
                                          double ty, int w, int h) {
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    dain::AffineParams p;
    p.a11 = static_cast<float>(a11);
    p.a12 = static_cast<float>(a12);
    p.a21 = static_cast<float>(a21);
    p.a22 = static_cast<float>(a22);
    p.tx = static_cast<float>(cx + tx - (a11 * cx + a12 * cy));
    p.ty = static_cast<float>(cy + ty - (a21 * cx + a22 * cy));
    return p;
}

inline dain::Tensor crop_center_plane(const dain::Tensor& plane, int size) {
    const int oy = (plane.dim(0) - size) / 2, ox = (plane.dim(1) - size) / 2;
    dain::Tensor out({size, size});
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) out(y, x) = plane(y + oy, x + ox);
    return out;
}

/**
 * (reference, moved) fixture free of border artifacts: the texture is
 * rendered oversized, warped, and both images are cropped about the shared
 * center. With the margin chosen to exceed the warp displacement, the moved
 * image contains no zero-filled samples. The centered map (A, t) relating
 * the crops equals the one applied to the full image.
 */
struct WarpedPair {
    dain::Tensor ref, mov;  // [size,size] planes
    dain::AffineParams applied;  // the map used to synthesize mov (crop coords)
};

inline WarpedPair warped_pair(int size, const double a[4], double tx, double ty, dain::RngState& rng,
                              double freq_lo = 0.5, double freq_hi = 5.0) {
    const int margin = 16;
    const int big = size + 2 * margin;
    dain::Tensor tex = textured_plane(big, big, rng, 10, freq_lo, freq_hi);
    const dain::AffineParams g_big = centered_affine(a[0], a[1], a[2], a[3], tx, ty, big, big);
    const dain::Tensor mov_big = dain::warp_affine(tex, g_big).image;
    WarpedPair out;
    out.ref = crop_center_plane(tex, size);
    out.mov = crop_center_plane(mov_big, size);
    out.applied = centered_affine(a[0], a[1], a[2], a[3], tx, ty, size, size);
    return out;
}

inline double max_abs_diff(const dain::Tensor& a, const dain::Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(static_cast<double>(a.data[i]) - b.data[i]));
    return m;
}

inline bool bitwise_equal(const dain::Tensor& a, const dain::Tensor& b) {
    if (a.shape != b.shape) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a.data[i] != b.data[i]) return false;
    return true;
}

} // namespace oracle
