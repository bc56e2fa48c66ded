#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dain/error.hpp"
#include "dain/image.hpp"
#include "dain/tensor.hpp"

namespace dain {

/**
 * 2D affine map in pixel coordinates: (x, y) -> (a11 x + a12 y + tx,
 * a21 x + a22 y + ty). Identity by default. Alignment results are always
 * orientation-preserving (positive determinant).
 */
struct AffineParams {
    float a11 = 1.0f, a12 = 0.0f;
    float a21 = 0.0f, a22 = 1.0f;
    float tx = 0.0f, ty = 0.0f;

    double det() const {
        return static_cast<double>(a11) * a22 - static_cast<double>(a12) * a21;
    }

    void apply(double x, double y, double& ox, double& oy) const {
        ox = a11 * x + a12 * y + tx;
        oy = a21 * x + a22 * y + ty;
    }

    /// Map composition: result(x) = outer(inner(x)).
    static AffineParams compose(const AffineParams& outer, const AffineParams& inner) {
        AffineParams r;
        r.a11 = outer.a11 * inner.a11 + outer.a12 * inner.a21;
        r.a12 = outer.a11 * inner.a12 + outer.a12 * inner.a22;
        r.a21 = outer.a21 * inner.a11 + outer.a22 * inner.a21;
        r.a22 = outer.a21 * inner.a12 + outer.a22 * inner.a22;
        r.tx = outer.a11 * inner.tx + outer.a12 * inner.ty + outer.tx;
        r.ty = outer.a21 * inner.tx + outer.a22 * inner.ty + outer.ty;
        return r;
    }

    AffineParams inverse() const {
        const double d = det();
        if (std::fabs(d) < 1e-12) throw NumericError("affine inverse: singular map");
        AffineParams r;
        r.a11 = static_cast<float>(a22 / d);
        r.a12 = static_cast<float>(-a12 / d);
        r.a21 = static_cast<float>(-a21 / d);
        r.a22 = static_cast<float>(a11 / d);
        r.tx = static_cast<float>(-(r.a11 * tx + r.a12 * ty));
        r.ty = static_cast<float>(-(r.a21 * tx + r.a22 * ty));
        return r;
    }

    bool is_identity(float tol = 0.0f) const {
        return std::fabs(a11 - 1.0f) <= tol && std::fabs(a12) <= tol && std::fabs(a21) <= tol &&
               std::fabs(a22 - 1.0f) <= tol && std::fabs(tx) <= tol && std::fabs(ty) <= tol;
    }
};

struct WarpResult {
    Tensor image;                       // same layout as the input
    std::vector<std::uint8_t> valid;    // H*W mask, false where the sample left the source
};

/// Inverse warp with bilinear interpolation: output(x) = input(A x + t).
/// Samples outside the source grid produce 0 with a false mask entry.
inline WarpResult warp_affine(const Tensor& img, const AffineParams& p) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    WarpResult r;
    r.image = Tensor(img.shape);
    r.valid.assign(static_cast<std::size_t>(h) * w, 0);

    std::vector<Tensor> planes;
    planes.reserve(static_cast<std::size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        Tensor plane({h, w});
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) plane(y, x) = img.rank() == 2 ? img(y, x) : img(ch, y, x);
        planes.push_back(std::move(plane));
    }

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sx, sy;
            p.apply(x, y, sx, sy);
            bool ok = true;
            for (int ch = 0; ch < c; ++ch) {
                float v = 0.0f;
                ok = bilinear_sample(planes[static_cast<std::size_t>(ch)], sx, sy, v);
                if (!ok) break;
                if (img.rank() == 2)
                    r.image(y, x) = v;
                else
                    r.image(ch, y, x) = v;
            }
            if (ok) r.valid[static_cast<std::size_t>(y) * w + x] = 1;
            else if (img.rank() != 2)
                for (int ch = 0; ch < c; ++ch) r.image(ch, y, x) = 0.0f;
        }
    }
    return r;
}

namespace detail {

inline Tensor downsample2(const Tensor& plane) {
    const int h = plane.dim(0), w = plane.dim(1);
    const int oh = h / 2, ow = w / 2;
    Tensor out({oh, ow});
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out(y, x) = 0.25f * (plane(2 * y, 2 * x) + plane(2 * y, 2 * x + 1) + plane(2 * y + 1, 2 * x) +
                                 plane(2 * y + 1, 2 * x + 1));
    return out;
}

inline void gradient_planes(const Tensor& plane, Tensor& gx, Tensor& gy) {
    const int h = plane.dim(0), w = plane.dim(1);
    gx = Tensor({h, w});
    gy = Tensor({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
            const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
            gx(y, x) = (plane(y, xp) - plane(y, xm)) / static_cast<float>(xp - xm == 0 ? 1 : xp - xm);
            gy(y, x) = (plane(yp, x) - plane(ym, x)) / static_cast<float>(yp - ym == 0 ? 1 : yp - ym);
        }
}

/// Solve the 6x6 SPD system H d = b in place via Cholesky. Returns false if
/// H is not positive definite (no usable photometric signal).
inline bool solve_spd6(std::array<double, 36>& m, std::array<double, 6>& b, std::array<double, 6>& out) {
    std::array<double, 36> l{};
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m[static_cast<std::size_t>(i) * 6 + j];
            for (int k = 0; k < j; ++k) s -= l[static_cast<std::size_t>(i) * 6 + k] * l[static_cast<std::size_t>(j) * 6 + k];
            if (i == j) {
                if (s <= 1e-12) return false;
                l[static_cast<std::size_t>(i) * 6 + j] = std::sqrt(s);
            } else {
                l[static_cast<std::size_t>(i) * 6 + j] = s / l[static_cast<std::size_t>(j) * 6 + j];
            }
        }
    }
    std::array<double, 6> y{};
    for (int i = 0; i < 6; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) s -= l[static_cast<std::size_t>(i) * 6 + k] * y[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i) * 6 + i];
    }
    for (int i = 5; i >= 0; --i) {
        double s = y[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < 6; ++k) s -= l[static_cast<std::size_t>(k) * 6 + i] * out[static_cast<std::size_t>(k)];
        out[static_cast<std::size_t>(i)] = s / l[static_cast<std::size_t>(i) * 6 + i];
    }
    return true;
}

// Working parameters in the centered frame: sample = A (x - c) + c + t.
struct CenteredAffine {
    double a11 = 1.0, a12 = 0.0, a21 = 0.0, a22 = 1.0, tx = 0.0, ty = 0.0;
};

/// One Gauss-Newton pass at a single pyramid level (forward-additive
/// photometric alignment of mov onto ref). Throws AlignmentError when the
/// normal equations are degenerate.
inline void gauss_newton_level(const Tensor& ref, const Tensor& mov, CenteredAffine& p, int max_iters,
                               double tol) {
    const int h = ref.dim(0), w = ref.dim(1);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    Tensor gx, gy;
    gradient_planes(mov, gx, gy);

    for (int iter = 0; iter < max_iters; ++iter) {
        std::array<double, 36> hmat{};
        std::array<double, 6> bvec{};
        std::size_t n_valid = 0;

        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double dx = x - cx, dy = y - cy;
                const double sx = p.a11 * dx + p.a12 * dy + cx + p.tx;
                const double sy = p.a21 * dx + p.a22 * dy + cy + p.ty;
                // Stay one pixel clear of the border so one-sided gradients
                // and edge content never enter the normal equations.
                if (sx < 1.0 || sy < 1.0 || sx > w - 2.0 || sy > h - 2.0) continue;
                float mv, gxv, gyv;
                if (!bilinear_sample(mov, sx, sy, mv)) continue;
                bilinear_sample(gx, sx, sy, gxv);
                bilinear_sample(gy, sx, sy, gyv);
                const double e = static_cast<double>(mv) - ref(y, x);
                const std::array<double, 6> j{gxv * dx, gxv * dy, gyv * dx, gyv * dy,
                                              static_cast<double>(gxv), static_cast<double>(gyv)};
                for (int a = 0; a < 6; ++a) {
                    bvec[static_cast<std::size_t>(a)] += j[static_cast<std::size_t>(a)] * e;
                    for (int b = 0; b <= a; ++b)
                        hmat[static_cast<std::size_t>(a) * 6 + b] += j[static_cast<std::size_t>(a)] * j[static_cast<std::size_t>(b)];
                }
                ++n_valid;
            }
        }
        for (int a = 0; a < 6; ++a)
            for (int b = a + 1; b < 6; ++b)
                hmat[static_cast<std::size_t>(a) * 6 + b] = hmat[static_cast<std::size_t>(b) * 6 + a];

        if (n_valid < 12) throw AlignmentError("estimate_affine: too few valid pixels");
        std::array<double, 6> delta{};
        if (!solve_spd6(hmat, bvec, delta))
            throw AlignmentError("estimate_affine: singular normal equations (no gradient signal)");

        p.a11 -= delta[0];
        p.a12 -= delta[1];
        p.a21 -= delta[2];
        p.a22 -= delta[3];
        p.tx -= delta[4];
        p.ty -= delta[5];
        if (!std::isfinite(p.a11 + p.a12 + p.a21 + p.a22 + p.tx + p.ty))
            throw AlignmentError("estimate_affine: diverged");

        double norm = 0.0;
        for (double d : delta) norm += d * d;
        if (std::sqrt(norm) < tol) break;
    }
}

} // namespace detail

/**
 * Photometric affine alignment: finds p so that warp_affine(moving, p)
 * approximates reference, by Gauss-Newton on the sum of squared differences
 * over a coarse-to-fine pyramid. Inputs are converted to luminance.
 */
inline AffineParams estimate_affine(const Tensor& reference, const Tensor& moving, int levels = 3,
                                    int max_iters = 50, double tol = 1e-4) {
    Tensor ref = luminance(reference);
    Tensor mov = luminance(moving);
    if (ref.shape != mov.shape) throw DimensionError("estimate_affine: images must share dims");
    const int h = ref.dim(0), w = ref.dim(1);
    if (h < 16 || w < 16) throw ArgumentError("estimate_affine: images must be at least 16x16");
    if (levels < 1 || max_iters < 1) throw ArgumentError("estimate_affine: levels and max_iters must be >= 1");

    // Build the pyramid; stop early rather than shrink below a usable size.
    std::vector<Tensor> ref_pyr{ref}, mov_pyr{mov};
    for (int l = 1; l < levels; ++l) {
        const Tensor& prev = ref_pyr.back();
        if (prev.dim(0) / 2 < 12 || prev.dim(1) / 2 < 12) break;
        ref_pyr.push_back(detail::downsample2(prev));
        mov_pyr.push_back(detail::downsample2(mov_pyr.back()));
    }

    detail::CenteredAffine p;
    for (int l = static_cast<int>(ref_pyr.size()) - 1; l >= 0; --l) {
        if (l < static_cast<int>(ref_pyr.size()) - 1) {
            p.tx *= 2.0;
            p.ty *= 2.0;
        }
        detail::gauss_newton_level(ref_pyr[static_cast<std::size_t>(l)], mov_pyr[static_cast<std::size_t>(l)], p,
                                   max_iters, tol);
    }

    // Convert from the centered frame back to top-left pixel coordinates.
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    AffineParams out;
    out.a11 = static_cast<float>(p.a11);
    out.a12 = static_cast<float>(p.a12);
    out.a21 = static_cast<float>(p.a21);
    out.a22 = static_cast<float>(p.a22);
    out.tx = static_cast<float>(cx + p.tx - (p.a11 * cx + p.a12 * cy));
    out.ty = static_cast<float>(cy + p.ty - (p.a21 * cx + p.a22 * cy));
    if (out.det() <= 0.0) throw AlignmentError("estimate_affine: orientation flipped (diverged)");
    return out;
}

} // namespace dain
