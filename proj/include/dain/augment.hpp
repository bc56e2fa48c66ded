#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dain/dataset.hpp"
#include "dain/error.hpp"
#include "dain/image.hpp"
#include "dain/rng.hpp"
#include "dain/tensor.hpp"

namespace dain {

struct AugmentParams {
    float stretch_pct = 0.10f;  // independent h/v stretch in [1-s, 1+s]
    float flip_prob = 0.5f;     // horizontal mirror
    int crop_size = 32;
    int resize = 36;
};

/// One set of geometric draws, applied identically to paired images.
struct AugmentDraw {
    float sx = 1.0f, sy = 1.0f;
    bool flip = false;
    int crop_x = 0, crop_y = 0;
};

namespace detail {

inline Tensor crop(const Tensor& img, int x0, int y0, int size) {
    const int c = image_channels(img);
    Tensor out({c, size, size});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x) out(ch, y, x) = img(ch, y + y0, x + x0);
    return out;
}

inline Tensor hflip(const Tensor& img) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    Tensor out(img.shape);
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out(ch, y, x) = img(ch, y, w - 1 - x);
    return out;
}

inline std::pair<int, int> stretched_dims(const AugmentParams& p, float sx, float sy) {
    // Post-stretch dims never fall below the crop window.
    const int w = std::max(p.crop_size, static_cast<int>(std::lround(p.resize * sx)));
    const int h = std::max(p.crop_size, static_cast<int>(std::lround(p.resize * sy)));
    return {w, h};
}

} // namespace detail

inline AugmentDraw draw_augment(const AugmentParams& p, RngState& rng) {
    AugmentDraw d;
    d.sx = static_cast<float>(rng.uniform_in(1.0 - p.stretch_pct, 1.0 + p.stretch_pct));
    d.sy = static_cast<float>(rng.uniform_in(1.0 - p.stretch_pct, 1.0 + p.stretch_pct));
    d.flip = rng.uniform() < p.flip_prob;
    const auto [w, h] = detail::stretched_dims(p, d.sx, d.sy);
    d.crop_x = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w - p.crop_size + 1)));
    d.crop_y = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h - p.crop_size + 1)));
    return d;
}

/// resize -> stretch -> optional horizontal flip -> crop, with the given
/// draws. Deterministic; paired streams pass the same draw.
inline Tensor apply_augment(const Tensor& image, const AugmentParams& p, const AugmentDraw& d) {
    if (p.crop_size > p.resize)
        throw ArgumentError("augment: crop_size larger than the resize target");
    if (p.stretch_pct < 0.0f || p.stretch_pct >= 1.0f)
        throw ArgumentError("augment: stretch_pct must be in [0,1)");
    Tensor x = resize_bilinear(image, p.resize, p.resize);
    const auto [w, h] = detail::stretched_dims(p, d.sx, d.sy);
    if (w != p.resize || h != p.resize) x = resize_bilinear(x, h, w);
    if (d.flip) x = detail::hflip(x);
    return detail::crop(x, d.crop_x, d.crop_y, p.crop_size);
}

inline Tensor augment(const Tensor& image, const AugmentParams& p, RngState& rng) {
    return apply_augment(image, p, draw_augment(p, rng));
}

/// Identical geometry for a (view, differential) pair.
inline std::pair<Tensor, Tensor> augment_pair(const Tensor& view, const Tensor& differential,
                                              const AugmentParams& p, RngState& rng) {
    const AugmentDraw d = draw_augment(p, rng);
    return {apply_augment(view, p, d), apply_augment(differential, p, d)};
}

/// Deterministic evaluation-time geometry: resize then center crop.
inline Tensor center_crop_resize(const Tensor& image, int resize, int crop_size) {
    Tensor x = resize_bilinear(image, resize, resize);
    const int off = (resize - crop_size) / 2;
    return detail::crop(x, off, off, crop_size);
}

// ---------------------------------------------------------------------------
// Per-channel normalization
// ---------------------------------------------------------------------------

struct ChannelStats {
    std::vector<double> mean, stdev;
};

/// Statistics over the training images only (population std).
inline ChannelStats normalize_stats(const std::vector<const Tensor*>& train_images) {
    if (train_images.empty()) throw ArgumentError("normalize_stats: empty training set");
    const int c = image_channels(*train_images.front());
    std::vector<double> sum(static_cast<std::size_t>(c), 0.0), sumsq(static_cast<std::size_t>(c), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(c), 0);
    for (const Tensor* img : train_images) {
        const int h = image_height(*img), w = image_width(*img);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double v = (*img)(ch, y, x);
                    sum[static_cast<std::size_t>(ch)] += v;
                    sumsq[static_cast<std::size_t>(ch)] += v * v;
                    count[static_cast<std::size_t>(ch)]++;
                }
    }
    ChannelStats stats;
    for (int ch = 0; ch < c; ++ch) {
        const double n = static_cast<double>(count[static_cast<std::size_t>(ch)]);
        const double mean = sum[static_cast<std::size_t>(ch)] / n;
        const double var = sumsq[static_cast<std::size_t>(ch)] / n - mean * mean;
        if (var <= 1e-12)
            throw NumericError("normalize_stats: zero variance in channel " + std::to_string(ch));
        stats.mean.push_back(mean);
        stats.stdev.push_back(std::sqrt(var));
    }
    return stats;
}

inline Tensor apply_normalization(const Tensor& image, const ChannelStats& stats) {
    const int c = image_channels(image), h = image_height(image), w = image_width(image);
    if (static_cast<std::size_t>(c) != stats.mean.size())
        throw DimensionError("apply_normalization: channel count mismatch");
    Tensor out(image.shape);
    for (int ch = 0; ch < c; ++ch) {
        const float m = static_cast<float>(stats.mean[static_cast<std::size_t>(ch)]);
        const float s = static_cast<float>(stats.stdev[static_cast<std::size_t>(ch)]);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out(ch, y, x) = (image(ch, y, x) - m) / s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Contiguous view windows
// ---------------------------------------------------------------------------

/// A (delta0, delta5) record pair at one base angle.
struct ViewPairRecord {
    const ViewRecord* view = nullptr;
    const ViewRecord* offset = nullptr;
};

/**
 * Sample N contiguous base angles from the arc, uniformly over valid start
 * positions, pairing each with its delta=5 partner. When no condition is
 * given one is drawn uniformly from the instance's conditions.
 */
inline std::vector<ViewPairRecord> sample_view_window(const SurfaceInstance& instance, int n, RngState& rng,
                                                      const std::string* condition = nullptr) {
    if (n < 1) throw ArgumentError("sample_view_window: N must be >= 1");
    std::string cond;
    if (condition) {
        cond = *condition;
    } else {
        const auto conds = instance.conditions();
        if (conds.empty()) throw SamplingError("sample_view_window: instance has no views");
        cond = conds[rng.uniform_int(conds.size())];
    }

    // Complete pairs per base angle, in arc order.
    std::vector<ViewPairRecord> per_theta(kBaseThetas.size());
    for (std::size_t i = 0; i < kBaseThetas.size(); ++i) {
        per_theta[i].view = instance.find_view(kBaseThetas[i], 0, cond);
        per_theta[i].offset = instance.find_view(kBaseThetas[i], 5, cond);
    }

    std::vector<int> valid_starts;
    for (int s = 0; s + n <= static_cast<int>(kBaseThetas.size()); ++s) {
        bool ok = true;
        for (int k = 0; k < n; ++k)
            if (!per_theta[static_cast<std::size_t>(s + k)].view ||
                !per_theta[static_cast<std::size_t>(s + k)].offset)
                ok = false;
        if (ok) valid_starts.push_back(s);
    }
    if (valid_starts.empty())
        throw SamplingError("sample_view_window: instance " + instance.instance_id + " lacks " +
                            std::to_string(n) + " contiguous complete views under " + cond);

    const int start = valid_starts[rng.uniform_int(valid_starts.size())];
    std::vector<ViewPairRecord> out;
    for (int k = 0; k < n; ++k) out.push_back(per_theta[static_cast<std::size_t>(start + k)]);
    return out;
}

} // namespace dain
