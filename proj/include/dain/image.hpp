#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <png.h>

#include "dain/error.hpp"
#include "dain/tensor.hpp"

namespace dain {

// Images are [C,H,W] tensors with values in [0,1] (signed for differential
// images). Single-channel planes are [H,W].

inline int image_channels(const Tensor& img) {
    if (img.rank() == 2) return 1;
    if (img.rank() == 3) return img.dim(0);
    throw DimensionError("image must be [H,W] or [C,H,W]");
}

inline int image_height(const Tensor& img) { return img.rank() == 2 ? img.dim(0) : img.dim(1); }
inline int image_width(const Tensor& img) { return img.rank() == 2 ? img.dim(1) : img.dim(2); }

/// Mean of the color channels as a [H,W] plane.
inline Tensor luminance(const Tensor& img) {
    if (img.rank() == 2) return img;
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ch = 0; ch < c; ++ch) acc += img(ch, y, x);
            out(y, x) = static_cast<float>(acc / c);
        }
    return out;
}

/// Bilinear sample of a [H,W] plane at (x, y); (0,0) is the top-left pixel
/// center. Returns false when the sample point falls outside the grid.
inline bool bilinear_sample(const Tensor& plane, double x, double y, float& out) {
    const int h = plane.dim(0), w = plane.dim(1);
    if (x < 0.0 || y < 0.0 || x > w - 1.0 || y > h - 1.0) return false;
    int x0 = static_cast<int>(std::floor(x));
    int y0 = static_cast<int>(std::floor(y));
    if (x0 == w - 1) x0 = w - 2 < 0 ? 0 : w - 2;
    if (y0 == h - 1) y0 = h - 2 < 0 ? 0 : h - 2;
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double fx = x - x0, fy = y - y0;
    const double v00 = plane(y0, x0), v01 = plane(y0, x1);
    const double v10 = plane(y1, x0), v11 = plane(y1, x1);
    out = static_cast<float>((1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11));
    return true;
}

/// Bilinear resize of a [C,H,W] image.
inline Tensor resize_bilinear(const Tensor& img, int out_h, int out_w) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    if (out_h < 1 || out_w < 1) throw ArgumentError("resize_bilinear: empty output");
    if (out_h == h && out_w == w && img.rank() == 3) return img;
    Tensor out({c, out_h, out_w});
    const double sy = out_h > 1 ? static_cast<double>(h - 1) / (out_h - 1) : 0.0;
    const double sx = out_w > 1 ? static_cast<double>(w - 1) / (out_w - 1) : 0.0;
    for (int ch = 0; ch < c; ++ch) {
        Tensor plane({h, w});
        if (img.rank() == 2)
            plane = img;
        else
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) plane(y, x) = img(ch, y, x);
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                float v = 0.0f;
                bilinear_sample(plane, ox * sx, oy * sy, v);
                out(ch, oy, ox) = v;
            }
    }
    return out;
}

// ---------------------------------------------------------------------------
// PNG I/O (8-bit; everything is expanded to RGB on read)
// ---------------------------------------------------------------------------

inline Tensor png_read(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IoError("png_read: cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;

    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw IoError("png_read: decode failed for " + path.string());
    }

    png_init_io(png, fp);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);

    png_set_expand(png);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_color_type(png, info) & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    const auto color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    pixels.resize(static_cast<std::size_t>(width) * height * 3);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = &pixels[static_cast<std::size_t>(y) * width * 3];
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    Tensor out({3, static_cast<int>(height), static_cast<int>(width)});
    for (int c = 0; c < 3; ++c)
        for (png_uint_32 y = 0; y < height; ++y)
            for (png_uint_32 x = 0; x < width; ++x)
                out(c, static_cast<int>(y), static_cast<int>(x)) =
                    pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c] / 255.0f;
    return out;
}

inline void png_write(const std::filesystem::path& path, const Tensor& img) {
    const int c = image_channels(img), h = image_height(img), w = image_width(img);
    if (c != 1 && c != 3) throw ArgumentError("png_write: image must have 1 or 3 channels");

    std::vector<unsigned char> pixels(static_cast<std::size_t>(h) * w * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < 3; ++ch) {
                const float v = img.rank() == 2 ? img(y, x) : img(c == 1 ? 0 : ch, y, x);
                const float clamped = std::clamp(v, 0.0f, 1.0f);
                pixels[(static_cast<std::size_t>(y) * w + x) * 3 + ch] =
                    static_cast<unsigned char>(std::lround(clamped * 255.0f));
            }

    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("png_write: cannot open " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));

    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw IoError("png_write: encode failed for " + path.string());
    }

    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y) rows[y] = &pixels[static_cast<std::size_t>(y) * w * 3];
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

/// Visualization of a signed image: value 0 maps to mid-gray.
inline Tensor signed_to_midgray(const Tensor& img) {
    Tensor out = img;
    for (auto& v : out.data) v = std::clamp(0.5f + 0.5f * v, 0.0f, 1.0f);
    return out;
}

} // namespace dain
