#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dain/differential.hpp"
#include "dain/image.hpp"
#include "oracles.hpp"

using namespace dain;

TEST_CASE("differential of identical images is identically zero") {
    RngState rng(201);
    Tensor img = oracle::textured_rgb(32, 32, rng);

    SECTION("without alignment") {
        const DifferentialImage d = make_differential(img, img, false);
        for (float v : d.pixels.data) REQUIRE(v == 0.0f);
        for (auto m : d.valid_mask) REQUIRE(m == 1);
    }
    SECTION("with alignment") {
        const DifferentialImage d = make_differential(img, img, true);
        for (float v : d.pixels.data) REQUIRE(std::fabs(v) < 1e-6f);
    }
}

TEST_CASE("alignment shrinks the differential of a translated pair") {
    RngState rng(202);
    const double a[4] = {1, 0, 0, 1};
    const auto pair = oracle::warped_pair(64, a, -1.0, 0.0, rng);
    Tensor ref3({3, 64, 64}), mov({3, 64, 64});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 64; ++y)
            for (int x = 0; x < 64; ++x) {
                ref3(c, y, x) = pair.ref(y, x);
                mov(c, y, x) = pair.mov(y, x);
            }

    const DifferentialImage unaligned = make_differential(ref3, mov, false);
    const DifferentialImage aligned = make_differential(ref3, mov, true);

    const double mu_un = mean_abs(unaligned);
    const double mu_al = mean_abs(aligned);
    INFO("unaligned " << mu_un << " aligned " << mu_al);
    REQUIRE(mu_al < 0.05 * mu_un);

    SECTION("aligned differential is sparser") {
        const double s_al = sparsity_stats(aligned, 0.01);
        const double s_un = sparsity_stats(unaligned, 0.01);
        REQUIRE(s_al > s_un);
    }
}

TEST_CASE("differential pixels are zero wherever the mask is false") {
    RngState rng(203);
    const double a[4] = {1, 0, 0, 1};
    const auto pair = oracle::warped_pair(48, a, -3.0, 2.0, rng);
    Tensor ref({3, 48, 48}), mov({3, 48, 48});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) {
                ref(c, y, x) = pair.ref(y, x);
                mov(c, y, x) = pair.mov(y, x);
            }

    const DifferentialImage d = make_differential(ref, mov, true);
    const int w = d.width();
    bool some_invalid = false;
    for (int y = 0; y < d.height(); ++y)
        for (int x = 0; x < w; ++x)
            if (!d.valid_mask[static_cast<std::size_t>(y) * w + x]) {
                some_invalid = true;
                for (int c = 0; c < 3; ++c) REQUIRE(d.pixels(c, y, x) == 0.0f);
            }
    REQUIRE(some_invalid);
}

TEST_CASE("sparsity_stats endpoints") {
    DifferentialImage zero;
    zero.pixels = Tensor({1, 4, 4});
    zero.valid_mask.assign(16, 1);
    REQUIRE(sparsity_stats(zero, 0.01) == 1.0);

    DifferentialImage ones;
    ones.pixels = Tensor({1, 4, 4}, 1.0f);
    ones.valid_mask.assign(16, 1);
    REQUIRE(sparsity_stats(ones, 0.5) == 0.0);

    DifferentialImage empty;
    empty.pixels = Tensor({1, 2, 2});
    empty.valid_mask.assign(4, 0);
    REQUIRE_THROWS_AS(sparsity_stats(empty, 0.1), StatError);
}

TEST_CASE("differential propagates alignment failure") {
    Tensor flat_a({3, 24, 24}, 0.5f);
    Tensor flat_b({3, 24, 24}, 0.5f);
    REQUIRE_THROWS_AS(make_differential(flat_a, flat_b, true), AlignmentError);
}

TEST_CASE("png round trip preserves images up to 8-bit quantization") {
    RngState rng(204);
    Tensor img = oracle::textured_rgb(17, 23, rng);
    const auto dir = std::filesystem::temp_directory_path() / "dain_png_test";
    std::filesystem::create_directories(dir);
    png_write(dir / "t.png", img);
    const Tensor back = png_read(dir / "t.png");
    REQUIRE(back.shape == img.shape);
    REQUIRE(oracle::max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-6);
    std::filesystem::remove_all(dir);
}

TEST_CASE("luminance averages channels") {
    Tensor img({3, 1, 2});
    img(0, 0, 0) = 0.3f;
    img(1, 0, 0) = 0.6f;
    img(2, 0, 0) = 0.9f;
    const Tensor lum = luminance(img);
    REQUIRE(lum(0, 0) == Catch::Approx(0.6));
}

TEST_CASE("signed_to_midgray maps zero to mid-gray") {
    Tensor d({1, 1, 1});
    REQUIRE(signed_to_midgray(d)(0, 0, 0) == 0.5f);
    d(0, 0, 0) = -2.0f;
    REQUIRE(signed_to_midgray(d)(0, 0, 0) == 0.0f);
}

TEST_CASE("resize_bilinear preserves constants and hits target dims") {
    Tensor img({3, 10, 14}, 0.25f);
    const Tensor out = resize_bilinear(img, 7, 9);
    REQUIRE(out.shape == std::vector<int>{3, 7, 9});
    for (float v : out.data) REQUIRE(v == Catch::Approx(0.25));
}
