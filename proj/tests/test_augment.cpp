#include <catch2/catch_amalgamated.hpp>

#include "dain/augment.hpp"
#include "oracles.hpp"

using namespace dain;

TEST_CASE("augment with no stretch, no flip and full crop is the identity") {
    RngState rng(501);
    Tensor img = oracle::textured_rgb(20, 20, rng);
    AugmentParams p;
    p.stretch_pct = 0.0f;
    p.flip_prob = 0.0f;
    p.resize = 20;
    p.crop_size = 20;
    RngState a(1);
    REQUIRE(oracle::bitwise_equal(augment(img, p, a), img));
}

TEST_CASE("augment output is always crop_size squared") {
    RngState rng(502), draws(77);
    Tensor img = oracle::textured_rgb(40, 30, rng);
    AugmentParams p;
    p.stretch_pct = 0.25f;
    p.flip_prob = 0.5f;
    p.resize = 36;
    p.crop_size = 32;
    for (int i = 0; i < 20; ++i) {
        const Tensor out = augment(img, p, draws);
        REQUIRE(out.shape == std::vector<int>{3, 32, 32});
    }
}

TEST_CASE("augment rejects a crop larger than the resize target") {
    Tensor img({3, 20, 20});
    AugmentParams p;
    p.resize = 20;
    p.crop_size = 24;
    RngState rng(1);
    REQUIRE_THROWS_AS(augment(img, p, rng), ArgumentError);
}

TEST_CASE("augment is reproducible for a fixed seed") {
    RngState rng(503);
    Tensor img = oracle::textured_rgb(36, 36, rng);
    AugmentParams p;
    RngState a(42), b(42);
    REQUIRE(oracle::bitwise_equal(augment(img, p, a), augment(img, p, b)));
}

TEST_CASE("paired augmentation applies identical geometry to both streams") {
    RngState rng(504);
    Tensor marker = oracle::textured_rgb(36, 36, rng);
    AugmentParams p;
    p.stretch_pct = 0.25f;
    p.flip_prob = 0.5f;
    for (int trial = 0; trial < 10; ++trial) {
        RngState draws(600 + static_cast<std::uint64_t>(trial));
        // Same marker image through both slots: any geometric divergence
        // would show as a pixel difference.
        auto [a, b] = augment_pair(marker, marker, p, draws);
        REQUIRE(oracle::bitwise_equal(a, b));
    }
}

TEST_CASE("center_crop_resize takes the central window") {
    Tensor img({1, 6, 6});
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) img(0, y, x) = static_cast<float>(y * 6 + x);
    const Tensor out = center_crop_resize(img, 6, 4);
    REQUIRE(out.shape == std::vector<int>{1, 4, 4});
    REQUIRE(out(0, 0, 0) == img(0, 1, 1));
}

TEST_CASE("normalization stats come from the training set and standardize it") {
    RngState rng(505);
    std::vector<Tensor> train;
    for (int i = 0; i < 8; ++i) train.push_back(oracle::textured_rgb(16, 16, rng));
    std::vector<const Tensor*> ptrs;
    for (const auto& t : train) ptrs.push_back(&t);

    const ChannelStats stats = normalize_stats(ptrs);

    double sum = 0.0, sumsq = 0.0;
    std::size_t n = 0;
    for (const auto& t : train) {
        const Tensor z = apply_normalization(t, stats);
        for (float v : z.data) {
            sum += v;
            sumsq += v * v;
            ++n;
        }
    }
    const double mean = sum / static_cast<double>(n);
    const double var = sumsq / static_cast<double>(n) - mean * mean;
    REQUIRE(mean == Catch::Approx(0.0).margin(1e-4));
    REQUIRE(var == Catch::Approx(1.0).margin(1e-3));

    SECTION("stats ignore anything outside the given set") {
        const ChannelStats again = normalize_stats(ptrs);
        REQUIRE(again.mean == stats.mean);
        REQUIRE(again.stdev == stats.stdev);
    }
}

TEST_CASE("zero-variance channels are a numeric error") {
    Tensor flat({3, 8, 8}, 0.25f);
    std::vector<const Tensor*> ptrs{&flat};
    REQUIRE_THROWS_AS(normalize_stats(ptrs), NumericError);
}

// ---------------------------------------------------------------------------
// view windows
// ---------------------------------------------------------------------------

namespace {

SurfaceInstance full_instance(const std::vector<std::string>& conditions) {
    SurfaceInstance inst;
    inst.class_name = "c";
    inst.instance_id = "c_i0";
    for (const auto& cond : conditions)
        for (int theta : kBaseThetas)
            for (int delta : {0, 5}) {
                ViewRecord v;
                v.theta_deg = theta;
                v.delta_deg = delta;
                v.illumination = cond;
                inst.views.push_back(v);
            }
    return inst;
}

} // namespace

TEST_CASE("a window covering the whole arc starts at index 0") {
    const SurfaceInstance inst = full_instance({"cond0"});
    RngState rng(1);
    const auto window = sample_view_window(inst, 9, rng);
    REQUIRE(window.size() == 9);
    for (std::size_t i = 0; i < 9; ++i) {
        REQUIRE(window[i].view->theta_deg == kBaseThetas[i]);
        REQUIRE(window[i].offset->delta_deg == 5);
    }
}

TEST_CASE("N=1 samples a single random base view") {
    const SurfaceInstance inst = full_instance({"cond0"});
    RngState rng(2);
    const auto window = sample_view_window(inst, 1, rng);
    REQUIRE(window.size() == 1);
    REQUIRE(theta_on_grid(window[0].view->theta_deg));
}

TEST_CASE("window starts are uniform over the valid range") {
    const SurfaceInstance inst = full_instance({"cond0"});
    RngState rng(3);
    const int draws = 10000;
    std::array<int, 6> counts{};
    for (int i = 0; i < draws; ++i) {
        const auto window = sample_view_window(inst, 4, rng);
        const int start_theta = window[0].view->theta_deg;
        for (int s = 0; s < 6; ++s)
            if (kBaseThetas[static_cast<std::size_t>(s)] == start_theta) counts[static_cast<std::size_t>(s)]++;
    }
    // Binomial(10^4, 1/6): mean 1666.7, sigma 37.3; assert within 3 sigma.
    for (int c : counts) {
        REQUIRE(c > 1555);
        REQUIRE(c < 1779);
    }
}

TEST_CASE("windows preserve order and honor an explicit condition") {
    const SurfaceInstance inst = full_instance({"cond0", "cond1"});
    RngState rng(4);
    const std::string cond = "cond1";
    const auto window = sample_view_window(inst, 4, rng, &cond);
    for (std::size_t i = 0; i < window.size(); ++i) {
        REQUIRE(window[i].view->illumination == "cond1");
        if (i > 0)
            REQUIRE(window[i].view->theta_deg == window[i - 1].view->theta_deg + 10);
    }
}

TEST_CASE("an instance without enough contiguous views is a sampling error") {
    SurfaceInstance inst = full_instance({"cond0"});
    // Knock out delta=5 partners so the longest complete run is two angles:
    // remaining complete thetas are {-30,-20}, {0,10}, {30}.
    std::erase_if(inst.views, [](const ViewRecord& v) {
        return v.delta_deg == 5 &&
               (v.theta_deg == -40 || v.theta_deg == -10 || v.theta_deg == 20 || v.theta_deg == 40);
    });
    RngState rng(5);
    REQUIRE_THROWS_AS(sample_view_window(inst, 4, rng), SamplingError);
    REQUIRE_THROWS_AS(sample_view_window(inst, 3, rng), SamplingError);
    const auto w2 = sample_view_window(inst, 2, rng);
    REQUIRE(w2.size() == 2);
    REQUIRE(w2[1].view->theta_deg == w2[0].view->theta_deg + 10);
}
