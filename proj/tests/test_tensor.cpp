#include <catch2/catch_amalgamated.hpp>

#include "dain/tensor.hpp"

using dain::DimensionError;
using dain::Tensor;

TEST_CASE("tensor shape and data stay consistent") {
    Tensor t({2, 3}, 1.5f);
    REQUIRE(t.numel() == 6);
    REQUIRE(t.rank() == 2);
    REQUIRE(t(1, 2) == 1.5f);

    REQUIRE_THROWS_AS(Tensor({2, 2}, std::vector<float>{1.0f, 2.0f, 3.0f}), DimensionError);
}

TEST_CASE("row-major indexing") {
    Tensor t({2, 2, 3});
    t(1, 0, 2) = 7.0f;
    REQUIRE(t.data[1 * 6 + 0 * 3 + 2] == 7.0f);

    Tensor u({2, 2, 2, 2});
    u(1, 1, 1, 1) = 3.0f;
    REQUIRE(u.data[15] == 3.0f);
}

TEST_CASE("all_finite flags NaN and Inf") {
    Tensor t({3}, 1.0f);
    REQUIRE(t.all_finite());
    t(1) = std::numeric_limits<float>::quiet_NaN();
    REQUIRE_FALSE(t.all_finite());
    t(1) = std::numeric_limits<float>::infinity();
    REQUIRE_FALSE(t.all_finite());
}

TEST_CASE("from initializer list") {
    Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
    REQUIRE(t(0, 1) == 2.0f);
    REQUIRE(t(1, 0) == 3.0f);
}
