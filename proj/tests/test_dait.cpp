#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dain/dait.hpp"
#include "dain/rng.hpp"
#include "oracles.hpp"

using dain::Tensor;

TEST_CASE("dait header layout is byte-exact") {
    Tensor t = Tensor::from({2, 1}, {1.0f, -2.0f});
    const auto bytes = dain::dait_encode(t);
    REQUIRE(bytes[0] == 0x44);
    REQUIRE(bytes[1] == 0x41);
    REQUIRE(bytes[2] == 0x49);
    REQUIRE(bytes[3] == 0x54);
    REQUIRE(bytes[4] == 2);           // rank
    REQUIRE(bytes[5] == 2);           // dim0 LE
    REQUIRE(bytes[9] == 1);           // dim1 LE
    REQUIRE(bytes.size() == 5 + 8 + 8);
    // 1.0f = 0x3F800000 little-endian
    REQUIRE(bytes[13] == 0x00);
    REQUIRE(bytes[16] == 0x3F);
}

TEST_CASE("dait round trip is bitwise for random tensors") {
    dain::RngState rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> shape;
        const int rank = 1 + static_cast<int>(rng.uniform_int(4));
        for (int i = 0; i < rank; ++i) shape.push_back(1 + static_cast<int>(rng.uniform_int(5)));
        Tensor t(shape);
        oracle::fill_uniform(t, rng, -100.0, 100.0);
        const Tensor back = dain::dait_decode(dain::dait_encode(t));
        REQUIRE(back.shape == t.shape);
        REQUIRE(oracle::bitwise_equal(back, t));
    }
}

TEST_CASE("dait file round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "dain_dait_test";
    std::filesystem::create_directories(dir);
    Tensor t = Tensor::from({3}, {0.5f, -0.25f, 1e-20f});
    dain::dait_save(t, dir / "t.dait");
    REQUIRE(oracle::bitwise_equal(dain::dait_load(dir / "t.dait"), t));
    std::filesystem::remove_all(dir);
}

TEST_CASE("dait rejects bad magic and truncation") {
    Tensor t = Tensor::from({2}, {1.0f, 2.0f});
    auto bytes = dain::dait_encode(t);
    auto bad = bytes;
    bad[0] = 0x00;
    REQUIRE_THROWS_AS(dain::dait_decode(bad), dain::IoError);
    bytes.pop_back();
    REQUIRE_THROWS_AS(dain::dait_decode(bytes), dain::IoError);
}
