#include <catch2/catch_amalgamated.hpp>

#include "dain/optim.hpp"
#include "oracles.hpp"

using namespace dain;

TEST_CASE("sgd step with zero gradient and zero velocity is a no-op") {
    Parameter p(Tensor::from({2}, {1.0f, -2.0f}));
    Tensor before = p.value;
    std::vector<Parameter*> params{&p};
    sgd_momentum_step(params, 0.5f, 0.9f);
    REQUIRE(oracle::bitwise_equal(p.value, before));
}

TEST_CASE("sgd step without momentum is plain descent") {
    Parameter p(Tensor::from({2}, {1.0f, 1.0f}));
    p.gradient = Tensor::from({2}, {0.25f, -0.5f});
    std::vector<Parameter*> params{&p};
    sgd_momentum_step(params, 1.0f, 0.0f);
    REQUIRE(p.value(0) == 0.75f);
    REQUIRE(p.value(1) == 1.5f);
    REQUIRE(p.gradient(0) == 0.0f);  // gradients zeroed after the step
    REQUIRE(p.gradient(1) == 0.0f);
}

TEST_CASE("two momentum steps with constant gradient follow the recurrence") {
    // v1 = g, v2 = 0.9 g + g = 1.9 g; value = x0 - lr g - lr 1.9 g
    const float g = 0.4f, lr = 0.1f;
    Parameter p(Tensor::from({1}, {2.0f}));
    std::vector<Parameter*> params{&p};

    p.gradient(0) = g;
    sgd_momentum_step(params, lr, 0.9f);
    p.gradient(0) = g;
    sgd_momentum_step(params, lr, 0.9f);

    REQUIRE(p.value(0) == Catch::Approx(2.0f - lr * g - lr * 1.9f * g).epsilon(1e-6));
}

TEST_CASE("learn_rate_scale multiplies the base rate") {
    Parameter p(Tensor::from({1}, {0.0f}), 10.0f);
    p.gradient(0) = 1.0f;
    std::vector<Parameter*> params{&p};
    sgd_momentum_step(params, 0.01f, 0.0f);
    REQUIRE(p.value(0) == Catch::Approx(-0.1f));
}

TEST_CASE("frozen parameters stay bitwise unchanged") {
    Parameter p(Tensor::from({3}, {0.5f, -1.25f, 3.0f}));
    p.velocity = Tensor::from({3}, {0.1f, 0.2f, 0.3f});
    p.gradient = Tensor::from({3}, {9, 9, 9});
    p.frozen = true;
    Tensor value_before = p.value;
    Tensor velocity_before = p.velocity;

    std::vector<Parameter*> params{&p};
    sgd_momentum_step(params, 1.0f, 0.9f);
    REQUIRE(oracle::bitwise_equal(p.value, value_before));
    REQUIRE(oracle::bitwise_equal(p.velocity, velocity_before));
}
