#include <catch2/catch_amalgamated.hpp>

#include "dain/gradcheck.hpp"
#include "dain/network.hpp"
#include "oracles.hpp"

using namespace dain;

namespace {

/// Small backbone for fast end-to-end checks: two conv blocks, fusion tap at
/// the second block's ReLU.
NetworkSpec micro_spec(FusionArch arch, FusionOp op, int classes = 3) {
    NetworkSpec s;
    s.input_channels = 3;
    s.input_size = 12;
    s.fusion_arch = arch;
    s.fusion_op = op;
    s.num_classes = classes;
    s.backbone = {LayerSpec::conv(4, 3, 1, 1), LayerSpec::relu(),      LayerSpec::pool(2, 2),
                  LayerSpec::conv(6, 3, 1, 1), LayerSpec::relu(),      LayerSpec::pool(2, 2),
                  LayerSpec::flatten(),        LayerSpec::dense(16),   LayerSpec::relu(),
                  LayerSpec::dropout(0.25f),   LayerSpec::dense(classes)};
    s.fusion_layer = 4;
    return s;
}

Tensor random_image(int c, int s, RngState& rng) {
    Tensor t({c, s, s});
    oracle::fill_uniform(t, rng, 0.0, 1.0);
    return t;
}

bool params_bitwise_equal(Network& a, Network& b) {
    auto pa = a.named_parameters(), pb = b.named_parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i].first != pb[i].first) return false;
        if (!oracle::bitwise_equal(pa[i].second->value, pb[i].second->value)) return false;
    }
    return true;
}

} // namespace

TEST_CASE("fuse_maps sum and max semantics") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});

    const Tensor s = fuse_maps(a, b, FusionOp::Sum);
    REQUIRE(s(0, 0) == 6.0f);
    REQUIRE(s(0, 1) == 8.0f);
    REQUIRE(s(1, 0) == 10.0f);
    REQUIRE(s(1, 1) == 12.0f);

    FuseCache cache;
    const Tensor m = fuse_maps(a, a, FusionOp::Max, &cache);
    REQUIRE(oracle::bitwise_equal(m, a));
    Tensor go({2, 2}, 1.0f);
    auto [ga, gb] = fuse_maps_backward(go, cache);
    for (float v : ga.data) REQUIRE(v == 1.0f);  // ties route to x_a
    for (float v : gb.data) REQUIRE(v == 0.0f);
}

TEST_CASE("fuse_maps matches an elementwise oracle and is commutative") {
    RngState rng(301);
    for (int t = 0; t < 10; ++t) {
        Tensor a({3, 4, 5}), b({3, 4, 5});
        oracle::fill_uniform(a, rng, -1, 1);
        oracle::fill_uniform(b, rng, -1, 1);

        const Tensor s = fuse_maps(a, b, FusionOp::Sum);
        const Tensor m = fuse_maps(a, b, FusionOp::Max);
        for (std::size_t i = 0; i < a.numel(); ++i) {
            REQUIRE(s.data[i] == a.data[i] + b.data[i]);
            REQUIRE(m.data[i] == std::max(a.data[i], b.data[i]));
        }
        REQUIRE(oracle::bitwise_equal(s, fuse_maps(b, a, FusionOp::Sum)));
        REQUIRE(oracle::bitwise_equal(m, fuse_maps(b, a, FusionOp::Max)));
    }
}

TEST_CASE("fuse_maps rejects shape mismatch") {
    Tensor a({2, 3}), b({3, 2});
    REQUIRE_THROWS_AS(fuse_maps(a, b, FusionOp::Sum), DimensionError);
}

TEST_CASE("average_probs averages") {
    Tensor a = Tensor::from({2}, {0.6f, 0.4f});
    Tensor b = Tensor::from({2}, {0.2f, 0.8f});
    const Tensor m = average_probs(a, b);
    REQUIRE(m(0) == Catch::Approx(0.4));
    REQUIRE(m(1) == Catch::Approx(0.6));
}

TEST_CASE("build_network is deterministic in the seed") {
    const NetworkSpec spec = NetworkSpec::toy(4, FusionArch::Dain);
    Network n1(spec, RngState(77));
    Network n2(spec, RngState(77));
    Network n3(spec, RngState(78));
    REQUIRE(params_bitwise_equal(n1, n2));
    REQUIRE_FALSE(params_bitwise_equal(n1, n3));
}

TEST_CASE("toy spec runs forward on 32x32x3 and emits a distribution") {
    RngState rng(302);
    for (FusionArch arch :
         {FusionArch::Single, FusionArch::Final, FusionArch::Intermediate, FusionArch::Dain}) {
        Network net(NetworkSpec::toy(5, arch), RngState(1));
        Tensor iv = random_image(3, 32, rng);
        Tensor id = random_image(3, 32, rng);
        RngState fwd(9);
        const Prediction p = net.forward(iv, &id, false, fwd);
        REQUIRE(p.probs.dim(0) == 5);
        double sum = 0.0;
        for (int i = 0; i < 5; ++i) {
            REQUIRE(p.probs(i) >= 0.0f);
            sum += p.probs(i);
        }
        REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
        REQUIRE((p.top_class >= 0 && p.top_class < 5));
    }
}

TEST_CASE("fusion_layer pointing at a dense layer is a spec error") {
    NetworkSpec s = NetworkSpec::toy(4, FusionArch::Dain);
    s.fusion_layer = 13;  // the classifier head
    REQUIRE_THROWS_AS(Network(s, RngState(1)), SpecError);
    s.fusion_layer = 11;  // relu, but after flatten
    REQUIRE_THROWS_AS(Network(s, RngState(1)), SpecError);
}

TEST_CASE("two-stream architectures require the differential input") {
    Network net(micro_spec(FusionArch::Dain, FusionOp::Sum), RngState(3));
    RngState rng(303), fwd(1);
    Tensor iv = random_image(3, 12, rng);
    REQUIRE_THROWS_AS(net.forward(iv, nullptr, false, fwd), ArgumentError);
}

TEST_CASE("final arch with identical streams reproduces either stream's probs") {
    NetworkSpec spec = micro_spec(FusionArch::Final, FusionOp::Sum);
    Network two(spec, RngState(5));
    NetworkSpec sspec = spec;
    sspec.fusion_arch = FusionArch::Single;
    Network one(sspec, RngState(5));

    // Make stream B identical to stream A; both nets share stream A weights
    // because allocation draws from the same per-layer streams.
    auto& a = two.stream_params('a');
    auto& b = two.stream_params('b');
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].present) continue;
        b[i].weight.value = a[i].weight.value;
        b[i].bias.value = a[i].bias.value;
    }

    RngState rng(304), f1(1), f2(1);
    Tensor iv = random_image(3, 12, rng);
    const Prediction p_two = two.forward(iv, &iv, false, f1);
    const Prediction p_one = one.forward(iv, nullptr, false, f2);
    for (int i = 0; i < 3; ++i) REQUIRE(p_two.probs(i) == Catch::Approx(p_one.probs(i)).margin(1e-7));
}

TEST_CASE("frozen scopes control exactly which parameters move") {
    Network net(micro_spec(FusionArch::Dain, FusionOp::Sum), RngState(6));
    net.set_trainable(StageScope::LastDense);
    for (auto& [name, p] : net.named_parameters()) {
        const bool is_head = name.find("layer10") != std::string::npos;
        REQUIRE(p->frozen == !is_head);
    }
    net.set_trainable(StageScope::AllDense);
    for (auto& [name, p] : net.named_parameters()) {
        const bool is_dense = name.find("layer07") != std::string::npos ||
                              name.find("layer10") != std::string::npos;
        REQUIRE(p->frozen == !is_dense);
    }
    net.set_trainable(StageScope::PostFusion);
    for (auto& [name, p] : net.named_parameters()) {
        bool post = name.find("bank") != std::string::npos;
        for (int layer = 5; layer <= 10; ++layer)
            if (name.find("layer" + std::string(layer < 10 ? "0" : "") + std::to_string(layer)) !=
                std::string::npos)
                post = true;
        REQUIRE(p->frozen == !post);
    }
    net.set_trainable(StageScope::All);
    for (auto& [name, p] : net.named_parameters()) REQUIRE_FALSE(p->frozen);
}

TEST_CASE("post_fusion scope rejects architectures without a fusion point") {
    Network net(micro_spec(FusionArch::Final, FusionOp::Sum), RngState(6));
    REQUIRE_THROWS_AS(net.set_trainable(StageScope::PostFusion), ArgumentError);
}

TEST_CASE("end-to-end gradients check out for every architecture and fusion op") {
    RngState data_rng(305);
    int arch_i = 0;
    for (FusionArch arch :
         {FusionArch::Single, FusionArch::Final, FusionArch::Intermediate, FusionArch::Dain}) {
        for (FusionOp op : {FusionOp::Sum, FusionOp::Max}) {
            if (arch == FusionArch::Single && op == FusionOp::Max) continue;  // no fusion in single
            Network net(micro_spec(arch, op), RngState(40 + arch_i));
            net.record_route(true);
            Tensor iv = random_image(3, 12, data_rng);
            Tensor id = random_image(3, 12, data_rng);
            for (auto& v : id.data) v -= 0.5f;  // differentials are signed
            const int label = static_cast<int>(data_rng.uniform_int(3));

            auto closure = [&](bool with_grad) -> LossEval {
                net.zero_grads();
                RngState fwd(123);
                const double loss =
                    net.compute_loss(iv, net.uses_stream_b() ? &id : nullptr, label, true, fwd, with_grad);
                return {loss, net.route_hash()};
            };

            RngState pick(50 + arch_i);
            const auto report = grad_check(closure, net.parameters(), 1e-2, 4, pick);
            INFO(to_string(arch) << "/" << to_string(op) << ": rel err " << report.max_rel_err
                                 << " evaluated " << report.evaluated << " skipped "
                                 << report.skipped_routing << " worst p" << report.worst_param << "["
                                 << report.worst_coord << "] a=" << report.worst_analytic
                                 << " n=" << report.worst_numeric);
            REQUIRE(report.evaluated > 0);
            REQUIRE(report.max_rel_err < 1e-3);
            ++arch_i;
        }
    }
}
