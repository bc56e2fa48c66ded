#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "dain/dait.hpp"
#include "dain/error.hpp"
#include "dain/network.hpp"

namespace dain {

// Checkpoint layout: <dir>/manifest.json plus one DAIT tensor per parameter.

inline nlohmann::json layer_to_json(const LayerSpec& l) {
    using nlohmann::json;
    switch (l.kind) {
        case LayerKind::Conv:
            return json{{"kind", "conv"}, {"out_channels", l.out_channels}, {"kernel", l.kernel},
                        {"stride", l.stride}, {"pad", l.pad}};
        case LayerKind::Relu: return json{{"kind", "relu"}};
        case LayerKind::Pool: return json{{"kind", "pool"}, {"window", l.window}, {"stride", l.pool_stride}};
        case LayerKind::Flatten: return json{{"kind", "flatten"}};
        case LayerKind::Dense: return json{{"kind", "dense"}, {"units", l.units}};
        case LayerKind::Dropout: return json{{"kind", "dropout"}, {"rate", l.rate}};
    }
    throw ArgumentError("layer_to_json: unknown layer kind");
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "conv")
        return LayerSpec::conv(j.at("out_channels").get<int>(), j.at("kernel").get<int>(),
                               j.at("stride").get<int>(), j.at("pad").get<int>());
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "pool") return LayerSpec::pool(j.at("window").get<int>(), j.at("stride").get<int>());
    if (kind == "flatten") return LayerSpec::flatten();
    if (kind == "dense") return LayerSpec::dense(j.at("units").get<int>());
    if (kind == "dropout") return LayerSpec::dropout(j.at("rate").get<float>());
    throw ArgumentError("layer_from_json: unknown layer kind '" + kind + "'");
}

inline FusionArch fusion_arch_from_string(const std::string& s) {
    if (s == "single") return FusionArch::Single;
    if (s == "final") return FusionArch::Final;
    if (s == "intermediate") return FusionArch::Intermediate;
    if (s == "dain") return FusionArch::Dain;
    throw ArgumentError("unknown fusion architecture '" + s + "'");
}

inline FusionOp fusion_op_from_string(const std::string& s) {
    if (s == "sum") return FusionOp::Sum;
    if (s == "max") return FusionOp::Max;
    throw ArgumentError("unknown fusion operator '" + s + "'");
}

inline Combiner combiner_from_string(const std::string& s) {
    if (s == "voting") return Combiner::Voting;
    if (s == "pooling") return Combiner::Pooling;
    if (s == "filter3d") return Combiner::Filter3d;
    throw ArgumentError("unknown multiview combiner '" + s + "'");
}

inline nlohmann::json network_spec_to_json(const NetworkSpec& s) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.backbone) layers.push_back(layer_to_json(l));
    return nlohmann::json{{"input_channels", s.input_channels},
                          {"input_size", s.input_size},
                          {"backbone", layers},
                          {"fusion_arch", to_string(s.fusion_arch)},
                          {"fusion_op", to_string(s.fusion_op)},
                          {"fusion_layer", s.fusion_layer},
                          {"num_classes", s.num_classes}};
}

inline NetworkSpec network_spec_from_json(const nlohmann::json& j) {
    NetworkSpec s;
    s.input_channels = j.at("input_channels").get<int>();
    s.input_size = j.at("input_size").get<int>();
    for (const auto& l : j.at("backbone")) s.backbone.push_back(layer_from_json(l));
    s.fusion_arch = fusion_arch_from_string(j.at("fusion_arch").get<std::string>());
    s.fusion_op = fusion_op_from_string(j.at("fusion_op").get<std::string>());
    s.fusion_layer = j.at("fusion_layer").get<int>();
    s.num_classes = j.at("num_classes").get<int>();
    return s;
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot read " + path.string());
    nlohmann::json j;
    is >> j;
    return j;
}

inline void save_checkpoint(Network& net, const std::filesystem::path& dir, std::uint64_t seed,
                            const std::string& stage) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest{{"format", "dain-checkpoint-v1"},
                            {"network", network_spec_to_json(net.spec())},
                            {"seed", seed},
                            {"stage", stage}};
    write_json_file(dir / "manifest.json", manifest);
    for (auto& [name, p] : net.named_parameters()) dait_save(p->value, dir / (name + ".dait"));
}

inline Network load_checkpoint(const std::filesystem::path& dir) {
    const nlohmann::json manifest = read_json_file(dir / "manifest.json");
    if (manifest.at("format").get<std::string>() != "dain-checkpoint-v1")
        throw IoError("load_checkpoint: unknown format in " + dir.string());
    Network net(network_spec_from_json(manifest.at("network")), RngState(0));
    for (auto& [name, p] : net.named_parameters()) {
        Tensor t = dait_load(dir / (name + ".dait"));
        if (t.shape != p->value.shape)
            throw IoError("load_checkpoint: shape mismatch for " + name);
        p->value = std::move(t);
    }
    return net;
}

/**
 * Initialize one stream of a two-branch network from a single-stream
 * checkpoint (stream A of the source). Only layers present in the target
 * stream are loaded; shapes must match.
 */
inline void import_stream(Network& net, char which, const std::filesystem::path& single_ckpt_dir) {
    auto& stream = net.stream_params(which);
    for (std::size_t i = 0; i < stream.size(); ++i) {
        if (!stream[i].present) continue;
        const std::string base = std::string("a.layer") + (i < 10 ? "0" : "") + std::to_string(i);
        const auto wpath = single_ckpt_dir / (base + ".weight.dait");
        const auto bpath = single_ckpt_dir / (base + ".bias.dait");
        Tensor w = dait_load(wpath);
        Tensor b = dait_load(bpath);
        if (w.shape != stream[i].weight.value.shape || b.shape != stream[i].bias.value.shape)
            throw IoError("import_stream: shape mismatch at layer " + std::to_string(i));
        stream[i].weight.value = std::move(w);
        stream[i].bias.value = std::move(b);
    }
}

} // namespace dain
