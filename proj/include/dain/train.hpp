#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dain/augment.hpp"
#include "dain/checkpoint.hpp"
#include "dain/error.hpp"
#include "dain/loader.hpp"
#include "dain/network.hpp"
#include "dain/optim.hpp"

namespace dain {

// Full-scale batch sizes from the original training procedure; desk-scale
// runs default to 32.
inline constexpr int kFullScaleBatchSingleStream = 196;
inline constexpr int kFullScaleBatchTwoBranch = 64;

struct TrainStage {
    StageScope scope = StageScope::All;
    float base_lr = 1e-3f;
    int epochs = 5;           // epoch budget for this stage
    bool saturation = false;  // decay the lr when training accuracy saturates
};

struct MultiviewTrain {
    bool enabled = false;
    int n_views = 4;
    Combiner combiner = Combiner::Voting;
};

struct TrainConfig {
    std::vector<TrainStage> stages;
    int batch_size = 32;
    float momentum = 0.9f;
    float dropout_rate = 0.5f;
    float lr_decay_factor = 0.1f;
    int saturation_window = 3;
    std::uint64_t seed = 0;
    AugmentParams augment;
    MultiviewTrain multiview;

    /// Single-stream schedule: classifier head at 5e-2 for 5 epochs, all
    /// dense layers at 1e-2 for 5 epochs, then everything at 1e-3 with
    /// saturation-triggered decay.
    static TrainConfig single_stream_defaults() {
        TrainConfig c;
        c.stages = {{StageScope::LastDense, 5e-2f, 5, false},
                    {StageScope::AllDense, 1e-2f, 5, false},
                    {StageScope::All, 1e-3f, 20, true}};
        c.augment.stretch_pct = 0.10f;
        return c;
    }

    /// Two-branch schedule: train above the fusion point for 3 epochs, then
    /// everything at 1e-3 with saturation-triggered decay.
    static TrainConfig two_branch_defaults() {
        TrainConfig c;
        c.stages = {{StageScope::PostFusion, 1e-3f, 3, false}, {StageScope::All, 1e-3f, 17, true}};
        c.augment.stretch_pct = 0.25f;
        return c;
    }
};

inline StageScope stage_scope_from_string(const std::string& s) {
    if (s == "last_dense") return StageScope::LastDense;
    if (s == "all_dense") return StageScope::AllDense;
    if (s == "post_fusion") return StageScope::PostFusion;
    if (s == "all") return StageScope::All;
    throw ArgumentError("unknown stage scope '" + s + "'");
}

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& s : c.stages)
        stages.push_back(nlohmann::json{{"scope", to_string(s.scope)},
                                        {"base_lr", s.base_lr},
                                        {"epochs", s.epochs},
                                        {"saturation", s.saturation}});
    return nlohmann::json{{"stages", stages},
                          {"batch_size", c.batch_size},
                          {"momentum", c.momentum},
                          {"dropout_rate", c.dropout_rate},
                          {"lr_decay_factor", c.lr_decay_factor},
                          {"saturation_window", c.saturation_window},
                          {"seed", c.seed},
                          {"augment",
                           {{"stretch_pct", c.augment.stretch_pct},
                            {"flip_prob", c.augment.flip_prob},
                            {"crop_size", c.augment.crop_size},
                            {"resize", c.augment.resize}}},
                          {"multiview",
                           {{"enabled", c.multiview.enabled},
                            {"n_views", c.multiview.n_views},
                            {"combiner", to_string(c.multiview.combiner)}}}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.stages.clear();
    for (const auto& s : j.at("stages"))
        c.stages.push_back(TrainStage{stage_scope_from_string(s.at("scope").get<std::string>()),
                                      s.at("base_lr").get<float>(), s.at("epochs").get<int>(),
                                      s.at("saturation").get<bool>()});
    c.batch_size = j.at("batch_size").get<int>();
    c.momentum = j.at("momentum").get<float>();
    c.dropout_rate = j.at("dropout_rate").get<float>();
    c.lr_decay_factor = j.at("lr_decay_factor").get<float>();
    c.saturation_window = j.at("saturation_window").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    const auto& a = j.at("augment");
    c.augment.stretch_pct = a.at("stretch_pct").get<float>();
    c.augment.flip_prob = a.at("flip_prob").get<float>();
    c.augment.crop_size = a.at("crop_size").get<int>();
    c.augment.resize = a.at("resize").get<int>();
    const auto& m = j.at("multiview");
    c.multiview.enabled = m.at("enabled").get<bool>();
    c.multiview.n_views = m.at("n_views").get<int>();
    c.multiview.combiner = combiner_from_string(m.at("combiner").get<std::string>());
    return c;
}

struct EpochRecord {
    int epoch = 0;        // global across stages
    int stage = 0;
    double loss = 0.0;
    double train_acc = 0.0;  // percent
    float lr = 0.0f;
};

struct TrainResult {
    std::vector<EpochRecord> curve;
    std::filesystem::path checkpoint_dir;
};

namespace detail {

inline void write_losses_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& curve) {
    std::FILE* f = std::fopen(path.string().c_str(), "wb");
    if (!f) throw IoError("cannot write " + path.string());
    std::fprintf(f, "epoch,loss,train_acc\n");
    for (const auto& r : curve) std::fprintf(f, "%d,%.6f,%.6f\n", r.epoch, r.loss, r.train_acc);
    std::fclose(f);
}

/// Normalized, augmented two-stream input for one loaded sample.
inline ViewInput make_train_input(const LoadedSample& s, const LoadedDataset& data,
                                  const AugmentParams& aug, RngState& rng, bool two_stream) {
    auto [v, d] = augment_pair(s.view, s.differential, aug, rng);
    ViewInput in;
    in.view = apply_normalization(v, data.stats_view);
    if (two_stream) in.differential = apply_normalization(d, data.stats_diff);
    return in;
}

} // namespace detail

/**
 * Staged fine-tuning: each stage freezes everything outside its scope and
 * runs SGD with momentum over seeded shuffled batches. Saturation stages
 * decay the learning rate whenever training accuracy improved by less than
 * 0.2 points over the配: saturation window. A non-finite loss aborts with a
 * diagnostic checkpoint.
 */
inline TrainResult train_staged(Network& net, const LoadedDataset& data, const TrainConfig& cfg,
                                const std::filesystem::path& run_dir) {
    if (data.train_idx.empty()) throw ArgumentError("train_staged: empty training set");
    if (cfg.batch_size < 1) throw ArgumentError("train_staged: batch_size must be >= 1");
    std::filesystem::create_directories(run_dir);

    net.set_dropout_rate(cfg.dropout_rate);
    const bool two_stream = net.uses_stream_b();
    const RngState master(cfg.seed);

    TrainResult result;
    int global_epoch = 0;

    // Unit of SGD: one sample (single view) or one view window (multiview).
    std::vector<int> train_units;
    if (cfg.multiview.enabled)
        for (std::size_t g = 0; g < data.train_groups.size(); ++g)
            train_units.push_back(static_cast<int>(g));
    else
        train_units = data.train_idx;

    try {
        for (std::size_t stage_idx = 0; stage_idx < cfg.stages.size(); ++stage_idx) {
            const TrainStage& stage = cfg.stages[stage_idx];
            net.set_trainable(stage.scope);
            float lr = stage.base_lr;
            std::vector<double> acc_history;

            for (int epoch = 0; epoch < stage.epochs; ++epoch, ++global_epoch) {
                RngState erng = master.split(stage_idx * 1000 + static_cast<std::uint64_t>(epoch));
                std::vector<int> order = train_units;
                for (std::size_t i = order.size() - 1; i > 0; --i)
                    std::swap(order[i], order[erng.uniform_int(i + 1)]);

                double loss_sum = 0.0;
                std::size_t correct = 0, seen = 0;
                auto params = net.parameters();

                for (std::size_t pos = 0; pos < order.size();) {
                    const std::size_t batch_end = std::min(pos + static_cast<std::size_t>(cfg.batch_size),
                                                           order.size());
                    const float grad_scale = 1.0f / static_cast<float>(batch_end - pos);
                    for (; pos < batch_end; ++pos) {
                        double loss;
                        int label;
                        if (cfg.multiview.enabled) {
                            const SampleGroup& group =
                                data.train_groups[static_cast<std::size_t>(order[pos])];
                            const auto window =
                                sample_group_window(group, cfg.multiview.n_views, erng);
                            std::vector<ViewInput> views;
                            for (int si : window)
                                views.push_back(detail::make_train_input(
                                    data.samples[static_cast<std::size_t>(si)], data, cfg.augment, erng,
                                    two_stream));
                            label = group.label;
                            loss = net.compute_loss_multiview(views, label, cfg.multiview.combiner, true,
                                                              erng, true, grad_scale);
                        } else {
                            const LoadedSample& s = data.samples[static_cast<std::size_t>(order[pos])];
                            const ViewInput in =
                                detail::make_train_input(s, data, cfg.augment, erng, two_stream);
                            label = s.label;
                            loss = net.compute_loss(in.view, two_stream ? &in.differential : nullptr,
                                                    label, true, erng, true, grad_scale);
                        }
                        loss_sum += loss;
                        if (net.last_top_class() == label) ++correct;
                        ++seen;
                    }
                    sgd_momentum_step(params, lr, cfg.momentum);
                }

                EpochRecord rec;
                rec.epoch = global_epoch;
                rec.stage = static_cast<int>(stage_idx);
                rec.loss = loss_sum / static_cast<double>(seen);
                rec.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(seen);
                rec.lr = lr;
                result.curve.push_back(rec);

                if (stage.saturation) {
                    acc_history.push_back(rec.train_acc);
                    const int w = cfg.saturation_window;
                    if (static_cast<int>(acc_history.size()) > w) {
                        double best_before = -1.0;
                        for (std::size_t i = acc_history.size() - 1 - static_cast<std::size_t>(w);
                             i + 1 < acc_history.size(); ++i)
                            best_before = std::max(best_before, acc_history[i]);
                        if (rec.train_acc - best_before < 0.2) lr *= cfg.lr_decay_factor;
                    }
                }
            }
        }
    } catch (const NumericError&) {
        save_checkpoint(net, run_dir / "checkpoint-diagnostic", cfg.seed, "aborted-nonfinite-loss");
        detail::write_losses_csv(run_dir / "losses.csv", result.curve);
        throw;
    }

    result.checkpoint_dir = run_dir / "checkpoint";
    save_checkpoint(net, result.checkpoint_dir, cfg.seed, "final");
    detail::write_losses_csv(run_dir / "losses.csv", result.curve);
    return result;
}

} // namespace dain
