#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "dain/dataset.hpp"
#include "dain/error.hpp"
#include "dain/rng.hpp"

namespace dain {

/// Per-class train/test partition of instance ids for one split.
struct SplitSpec {
    int split_id = 1;  // 1-based
    std::uint64_t seed = 0;
    double train_frac = 0.7;
    int min_instances = 4;
    std::uint64_t config_hash = 0;
    std::map<std::string, std::vector<std::string>> train, test;  // per class

    bool instance_in_train(const std::string& cls, const std::string& id) const {
        const auto it = train.find(cls);
        return it != train.end() && std::find(it->second.begin(), it->second.end(), id) != it->second.end();
    }

    std::vector<std::string> classes() const {
        std::vector<std::string> out;
        for (const auto& [c, v] : train) out.push_back(c);
        return out;  // map iteration is already sorted
    }
};

/**
 * Leakage-free splits: instances are the unit of partitioning, so every view
 * and illumination condition of an instance lands on one side. Per class,
 * round(train_frac * count) instances go to training. Classes with fewer
 * than min_instances are excluded entirely.
 */
inline std::vector<SplitSpec> make_splits(const DatasetIndex& index, int n_splits, double train_frac,
                                          int min_instances, std::uint64_t seed) {
    if (n_splits < 1) throw ArgumentError("make_splits: n_splits must be >= 1");
    if (train_frac <= 0.0 || train_frac >= 1.0)
        throw ArgumentError("make_splits: train_frac must be in (0,1)");

    std::vector<std::string> kept;
    for (const auto& cls : index.classes)
        if (static_cast<int>(index.instances.at(cls).size()) >= min_instances) kept.push_back(cls);
    if (kept.size() < 2)
        throw SplitError("make_splits: fewer than 2 classes remain after the min_instances filter");

    std::uint64_t config_hash = fnv1a_u64(seed);
    config_hash = fnv1a_u64(static_cast<std::uint64_t>(n_splits), config_hash);
    config_hash = fnv1a_u64(static_cast<std::uint64_t>(min_instances), config_hash);
    config_hash = fnv1a_u64(static_cast<std::uint64_t>(std::llround(train_frac * 1e9)), config_hash);
    for (const auto& cls : kept) {
        config_hash = fnv1a(cls.data(), cls.size(), config_hash);
        for (const auto& inst : index.instances.at(cls))
            config_hash = fnv1a(inst.instance_id.data(), inst.instance_id.size(), config_hash);
    }

    const RngState master(seed);
    std::vector<SplitSpec> splits;
    for (int s = 1; s <= n_splits; ++s) {
        SplitSpec spec;
        spec.split_id = s;
        spec.seed = seed;
        spec.train_frac = train_frac;
        spec.min_instances = min_instances;
        spec.config_hash = config_hash;

        for (std::size_t ci = 0; ci < kept.size(); ++ci) {
            const std::string& cls = kept[ci];
            std::vector<std::string> ids;
            for (const auto& inst : index.instances.at(cls)) ids.push_back(inst.instance_id);
            std::sort(ids.begin(), ids.end());

            RngState rng = master.split(static_cast<std::uint64_t>(s)).split(ci);
            for (std::size_t i = ids.size() - 1; i > 0; --i)  // Fisher-Yates
                std::swap(ids[i], ids[rng.uniform_int(i + 1)]);

            const auto n_train =
                static_cast<std::size_t>(std::lround(train_frac * static_cast<double>(ids.size())));
            spec.train[cls] = std::vector<std::string>(ids.begin(), ids.begin() + n_train);
            spec.test[cls] = std::vector<std::string>(ids.begin() + n_train, ids.end());
            std::sort(spec.train[cls].begin(), spec.train[cls].end());
            std::sort(spec.test[cls].begin(), spec.test[cls].end());
        }
        splits.push_back(std::move(spec));
    }
    return splits;
}

inline nlohmann::json split_to_json(const SplitSpec& s) {
    nlohmann::json classes;
    for (const auto& [cls, ids] : s.train)
        classes[cls] = nlohmann::json{{"train", ids}, {"test", s.test.at(cls)}};
    return nlohmann::json{{"split_id", s.split_id},     {"seed", s.seed},
                          {"train_frac", s.train_frac}, {"min_instances", s.min_instances},
                          {"config_hash", s.config_hash}, {"classes", classes}};
}

inline SplitSpec split_from_json(const nlohmann::json& j) {
    SplitSpec s;
    s.split_id = j.at("split_id").get<int>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.train_frac = j.at("train_frac").get<double>();
    s.min_instances = j.at("min_instances").get<int>();
    s.config_hash = j.at("config_hash").get<std::uint64_t>();
    for (const auto& [cls, val] : j.at("classes").items()) {
        s.train[cls] = val.at("train").get<std::vector<std::string>>();
        s.test[cls] = val.at("test").get<std::vector<std::string>>();
    }
    return s;
}

} // namespace dain
