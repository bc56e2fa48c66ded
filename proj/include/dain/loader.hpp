#pragma once

#include <atomic>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "dain/augment.hpp"
#include "dain/dataset.hpp"
#include "dain/differential.hpp"
#include "dain/error.hpp"
#include "dain/image.hpp"
#include "dain/splits.hpp"

namespace dain {

struct LoaderOptions {
    bool align = true;  // register the offset view before subtracting
    int resize = 36;
    int align_levels = 3;
    int align_max_iters = 50;
    double align_tol = 1e-4;
    int workers = 1;
};

/// One loaded (instance, condition, theta) observation.
struct LoadedSample {
    Tensor view, differential;  // [3,resize,resize]
    int label = 0;
    std::string instance_id, condition;
    int theta_deg = 0;
    bool train = false;
};

/// Per (instance, condition) group: sample index per base angle, -1 where
/// the pair is missing. Arc order.
struct SampleGroup {
    std::array<int, 9> at_theta{-1, -1, -1, -1, -1, -1, -1, -1, -1};
    int label = 0;
    std::string instance_id, condition;
    bool train = false;

    std::vector<int> window_starts(int n) const {
        std::vector<int> starts;
        for (int s = 0; s + n <= static_cast<int>(at_theta.size()); ++s) {
            bool ok = true;
            for (int k = 0; k < n; ++k)
                if (at_theta[static_cast<std::size_t>(s + k)] < 0) ok = false;
            if (ok) starts.push_back(s);
        }
        return starts;
    }
};

struct LoadedDataset {
    std::vector<std::string> classes;  // label order
    std::vector<LoadedSample> samples;
    std::vector<int> train_idx, test_idx;
    std::vector<SampleGroup> train_groups, test_groups;
    ChannelStats stats_view, stats_diff;  // computed on training images only
    std::vector<std::string> warnings;
};

/// Uniform contiguous window over a loaded group; mirrors the record-level
/// sampling rule.
inline std::vector<int> sample_group_window(const SampleGroup& g, int n, RngState& rng) {
    const auto starts = g.window_starts(n);
    if (starts.empty())
        throw SamplingError("sample_group_window: group " + g.instance_id + "/" + g.condition +
                            " lacks " + std::to_string(n) + " contiguous views");
    const int start = starts[rng.uniform_int(starts.size())];
    std::vector<int> out;
    for (int k = 0; k < n; ++k) out.push_back(g.at_theta[static_cast<std::size_t>(start + k)]);
    return out;
}

/**
 * Read every view pair of the split's instances, form differential images,
 * resize, and compute per-stream normalization statistics on the training
 * half. Alignment failures fall back to plain subtraction with a warning.
 */
inline LoadedDataset load_dataset(const DatasetIndex& index, const SplitSpec& split,
                                  const LoaderOptions& opt) {
    LoadedDataset out;
    out.classes = split.classes();

    struct Job {
        const SurfaceInstance* instance;
        const ViewRecord *view, *offset;
        int label;
        std::string condition;
        int theta;
        bool train;
    };
    std::vector<Job> jobs;

    for (std::size_t label = 0; label < out.classes.size(); ++label) {
        const std::string& cls = out.classes[label];
        const auto it = index.instances.find(cls);
        if (it == index.instances.end()) throw ArgumentError("load_dataset: class not in index: " + cls);
        for (const SurfaceInstance& inst : it->second) {
            const bool in_train = split.instance_in_train(cls, inst.instance_id);
            const auto& test_ids = split.test.at(cls);
            const bool in_test =
                std::find(test_ids.begin(), test_ids.end(), inst.instance_id) != test_ids.end();
            if (!in_train && !in_test) continue;
            for (const std::string& cond : inst.conditions())
                for (int theta : kBaseThetas) {
                    const ViewRecord* v0 = inst.find_view(theta, 0, cond);
                    const ViewRecord* v5 = inst.find_view(theta, 5, cond);
                    if (!v0 || !v5) continue;  // incomplete pairs are skipped
                    jobs.push_back({&inst, v0, v5, static_cast<int>(label), cond, theta, in_train});
                }
        }
    }
    if (jobs.empty()) throw ArgumentError("load_dataset: split selects no usable view pairs");

    out.samples.resize(jobs.size());
    std::mutex warn_mutex;

    auto load_one = [&](std::size_t j) {
        const Job& job = jobs[j];
        const Tensor view = png_read(job.view->path);
        const Tensor offset = png_read(job.offset->path);
        DifferentialImage diff;
        if (opt.align) {
            try {
                diff = make_differential(view, offset, true, opt.align_levels, opt.align_max_iters,
                                         opt.align_tol);
            } catch (const AlignmentError& e) {
                {
                    std::lock_guard<std::mutex> lock(warn_mutex);
                    out.warnings.push_back(std::string("alignment fell back to plain subtraction: ") +
                                           e.what());
                }
                diff = make_differential(view, offset, false);
            }
        } else {
            diff = make_differential(view, offset, false);
        }
        LoadedSample& s = out.samples[j];
        s.view = resize_bilinear(view, opt.resize, opt.resize);
        s.differential = resize_bilinear(diff.pixels, opt.resize, opt.resize);
        s.label = job.label;
        s.instance_id = job.instance->instance_id;
        s.condition = job.condition;
        s.theta_deg = job.theta;
        s.train = job.train;
    };

    const int workers = std::max(1, opt.workers);
    if (workers == 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) load_one(j);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t j = next.fetch_add(1); j < jobs.size(); j = next.fetch_add(1)) load_one(j);
            });
        for (auto& th : pool) th.join();
    }

    // Group samples per (instance, condition) in arc order.
    auto group_key = [](const LoadedSample& s) { return s.instance_id + "\x1f" + s.condition; };
    std::map<std::string, SampleGroup> groups;
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        const LoadedSample& s = out.samples[i];
        SampleGroup& g = groups[group_key(s)];
        g.label = s.label;
        g.instance_id = s.instance_id;
        g.condition = s.condition;
        g.train = s.train;
        for (std::size_t t = 0; t < kBaseThetas.size(); ++t)
            if (kBaseThetas[t] == s.theta_deg) g.at_theta[t] = static_cast<int>(i);
        (s.train ? out.train_idx : out.test_idx).push_back(static_cast<int>(i));
    }
    for (auto& [key, g] : groups) (g.train ? out.train_groups : out.test_groups).push_back(g);

    // Normalization statistics from the training half, per stream.
    std::vector<const Tensor*> train_views, train_diffs;
    for (int i : out.train_idx) {
        train_views.push_back(&out.samples[static_cast<std::size_t>(i)].view);
        train_diffs.push_back(&out.samples[static_cast<std::size_t>(i)].differential);
    }
    if (!train_views.empty()) {
        out.stats_view = normalize_stats(train_views);
        out.stats_diff = normalize_stats(train_diffs);
    }
    return out;
}

} // namespace dain
