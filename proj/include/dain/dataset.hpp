#pragma once

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dain/error.hpp"

namespace dain {

/// The nine base polar angles of the viewing arc, 10 degrees apart.
inline constexpr std::array<int, 9> kBaseThetas{-40, -30, -20, -10, 0, 10, 20, 30, 40};

inline bool theta_on_grid(int theta) {
    return std::find(kBaseThetas.begin(), kBaseThetas.end(), theta) != kBaseThetas.end();
}

/// One observation: base angles, azimuth offset, illumination tag, file.
struct ViewRecord {
    int theta_deg = 0;
    int phi_deg = 0;
    int delta_deg = 0;  // 0 or 5
    std::string illumination;
    std::string exposure;  // metadata only; a single exposure is used
    std::filesystem::path path;
};

struct SurfaceInstance {
    std::string class_name;
    std::string instance_id;  // globally unique
    std::vector<ViewRecord> views;
    bool complete = true;  // every (theta, illumination) carries both deltas

    std::vector<std::string> conditions() const {
        std::vector<std::string> out;
        for (const auto& v : views)
            if (std::find(out.begin(), out.end(), v.illumination) == out.end())
                out.push_back(v.illumination);
        std::sort(out.begin(), out.end());
        return out;
    }

    const ViewRecord* find_view(int theta, int delta, const std::string& condition) const {
        for (const auto& v : views)
            if (v.theta_deg == theta && v.delta_deg == delta && v.illumination == condition) return &v;
        return nullptr;
    }
};

struct DatasetIndex {
    std::filesystem::path root;
    std::vector<std::string> classes;  // sorted
    std::map<std::string, std::vector<SurfaceInstance>> instances;  // per class, sorted by id
    std::vector<std::string> conditions;  // union of observed tags, sorted
    std::vector<std::string> warnings;

    std::size_t instance_count() const {
        std::size_t n = 0;
        for (const auto& [c, v] : instances) n += v.size();
        return n;
    }
    std::size_t view_count() const {
        std::size_t n = 0;
        for (const auto& [c, v] : instances)
            for (const auto& inst : v) n += inst.views.size();
        return n;
    }
};

namespace detail {

/// Parse "theta{+-}NN_delta{0|5}.png"; underscores before the numbers are
/// tolerated. Returns false when the name does not carry the pattern at all.
inline bool parse_view_filename(const std::string& name, int& theta, int& delta) {
    if (name.size() < 10 || name.rfind(".png") != name.size() - 4) return false;
    const std::string stem = name.substr(0, name.size() - 4);
    const auto tpos = stem.find("theta");
    const auto dpos = stem.find("delta");
    if (tpos == std::string::npos || dpos == std::string::npos || dpos <= tpos) return false;

    auto read_int = [&](std::size_t start, std::size_t end_excl, int& out) {
        std::size_t i = start;
        while (i < end_excl && stem[i] == '_') ++i;
        bool neg = false;
        if (i < end_excl && (stem[i] == '+' || stem[i] == '-')) {
            neg = stem[i] == '-';
            ++i;
        }
        if (i >= end_excl || !std::isdigit(static_cast<unsigned char>(stem[i]))) return false;
        long v = 0;
        for (; i < end_excl && std::isdigit(static_cast<unsigned char>(stem[i])); ++i)
            v = v * 10 + (stem[i] - '0');
        while (i < end_excl && stem[i] == '_') ++i;
        if (i != end_excl) return false;
        out = static_cast<int>(neg ? -v : v);
        return true;
    };

    return read_int(tpos + 5, dpos, theta) && read_int(dpos + 5, stem.size(), delta);
}

inline std::vector<std::filesystem::path> sorted_subdirs(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_directory()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline std::vector<std::filesystem::path> sorted_files(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

inline bool has_png_signature(const std::filesystem::path& p) {
    static const unsigned char sig[8] = {0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A};
    std::FILE* f = std::fopen(p.string().c_str(), "rb");
    if (!f) return false;
    unsigned char buf[8];
    const bool ok = std::fread(buf, 1, 8, f) == 8 && std::equal(buf, buf + 8, sig);
    std::fclose(f);
    return ok;
}

} // namespace detail

/**
 * Index a dataset tree laid out as
 * root/<class>/<instance>/<condition>/theta{+-NN}_delta{0|5}.png.
 *
 * Files with malformed names, off-grid angles or bad PNG signatures produce
 * warnings and are skipped; instances missing views are flagged incomplete
 * but kept. An empty or missing root is fatal.
 */
inline DatasetIndex scan_gtos(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root)) throw IoError("scan_gtos: not a directory: " + root.string());

    DatasetIndex index;
    index.root = root;
    std::vector<std::string> all_conditions;

    for (const auto& class_dir : detail::sorted_subdirs(root)) {
        const std::string class_name = class_dir.filename().string();
        std::vector<SurfaceInstance> instances;
        for (const auto& inst_dir : detail::sorted_subdirs(class_dir)) {
            SurfaceInstance inst;
            inst.class_name = class_name;
            inst.instance_id = inst_dir.filename().string();
            for (const auto& cond_dir : detail::sorted_subdirs(inst_dir)) {
                const std::string condition = cond_dir.filename().string();
                for (const auto& file : detail::sorted_files(cond_dir)) {
                    int theta = 0, delta = 0;
                    const std::string name = file.filename().string();
                    if (!detail::parse_view_filename(name, theta, delta)) {
                        index.warnings.push_back("unparseable file name: " + file.string());
                        continue;
                    }
                    if (!theta_on_grid(theta)) {
                        index.warnings.push_back("theta " + std::to_string(theta) +
                                                 " off the viewing grid: " + file.string());
                        inst.complete = false;
                        continue;
                    }
                    if (delta != 0 && delta != 5) {
                        index.warnings.push_back("delta " + std::to_string(delta) +
                                                 " not in {0,5}: " + file.string());
                        inst.complete = false;
                        continue;
                    }
                    if (!detail::has_png_signature(file)) {
                        index.warnings.push_back("unreadable png: " + file.string());
                        inst.complete = false;
                        continue;
                    }
                    ViewRecord v;
                    v.theta_deg = theta;
                    v.delta_deg = delta;
                    v.phi_deg = 0;
                    v.illumination = condition;
                    v.path = file;
                    inst.views.push_back(std::move(v));
                    if (std::find(all_conditions.begin(), all_conditions.end(), condition) ==
                        all_conditions.end())
                        all_conditions.push_back(condition);
                }
            }
            // Completeness: both delta variants for every (theta, condition).
            for (const auto& condition : inst.conditions())
                for (int theta : kBaseThetas) {
                    const bool d0 = inst.find_view(theta, 0, condition) != nullptr;
                    const bool d5 = inst.find_view(theta, 5, condition) != nullptr;
                    if (d0 != d5 || !d0) inst.complete = false;
                }
            if (!inst.views.empty()) instances.push_back(std::move(inst));
        }
        if (!instances.empty()) {
            index.classes.push_back(class_name);
            index.instances[class_name] = std::move(instances);
        }
    }

    if (index.classes.empty()) throw IoError("scan_gtos: no usable images under " + root.string());
    std::sort(all_conditions.begin(), all_conditions.end());
    index.conditions = std::move(all_conditions);
    return index;
}

} // namespace dain
