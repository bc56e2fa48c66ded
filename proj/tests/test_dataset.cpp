#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "dain/dataset.hpp"
#include "dain/image.hpp"
#include "dain/loader.hpp"
#include "dain/splits.hpp"
#include "oracles.hpp"

using namespace dain;
namespace fs = std::filesystem;

namespace {

struct TempTree {
    fs::path root;
    explicit TempTree(const char* name) : root(fs::temp_directory_path() / name) {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempTree() { fs::remove_all(root); }
};

void write_tiny_png(const fs::path& p, int salt = 0) {
    Tensor img({3, 16, 16});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                img(c, y, x) = 0.5f + 0.4f * std::sin(0.37f * (x + 2 * y) + 0.9f * c + 0.11f * salt);
    png_write(p, img);
}

/// root/<class>/<instance>/<condition>/theta*_delta*.png
void build_tree(const fs::path& root, int classes, int instances, int conditions) {
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < instances; ++i)
            for (int t = 0; t < conditions; ++t) {
                const fs::path dir = root / ("cls" + std::to_string(c)) /
                                     ("cls" + std::to_string(c) + "_i" + std::to_string(i)) /
                                     ("cond" + std::to_string(t));
                fs::create_directories(dir);
                for (int theta : kBaseThetas)
                    for (int delta : {0, 5}) {
                        char name[32];
                        std::snprintf(name, sizeof(name), "theta%+03d_delta%d.png", theta, delta);
                        write_tiny_png(dir / name, 100 * c + 10 * i + theta + delta);
                    }
            }
}

} // namespace

TEST_CASE("filename parsing accepts both compact and underscored forms") {
    int theta = 0, delta = 0;
    REQUIRE(detail::parse_view_filename("theta+00_delta5.png", theta, delta));
    REQUIRE(theta == 0);
    REQUIRE(delta == 5);
    REQUIRE(detail::parse_view_filename("theta-40_delta0.png", theta, delta));
    REQUIRE(theta == -40);
    REQUIRE(delta == 0);
    REQUIRE(detail::parse_view_filename("theta_25_delta_0.png", theta, delta));
    REQUIRE(theta == 25);
    REQUIRE(delta == 0);
    REQUIRE_FALSE(detail::parse_view_filename("snapshot.png", theta, delta));
    REQUIRE_FALSE(detail::parse_view_filename("theta+10_delta5.jpeg", theta, delta));
}

TEST_CASE("scan_gtos fails fatally on an empty root") {
    TempTree tree("dain_scan_empty");
    REQUIRE_THROWS_AS(scan_gtos(tree.root), IoError);
    REQUIRE_THROWS_AS(scan_gtos(tree.root / "missing"), IoError);
}

TEST_CASE("scan_gtos indexes a complete synthetic tree") {
    TempTree tree("dain_scan_full");
    build_tree(tree.root, 2, 3, 1);
    const DatasetIndex index = scan_gtos(tree.root);

    REQUIRE(index.classes == std::vector<std::string>{"cls0", "cls1"});
    REQUIRE(index.instance_count() == 6);
    for (const auto& cls : index.classes) {
        REQUIRE(index.instances.at(cls).size() == 3);
        for (const auto& inst : index.instances.at(cls)) {
            REQUIRE(inst.views.size() == 18);  // 9 thetas x 2 deltas
            REQUIRE(inst.complete);
        }
    }
    REQUIRE(index.conditions == std::vector<std::string>{"cond0"});
    REQUIRE(index.warnings.empty());
}

TEST_CASE("scan_gtos warns on off-grid angles and keeps the instance flagged") {
    TempTree tree("dain_scan_offgrid");
    build_tree(tree.root, 2, 1, 1);
    write_tiny_png(tree.root / "cls0" / "cls0_i0" / "cond0" / "theta_25_delta_0.png");

    const DatasetIndex index = scan_gtos(tree.root);
    bool warned = false;
    for (const auto& w : index.warnings)
        if (w.find("off the viewing grid") != std::string::npos) warned = true;
    REQUIRE(warned);
    REQUIRE_FALSE(index.instances.at("cls0")[0].complete);
    REQUIRE(index.instances.at("cls0")[0].views.size() == 18);  // the bad file is skipped
}

TEST_CASE("scan_gtos warns on unparseable names and corrupt files") {
    TempTree tree("dain_scan_bad");
    build_tree(tree.root, 2, 1, 1);
    const fs::path dir = tree.root / "cls0" / "cls0_i0" / "cond0";
    std::ofstream(dir / "notes.png") << "not a png";
    std::ofstream(dir / "random_name.png") << "x";
    {
        // valid name, corrupt payload
        const fs::path extra = tree.root / "cls0" / "cls0_i0" / "cond9";
        fs::create_directories(extra);
        std::ofstream os(extra / "theta+10_delta0.png");
        os << "bogus";
    }

    const DatasetIndex index = scan_gtos(tree.root);
    int unparseable = 0, unreadable = 0;
    for (const auto& w : index.warnings) {
        if (w.find("unparseable") != std::string::npos) ++unparseable;
        if (w.find("unreadable") != std::string::npos) ++unreadable;
    }
    REQUIRE(unparseable >= 2);  // notes.png, random_name.png
    REQUIRE(unreadable >= 1);
}

TEST_CASE("scan_gtos flags instances missing a delta partner") {
    TempTree tree("dain_scan_missing");
    build_tree(tree.root, 2, 1, 1);
    fs::remove(tree.root / "cls1" / "cls1_i0" / "cond0" / "theta+20_delta5.png");
    const DatasetIndex index = scan_gtos(tree.root);
    REQUIRE(index.instances.at("cls0")[0].complete);
    REQUIRE_FALSE(index.instances.at("cls1")[0].complete);
}

TEST_CASE("load_dataset builds samples, groups and train-only stats") {
    TempTree tree("dain_loader");
    build_tree(tree.root, 2, 4, 2);
    const DatasetIndex index = scan_gtos(tree.root);
    const auto splits = make_splits(index, 1, 0.7, 4, 99);

    LoaderOptions opt;
    opt.align = false;  // flat-ish fixture images; alignment has no signal
    opt.resize = 16;
    const LoadedDataset data = load_dataset(index, splits[0], opt);

    REQUIRE(data.classes == std::vector<std::string>{"cls0", "cls1"});
    // 2 classes x 4 instances x 2 conditions x 9 thetas
    REQUIRE(data.samples.size() == 2 * 4 * 2 * 9);
    // round(0.7*4)=3 train instances per class
    REQUIRE(data.train_idx.size() == 2 * 3 * 2 * 9);
    REQUIRE(data.test_idx.size() == 2 * 1 * 2 * 9);
    REQUIRE(data.train_groups.size() == 2 * 3 * 2);
    REQUIRE(data.test_groups.size() == 2 * 1 * 2);

    for (const auto& g : data.train_groups) {
        REQUIRE(g.window_starts(9).size() == 1);  // full arc present
        REQUIRE(g.window_starts(4).size() == 6);
    }
    for (int i : data.train_idx) REQUIRE(data.samples[static_cast<std::size_t>(i)].train);
    REQUIRE(data.stats_view.mean.size() == 3);
    REQUIRE(data.stats_diff.mean.size() == 3);
}

TEST_CASE("load_dataset is independent of worker count") {
    TempTree tree("dain_loader_mt");
    build_tree(tree.root, 2, 4, 1);
    const DatasetIndex index = scan_gtos(tree.root);
    const auto splits = make_splits(index, 1, 0.7, 4, 5);

    LoaderOptions o1;
    o1.align = false;
    o1.resize = 16;
    o1.workers = 1;
    LoaderOptions o2 = o1;
    o2.workers = 3;

    const LoadedDataset a = load_dataset(index, splits[0], o1);
    const LoadedDataset b = load_dataset(index, splits[0], o2);
    REQUIRE(a.samples.size() == b.samples.size());
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
        REQUIRE(a.samples[i].instance_id == b.samples[i].instance_id);
        REQUIRE(oracle::bitwise_equal(a.samples[i].view, b.samples[i].view));
        REQUIRE(oracle::bitwise_equal(a.samples[i].differential, b.samples[i].differential));
    }
}
