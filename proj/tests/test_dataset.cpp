#include "oracles.hpp"

#include "softvla/dataset.hpp"
#include "softvla/errors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <map>
#include <set>

#include <unistd.h>

using namespace softvla;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("softvla_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

Image test_image(int seed) {
    Image img(kProcessedSize, kProcessedSize, Rgb{static_cast<std::uint8_t>(seed * 7), 90, 200});
    for (int x = 0; x < 40; ++x) img.set(x, seed % kProcessedSize, Rgb{255, 0, static_cast<std::uint8_t>(x)});
    return img;
}

// Straight-line motion of 1 cm per frame with slowly changing yaw that
// crosses the +-pi seam; stationary frames are duplicates of their
// predecessor's state.
Demonstration synthetic_demo(const std::set<int>& stationary, const std::set<int>& gripper_flips, int n = 100) {
    Demonstration d;
    d.demo_id = "synthetic";
    d.task_id = 1;
    StateVector s{0.1, 0.4, 0.3, -3.1, 0.05, 3.0, 0.0, 0.0};
    for (int i = 0; i < n; ++i) {
        if (i > 0 && !stationary.count(i)) {
            s[0] += 0.01;
            s[5] = oracle::wrap(s[5] + 0.013);
        }
        if (gripper_flips.count(i)) s[7] = 1.0 - s[7];
        Frame f;
        f.step_index = i;
        f.timestamp_s = i * 0.2;
        f.state = s;
        f.instruction = "Put the orange in the plate";
        f.third_image = test_image(i);
        f.wrist_image = test_image(i + 1);
        d.frames.push_back(std::move(f));
    }
    reencode_actions(d);
    return d;
}

}  // namespace

TEST(Dataset, ActionEncodingWrapsAcrossSeam) {
    const StateVector prev{0, 0, 0, 0, 0, oracle::kPi - 0.1, 0, 0};
    const StateVector cur{0, 0, 0, 0, 0, -oracle::kPi + 0.1, 0, 1};
    const ActionVector a = encode_action(prev, cur);
    EXPECT_NEAR(a[5], 0.2, 1e-12);
    EXPECT_EQ(a[6], 1.0);
    const StateVector back = apply_action(prev, a);
    EXPECT_NEAR(back[5], cur[5], 1e-12);
}

TEST(Dataset, ReconstructionFoldsActions) {
    const Demonstration d = synthetic_demo({}, {30, 60});
    const auto states = oracle::fold_actions(d);
    for (std::size_t i = 0; i < d.frames.size(); ++i) {
        for (int k = 0; k < 8; ++k) {
            EXPECT_NEAR(states[i][k], d.frames[i].state[k], 1e-9) << "frame " << i << " field " << k;
        }
    }
}

TEST(Dataset, FilterRemovesExactlyInjectedStationaryFrames) {
    const std::set<int> injected{7, 23, 24, 51, 88};
    const Demonstration d = synthetic_demo(injected, {});
    const Demonstration f = filter_noop_frames(d);
    ASSERT_EQ(f.frames.size(), 95u);
    std::set<int> kept;
    for (const auto& fr : f.frames) kept.insert(fr.step_index);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(kept.count(i) == 0, injected.count(i) == 1) << i;
    EXPECT_EQ(filter_noop_frames(f), f);
    const auto states = oracle::fold_actions(f);
    for (std::size_t i = 0; i < f.frames.size(); ++i) {
        for (int k = 0; k < 8; ++k) EXPECT_NEAR(states[i][k], f.frames[i].state[k], 1e-9);
    }
}

TEST(Dataset, FilterKeepsGripperTransitions) {
    // Frame 40 does not move but toggles the gripper.
    const Demonstration d = synthetic_demo({40, 41}, {40});
    const Demonstration f = filter_noop_frames(d);
    std::set<int> kept;
    for (const auto& fr : f.frames) kept.insert(fr.step_index);
    EXPECT_TRUE(kept.count(40));
    EXPECT_FALSE(kept.count(41));
    EXPECT_EQ(f.frames.size(), 99u);
}

TEST(Dataset, FilterCollapsesAllZeroMotion) {
    Demonstration d = synthetic_demo({}, {}, 10);
    for (auto& f : d.frames) f.state = d.frames[0].state;
    reencode_actions(d);
    EXPECT_EQ(filter_noop_frames(d).frames.size(), 1u);
}

TEST(Dataset, WarningsFlagShortDemos) {
    const Demonstration d = synthetic_demo({}, {}, 10);
    const auto w = demonstration_warnings(d);
    ASSERT_EQ(w.size(), 1u);
    EXPECT_TRUE(demonstration_warnings(synthetic_demo({}, {}, 60)).empty());
}

TEST(Dataset, ExportImportRoundTripBothFormats) {
    std::vector<Demonstration> demos{synthetic_demo({3}, {10}, 60), synthetic_demo({}, {}, 55)};
    demos[1].demo_id = "second";
    demos[1].task_id = 2;
    for (auto& f : demos[1].frames) f.instruction = "Put the milk in the plate";
    for (const DatasetFormat fmt : {DatasetFormat::episodic, DatasetFormat::frame_table}) {
        const fs::path root = fresh_dir("rt_" + to_string(fmt));
        const ExportSummary s = export_demos(demos, fmt, root);
        EXPECT_EQ(s.demo_count, 2u);
        EXPECT_EQ(s.frame_count, 115u);
        const auto back = import_demos(root);
        ASSERT_EQ(back.size(), 2u);
        EXPECT_EQ(back[0], demos[0]);
        EXPECT_EQ(back[1], demos[1]);
        DatasetReader reader(root);
        EXPECT_EQ(reader.format(), fmt);
        EXPECT_EQ(reader.read(1), demos[1]);
        fs::remove_all(root);
    }
}

TEST(Dataset, ConversionIsByteStable) {
    const std::vector<Demonstration> demos{synthetic_demo({}, {5}, 50), synthetic_demo({2}, {}, 52)};
    const fs::path a = fresh_dir("conv_a"), b = fresh_dir("conv_b"), a2 = fresh_dir("conv_a2"),
                   b2 = fresh_dir("conv_b2");
    export_demos(demos, DatasetFormat::episodic, a);
    convert_dataset(a, b, DatasetFormat::frame_table);
    convert_dataset(b, a2, DatasetFormat::episodic);
    export_demos(demos, DatasetFormat::frame_table, b2);
    auto read_all = [](const fs::path& root) {
        std::map<std::string, std::string> files;
        for (const auto& e : fs::recursive_directory_iterator(root)) {
            if (!e.is_regular_file()) continue;
            std::ifstream in(e.path(), std::ios::binary);
            files[fs::relative(e.path(), root).string()] =
                std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
        }
        return files;
    };
    EXPECT_EQ(read_all(a), read_all(a2));
    EXPECT_EQ(read_all(b), read_all(b2));
    for (const auto& p : {a, b, a2, b2}) fs::remove_all(p);
}

TEST(Dataset, CorruptImageNamesDemoAndFrame) {
    const fs::path root = fresh_dir("corrupt");
    export_demos({synthetic_demo({}, {}, 50)}, DatasetFormat::episodic, root);
    std::ofstream(root / "demo_000000" / "wrist" / "000012.png", std::ios::binary | std::ios::trunc) << "garbage";
    try {
        import_demos(root);
        FAIL() << "expected IntegrityError";
    } catch (const IntegrityError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("synthetic"), std::string::npos) << msg;
        EXPECT_NE(msg.find("12"), std::string::npos) << msg;
    }
    fs::remove_all(root);
}

TEST(Dataset, MissingMetadataAndEmptyExportFail) {
    const fs::path root = fresh_dir("missing");
    fs::create_directories(root);
    EXPECT_THROW(DatasetReader{root}, FormatError);
    EXPECT_THROW(export_demos({}, DatasetFormat::episodic, fresh_dir("empty")), DomainError);
    std::ofstream(root / "stale.txt") << "x";
    EXPECT_THROW(export_demos({synthetic_demo({}, {}, 50)}, DatasetFormat::episodic, root), DomainError);
    fs::remove_all(root);
}
