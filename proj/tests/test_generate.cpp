#include "oracles.hpp"

#include "softvla/errors.hpp"
#include "softvla/generate.hpp"

#include <gtest/gtest.h>

#include <unistd.h>

using namespace softvla;
namespace fs = std::filesystem;

TEST(Generate, DemoSucceedsAndReconstructs) {
    const ArmSpec spec = tabletop_arm_spec();
    const auto d = generate_demo(spec, generator_task(1, 0), 0);
    ASSERT_TRUE(d.has_value());
    EXPECT_GT(d->frames.size(), 10u);
    EXPECT_EQ(d->frames.front().third_image.width, 256);
    const auto folded = oracle::fold_actions(*d);
    for (std::size_t i = 0; i < d->frames.size(); ++i) {
        for (int k = 0; k < 8; ++k) EXPECT_NEAR(folded[i][k], d->frames[i].state[k], 1e-9);
    }
    EXPECT_EQ(filter_noop_frames(*d), *d);
}

TEST(Generate, TaskTwoAlternatesTarget) {
    EXPECT_EQ(generator_task(2, 0).target_object_class, ObjectClass::milk);
    EXPECT_EQ(generator_task(2, 1).target_object_class, ObjectClass::orange);
    EXPECT_EQ(default_demo_count(1), 50);
    EXPECT_EQ(default_demo_count(2), 100);
    EXPECT_EQ(default_demo_count(3), 20);
    EXPECT_THROW(default_demo_count(4), DomainError);
}

TEST(Generate, DatasetWritesBothFormats) {
    const fs::path out = fs::temp_directory_path() / ("softvla_gen_" + std::to_string(::getpid()));
    fs::remove_all(out);
    GenerateOptions o;
    o.task_id = 3;
    o.count = 2;
    const GenerateSummary s = generate_dataset(tabletop_arm_spec(), o, out);
    EXPECT_EQ(s.demos, 2u);
    const auto a = import_demos(out / "A");
    EXPECT_EQ(a.size(), 2u);
    EXPECT_EQ(import_demos(out / "B"), a);
    o.count = 0;
    EXPECT_THROW(generate_dataset(tabletop_arm_spec(), o, out / "zero"), DomainError);
    fs::remove_all(out);
}
