#pragma once

#include "softvla/dataset.hpp"
#include "softvla/simulator.hpp"

#include <filesystem>
#include <functional>
#include <optional>

namespace softvla {

// Demonstration counts per task used by the bundled generator.
int default_demo_count(int task_id);

// Task 2 alternates its target between milk (even index) and orange.
TaskSpec generator_task(int task_id, std::size_t index);

// Runs the scripted expert on one seeded episode, sampled at capture_hz,
// then re-encodes and filters it. Returns nullopt when the expert does not
// succeed within the step budget.
std::optional<Demonstration> generate_demo(const ArmSpec& spec, const TaskSpec& task, std::uint64_t seed,
                                           double capture_hz = 5.0);

struct GenerateOptions {
    int task_id = 1;
    int count = 50;
    std::uint64_t seed = 0;
    double capture_hz = 5.0;
    // Seeds tried per requested demonstration before giving up.
    int attempts_per_demo = 3;
};

struct GenerateSummary {
    std::size_t demos = 0;
    std::size_t frames = 0;
    std::vector<std::uint64_t> skipped_seeds;
};

// Streams `count` demonstrations into <out>/A and <out>/B. Seeds are tried
// in order from `seed`; one the expert fails on is skipped and reported.
// Throws DomainError for count < 1 or when more than count x
// attempts_per_demo seeds are needed.
GenerateSummary generate_dataset(const ArmSpec& spec, const GenerateOptions& options,
                                 const std::filesystem::path& out,
                                 const std::function<void(const std::string&)>& log = {});

}  // namespace softvla
