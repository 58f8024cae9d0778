#include "softvla/generate.hpp"

#include "softvla/errors.hpp"
#include "softvla/policy.hpp"

#include <cstdio>

namespace softvla {

int default_demo_count(int task_id) {
    switch (task_id) {
        case 1: return 50;
        case 2: return 100;
        case 3: return 20;
        default: throw DomainError("task_id must be 1, 2 or 3");
    }
}

TaskSpec generator_task(int task_id, std::size_t index) {
    if (task_id == 2) {
        return default_task(2, index % 2 == 0 ? ObjectClass::milk : ObjectClass::orange);
    }
    return default_task(task_id);
}

std::optional<Demonstration> generate_demo(const ArmSpec& spec, const TaskSpec& task, std::uint64_t seed,
                                           double capture_hz) {
    if (!(capture_hz > 0.0)) {
        throw DomainError("capture_hz must be positive");
    }
    const double dt = 1.0 / capture_hz;
    ScriptedExpertPolicy expert(spec, task, dt);
    expert.reset(task.instruction);
    WorldState w = reset_task(spec, task, seed);
    std::vector<WorldState> states{w};
    const std::size_t budget = static_cast<std::size_t>(task.max_steps);
    bool ok = false;
    while (!ok && states.size() - 1 < budget) {
        Observation obs;
        obs.scene = w;
        obs.state = world_state_vector(w, spec);
        obs.instruction = task.instruction;
        for (const auto& a : expert.predict(obs, kDefaultChunkSize).actions) {
            w = step(w, spec, task, a, dt);
            states.push_back(w);
            if (check_success(w, task)) {
                ok = true;
                break;
            }
            if (states.size() - 1 >= budget) break;
        }
    }
    if (!ok) return std::nullopt;

    char id[64];
    std::snprintf(id, sizeof id, "task%d_seed%06llu", task.task_id, static_cast<unsigned long long>(seed));
    Demonstration d;
    d.demo_id = id;
    d.task_id = task.task_id;
    d.capture_hz = capture_hz;
    for (std::size_t i = 0; i < states.size(); ++i) {
        Frame f;
        f.step_index = static_cast<int>(i);
        f.timestamp_s = static_cast<double>(i) / capture_hz;
        f.state = world_state_vector(states[i], spec);
        f.instruction = task.instruction;
        d.frames.push_back(std::move(f));
    }
    reencode_actions(d);
    d = filter_noop_frames(d);
    // Images only for the frames that survive filtering.
    for (auto& f : d.frames) {
        const Observation obs = make_observation(states[static_cast<std::size_t>(f.step_index)], spec, task, false);
        f.third_image = obs.third_image;
        f.wrist_image = obs.wrist_image;
    }
    return d;
}

GenerateSummary generate_dataset(const ArmSpec& spec, const GenerateOptions& options,
                                 const std::filesystem::path& out,
                                 const std::function<void(const std::string&)>& log) {
    if (options.count < 1) {
        throw DomainError("count must be at least 1");
    }
    verify_placement_region(spec, generator_task(options.task_id, 0));
    DatasetWriter a(out / "A", DatasetFormat::episodic);
    DatasetWriter b(out / "B", DatasetFormat::frame_table);
    GenerateSummary s;
    const std::uint64_t max_tries =
        static_cast<std::uint64_t>(options.count) * static_cast<std::uint64_t>(std::max(1, options.attempts_per_demo));
    std::uint64_t seed = options.seed;
    for (std::uint64_t tries = 0; s.demos < static_cast<std::size_t>(options.count); ++tries, ++seed) {
        if (tries >= max_tries) {
            throw DomainError("expert failed on too many seeds (" + std::to_string(s.skipped_seeds.size()) + ")");
        }
        const TaskSpec task = generator_task(options.task_id, s.demos);
        auto demo = generate_demo(spec, task, seed, options.capture_hz);
        if (!demo) {
            s.skipped_seeds.push_back(seed);
            if (log) log("expert failed on seed " + std::to_string(seed) + "; skipped");
            continue;
        }
        for (const auto& w : demonstration_warnings(*demo)) {
            if (log) log(demo->demo_id + ": " + w);
        }
        a.write(*demo);
        b.write(*demo);
        ++s.demos;
        s.frames += demo->frames.size();
    }
    a.finish();
    b.finish();
    return s;
}

}  // namespace softvla
