#include "softvla/simulator.hpp"

#include "softvla/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

namespace softvla {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<ObjectClass, const char*>, 7> kClassNames{{
    {ObjectClass::orange, "orange"},
    {ObjectClass::milk, "milk"},
    {ObjectClass::yogurt, "yogurt"},
    {ObjectClass::baguette, "baguette"},
    {ObjectClass::plate, "plate"},
    {ObjectClass::marshmallow, "marshmallow"},
    {ObjectClass::mouth_zone, "mouth_zone"},
}};

// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

bool is_support(ObjectClass c) { return c == ObjectClass::plate; }

double horizontal_distance(const Vec3& a, const Vec3& b) { return (a - b).head<2>().norm(); }

}  // namespace

std::string to_string(ObjectClass c) {
    for (const auto& [cls, name] : kClassNames) {
        if (cls == c) {
            return name;
        }
    }
    return "unknown";
}

ObjectClass object_class_from_string(const std::string& s) {
    for (const auto& [cls, name] : kClassNames) {
        if (s == name) {
            return cls;
        }
    }
    throw FormatError("unknown object class '" + s + "'");
}

Rgb default_color(ObjectClass c) {
    switch (c) {
        case ObjectClass::orange: return {250, 135, 20};
        case ObjectClass::milk: return {240, 244, 255};
        case ObjectClass::yogurt: return {90, 150, 235};
        case ObjectClass::baguette: return {205, 160, 85};
        case ObjectClass::plate: return {172, 176, 186};
        case ObjectClass::marshmallow: return {255, 196, 214};
        case ObjectClass::mouth_zone: return {215, 50, 110};
    }
    return {};
}

const SceneObject* WorldState::find(const std::string& id) const {
    for (const auto& o : objects) {
        if (o.id == id) {
            return &o;
        }
    }
    return nullptr;
}

ArmSpec tabletop_arm_spec() {
    ArmSpec spec = default_embuddy_spec();
    spec.base_pose.position = Vec3(0.0, 0.0, 1.05);
    spec.base_pose.roll = -kPi;  // hanging, backbone pointing down
    spec.tool_offset.translation = Vec3(0.0, 0.0, 0.15);  // gripper fingertip
    return spec;
}

TaskSpec default_task(int task_id, ObjectClass task2_target) {
    TaskSpec t;
    t.task_id = task_id;
    t.placement_region = {Vec3(-0.2, 0.39, 0.0), Vec3(0.2, 0.47, 0.0)};
    // Tool above the placement region, leaning out towards the goal side.
    t.start_configuration = Configuration(std::vector<SectionAngles>{
        {-kPi / 2.0, deg2rad(2.0)}, {-kPi / 2.0, deg2rad(45.0)}, {-kPi / 2.0, deg2rad(44.0)}});
    const std::vector<ObjectTemplate> foods{
        {"orange", ObjectClass::orange, 0.035, default_color(ObjectClass::orange)},
        {"milk", ObjectClass::milk, 0.035, default_color(ObjectClass::milk)},
        {"yogurt", ObjectClass::yogurt, 0.03, default_color(ObjectClass::yogurt)},
        {"baguette", ObjectClass::baguette, 0.04, default_color(ObjectClass::baguette)},
    };
    switch (task_id) {
        case 1:
            t.instruction = "Put the orange in the plate";
            t.target_object_class = ObjectClass::orange;
            t.goal_region = {Vec3(0.0, 0.62, 0.0), 0.08};
            t.objects = foods;
            t.max_steps = 400;
            break;
        case 2:
            if (task2_target != ObjectClass::orange && task2_target != ObjectClass::milk) {
                throw DomainError("task 2 target must be orange or milk");
            }
            t.instruction = "Put the " + to_string(task2_target) + " in the plate";
            t.target_object_class = task2_target;
            t.goal_region = {Vec3(0.0, 0.62, 0.0), 0.08};
            t.objects = foods;
            t.max_steps = 400;
            break;
        case 3:
            t.instruction = "Feed the person with marshmallow";
            t.target_object_class = ObjectClass::marshmallow;
            t.goal_region = {Vec3(0.0, 0.60, 0.30), 0.05};
            t.placement_region = {Vec3(-0.15, 0.42, 0.0), Vec3(0.15, 0.46, 0.0)};
            t.serve_on_plate = true;
            t.marshmallow_count = 3;
            t.max_steps = 400;
            break;
        default:
            throw DomainError("unknown task id " + std::to_string(task_id));
    }
    return t;
}

namespace {

json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

Vec3 vec_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 3) {
        throw FormatError("expected a 3-vector");
    }
    return {v[0], v[1], v[2]};
}

json rgb_json(Rgb c) { return {c.r, c.g, c.b}; }

Rgb rgb_from(const json& j) {
    const auto v = j.get<std::vector<int>>();
    if (v.size() != 3) {
        throw FormatError("expected an RGB triple");
    }
    return {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])};
}

}  // namespace

TaskSpec task_spec_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("task spec is not valid JSON: ") + e.what());
    }
    try {
        const int id = j.at("task_id").get<int>();
        TaskSpec t = default_task(id, j.contains("target_object_class") && id == 2
                                          ? object_class_from_string(j.at("target_object_class"))
                                          : ObjectClass::milk);
        if (j.contains("instruction")) t.instruction = j.at("instruction");
        if (j.contains("target_object_class")) t.target_object_class = object_class_from_string(j.at("target_object_class"));
        if (j.contains("goal_region")) {
            t.goal_region.center = vec_from(j.at("goal_region").at("center"));
            t.goal_region.radius = j.at("goal_region").at("radius");
        }
        if (j.contains("placement_region")) {
            t.placement_region.min = vec_from(j.at("placement_region").at("min"));
            t.placement_region.max = vec_from(j.at("placement_region").at("max"));
        }
        if (j.contains("max_steps")) t.max_steps = j.at("max_steps");
        if (j.contains("objects")) {
            t.objects.clear();
            for (const auto& o : j.at("objects")) {
                ObjectTemplate ot;
                ot.id = o.at("id");
                ot.class_label = object_class_from_string(o.at("class"));
                ot.radius = o.at("radius");
                ot.color = o.contains("color") ? rgb_from(o.at("color")) : default_color(ot.class_label);
                t.objects.push_back(ot);
            }
        }
        if (j.contains("serve_on_plate")) t.serve_on_plate = j.at("serve_on_plate");
        if (j.contains("marshmallow_count")) t.marshmallow_count = j.at("marshmallow_count");
        if (j.contains("start_configuration_deg")) {
            std::vector<SectionAngles> s;
            for (const auto& pair : j.at("start_configuration_deg")) {
                s.push_back({deg2rad(pair.at(0).get<double>()), deg2rad(pair.at(1).get<double>())});
            }
            t.start_configuration = Configuration(s);
        }
        if (j.contains("goal_jitter")) t.goal_jitter = j.at("goal_jitter");
        if (j.contains("grasp_radius")) t.grasp_radius = j.at("grasp_radius");
        if (j.contains("plate_top")) t.plate_top = j.at("plate_top");
        return t;
    } catch (const json::exception& e) {
        throw FormatError(std::string("task spec has a malformed field: ") + e.what());
    }
}

std::string task_spec_to_json_text(const TaskSpec& t) {
    json j;
    j["task_id"] = t.task_id;
    j["instruction"] = t.instruction;
    j["target_object_class"] = to_string(t.target_object_class);
    j["goal_region"] = {{"center", vec_json(t.goal_region.center)}, {"radius", t.goal_region.radius}};
    j["placement_region"] = {{"min", vec_json(t.placement_region.min)}, {"max", vec_json(t.placement_region.max)}};
    j["max_steps"] = t.max_steps;
    j["objects"] = json::array();
    for (const auto& o : t.objects) {
        j["objects"].push_back(
            {{"id", o.id}, {"class", to_string(o.class_label)}, {"radius", o.radius}, {"color", rgb_json(o.color)}});
    }
    j["serve_on_plate"] = t.serve_on_plate;
    j["marshmallow_count"] = t.marshmallow_count;
    j["start_configuration_deg"] = json::array();
    for (const auto& s : t.start_configuration.sections) {
        j["start_configuration_deg"].push_back({rad2deg(s.phi), rad2deg(s.theta)});
    }
    j["goal_jitter"] = t.goal_jitter;
    j["grasp_radius"] = t.grasp_radius;
    j["plate_top"] = t.plate_top;
    return j.dump(2);
}

TaskSpec load_task_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open task spec " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return task_spec_from_json_text(ss.str());
}

WorldState reset_task(const ArmSpec& spec, const TaskSpec& task, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    WorldState w;
    w.rng_seed = seed;
    w.arm_config = clamp_configuration(spec, task.start_configuration);

    auto jittered = [&](const Vec3& c) {
        // Uniform in the disc of radius goal_jitter.
        const double r = task.goal_jitter * std::sqrt(uniform01(rng));
        const double a = uniform(rng, -kPi, kPi);
        return Vec3(c.x() + r * std::cos(a), c.y() + r * std::sin(a), c.z());
    };

    std::vector<SceneObject> placed;
    if (task.task_id == 3) {
        SceneObject mouth{"mouth_zone", ObjectClass::mouth_zone, jittered(task.goal_region.center),
                          task.goal_region.radius, false, default_color(ObjectClass::mouth_zone)};
        placed.push_back(mouth);
    } else {
        Vec3 c = jittered(task.goal_region.center);
        c.z() = task.plate_top / 2.0;
        placed.push_back({"plate", ObjectClass::plate, c, task.goal_region.radius, false,
                          default_color(ObjectClass::plate)});
    }

    auto place = [&](const std::string& id, double radius) -> Vec3 {
        const Box3& box = task.placement_region;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            const Vec3 p(uniform(rng, box.min.x(), box.max.x()), uniform(rng, box.min.y(), box.max.y()), 0.0);
            bool overlap = false;
            for (const auto& o : placed) {
                if (o.class_label == ObjectClass::mouth_zone) {
                    continue;
                }
                if (horizontal_distance(p, o.position) < radius + o.radius) {
                    overlap = true;
                    break;
                }
            }
            if (!overlap) {
                return p;
            }
        }
        throw PlacementError("could not place '" + id + "' without overlap after 1000 samples");
    };

    if (task.serve_on_plate) {
        Vec3 c = place("serving_plate", task.goal_region.radius > 0.0 ? 0.08 : 0.08);
        c.z() = task.plate_top / 2.0;
        placed.push_back({"serving_plate", ObjectClass::plate, c, 0.08, false, default_color(ObjectClass::plate)});
        const double r = 0.015;
        for (int k = 0; k < task.marshmallow_count; ++k) {
            const double a = kTwoPi * k / std::max(task.marshmallow_count, 1);
            const double off = task.marshmallow_count > 1 ? 0.035 : 0.0;
            placed.push_back({"marshmallow_" + std::to_string(k), ObjectClass::marshmallow,
                              Vec3(c.x() + off * std::cos(a), c.y() + off * std::sin(a), task.plate_top + r), r,
                              true, default_color(ObjectClass::marshmallow)});
        }
    }
    for (const auto& t : task.objects) {
        Vec3 p = place(t.id, t.radius);
        p.z() = t.radius;
        placed.push_back({t.id, t.class_label, p, t.radius, t.class_label != ObjectClass::plate &&
                                                               t.class_label != ObjectClass::mouth_zone,
                          t.color});
    }
    w.objects = std::move(placed);
    return w;
}

Pose apply_pose_delta(const Pose& pose, const ActionArray& a) {
    Pose out;
    out.position = pose.position + Vec3(a[0], a[1], a[2]);
    out.roll = wrap_angle(pose.roll + a[3]);
    out.pitch = wrap_angle(pose.pitch + a[4]);
    out.yaw = wrap_angle(pose.yaw + a[5]);
    return out;
}

StepOutcome step_detailed(const WorldState& world, const ArmSpec& spec, const TaskSpec& task,
                          const ActionArray& action, double dt) {
    for (double v : action) {
        if (!std::isfinite(v)) {
            throw DomainError("step: non-finite action");
        }
    }
    if (!(dt > 0.0)) {
        throw DomainError("step: dt must be positive");
    }
    StepOutcome out{world, {}};
    WorldState& w = out.world;

    const Pose current = forward_kinematics(spec, world.arm_config);
    const Pose target = apply_pose_delta(current, action);
    out.ik = ik_solve(spec, world.arm_config, target);
    w.arm_config = out.ik.configuration;
    const Vec3 ee = tool_transform(spec, w.arm_config).translation;

    const bool close_cmd = action[6] >= 0.5;
    if (close_cmd && w.gripper_open) {
        w.gripper_open = false;
        const SceneObject* best = nullptr;
        double best_d = task.grasp_radius;
        for (const auto& o : w.objects) {
            const double d = (o.position - ee).norm();
            if (o.graspable && d <= best_d) {
                best = &o;
                best_d = d;
            }
        }
        if (best) {
            w.attached_object = best->id;
        }
    } else if (!close_cmd && !w.gripper_open) {
        w.gripper_open = true;
        if (w.attached_object) {
            for (auto& o : w.objects) {
                if (o.id != *w.attached_object) {
                    continue;
                }
                double support = 0.0;
                for (const auto& s : w.objects) {
                    if (is_support(s.class_label) && horizontal_distance(ee, s.position) <= s.radius) {
                        support = task.plate_top;
                    }
                }
                o.position = Vec3(ee.x(), ee.y(), support + o.radius);
            }
            w.attached_object.reset();
        }
    }
    if (w.attached_object) {
        for (auto& o : w.objects) {
            if (o.id == *w.attached_object) {
                o.position = ee;
            }
        }
    }
    w.time_s = world.time_s + dt;
    return out;
}

WorldState step(const WorldState& world, const ArmSpec& spec, const TaskSpec& task, const ActionArray& action,
                double dt) {
    return step_detailed(world, spec, task, action, dt).world;
}

bool check_success(const WorldState& world, const TaskSpec& task) {
    if (task.task_id == 3) {
        if (!world.attached_object) {
            return false;
        }
        const SceneObject* held = world.find(*world.attached_object);
        if (!held || held->class_label != task.target_object_class) {
            return false;
        }
        for (const auto& o : world.objects) {
            if (o.class_label == ObjectClass::mouth_zone && (held->position - o.position).norm() <= o.radius) {
                return true;
            }
        }
        return false;
    }
    if (!world.gripper_open) {
        return false;
    }
    const SceneObject* plate = nullptr;
    for (const auto& o : world.objects) {
        if (o.class_label == ObjectClass::plate) {
            plate = &o;
            break;
        }
    }
    if (!plate) {
        return false;
    }
    for (const auto& o : world.objects) {
        if (o.class_label != task.target_object_class) {
            continue;
        }
        if (world.attached_object && *world.attached_object == o.id) {
            continue;
        }
        if (horizontal_distance(o.position, plate->position) <= task.goal_region.radius) {
            return true;
        }
    }
    return false;
}

// --- workspace -------------------------------------------------------------

std::uint64_t Workspace::key(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
    constexpr std::int64_t off = 1 << 20;
    const auto pack = [](std::int64_t v) { return static_cast<std::uint64_t>(v + off) & 0x1FFFFF; };
    return (pack(ix) << 42) | (pack(iy) << 21) | pack(iz);
}

Workspace::Workspace(const ArmSpec& spec, int samples, double voxel, std::uint64_t seed) : voxel_(voxel) {
    std::mt19937_64 rng(seed);
    Configuration q(spec.section_count());
    voxels_.reserve(static_cast<std::size_t>(samples));
    const auto add = [&] {
        const Vec3 p = tool_transform(spec, q).translation;
        voxels_.push_back(key(static_cast<std::int64_t>(std::floor(p.x() / voxel)),
                              static_cast<std::int64_t>(std::floor(p.y() / voxel)),
                              static_cast<std::int64_t>(std::floor(p.z() / voxel))));
    };
    for (int k = 0; k < samples; ++k) {
        for (std::size_t i = 0; i < q.size(); ++i) {
            q.sections[i].phi = uniform(rng, -kPi, kPi);
            q.sections[i].theta = uniform(rng, 0.0, spec.sections[i].max_bend);
        }
        add();
    }
    // Random sampling rarely reaches the outer shell, where every section
    // bends in one plane. Cover it with a grid of coplanar configurations.
    constexpr int kPhiSteps = 72;
    constexpr int kThetaSteps = 8;
    const std::size_t n = q.size();
    std::size_t combos = 1;
    for (std::size_t i = 0; i < n; ++i) combos *= kThetaSteps + 1;
    for (int a = 0; a < kPhiSteps; ++a) {
        const double phi = -kPi + 2.0 * kPi * a / kPhiSteps;
        for (std::size_t c = 0; c < combos; ++c) {
            std::size_t rest = c;
            for (std::size_t i = 0; i < n; ++i) {
                q.sections[i].phi = phi;
                q.sections[i].theta = spec.sections[i].max_bend * static_cast<double>(rest % (kThetaSteps + 1)) /
                                      kThetaSteps;
                rest /= kThetaSteps + 1;
            }
            add();
        }
    }
    std::sort(voxels_.begin(), voxels_.end());
    voxels_.erase(std::unique(voxels_.begin(), voxels_.end()), voxels_.end());
}

bool Workspace::contains(const Vec3& p) const {
    if (!p.allFinite()) {
        return false;
    }
    const auto ix = static_cast<std::int64_t>(std::floor(p.x() / voxel_));
    const auto iy = static_cast<std::int64_t>(std::floor(p.y() / voxel_));
    const auto iz = static_cast<std::int64_t>(std::floor(p.z() / voxel_));
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dz = -1; dz <= 1; ++dz) {
                if (std::binary_search(voxels_.begin(), voxels_.end(), key(ix + dx, iy + dy, iz + dz))) {
                    return true;
                }
            }
        }
    }
    return false;
}

bool workspace_contains(const ArmSpec& spec, const Vec3& point) {
    static std::mutex mutex;
    static std::map<std::string, std::shared_ptr<const Workspace>> cache;
    const std::string signature = arm_spec_to_json_text(spec);
    std::shared_ptr<const Workspace> ws;
    {
        std::lock_guard lock(mutex);
        auto it = cache.find(signature);
        if (it == cache.end()) {
            it = cache.emplace(signature, std::make_shared<const Workspace>(spec)).first;
        }
        ws = it->second;
    }
    return ws->contains(point);
}

}  // namespace softvla

namespace softvla {

void verify_placement_region(const ArmSpec& spec, const TaskSpec& task, int grid) {
    if (grid < 2) {
        throw DomainError("placement grid must be at least 2");
    }
    double height = 0.0;
    for (const auto& o : task.objects) height = std::max(height, o.radius);
    const Box3& r = task.placement_region;
    for (int i = 0; i < grid; ++i) {
        for (int j = 0; j < grid; ++j) {
            const double u = static_cast<double>(i) / (grid - 1);
            const double v = static_cast<double>(j) / (grid - 1);
            const Vec3 p(r.min.x() + u * (r.max.x() - r.min.x()), r.min.y() + v * (r.max.y() - r.min.y()),
                         r.min.z() + height);
            if (!workspace_contains(spec, p)) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "placement region point (%.3f, %.3f, %.3f) is outside the workspace",
                              p.x(), p.y(), p.z());
                throw DomainError(buf);
            }
        }
    }
}

}  // namespace softvla
