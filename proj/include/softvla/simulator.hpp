#pragma once

#include "softvla/arm_model.hpp"
#include "softvla/image.hpp"
#include "softvla/kinematics.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace softvla {

enum class ObjectClass { orange, milk, yogurt, baguette, plate, marshmallow, mouth_zone };

std::string to_string(ObjectClass c);
// Throws FormatError for unknown labels.
ObjectClass object_class_from_string(const std::string& s);

struct SceneObject {
    std::string id;
    ObjectClass class_label = ObjectClass::orange;
    Vec3 position = Vec3::Zero();  // center of the object
    double radius = 0.03;          // footprint / grasp radius, m
    bool graspable = true;
    Rgb color;

    bool operator==(const SceneObject&) const = default;
};

using ActionArray = std::array<double, 7>;

struct WorldState {
    Configuration arm_config;
    bool gripper_open = true;
    std::optional<std::string> attached_object;
    std::vector<SceneObject> objects;
    double time_s = 0.0;
    std::uint64_t rng_seed = 0;

    const SceneObject* find(const std::string& id) const;
    bool operator==(const WorldState&) const = default;
};

struct GoalRegion {
    Vec3 center = Vec3::Zero();
    double radius = 0.08;
};

struct Box3 {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    bool contains(const Vec3& p) const {
        return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
    }
};

// Object placed uniformly in the placement region at reset.
struct ObjectTemplate {
    std::string id;
    ObjectClass class_label = ObjectClass::orange;
    double radius = 0.03;
    Rgb color;
};

struct TaskSpec {
    int task_id = 1;
    std::string instruction;
    ObjectClass target_object_class = ObjectClass::orange;
    // Plate for tasks 1/2, mouth zone for task 3. Fixed pose, jittered at reset.
    GoalRegion goal_region;
    Box3 placement_region;
    int max_steps = 400;

    std::vector<ObjectTemplate> objects;
    // Task 3: the objects are served on a plate placed in the region, and
    // the plate holds this many marshmallows.
    bool serve_on_plate = false;
    int marshmallow_count = 0;

    Configuration start_configuration;
    double goal_jitter = 0.02;   // m
    double grasp_radius = 0.04;  // m, EE-to-object-center distance for a grasp
    double plate_top = 0.02;     // m above the table
};

// Default scene for each of the three tasks. Task 2 takes the target class
// (orange or milk).
TaskSpec default_task(int task_id, ObjectClass task2_target = ObjectClass::milk);

// Arm hung above the table pointing down; the mount used by every task scene.
ArmSpec tabletop_arm_spec();

TaskSpec load_task_spec(const std::filesystem::path& path);
TaskSpec task_spec_from_json_text(const std::string& text);
std::string task_spec_to_json_text(const TaskSpec& task);

// Deterministic from seed. Throws PlacementError when non-overlapping
// placement fails after 1000 samples for some object.
WorldState reset_task(const ArmSpec& spec, const TaskSpec& task, std::uint64_t seed);

struct StepOutcome {
    WorldState world;
    IkResult ik;
};

// One control step: the arm tracks current pose (+) action deltas with IK
// (best effort when limits bind), then the gripper command is applied.
// Throws DomainError for non-finite actions or dt <= 0.
StepOutcome step_detailed(const WorldState& world, const ArmSpec& spec, const TaskSpec& task,
                          const ActionArray& action, double dt);
WorldState step(const WorldState& world, const ArmSpec& spec, const TaskSpec& task,
                const ActionArray& action, double dt);

// Pose delta applied componentwise: positions add, angles wrap.
Pose apply_pose_delta(const Pose& pose, const ActionArray& action);

bool check_success(const WorldState& world, const TaskSpec& task);

// Monte-Carlo reachability: tool positions of random valid configurations,
// voxelized. A point is inside when its voxel or one of the 26 neighbours is
// occupied.
class Workspace {
public:
    Workspace(const ArmSpec& spec, int samples = 50000, double voxel = 0.02, std::uint64_t seed = 0);

    bool contains(const Vec3& p) const;
    std::size_t occupied_voxels() const { return voxels_.size(); }
    double voxel_size() const { return voxel_; }

private:
    static std::uint64_t key(std::int64_t ix, std::int64_t iy, std::int64_t iz);
    double voxel_;
    std::vector<std::uint64_t> voxels_;  // sorted
};

// Cached per arm geometry.
bool workspace_contains(const ArmSpec& spec, const Vec3& point);

// Checks a grid x grid lattice over the placement region, lifted to the
// tallest object's center height. Throws DomainError naming the first point
// outside the workspace.
void verify_placement_region(const ArmSpec& spec, const TaskSpec& task, int grid = 5);

enum class CameraAttachment { world_fixed, wrist_mounted };

struct CameraSpec {
    double fx = 500.0;
    double fy = 500.0;
    double cx = 320.0;
    double cy = 240.0;
    int width = 640;
    int height = 480;
    // Camera-to-world (world_fixed) or camera-to-tool (wrist_mounted) pose.
    // Camera axes: +z forward, +x right, +y down.
    Pose extrinsic;
    CameraAttachment attachment = CameraAttachment::world_fixed;
};

// Camera at `eye` looking at `target`, image "up" roughly along `up`.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

CameraSpec default_third_person_camera();
CameraSpec default_wrist_camera();

// Background, table, goal rings, object discs, arm polyline and gripper
// marker painted far to near.
Image render_view(const WorldState& world, const ArmSpec& spec, const TaskSpec& task,
                  const CameraSpec& camera);

namespace palette {
inline constexpr Rgb background{198, 214, 230};
inline constexpr Rgb table{150, 118, 84};
inline constexpr Rgb arm{235, 235, 235};
inline constexpr Rgb gripper_open{40, 170, 60};
inline constexpr Rgb gripper_closed{200, 40, 40};
inline constexpr Rgb goal_ring{250, 250, 90};
}  // namespace palette

Rgb default_color(ObjectClass c);

}  // namespace softvla
