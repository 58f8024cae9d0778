#include "softvla/policy.hpp"

#include "softvla/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace softvla {

namespace {

constexpr double kPreGraspHeight = 0.10;
constexpr double kLiftHeight = 0.15;
constexpr double kGraspHeight = 0.01;  // EE above the object center when closing
constexpr double kReachTolerance = 1e-3;

double gripper_g(const WorldState& w) { return w.gripper_open ? 0.0 : 1.0; }

WorldState require_scene(const Observation& obs, const std::string& who) {
    if (!obs.scene) {
        throw DomainError(who + " needs the privileged scene in the observation");
    }
    return *obs.scene;
}

// Scales the action so the translation norm is at most 0.02 m and every
// angle at most 0.05 rad.
ActionVector clip_action(ActionVector a) {
    const double t = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    if (t > kMaxStepTranslation) {
        const double s = kMaxStepTranslation / t;
        for (int i = 0; i < 3; ++i) a[i] *= s;
    }
    for (int i = 3; i < 6; ++i) {
        a[i] = std::clamp(a[i], -kMaxStepRotation, kMaxStepRotation);
    }
    return a;
}

Configuration config_lerp(const Configuration& a, const Configuration& b, double alpha) {
    Configuration out = a;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double dphi = wrap_joint_angle(b.sections[i].phi - a.sections[i].phi);
        out.sections[i].phi = wrap_joint_angle(a.sections[i].phi + alpha * dphi);
        out.sections[i].theta = a.sections[i].theta + alpha * (b.sections[i].theta - a.sections[i].theta);
    }
    return out;
}

double config_distance(const ArmSpec& spec, const Configuration& a, const Configuration& b) {
    // Arc-length weighted, so the measure is in meters of backbone motion.
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double L = spec.sections[i].arc_length;
        const double ta = a.sections[i].theta;
        const double tb = b.sections[i].theta;
        const double dphi = wrap_joint_angle(b.sections[i].phi - a.sections[i].phi);
        d += L * (std::abs(tb - ta) + std::min(ta, tb) * std::abs(dphi));
    }
    return d;
}

Configuration solve_waypoint(const ArmSpec& spec, const Configuration& current, const Vec3& target) {
    IkOptions opt;
    opt.position_only = true;
    opt.max_iters = 300;
    std::vector<Configuration> seeds{current};
    const std::size_t n = spec.section_count();
    for (double base : {0.0, kPi / 2.0, -kPi / 2.0, kPi}) {
        Configuration s(n);
        const double heading = std::atan2(target.y() - spec.base_pose.position.y(),
                                          target.x() - spec.base_pose.position.x());
        for (std::size_t i = 0; i < n; ++i) {
            s.sections[i] = {wrap_joint_angle(heading + base + (i % 2 ? kPi : 0.0)), 0.3};
        }
        seeds.push_back(s);
    }
    std::optional<IkResult> best;
    double best_cost = 0.0;
    for (const auto& seed : seeds) {
        IkResult r = ik_solve(spec, seed, Pose{target}, opt);
        const double cost = r.converged ? config_distance(spec, current, r.configuration) : 1e6 + r.position_error;
        if (!best || cost < best_cost) {
            best = r;
            best_cost = cost;
        }
        if (r.converged && &seed == &seeds.front()) {
            break;  // the nearest solution is the one reached from here
        }
    }
    return best->configuration;
}

}  // namespace

ActionChunk ZeroPolicy::predict(const Observation& obs, int chunk_size) {
    return {std::vector<ActionVector>(static_cast<std::size_t>(chunk_size), zero_action(obs.state[7]))};
}

ReplayPolicy::ReplayPolicy(Demonstration demo) : demo_(std::move(demo)) {}

ActionChunk ReplayPolicy::predict(const Observation& obs, int chunk_size) {
    ActionChunk c;
    double g = obs.state[7];
    for (int k = 0; k < chunk_size; ++k) {
        if (cursor_ < demo_.frames.size()) {
            c.actions.push_back(demo_.frames[cursor_++].action);
            g = c.actions.back()[6];
        } else {
            c.actions.push_back(zero_action(g));
        }
    }
    return c;
}

TaskSpec retarget_task(const TaskSpec& task, const std::string& instruction) {
    if (instruction.empty() || instruction == task.instruction) return task;
    for (const TaskSpec& t : {default_task(1), default_task(2, ObjectClass::orange), default_task(2, ObjectClass::milk),
                              default_task(3)}) {
        if (instruction == t.instruction) {
            if (t.task_id == task.task_id) {
                TaskSpec out = task;
                out.target_object_class = t.target_object_class;
                out.instruction = instruction;
                return out;
            }
            return t;
        }
    }
    return task;
}

std::vector<Waypoint> plan_waypoints(const WorldState& world, const TaskSpec& task) {
    const SceneObject* target = nullptr;
    const SceneObject* goal = nullptr;
    for (const auto& o : world.objects) {
        if (!target && o.graspable && o.class_label == task.target_object_class) {
            target = &o;
        }
        const ObjectClass goal_class = task.task_id == 3 ? ObjectClass::mouth_zone : ObjectClass::plate;
        if (!goal && o.class_label == goal_class) {
            goal = &o;
        }
    }
    if (!target) {
        throw DomainError("no " + to_string(task.target_object_class) + " in the scene");
    }
    if (!goal) {
        throw DomainError("the scene has no goal object");
    }
    const Vec3 o = target->position;
    const double lift_z = o.z() + kLiftHeight;
    std::vector<Waypoint> plan{
        {Waypoint::Kind::move, o + Vec3(0, 0, kPreGraspHeight), 0.0},
        {Waypoint::Kind::move, o + Vec3(0, 0, kGraspHeight), 0.0},
        {Waypoint::Kind::gripper, Vec3::Zero(), 1.0},
        {Waypoint::Kind::move, o + Vec3(0, 0, kLiftHeight), 1.0},
    };
    if (task.task_id == 3) {
        plan.push_back({Waypoint::Kind::move, goal->position, 1.0});
    } else {
        plan.push_back({Waypoint::Kind::move, Vec3(goal->position.x(), goal->position.y(), lift_z), 1.0});
        plan.push_back({Waypoint::Kind::gripper, Vec3::Zero(), 0.0});
    }
    return plan;
}

// --- scripted expert --------------------------------------------------------

ScriptedExpertPolicy::ScriptedExpertPolicy(ArmSpec spec, TaskSpec task, double dt)
    : spec_(std::move(spec)), task_(std::move(task)), dt_(dt) {}

void ScriptedExpertPolicy::reset(const std::string& instruction) {
    task_ = retarget_task(task_, instruction);
    plan_.clear();
    phase_ = 0;
    goal_q_.reset();
    planned_ = false;
}

ActionVector ScriptedExpertPolicy::next_action(const WorldState& w) {
    while (phase_ < plan_.size()) {
        const Waypoint& wp = plan_[phase_];
        if (wp.kind == Waypoint::Kind::gripper) {
            ++phase_;
            return zero_action(wp.g);
        }
        const Vec3 ee = tool_transform(spec_, w.arm_config).translation;
        if ((ee - wp.position).norm() < kReachTolerance) {
            ++phase_;
            goal_q_.reset();
            continue;
        }
        if (!goal_q_) {
            goal_q_ = solve_waypoint(spec_, w.arm_config, wp.position);
        }
        const Configuration& q = w.arm_config;
        if (config_distance(spec_, q, *goal_q_) < 1e-9) {
            // The arm sits at the IK answer but short of the waypoint: the
            // target is out of reach. Move on rather than stall.
            ++phase_;
            goal_q_.reset();
            continue;
        }
        const StateVector s0 = encode_state(forward_kinematics(spec_, q), false);
        double alpha = 1.0;
        ActionVector a{};
        for (int iter = 0; iter < 30; ++iter) {
            const StateVector s1 = encode_state(forward_kinematics(spec_, config_lerp(q, *goal_q_, alpha)), false);
            a = encode_action(s0, s1);
            const double t = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
            const double r = std::max({std::abs(a[3]), std::abs(a[4]), std::abs(a[5])});
            const double over = std::max(t / kMaxStepTranslation, r / kMaxStepRotation);
            if (over <= 1.0) {
                break;
            }
            alpha *= 0.95 / over;
        }
        a[6] = wp.g;
        return clip_action(a);
    }
    return zero_action(gripper_g(w));
}

ActionChunk ScriptedExpertPolicy::predict(const Observation& obs, int chunk_size) {
    WorldState w = require_scene(obs, name());
    if (!planned_) {
        plan_ = plan_waypoints(w, task_);
        planned_ = true;
    }
    ActionChunk c;
    for (int k = 0; k < chunk_size; ++k) {
        const ActionVector a = next_action(w);
        c.actions.push_back(a);
        w = step(w, spec_, task_, a, dt_);
    }
    return c;
}

// --- rigid style ------------------------------------------------------------

RigidStylePolicy::RigidStylePolicy(ArmSpec spec, TaskSpec task, double tilt, double dt)
    : spec_(std::move(spec)), task_(std::move(task)), tilt_(tilt), dt_(dt) {}

void RigidStylePolicy::reset(const std::string& instruction) {
    task_ = retarget_task(task_, instruction);
    plan_.clear();
    phase_ = 0;
    planned_ = false;
}

ActionVector RigidStylePolicy::next_action(const WorldState& w) {
    // Tool z axis leaning from straight down towards +y by tilt_.
    const double roll_goal = wrap_angle(-kPi + tilt_);
    while (phase_ < plan_.size()) {
        const Waypoint& wp = plan_[phase_];
        if (wp.kind == Waypoint::Kind::gripper) {
            ++phase_;
            return zero_action(wp.g);
        }
        const Pose cur = forward_kinematics(spec_, w.arm_config);
        const Vec3 dp = wp.position - cur.position;
        const double dr = wrap_angle(roll_goal - cur.roll);
        const double dpi = wrap_angle(0.0 - cur.pitch);
        const double dy = wrap_angle(0.0 - cur.yaw);
        if (dp.norm() < kReachTolerance && std::max({std::abs(dr), std::abs(dpi), std::abs(dy)}) < 0.01) {
            ++phase_;
            continue;
        }
        return clip_action({dp.x(), dp.y(), dp.z(), dr, dpi, dy, wp.g});
    }
    return zero_action(gripper_g(w));
}

ActionChunk RigidStylePolicy::predict(const Observation& obs, int chunk_size) {
    WorldState w = require_scene(obs, name());
    if (!planned_) {
        plan_ = plan_waypoints(w, task_);
        planned_ = true;
    }
    ActionChunk c;
    for (int k = 0; k < chunk_size; ++k) {
        const ActionVector a = next_action(w);
        c.actions.push_back(a);
        w = step(w, spec_, task_, a, dt_);
    }
    return c;
}

std::shared_ptr<Policy> make_policy(const std::string& name, const ArmSpec& spec, const TaskSpec& task) {
    if (name == "zero") return std::make_shared<ZeroPolicy>();
    if (name == "scripted_expert" || name == "expert") return std::make_shared<ScriptedExpertPolicy>(spec, task);
    if (name == "rigid_style" || name == "rigid") return std::make_shared<RigidStylePolicy>(spec, task);
    throw DomainError("unknown policy '" + name + "' (zero, scripted_expert, rigid_style)");
}

}  // namespace softvla
