#pragma once

#include "softvla/geometry.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace softvla {

// One arm module: a revolute joint that turns the bending plane, followed by
// a constant-curvature soft segment.
struct SectionSpec {
    double arc_length = 0.0;     // m, > 0
    double max_bend = 0.0;       // rad, (0, pi]
    double tendon_radius = 0.0;  // m, tendon offset from the centerline
    int backbone_samples = 16;   // rendered points per segment, >= 2
};

struct ArmSpec {
    std::vector<SectionSpec> sections;
    Pose base_pose;
    RigidTransform tool_offset;

    std::size_t section_count() const { return sections.size(); }
    double total_length() const;
};

// (phi, theta) of one section: phi rotates the bending plane about the local
// backbone tangent, theta is the in-plane bend.
struct SectionAngles {
    double phi = 0.0;
    double theta = 0.0;

    bool operator==(const SectionAngles&) const = default;
};

struct Configuration {
    std::vector<SectionAngles> sections;

    Configuration() = default;
    explicit Configuration(std::size_t n) : sections(n) {}
    explicit Configuration(std::vector<SectionAngles> s) : sections(std::move(s)) {}

    std::size_t size() const { return sections.size(); }
    // Packed as [phi_0, theta_0, phi_1, theta_1, ...].
    Eigen::VectorXd to_vector() const;
    static Configuration from_vector(const Eigen::VectorXd& v);

    bool operator==(const Configuration&) const = default;
};

// Three sections bending up to 80/50/50 degrees, 0.4/0.3/0.3 m long (1 m in
// total), tendons 2 cm off the centerline.
ArmSpec default_embuddy_spec();

// Theta clamped into [0, max_bend], phi wrapped into (-pi, pi].
// Throws DimensionError if the section counts differ.
Configuration clamp_configuration(const ArmSpec& spec, const Configuration& q);

// Human-readable invariant violations; empty means the spec is valid.
std::vector<std::string> validate_spec(const ArmSpec& spec);

// Straight arm with every angle zero.
Configuration straight_configuration(const ArmSpec& spec);

// Loads an arm description from its JSON text file (lengths in m, angles in
// degrees). Missing keys fall back to the default arm values.
ArmSpec load_arm_spec(const std::filesystem::path& path);
ArmSpec arm_spec_from_json_text(const std::string& text);
std::string arm_spec_to_json_text(const ArmSpec& spec);

}  // namespace softvla
