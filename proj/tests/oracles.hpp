#pragma once

// Reference computations written independently of the library code paths:
// closed-form arcs from Eigen::AngleAxis products, angle wrapping through
// std::remainder, and plain arithmetic for the chunked-control rate.

#include "softvla/arm_model.hpp"
#include "softvla/dataset.hpp"

#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

namespace oracle {

using softvla::Vec3;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;

// Maps into [-pi, pi): remainder lands in [-pi, pi], +pi folds to -pi.
inline double wrap(double x) {
    double r = std::remainder(x, 2.0 * kPi);
    if (r >= kPi) r -= 2.0 * kPi;
    return r;
}

inline Mat3 rx(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 ry(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rz(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

inline Mat3 rpy(double roll, double pitch, double yaw) { return rx(roll) * ry(pitch) * rz(yaw); }

struct Frame {
    Mat3 R = Mat3::Identity();
    Vec3 p = Vec3::Zero();
    Frame operator*(const Frame& o) const { return {R * o.R, R * o.p + p}; }
};

// Circular arc of length L bending by theta in the plane at angle phi from x.
inline Frame arc(double phi, double theta, double L) {
    Vec3 local;
    if (std::abs(theta) < 1e-9) {
        local = Vec3(L * theta / 2.0, 0.0, L);
    } else {
        const double r = L / theta;
        local = Vec3(r * (1.0 - std::cos(theta)), 0.0, r * std::sin(theta));
    }
    return {rz(phi) * ry(theta) * rz(-phi), rz(phi) * local};
}

inline Frame tool_frame(const softvla::ArmSpec& spec, const softvla::Configuration& q) {
    const auto& b = spec.base_pose;
    Frame T{rpy(b.roll, b.pitch, b.yaw), b.position};
    for (std::size_t i = 0; i < spec.section_count(); ++i) {
        T = T * arc(q.sections[i].phi, q.sections[i].theta, spec.sections[i].arc_length);
    }
    return T * Frame{spec.tool_offset.rotation, spec.tool_offset.translation};
}

// Angle between two rotations.
inline double rotation_distance(const Mat3& a, const Mat3& b) {
    return Eigen::AngleAxisd(a * b.transpose()).angle();
}

// Folds actions over the first state: positions add, angles wrap, g copies.
inline std::vector<softvla::StateVector> fold_actions(const softvla::Demonstration& d) {
    std::vector<softvla::StateVector> out;
    softvla::StateVector s = d.frames.front().state;
    out.push_back(s);
    for (std::size_t i = 1; i < d.frames.size(); ++i) {
        const auto& a = d.frames[i].action;
        for (int k = 0; k < 3; ++k) s[k] += a[k];
        for (int k = 3; k < 6; ++k) s[k] = wrap(s[k] + a[k]);
        s[7] = a[6];
        out.push_back(s);
    }
    return out;
}

// Steps per second when each K-action chunk costs one inference latency
// plus K executed steps.
inline double chunked_rate(int k, double latency_s, double step_period_s) {
    return k / (latency_s + k * step_period_s);
}

}  // namespace oracle
