#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace softvla {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// ((x + pi) mod 2pi) - pi with a non-negative remainder; result in [-pi, pi).
// Throws DomainError for NaN or infinite input.
double wrap_angle(double x);

// Rotation about the revolute joint axis; maps (-pi, pi] for phi
// (phi = pi stays pi, phi = -pi becomes pi).
double wrap_joint_angle(double x);

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

// Rotation vector (axis * angle) of R, angle in [0, pi].
Vec3 log_so3(const Mat3& R);

// Proper rigid transform. Composition follows the usual
// left-to-right parent-to-child convention: (a * b) applies b first.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    RigidTransform operator*(const RigidTransform& rhs) const {
        return {rotation * rhs.rotation, rotation * rhs.translation + translation};
    }
    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform inverse() const {
        const Mat3 rt = rotation.transpose();
        return {rt, -(rt * translation)};
    }
};

// Position plus intrinsic X-Y-Z roll/pitch/yaw, R = Rx(roll) Ry(pitch) Rz(yaw).
// Angles are kept in [-pi, pi).
struct Pose {
    Vec3 position = Vec3::Zero();
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;

    Mat3 rotation() const;
    RigidTransform transform() const { return {rotation(), position}; }
};

struct PoseExtraction {
    Pose pose;
    // |pitch| within 1e-6 of pi/2: roll and yaw are not separable and
    // yaw is pinned to zero.
    bool gimbal_lock = false;
};

PoseExtraction pose_from_transform(const RigidTransform& T);

inline Pose to_pose(const RigidTransform& T) { return pose_from_transform(T).pose; }

}  // namespace softvla
