#include "softvla/geometry.hpp"

#include "softvla/errors.hpp"

#include <algorithm>

namespace softvla {

double wrap_angle(double x) {
    if (!std::isfinite(x)) {
        throw DomainError("wrap_angle: non-finite input");
    }
    double r = std::fmod(x + kPi, kTwoPi);
    if (r < 0.0) {
        r += kTwoPi;
    }
    // fmod of a tiny negative number plus 2pi can round up to exactly 2pi.
    if (r >= kTwoPi) {
        r = 0.0;
    }
    return r - kPi;
}

double wrap_joint_angle(double x) {
    const double w = wrap_angle(x);
    return w == -kPi ? kPi : w;
}

Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 R;
    R << 1, 0, 0,
         0, c, -s,
         0, s, c;
    return R;
}

Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 R;
    R << c, 0, s,
         0, 1, 0,
         -s, 0, c;
    return R;
}

Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 R;
    R << c, -s, 0,
         s, c, 0,
         0, 0, 1;
    return R;
}

Vec3 log_so3(const Mat3& R) {
    const double cos_angle = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
    const double angle = std::acos(cos_angle);
    const Vec3 skew(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1));
    if (angle < 1e-8) {
        return 0.5 * skew;
    }
    if (kPi - angle < 1e-4) {
        // Near pi the skew part vanishes; recover the axis from the symmetric part.
        const Mat3 B = 0.5 * (R + Mat3::Identity());
        int k = 0;
        B.diagonal().maxCoeff(&k);
        Vec3 axis = B.col(k) / std::sqrt(std::max(B(k, k), 1e-300));
        axis.normalize();
        if (axis.dot(skew) < 0.0) {
            axis = -axis;
        }
        return angle * axis;
    }
    return angle / (2.0 * std::sin(angle)) * skew;
}

Mat3 Pose::rotation() const { return rot_x(roll) * rot_y(pitch) * rot_z(yaw); }

PoseExtraction pose_from_transform(const RigidTransform& T) {
    const Mat3& R = T.rotation;
    PoseExtraction out;
    out.pose.position = T.translation;
    const double sp = std::clamp(R(0, 2), -1.0, 1.0);
    const double pitch = std::asin(sp);
    if (std::abs(std::abs(pitch) - kPi / 2.0) < 1e-6) {
        out.gimbal_lock = true;
        out.pose.pitch = wrap_angle(pitch);
        out.pose.yaw = 0.0;
        out.pose.roll = wrap_angle(std::atan2(R(2, 1), R(1, 1)));
        return out;
    }
    out.pose.pitch = wrap_angle(pitch);
    out.pose.roll = wrap_angle(std::atan2(-R(1, 2), R(2, 2)));
    out.pose.yaw = wrap_angle(std::atan2(-R(0, 1), R(0, 0)));
    return out;
}

}  // namespace softvla
