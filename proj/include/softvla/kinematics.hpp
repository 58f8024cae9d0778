#pragma once

#include "softvla/arm_model.hpp"
#include "softvla/geometry.hpp"

#include <vector>

namespace softvla {

inline constexpr double kStraightEpsilon = 1e-7;

// Constant-curvature arc of length `length` bending by `theta` towards the
// local +x axis. Throws DomainError for length <= 0 or theta < 0.
RigidTransform segment_transform(double theta, double length);

// Section frame for bending-plane direction phi: Rz(phi) * arc * Rz(-phi).
RigidTransform section_transform(double phi, double theta, double length);

// World transform of the tool point. Throws DimensionError on a section
// count mismatch.
RigidTransform tool_transform(const ArmSpec& spec, const Configuration& q);
Pose forward_kinematics(const ArmSpec& spec, const Configuration& q);

// Centerline samples from base to tool, backbone_samples per segment.
std::vector<Vec3> backbone_points(const ArmSpec& spec, const Configuration& q);

// 6 x 2N: rows (dx, dy, dz, wx, wy, wz), columns (dphi_0, dtheta_0, ...).
// Central differences; the rotational rows are the rotation vector of
// R(q+h) R(q-h)^T divided by 2h.
Eigen::MatrixXd jacobian(const ArmSpec& spec, const Configuration& q, double step = 1e-6);

struct IkOptions {
    double tol_pos = 1e-4;   // m
    double tol_rot = 1e-3;   // rad
    int max_iters = 200;
    double damping = 0.05;
    double step_scale = 1.0;
    // Solve for position only; orientation error is reported but ignored.
    bool position_only = false;
};

struct IkResult {
    Configuration configuration;
    int iterations = 0;
    double position_error = 0.0;
    double orientation_error = 0.0;
    bool converged = false;
};

// Pose error between target and current: position difference and the
// rotation vector of R_target * R_current^T.
Eigen::Matrix<double, 6, 1> pose_error(const RigidTransform& target, const RigidTransform& current);

// Damped least squares with the limits enforced every iteration. Returns the
// best iterate seen when it does not converge. Throws DomainError on NaN input.
IkResult ik_solve(const ArmSpec& spec, const Configuration& q0, const Pose& target,
                  const IkOptions& opts = {});
IkResult ik_solve(const ArmSpec& spec, const Configuration& q0, const RigidTransform& target,
                  const IkOptions& opts = {});

struct TendonPair {
    double l_plus = 0.0;   // outer tendon, m
    double l_minus = 0.0;  // inner tendon, m
};

using TendonLengths = std::vector<TendonPair>;

TendonLengths tendon_lengths(const ArmSpec& spec, const Configuration& q);

// Inverse of tendon_lengths. The pair does not carry the plane direction,
// so phis are supplied by the caller. Throws ConsistencyError if a pair
// violates l_plus + l_minus = 2L (1e-6 tolerance).
Configuration config_from_tendons(const ArmSpec& spec, const TendonLengths& tendons,
                                  const std::vector<double>& phis);

}  // namespace softvla
