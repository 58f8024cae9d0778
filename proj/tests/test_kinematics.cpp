#include "oracles.hpp"

#include "softvla/errors.hpp"
#include "softvla/kinematics.hpp"
#include "softvla/simulator.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace softvla;

namespace {

Configuration random_config(const ArmSpec& spec, std::mt19937_64& rng) {
    Configuration q(spec.section_count());
    for (std::size_t i = 0; i < spec.section_count(); ++i) {
        std::uniform_real_distribution<double> phi(-kPi, kPi), theta(0.0, spec.sections[i].max_bend);
        q.sections[i] = {phi(rng), theta(rng)};
    }
    return q;
}

}  // namespace

TEST(Geometry, WrapMatchesRemainderOracle) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    for (int i = 0; i < 100000; ++i) {
        const double x = u(rng);
        const double w = wrap_angle(x);
        EXPECT_GE(w, -kPi);
        EXPECT_LT(w, kPi);
        EXPECT_NEAR(w, oracle::wrap(x), 1e-12);
    }
    EXPECT_EQ(wrap_angle(kPi), -kPi);
    EXPECT_EQ(wrap_angle(-kPi), -kPi);
    EXPECT_THROW(wrap_angle(std::nan("")), DomainError);
}

TEST(Geometry, PoseRoundTripsThroughTransform) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> a(-3.0, 3.0), p(-1.4, 1.4);
    for (int i = 0; i < 1000; ++i) {
        Pose pose;
        pose.roll = a(rng);
        pose.pitch = p(rng);
        pose.yaw = a(rng);
        const Mat3 R = oracle::rpy(pose.roll, pose.pitch, pose.yaw);
        EXPECT_LT((pose.rotation() - R).norm(), 1e-12);
        const Pose back = to_pose(pose.transform());
        EXPECT_NEAR(back.roll, pose.roll, 1e-9);
        EXPECT_NEAR(back.pitch, pose.pitch, 1e-9);
        EXPECT_NEAR(back.yaw, pose.yaw, 1e-9);
    }
}

TEST(Geometry, GimbalLockPinsYaw) {
    Pose pose;
    pose.pitch = kPi / 2;
    pose.roll = 0.3;
    pose.yaw = 0.2;
    const auto e = pose_from_transform(pose.transform());
    EXPECT_TRUE(e.gimbal_lock);
    EXPECT_EQ(e.pose.yaw, 0.0);
    EXPECT_LT((e.pose.rotation() - pose.rotation()).norm(), 1e-9);
}

TEST(Kinematics, StraightArmTipAtTotalLength) {
    const ArmSpec spec = default_embuddy_spec();
    const Pose p = forward_kinematics(spec, straight_configuration(spec));
    EXPECT_NEAR(p.position.x(), 0.0, 1e-12);
    EXPECT_NEAR(p.position.y(), 0.0, 1e-12);
    EXPECT_NEAR(p.position.z(), 1.0, 1e-12);
}

TEST(Kinematics, SingleArcMatchesClosedForm) {
    // Quarter circle of a 0.4 m section: tip at (r, 0, r) with r = 0.4 / (pi/2).
    const RigidTransform T = segment_transform(kPi / 2, 0.4);
    const double r = 0.4 / (kPi / 2);
    EXPECT_NEAR(T.translation.x(), r, 1e-12);
    EXPECT_NEAR(T.translation.z(), r, 1e-12);
    EXPECT_NEAR(T.translation.y(), 0.0, 1e-12);
    EXPECT_THROW(segment_transform(-0.1, 0.4), DomainError);
    EXPECT_THROW(segment_transform(0.1, 0.0), DomainError);
}

TEST(Kinematics, ForwardKinematicsMatchesOracle) {
    std::mt19937_64 rng(11);
    for (const ArmSpec& spec : {default_embuddy_spec(), tabletop_arm_spec()}) {
        for (int i = 0; i < 500; ++i) {
            const Configuration q = random_config(spec, rng);
            const RigidTransform T = tool_transform(spec, q);
            const oracle::Frame F = oracle::tool_frame(spec, q);
            EXPECT_LT((T.translation - F.p).norm(), 1e-12);
            EXPECT_LT(oracle::rotation_distance(T.rotation, F.R), 1e-9);
        }
    }
}

TEST(Kinematics, NearStraightBendIsContinuous) {
    const ArmSpec spec = default_embuddy_spec();
    Configuration q(3);
    q.sections[0] = {0.7, 1e-9};
    const oracle::Frame F = oracle::tool_frame(spec, q);
    EXPECT_LT((forward_kinematics(spec, q).position - F.p).norm(), 1e-9);
}

TEST(Kinematics, BackboneEndsAtTool) {
    std::mt19937_64 rng(2);
    const ArmSpec spec = tabletop_arm_spec();
    const Configuration q = random_config(spec, rng);
    const auto pts = backbone_points(spec, q);
    EXPECT_LT((pts.back() - forward_kinematics(spec, q).position).norm(), 1e-9);
    EXPECT_LT((pts.front() - spec.base_pose.position).norm(), 1e-12);
}

TEST(Kinematics, JacobianMatchesAnalyticArcDerivative) {
    // One section, phi = 0: tip x = L(1 - cos t)/t, z = L sin t / t.
    ArmSpec spec = default_embuddy_spec();
    spec.sections.resize(1);
    const double L = spec.sections[0].arc_length;
    const double t = 0.6;
    Configuration q(1);
    q.sections[0] = {0.0, t};
    const Eigen::MatrixXd J = jacobian(spec, q);
    const double dx = L * (t * std::sin(t) - (1 - std::cos(t))) / (t * t);
    const double dz = L * (t * std::cos(t) - std::sin(t)) / (t * t);
    EXPECT_NEAR(J(0, 1), dx, 1e-7);
    EXPECT_NEAR(J(2, 1), dz, 1e-7);
    EXPECT_NEAR(J(4, 1), 1.0, 1e-7);  // bending about local y
    // dphi swings the tip about z: dy/dphi = x.
    EXPECT_NEAR(J(1, 0), L * (1 - std::cos(t)) / t, 1e-7);
}

TEST(Kinematics, IkRoundTripOnReachableTargets) {
    const ArmSpec spec = default_embuddy_spec();
    std::mt19937_64 rng(21);
    int converged = 0;
    const int n = 200;
    for (int i = 0; i < n; ++i) {
        const Configuration q = random_config(spec, rng);
        const Pose target = forward_kinematics(spec, q);
        const IkResult r = ik_solve(spec, straight_configuration(spec), target);
        for (std::size_t s = 0; s < spec.section_count(); ++s) {
            EXPECT_GE(r.configuration.sections[s].theta, 0.0);
            EXPECT_LE(r.configuration.sections[s].theta, spec.sections[s].max_bend);
        }
        if (r.converged) {
            ++converged;
            const oracle::Frame F = oracle::tool_frame(spec, r.configuration);
            EXPECT_LE((F.p - target.position).norm(), 1e-4);
            EXPECT_LE(oracle::rotation_distance(F.R, target.rotation()), 1e-3);
        }
    }
    EXPECT_GE(converged, n * 95 / 100);
}

TEST(Kinematics, UnreachableTargetReportsNonConvergence) {
    const ArmSpec spec = default_embuddy_spec();
    Pose target;
    target.position = Vec3(0, 0, 2.0);
    const IkResult r = ik_solve(spec, straight_configuration(spec), target);
    EXPECT_FALSE(r.converged);
    EXPECT_NEAR(r.position_error, 1.0, 1e-9);
}

TEST(Kinematics, IkRejectsNaN) {
    const ArmSpec spec = default_embuddy_spec();
    Pose target;
    target.position = Vec3(std::nan(""), 0, 0.5);
    EXPECT_THROW(ik_solve(spec, straight_configuration(spec), target), DomainError);
}

TEST(Kinematics, DimensionMismatchThrows) {
    const ArmSpec spec = default_embuddy_spec();
    EXPECT_THROW(forward_kinematics(spec, Configuration(2)), DimensionError);
}

TEST(Kinematics, TendonLengthsFollowArcGeometry) {
    const ArmSpec spec = default_embuddy_spec();
    Configuration q(3);
    q.sections = {{0.1, 0.5}, {0.2, 0.3}, {-1.0, 0.0}};
    const auto t = tendon_lengths(spec, q);
    for (std::size_t i = 0; i < 3; ++i) {
        const double L = spec.sections[i].arc_length;
        const double d = spec.sections[i].tendon_radius;
        // Concentric arcs of radius L/theta +- d over the same angle.
        EXPECT_NEAR(t[i].l_plus, L + d * q.sections[i].theta, 1e-15);
        EXPECT_NEAR(t[i].l_minus, L - d * q.sections[i].theta, 1e-15);
        EXPECT_NEAR(t[i].l_plus + t[i].l_minus, 2 * L, 1e-12);
    }
    const Configuration back = config_from_tendons(spec, t, {0.1, 0.2, -1.0});
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(back.sections[i].theta, q.sections[i].theta, 1e-12);
    }
    auto bad = t;
    bad[0].l_plus += 1e-3;
    EXPECT_THROW(config_from_tendons(spec, bad, {0.1, 0.2, -1.0}), ConsistencyError);
}

TEST(ArmModel, SpecJsonRoundTrip) {
    const ArmSpec spec = default_embuddy_spec();
    const ArmSpec back = arm_spec_from_json_text(arm_spec_to_json_text(spec));
    ASSERT_EQ(back.section_count(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(back.sections[i].arc_length, spec.sections[i].arc_length);
        EXPECT_NEAR(back.sections[i].max_bend, spec.sections[i].max_bend, 1e-12);
    }
    EXPECT_TRUE(validate_spec(spec).empty());
    EXPECT_NEAR(rad2deg(spec.sections[0].max_bend), 80.0, 1e-12);
    EXPECT_NEAR(rad2deg(spec.sections[1].max_bend), 50.0, 1e-12);
    EXPECT_NEAR(spec.total_length(), 1.0, 1e-12);
}

TEST(ArmModel, ClampKeepsLimits) {
    const ArmSpec spec = default_embuddy_spec();
    Configuration q(3);
    q.sections = {{4.0, 3.0}, {-4.0, -1.0}, {0.0, 0.2}};
    const Configuration c = clamp_configuration(spec, q);
    EXPECT_NEAR(c.sections[0].theta, spec.sections[0].max_bend, 1e-15);
    EXPECT_EQ(c.sections[1].theta, 0.0);
    EXPECT_GT(c.sections[0].phi, -kPi);
    EXPECT_LE(c.sections[0].phi, kPi);
}
