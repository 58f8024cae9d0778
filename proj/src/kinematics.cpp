#include "softvla/kinematics.hpp"

#include "softvla/errors.hpp"

#include <cmath>
#include <limits>

namespace softvla {

namespace {

// Error norm below which the damping is scaled down proportionally.
constexpr double kDampingFadeError = 0.1;
constexpr int kMaxHalvings = 8;

// Arc transform for signed theta. Negative theta is only reached by the
// finite-difference stencil at the theta = 0 boundary.
RigidTransform arc(double theta, double length) {
    RigidTransform T;
    if (std::abs(theta) < kStraightEpsilon) {
        T.translation = Vec3(0.0, 0.0, length);
        return T;
    }
    T.rotation = rot_y(theta);
    if (std::abs(theta) < 1e-4) {
        const double t2 = theta * theta;
        T.translation = Vec3(length * theta * (0.5 - t2 / 24.0), 0.0,
                             length * (1.0 - t2 / 6.0 + t2 * t2 / 120.0));
    } else {
        const double radius = length / theta;
        T.translation = Vec3(radius * (1.0 - std::cos(theta)), 0.0, radius * std::sin(theta));
    }
    return T;
}

RigidTransform plane_arc(double phi, double theta, double length) {
    const Mat3 Rz = rot_z(phi);
    const RigidTransform A = arc(theta, length);
    return {Rz * A.rotation * Rz.transpose(), Rz * A.translation};
}

void check_dims(const ArmSpec& spec, std::size_t n) {
    if (n != spec.section_count()) {
        throw DimensionError("configuration has " + std::to_string(n) + " sections, arm has " +
                             std::to_string(spec.section_count()));
    }
}

// Tool transform from a packed [phi, theta, ...] vector without validation.
RigidTransform chain(const ArmSpec& spec, const Eigen::VectorXd& v) {
    RigidTransform T = spec.base_pose.transform();
    for (std::size_t i = 0; i < spec.section_count(); ++i) {
        T = T * plane_arc(v[2 * i], v[2 * i + 1], spec.sections[i].arc_length);
    }
    return T * spec.tool_offset;
}

Eigen::MatrixXd jacobian_packed(const ArmSpec& spec, const Eigen::VectorXd& v, double h) {
    const Eigen::Index n = v.size();
    Eigen::MatrixXd J(6, n);
    Eigen::VectorXd vp = v, vm = v;
    for (Eigen::Index c = 0; c < n; ++c) {
        vp[c] = v[c] + h;
        vm[c] = v[c] - h;
        const RigidTransform Tp = chain(spec, vp);
        const RigidTransform Tm = chain(spec, vm);
        J.block<3, 1>(0, c) = (Tp.translation - Tm.translation) / (2.0 * h);
        J.block<3, 1>(3, c) = log_so3(Tp.rotation * Tm.rotation.transpose()) / (2.0 * h);
        vp[c] = v[c];
        vm[c] = v[c];
    }
    return J;
}

}  // namespace

RigidTransform segment_transform(double theta, double length) {
    if (!(length > 0.0)) {
        throw DomainError("segment_transform: arc length must be positive");
    }
    if (!(theta >= 0.0)) {
        throw DomainError("segment_transform: theta must be non-negative");
    }
    return arc(theta, length);
}

RigidTransform section_transform(double phi, double theta, double length) {
    segment_transform(theta, length);  // argument checks
    return plane_arc(phi, theta, length);
}

RigidTransform tool_transform(const ArmSpec& spec, const Configuration& q) {
    check_dims(spec, q.size());
    return chain(spec, q.to_vector());
}

Pose forward_kinematics(const ArmSpec& spec, const Configuration& q) {
    return to_pose(tool_transform(spec, q));
}

std::vector<Vec3> backbone_points(const ArmSpec& spec, const Configuration& q) {
    check_dims(spec, q.size());
    std::vector<Vec3> pts;
    RigidTransform T = spec.base_pose.transform();
    pts.push_back(T.translation);
    for (std::size_t i = 0; i < spec.section_count(); ++i) {
        const auto& sec = spec.sections[i];
        const auto [phi, theta] = q.sections[i];
        const int n = sec.backbone_samples;
        for (int j = 1; j <= n; ++j) {
            const double s = static_cast<double>(j) / n;
            pts.push_back(T.apply(plane_arc(phi, theta * s, sec.arc_length * s).translation));
        }
        T = T * plane_arc(phi, theta, sec.arc_length);
    }
    if (spec.tool_offset.translation.norm() > 0.0) {
        pts.push_back((T * spec.tool_offset).translation);
    }
    return pts;
}

Eigen::MatrixXd jacobian(const ArmSpec& spec, const Configuration& q, double step) {
    check_dims(spec, q.size());
    return jacobian_packed(spec, q.to_vector(), step);
}

Eigen::Matrix<double, 6, 1> pose_error(const RigidTransform& target, const RigidTransform& current) {
    Eigen::Matrix<double, 6, 1> e;
    e.head<3>() = target.translation - current.translation;
    e.tail<3>() = log_so3(target.rotation * current.rotation.transpose());
    return e;
}

IkResult ik_solve(const ArmSpec& spec, const Configuration& q0, const Pose& target,
                  const IkOptions& opts) {
    if (!target.position.allFinite() || !std::isfinite(target.roll) ||
        !std::isfinite(target.pitch) || !std::isfinite(target.yaw)) {
        throw DomainError("ik_solve: non-finite target");
    }
    return ik_solve(spec, q0, target.transform(), opts);
}

IkResult ik_solve(const ArmSpec& spec, const Configuration& q0, const RigidTransform& target,
                  const IkOptions& opts) {
    check_dims(spec, q0.size());
    if (!target.translation.allFinite() || !target.rotation.allFinite()) {
        throw DomainError("ik_solve: non-finite target");
    }
    const std::size_t n = spec.section_count();
    Configuration q = clamp_configuration(spec, q0);

    const int rows = opts.position_only ? 3 : 6;

    IkResult best;
    double best_score = std::numeric_limits<double>::infinity();

    for (int iter = 0;; ++iter) {
        const Eigen::VectorXd v = q.to_vector();
        const auto e = pose_error(target, chain(spec, v));
        const double pos_err = e.head<3>().norm();
        const double rot_err = e.tail<3>().norm();
        const bool done = pos_err <= opts.tol_pos && (opts.position_only || rot_err <= opts.tol_rot);
        const double score = opts.position_only ? pos_err : pos_err + rot_err;
        if (score < best_score || done) {
            best_score = score;
            best.configuration = q;
            best.iterations = iter;
            best.position_error = pos_err;
            best.orientation_error = rot_err;
            best.converged = done;
        }
        if (done || iter >= opts.max_iters) {
            break;
        }

        Eigen::MatrixXd J = jacobian_packed(spec, v, 1e-6).topRows(rows);
        for (std::size_t i = 0; i < n; ++i) {
            if (q.sections[i].theta < 1e-4) {
                J.col(static_cast<Eigen::Index>(2 * i)).setZero();
            }
        }
        const double err_norm = e.head(rows).norm();
        const double fade = std::min(1.0, err_norm / kDampingFadeError);
        const double lambda2 = opts.damping * opts.damping * fade * fade;
        Eigen::VectorXd dq;
        // Clamping loop: a bend already at its upper limit that the step
        // would push further is frozen and the step recomputed without it.
        for (std::size_t pass = 0; pass <= n; ++pass) {
            const Eigen::MatrixXd JJt =
                J * J.transpose() + lambda2 * Eigen::MatrixXd::Identity(rows, rows);
            dq = J.transpose() * JJt.ldlt().solve(e.head(rows));
            bool frozen = false;
            for (std::size_t i = 0; i < n; ++i) {
                const auto col = static_cast<Eigen::Index>(2 * i + 1);
                if (q.sections[i].theta >= spec.sections[i].max_bend && dq[col] > 0.0) {
                    J.col(col).setZero();
                    frozen = true;
                }
            }
            if (!frozen) {
                break;
            }
        }
        // Backtracking: halve the step while it makes the error worse.
        Configuration next_q;
        double step = opts.step_scale;
        for (int halving = 0;; ++halving) {
            Configuration next = Configuration::from_vector(v + step * dq);
            for (auto& s : next.sections) {
                // (phi, -theta) is the same shape as (phi + pi, theta).
                if (s.theta < 0.0) {
                    s.theta = -s.theta;
                    s.phi += kPi;
                }
            }
            next_q = clamp_configuration(spec, next);
            if (halving >= kMaxHalvings) {
                break;
            }
            const auto en = pose_error(target, chain(spec, next_q.to_vector()));
            if (en.head(rows).norm() < err_norm) {
                break;
            }
            step *= 0.5;
        }
        q = next_q;
    }
    best.iterations = std::max(best.iterations, 0);
    return best;
}

TendonLengths tendon_lengths(const ArmSpec& spec, const Configuration& q) {
    check_dims(spec, q.size());
    TendonLengths out(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double L = spec.sections[i].arc_length;
        const double d = spec.sections[i].tendon_radius * q.sections[i].theta;
        out[i] = {L + d, L - d};
    }
    return out;
}

Configuration config_from_tendons(const ArmSpec& spec, const TendonLengths& tendons,
                                  const std::vector<double>& phis) {
    check_dims(spec, tendons.size());
    check_dims(spec, phis.size());
    Configuration q(tendons.size());
    for (std::size_t i = 0; i < tendons.size(); ++i) {
        const auto& sec = spec.sections[i];
        const auto [lp, lm] = tendons[i];
        if (std::abs(lp + lm - 2.0 * sec.arc_length) > 1e-6) {
            throw ConsistencyError("section " + std::to_string(i) +
                                   ": tendon lengths do not sum to twice the arc length");
        }
        q.sections[i] = {phis[i], (lp - lm) / (2.0 * sec.tendon_radius)};
    }
    return clamp_configuration(spec, q);
}

}  // namespace softvla
