#include "softvla/simulator.hpp"

#include "softvla/errors.hpp"

#include <algorithm>
#include <cmath>

namespace softvla {

namespace {

constexpr double kNear = 0.02;
constexpr double kTableHalfExtent = 1.0;

struct Projected {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
    bool visible = false;
};

struct View {
    const CameraSpec& cam;
    RigidTransform cam_to_world;
    Mat3 world_to_cam;
    Vec3 eye;

    Projected project(const Vec3& p) const {
        const Vec3 c = world_to_cam * (p - eye);
        if (c.z() <= kNear) {
            return {};
        }
        return {cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy, c.z(), true};
    }
};

enum class ItemKind { ring, disc, segment, gripper };

struct Item {
    ItemKind kind;
    double depth;
    Projected a;
    Projected b;
    double radius_px;
    Rgb color;
};

void fill_disc(Image& img, double u, double v, double r, Rgb c) {
    const int x0 = std::max(0, static_cast<int>(std::floor(u - r)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(u + r)));
    const int y0 = std::max(0, static_cast<int>(std::floor(v - r)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(v + r)));
    const double r2 = r * r;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - u;
            const double dy = y - v;
            if (dx * dx + dy * dy <= r2) {
                img.set(x, y, c);
            }
        }
    }
}

void draw_ring(Image& img, double u, double v, double r, double thickness, Rgb c) {
    const double outer = r + thickness / 2.0;
    const double inner = std::max(0.0, r - thickness / 2.0);
    const int x0 = std::max(0, static_cast<int>(std::floor(u - outer)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(u + outer)));
    const int y0 = std::max(0, static_cast<int>(std::floor(v - outer)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(v + outer)));
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double d = std::hypot(x - u, y - v);
            if (d <= outer && d >= inner) {
                img.set(x, y, c);
            }
        }
    }
}

void draw_capsule(Image& img, double ua, double va, double ub, double vb, double half, Rgb c) {
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(ua, ub) - half)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(ua, ub) + half)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(va, vb) - half)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(va, vb) + half)));
    const double dx = ub - ua;
    const double dy = vb - va;
    const double len2 = dx * dx + dy * dy;
    const double h2 = half * half;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            double t = len2 > 0.0 ? ((x - ua) * dx + (y - va) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            const double ex = x - (ua + t * dx);
            const double ey = y - (va + t * dy);
            if (ex * ex + ey * ey <= h2) {
                img.set(x, y, c);
            }
        }
    }
}

// Guard against huge pixel loops when a point sits right in front of the lens.
bool on_screen(const Projected& p, double margin, const Image& img) {
    return p.visible && p.u > -margin && p.v > -margin && p.u < img.width + margin && p.v < img.height + margin;
}

}  // namespace

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 forward = target - eye;
    if (forward.norm() < 1e-12) {
        throw DomainError("look_at: eye and target coincide");
    }
    const Vec3 z = forward.normalized();
    Vec3 x = z.cross(up);
    if (x.norm() < 1e-9) {
        throw DomainError("look_at: up is parallel to the viewing direction");
    }
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return to_pose(RigidTransform{r, eye});
}

CameraSpec default_third_person_camera() {
    CameraSpec c;
    c.fx = c.fy = 520.0;
    c.extrinsic = look_at(Vec3(1.1, 0.0, 0.8), Vec3(0.0, 0.0, 0.15));
    c.attachment = CameraAttachment::world_fixed;
    return c;
}

CameraSpec default_wrist_camera() {
    CameraSpec c;
    c.fx = c.fy = 420.0;
    // Slightly behind the tool and offset sideways, looking along the tool axis.
    c.extrinsic.position = Vec3(0.0, -0.04, -0.06);
    c.attachment = CameraAttachment::wrist_mounted;
    return c;
}

Image render_view(const WorldState& world, const ArmSpec& spec, const TaskSpec& task, const CameraSpec& camera) {
    (void)task;
    if (camera.width <= 0 || camera.height <= 0 || !(camera.fx > 0.0) || !(camera.fy > 0.0)) {
        throw DomainError("render_view: invalid camera intrinsics");
    }
    RigidTransform cam_to_world = camera.extrinsic.transform();
    if (camera.attachment == CameraAttachment::wrist_mounted) {
        cam_to_world = tool_transform(spec, world.arm_config) * cam_to_world;
    }
    const View view{camera, cam_to_world, cam_to_world.rotation.transpose(), cam_to_world.translation};

    Image img(camera.width, camera.height, palette::background);

    // Table plane z = 0 by per-pixel ray casting.
    const Mat3& R = cam_to_world.rotation;
    const Vec3& eye = cam_to_world.translation;
    if (eye.z() > 0.0) {
        for (int v = 0; v < camera.height; ++v) {
            const double ry = (v - camera.cy) / camera.fy;
            const Vec3 row = R.col(1) * ry + R.col(2);
            for (int u = 0; u < camera.width; ++u) {
                const double rx = (u - camera.cx) / camera.fx;
                const Vec3 d = R.col(0) * rx + row;
                if (d.z() >= 0.0) {
                    continue;
                }
                const double t = -eye.z() / d.z();
                const double hx = eye.x() + t * d.x();
                const double hy = eye.y() + t * d.y();
                if (std::abs(hx) <= kTableHalfExtent && std::abs(hy) <= kTableHalfExtent) {
                    img.set(u, v, palette::table);
                }
            }
        }
    }

    std::vector<Item> items;
    const double margin = 2.0 * std::max(camera.width, camera.height);
    for (const auto& o : world.objects) {
        const Projected p = view.project(o.position);
        if (!on_screen(p, margin, img)) {
            continue;
        }
        const double r_px = camera.fx * o.radius / p.depth;
        if (o.class_label == ObjectClass::mouth_zone) {
            items.push_back({ItemKind::ring, p.depth, p, {}, r_px, default_color(ObjectClass::mouth_zone)});
            continue;
        }
        items.push_back({ItemKind::disc, p.depth, p, {}, r_px, o.color});
        if (o.class_label == ObjectClass::plate && task.task_id != 3) {
            // Goal ring drawn just in front of the plate.
            items.push_back({ItemKind::ring, p.depth - 1e-6, p, {}, r_px, palette::goal_ring});
        }
    }

    const auto backbone = backbone_points(spec, world.arm_config);
    for (std::size_t i = 0; i + 1 < backbone.size(); ++i) {
        const Projected a = view.project(backbone[i]);
        const Projected b = view.project(backbone[i + 1]);
        if (!on_screen(a, margin, img) || !on_screen(b, margin, img)) {
            continue;
        }
        const double depth = 0.5 * (a.depth + b.depth);
        const double half = std::max(1.5, camera.fx * 0.012 / depth);
        items.push_back({ItemKind::segment, depth, a, b, half, palette::arm});
    }

    const Vec3 tool = tool_transform(spec, world.arm_config).translation;
    const Projected tp = view.project(tool);
    if (on_screen(tp, margin, img)) {
        const double size = std::max(3.0, camera.fx * 0.02 / tp.depth);
        items.push_back({ItemKind::gripper, tp.depth - 1e-6, tp, {}, size,
                         world.gripper_open ? palette::gripper_open : palette::gripper_closed});
    }

    std::stable_sort(items.begin(), items.end(), [](const Item& l, const Item& r) { return l.depth > r.depth; });
    for (const auto& it : items) {
        switch (it.kind) {
            case ItemKind::disc:
                fill_disc(img, it.a.u, it.a.v, it.radius_px, it.color);
                break;
            case ItemKind::ring:
                draw_ring(img, it.a.u, it.a.v, it.radius_px, std::max(2.0, it.radius_px * 0.12), it.color);
                break;
            case ItemKind::segment:
                draw_capsule(img, it.a.u, it.a.v, it.b.u, it.b.v, it.radius_px, it.color);
                break;
            case ItemKind::gripper: {
                const double s = it.radius_px;
                const double w = std::max(1.0, s * 0.25);
                if (world.gripper_open) {
                    draw_capsule(img, it.a.u - s, it.a.v - s, it.a.u - s, it.a.v + s, w, it.color);
                    draw_capsule(img, it.a.u + s, it.a.v - s, it.a.u + s, it.a.v + s, w, it.color);
                } else {
                    draw_capsule(img, it.a.u, it.a.v - s, it.a.u, it.a.v + s, w, it.color);
                }
                break;
            }
        }
    }
    return img;
}

}  // namespace softvla
