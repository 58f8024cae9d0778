#include "softvla/arm_model.hpp"

#include "softvla/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace softvla {

using nlohmann::json;

double ArmSpec::total_length() const {
    double sum = 0.0;
    for (const auto& s : sections) {
        sum += s.arc_length;
    }
    return sum;
}

Eigen::VectorXd Configuration::to_vector() const {
    Eigen::VectorXd v(2 * static_cast<Eigen::Index>(sections.size()));
    for (std::size_t i = 0; i < sections.size(); ++i) {
        v[2 * i] = sections[i].phi;
        v[2 * i + 1] = sections[i].theta;
    }
    return v;
}

Configuration Configuration::from_vector(const Eigen::VectorXd& v) {
    if (v.size() % 2 != 0) {
        throw DimensionError("configuration vector must have even length");
    }
    Configuration q(static_cast<std::size_t>(v.size() / 2));
    for (std::size_t i = 0; i < q.size(); ++i) {
        q.sections[i] = {v[2 * i], v[2 * i + 1]};
    }
    return q;
}

ArmSpec default_embuddy_spec() {
    ArmSpec spec;
    spec.sections = {
        {0.4, deg2rad(80.0), 0.02, 16},
        {0.3, deg2rad(50.0), 0.02, 12},
        {0.3, deg2rad(50.0), 0.02, 12},
    };
    return spec;
}

Configuration clamp_configuration(const ArmSpec& spec, const Configuration& q) {
    if (q.size() != spec.section_count()) {
        throw DimensionError("configuration has " + std::to_string(q.size()) +
                             " sections, arm has " + std::to_string(spec.section_count()));
    }
    Configuration out = q;
    for (std::size_t i = 0; i < q.size(); ++i) {
        auto& s = out.sections[i];
        if (!std::isfinite(s.phi) || !std::isfinite(s.theta)) {
            throw DomainError("configuration contains a non-finite angle");
        }
        s.theta = std::clamp(s.theta, 0.0, spec.sections[i].max_bend);
        s.phi = wrap_joint_angle(s.phi);
    }
    return out;
}

std::vector<std::string> validate_spec(const ArmSpec& spec) {
    std::vector<std::string> violations;
    if (spec.sections.empty()) {
        violations.emplace_back("arm must have at least one section");
    }
    for (std::size_t i = 0; i < spec.sections.size(); ++i) {
        const auto& s = spec.sections[i];
        const std::string at = "section " + std::to_string(i) + ": ";
        if (!(s.arc_length > 0.0)) {
            violations.push_back(at + "arc_length must be positive");
        }
        if (!(s.max_bend > 0.0)) {
            violations.push_back(at + "max_bend must be positive");
        } else if (s.max_bend > kPi) {
            violations.push_back(at + "max_bend exceeds π");
        }
        if (!(s.tendon_radius > 0.0)) {
            violations.push_back(at + "tendon_radius must be positive");
        }
        if (s.backbone_samples < 2) {
            violations.push_back(at + "backbone_samples must be at least 2");
        }
    }
    return violations;
}

Configuration straight_configuration(const ArmSpec& spec) {
    return Configuration(spec.section_count());
}

namespace {

Pose pose_from_json(const json& j) {
    Pose p;
    if (j.contains("position")) {
        const auto pos = j.at("position").get<std::vector<double>>();
        if (pos.size() != 3) {
            throw FormatError("position must have 3 entries");
        }
        p.position = Vec3(pos[0], pos[1], pos[2]);
    }
    if (j.contains("rpy_deg")) {
        const auto rpy = j.at("rpy_deg").get<std::vector<double>>();
        if (rpy.size() != 3) {
            throw FormatError("rpy_deg must have 3 entries");
        }
        p.roll = wrap_angle(deg2rad(rpy[0]));
        p.pitch = wrap_angle(deg2rad(rpy[1]));
        p.yaw = wrap_angle(deg2rad(rpy[2]));
    }
    return p;
}

json pose_to_json(const Pose& p) {
    return {{"position", {p.position.x(), p.position.y(), p.position.z()}},
            {"rpy_deg", {rad2deg(p.roll), rad2deg(p.pitch), rad2deg(p.yaw)}}};
}

}  // namespace

ArmSpec arm_spec_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("arm spec is not valid JSON: ") + e.what());
    }
    ArmSpec spec = default_embuddy_spec();
    try {
        if (j.contains("sections")) {
            spec.sections.clear();
            for (const auto& js : j.at("sections")) {
                SectionSpec s;
                s.arc_length = js.value("arc_length", 0.3);
                s.max_bend = deg2rad(js.value("max_bend_deg", 50.0));
                s.tendon_radius = js.value("tendon_radius", 0.02);
                s.backbone_samples = js.value("backbone_samples", 12);
                spec.sections.push_back(s);
            }
        }
        if (j.contains("base_pose")) {
            spec.base_pose = pose_from_json(j.at("base_pose"));
        }
        if (j.contains("tool_offset")) {
            spec.tool_offset = pose_from_json(j.at("tool_offset")).transform();
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("arm spec has a malformed field: ") + e.what());
    }
    const auto violations = validate_spec(spec);
    if (!violations.empty()) {
        std::string msg = "invalid arm spec:";
        for (const auto& v : violations) {
            msg += " " + v + ";";
        }
        throw DomainError(msg);
    }
    return spec;
}

std::string arm_spec_to_json_text(const ArmSpec& spec) {
    json j;
    j["sections"] = json::array();
    for (const auto& s : spec.sections) {
        j["sections"].push_back({{"arc_length", s.arc_length},
                                 {"max_bend_deg", rad2deg(s.max_bend)},
                                 {"tendon_radius", s.tendon_radius},
                                 {"backbone_samples", s.backbone_samples}});
    }
    j["base_pose"] = pose_to_json(spec.base_pose);
    j["tool_offset"] = pose_to_json(to_pose(spec.tool_offset));
    return j.dump(2);
}

ArmSpec load_arm_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw FormatError("cannot open arm spec " + path.string());
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return arm_spec_from_json_text(ss.str());
}

}  // namespace softvla
