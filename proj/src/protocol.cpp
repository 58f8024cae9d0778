#include "softvla/protocol.hpp"

#include "softvla/errors.hpp"

#include <cmath>

namespace softvla {

using nlohmann::json;

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

json parse_header(const std::uint8_t* p, std::size_t n) {
    json h;
    try {
        h = json::parse(p, p + n);
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed header: ") + e.what());
    }
    if (!h.is_object() || !h.contains("type") || !h["type"].is_string()) {
        throw ProtocolError("header must be an object with a string 'type'");
    }
    return h;
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* what) {
    if (!j.is_array() || j.size() != N) {
        throw ProtocolError(std::string(what) + " must have " + std::to_string(N) + " entries");
    }
    std::array<double, N> a{};
    for (std::size_t i = 0; i < N; ++i) {
        if (!j[i].is_number()) {
            throw ProtocolError(std::string(what) + " entries must be numbers");
        }
        a[i] = j[i].get<double>();
        if (!std::isfinite(a[i])) {
            throw ProtocolError(std::string(what) + " entries must be finite");
        }
    }
    return a;
}

}  // namespace

std::string Message::type() const { return header.value("type", ""); }

std::vector<std::uint8_t> encode_message(const Message& m) {
    const std::string h = m.header.dump();
    if (h.size() > kMaxHeaderBytes || m.payload.size() > kMaxPayloadBytes) {
        throw ProtocolError("message too large");
    }
    std::vector<std::uint8_t> out;
    out.reserve(8 + h.size() + m.payload.size());
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out.insert(out.end(), h.begin(), h.end());
    put_u32(out, static_cast<std::uint32_t>(m.payload.size()));
    out.insert(out.end(), m.payload.begin(), m.payload.end());
    return out;
}

Message decode_message(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) {
        throw ProtocolError("truncated frame");
    }
    const std::uint32_t hlen = get_u32(bytes.data());
    if (hlen > kMaxHeaderBytes || bytes.size() < 8 + std::size_t{hlen}) {
        throw ProtocolError("truncated or oversized header");
    }
    Message m;
    m.header = parse_header(bytes.data() + 4, hlen);
    const std::uint32_t plen = get_u32(bytes.data() + 4 + hlen);
    if (plen > kMaxPayloadBytes || bytes.size() != 8 + std::size_t{hlen} + plen) {
        throw ProtocolError("payload length does not match the frame");
    }
    m.payload.assign(bytes.begin() + 8 + hlen, bytes.end());
    return m;
}

void send_message(net::Socket& socket, const Message& m) { socket.send_all(encode_message(m)); }

Message receive_message(net::Socket& socket, std::chrono::milliseconds timeout) {
    const auto hl = socket.recv_exact(4, timeout);
    const std::uint32_t hlen = get_u32(hl.data());
    if (hlen > kMaxHeaderBytes) {
        throw ProtocolError("oversized header");
    }
    const auto hb = socket.recv_exact(hlen, timeout);
    Message m;
    m.header = parse_header(hb.data(), hb.size());
    const auto pl = socket.recv_exact(4, timeout);
    const std::uint32_t plen = get_u32(pl.data());
    if (plen > kMaxPayloadBytes) {
        throw ProtocolError("oversized payload");
    }
    m.payload = socket.recv_exact(plen, timeout);
    return m;
}

Message make_hello(int chunk_size, int protocol_version) {
    return {json{{"type", "hello"}, {"protocol_version", protocol_version}, {"chunk_size", chunk_size}}, {}};
}

Message make_error(const std::string& message) { return {json{{"type", "error"}, {"message", message}}, {}}; }

Message make_reset(const std::string& instruction) {
    return {json{{"type", "reset"}, {"instruction", instruction}}, {}};
}

Message make_bye() { return {json{{"type", "bye"}}, {}}; }

json world_state_to_json(const WorldState& w) {
    json j;
    json q = json::array();
    for (const auto& s : w.arm_config.sections) {
        q.push_back({s.phi, s.theta});
    }
    j["arm_config"] = q;
    j["gripper_open"] = w.gripper_open;
    j["attached_object"] = w.attached_object ? json(*w.attached_object) : json(nullptr);
    j["objects"] = json::array();
    for (const auto& o : w.objects) {
        j["objects"].push_back({{"id", o.id},
                                {"class", to_string(o.class_label)},
                                {"position", {o.position.x(), o.position.y(), o.position.z()}},
                                {"radius", o.radius},
                                {"graspable", o.graspable},
                                {"color", {o.color.r, o.color.g, o.color.b}}});
    }
    j["time_s"] = w.time_s;
    j["rng_seed"] = w.rng_seed;
    return j;
}

WorldState world_state_from_json(const json& j) {
    try {
        WorldState w;
        for (const auto& s : j.at("arm_config")) {
            w.arm_config.sections.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
        }
        w.gripper_open = j.at("gripper_open").get<bool>();
        if (!j.at("attached_object").is_null()) {
            w.attached_object = j.at("attached_object").get<std::string>();
        }
        for (const auto& o : j.at("objects")) {
            SceneObject so;
            so.id = o.at("id").get<std::string>();
            so.class_label = object_class_from_string(o.at("class").get<std::string>());
            const auto p = fixed_array<3>(o.at("position"), "position");
            so.position = Vec3(p[0], p[1], p[2]);
            so.radius = o.at("radius").get<double>();
            so.graspable = o.at("graspable").get<bool>();
            const auto& c = o.at("color");
            so.color = {c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(), c.at(2).get<std::uint8_t>()};
            w.objects.push_back(so);
        }
        w.time_s = j.at("time_s").get<double>();
        w.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        return w;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed scene: ") + e.what());
    } catch (const FormatError& e) {
        throw ProtocolError(std::string("malformed scene: ") + e.what());
    }
}

Message encode_observation(const Observation& obs) {
    Message m;
    const auto third = encode_png(obs.third_image);
    const auto wrist = encode_png(obs.wrist_image);
    m.payload.reserve(third.size() + wrist.size());
    m.payload.insert(m.payload.end(), third.begin(), third.end());
    m.payload.insert(m.payload.end(), wrist.begin(), wrist.end());
    m.header = {{"type", "observation"},
                {"state", obs.state},
                {"instruction", obs.instruction},
                {"images",
                 {{{"name", "third"}, {"offset", 0}, {"length", third.size()}},
                  {{"name", "wrist"}, {"offset", third.size()}, {"length", wrist.size()}}}}};
    if (obs.scene) {
        m.header["scene"] = world_state_to_json(*obs.scene);
    }
    return m;
}

Observation decode_observation(const Message& m) {
    if (m.type() != "observation") {
        throw ProtocolError("expected an observation, got '" + m.type() + "'");
    }
    Observation obs;
    try {
        obs.state = fixed_array<8>(m.header.at("state"), "state");
        obs.instruction = m.header.at("instruction").get<std::string>();
        bool have_third = false;
        bool have_wrist = false;
        for (const auto& e : m.header.at("images")) {
            const auto name = e.at("name").get<std::string>();
            const auto off = e.at("offset").get<std::size_t>();
            const auto len = e.at("length").get<std::size_t>();
            if (off > m.payload.size() || len > m.payload.size() - off) {
                throw ProtocolError("image entry '" + name + "' exceeds the payload");
            }
            const std::span<const std::uint8_t> bytes(m.payload.data() + off, len);
            Image img;
            try {
                img = decode_png(bytes);
            } catch (const IntegrityError& err) {
                throw ProtocolError("image '" + name + "': " + err.what());
            }
            if (img.width != kProcessedSize || img.height != kProcessedSize) {
                throw ProtocolError("image '" + name + "' must be 256x256");
            }
            if (name == "third") {
                obs.third_image = std::move(img);
                have_third = true;
            } else if (name == "wrist") {
                obs.wrist_image = std::move(img);
                have_wrist = true;
            }
        }
        if (!have_third || !have_wrist) {
            throw ProtocolError("observation must carry third and wrist images");
        }
        if (m.header.contains("scene")) {
            obs.scene = world_state_from_json(m.header.at("scene"));
        }
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed observation: ") + e.what());
    }
    return obs;
}

Message encode_chunk(const ActionChunk& chunk) {
    json actions = json::array();
    for (const auto& a : chunk.actions) {
        actions.push_back(a);
    }
    return {json{{"type", "action_chunk"}, {"actions", actions}}, {}};
}

ActionChunk decode_chunk(const Message& m) {
    if (m.type() != "action_chunk") {
        throw ProtocolError("expected an action_chunk, got '" + m.type() + "'");
    }
    ActionChunk c;
    if (!m.header.contains("actions") || !m.header["actions"].is_array()) {
        throw ProtocolError("action_chunk without an actions array");
    }
    for (const auto& a : m.header["actions"]) {
        c.actions.push_back(fixed_array<7>(a, "action"));
    }
    return c;
}

StateVector world_state_vector(const WorldState& world, const ArmSpec& spec) {
    return encode_state(forward_kinematics(spec, world.arm_config), !world.gripper_open);
}

Observation make_observation(const WorldState& world, const ArmSpec& spec, const TaskSpec& task,
                             bool include_scene) {
    static const CameraSpec third = default_third_person_camera();
    static const CameraSpec wrist = default_wrist_camera();
    Observation obs;
    const Image t = render_view(world, spec, task, third);
    const Image w = render_view(world, spec, task, wrist);
    obs.third_image = preprocess_image(t, centered_square_crop(t.width, t.height), false);
    obs.wrist_image = preprocess_image(w, centered_square_crop(w.width, w.height), true);
    obs.state = world_state_vector(world, spec);
    obs.instruction = task.instruction;
    if (include_scene) {
        obs.scene = world;
    }
    return obs;
}

}  // namespace softvla
