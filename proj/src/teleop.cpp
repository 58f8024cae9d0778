#include "softvla/teleop.hpp"

#include "softvla/errors.hpp"
#include "softvla/protocol.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace softvla {

using nlohmann::json;

namespace {

double clamp_abs(double v, double cap) { return std::clamp(v, -cap, cap); }

Vec3 vec3_from_json(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) {
        throw FormatError(std::string(what) + " must be an array of 3 numbers");
    }
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
        if (!j[i].is_number()) {
            throw FormatError(std::string(what) + " must be an array of 3 numbers");
        }
        v[i] = j[i].get<double>();
        if (!std::isfinite(v[i])) {
            throw FormatError(std::string(what) + " must be finite");
        }
    }
    return v;
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::string to_string(RecordMark m) {
    switch (m) {
        case RecordMark::none: return "none";
        case RecordMark::start: return "start";
        case RecordMark::stop: return "stop";
        case RecordMark::discard: return "discard";
    }
    return "none";
}

RecordMark record_mark_from_string(const std::string& s) {
    if (s == "none") return RecordMark::none;
    if (s == "start") return RecordMark::start;
    if (s == "stop") return RecordMark::stop;
    if (s == "discard") return RecordMark::discard;
    throw FormatError("unknown record mark: " + s);
}

TwistCommand clamp_twist(const TwistCommand& cmd, const TwistCaps& caps) {
    TwistCommand out = cmd;
    for (int i = 0; i < 3; ++i) {
        out.linear[i] = clamp_abs(cmd.linear[i], caps.linear);
        out.angular[i] = clamp_abs(cmd.angular[i], caps.angular);
    }
    return out;
}

Pose integrate_twist(const Pose& pose, const TwistCommand& cmd, double dt, const TwistCaps& caps) {
    if (!(dt > 0.0)) {
        throw DomainError("dt must be positive");
    }
    const TwistCommand c = clamp_twist(cmd, caps);
    Pose out = pose;
    out.position = pose.position + c.linear * dt;
    out.roll = wrap_angle(pose.roll + c.angular[0] * dt);
    out.pitch = wrap_angle(pose.pitch + c.angular[1] * dt);
    out.yaw = wrap_angle(pose.yaw + c.angular[2] * dt);
    return out;
}

TwistCommand twist_command_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("command is not JSON: ") + e.what());
    }
    if (!j.is_object() || j.value("type", "") != "twist") {
        throw FormatError("command must be an object with type \"twist\"");
    }
    TwistCommand c;
    c.linear = j.contains("linear") ? vec3_from_json(j["linear"], "linear") : Vec3::Zero();
    c.angular = j.contains("angular") ? vec3_from_json(j["angular"], "angular") : Vec3::Zero();
    if (j.contains("gripper_toggle")) {
        if (!j["gripper_toggle"].is_boolean()) {
            throw FormatError("gripper_toggle must be a boolean");
        }
        c.gripper_toggle = j["gripper_toggle"].get<bool>();
    }
    if (j.contains("record_mark")) {
        if (!j["record_mark"].is_string()) {
            throw FormatError("record_mark must be a string");
        }
        c.record_mark = record_mark_from_string(j["record_mark"].get<std::string>());
    }
    return c;
}

std::string twist_command_to_json_text(const TwistCommand& cmd) {
    return json{{"type", "twist"},
                {"linear", vec3_to_json(cmd.linear)},
                {"angular", vec3_to_json(cmd.angular)},
                {"gripper_toggle", cmd.gripper_toggle},
                {"record_mark", to_string(cmd.record_mark)}}
        .dump();
}

std::string frame_packet_to_json_text(const TeleopFramePacket& p) {
    json j;
    j["type"] = "frame";
    j["version"] = kTeleopProtocolVersion;
    j["tick"] = p.tick;
    j["time_s"] = p.time_s;
    json bb = json::array();
    for (const auto& v : p.backbone) bb.push_back(vec3_to_json(v));
    j["backbone"] = std::move(bb);
    j["ee_pose"] = {{"position", vec3_to_json(p.ee_pose.position)},
                    {"rpy", json::array({p.ee_pose.roll, p.ee_pose.pitch, p.ee_pose.yaw})}};
    j["gripper_open"] = p.gripper_open;
    j["attached_object"] = p.attached_object ? json(*p.attached_object) : json(nullptr);
    json objs = json::array();
    for (const auto& o : p.objects) {
        objs.push_back({{"id", o.id},
                        {"class", to_string(o.class_label)},
                        {"position", vec3_to_json(o.position)},
                        {"radius", o.radius},
                        {"color", json::array({o.color.r, o.color.g, o.color.b})}});
    }
    j["objects"] = std::move(objs);
    j["recording"] = p.recording;
    j["frame_count"] = p.frame_count;
    j["demo_count"] = p.demo_count;
    if (!p.third_png.empty()) j["third_image"] = ws::base64_encode(p.third_png);
    if (!p.wrist_png.empty()) j["wrist_image"] = ws::base64_encode(p.wrist_png);
    return j.dump();
}

TeleopFramePacket frame_packet_from_json_text(const std::string& text) {
    TeleopFramePacket p;
    try {
        const json j = json::parse(text);
        if (j.value("type", "") != "frame") {
            throw FormatError("not a frame packet");
        }
        p.tick = j.at("tick").get<std::uint64_t>();
        p.time_s = j.at("time_s").get<double>();
        for (const auto& v : j.at("backbone")) p.backbone.push_back(vec3_from_json(v, "backbone point"));
        p.ee_pose.position = vec3_from_json(j.at("ee_pose").at("position"), "ee position");
        const Vec3 rpy = vec3_from_json(j.at("ee_pose").at("rpy"), "ee rpy");
        p.ee_pose.roll = rpy[0];
        p.ee_pose.pitch = rpy[1];
        p.ee_pose.yaw = rpy[2];
        p.gripper_open = j.at("gripper_open").get<bool>();
        if (!j.at("attached_object").is_null()) p.attached_object = j["attached_object"].get<std::string>();
        for (const auto& o : j.at("objects")) {
            TeleopObject t;
            t.id = o.at("id").get<std::string>();
            t.class_label = object_class_from_string(o.at("class").get<std::string>());
            t.position = vec3_from_json(o.at("position"), "object position");
            t.radius = o.at("radius").get<double>();
            const auto& c = o.at("color");
            t.color = Rgb{c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(), c.at(2).get<std::uint8_t>()};
            p.objects.push_back(std::move(t));
        }
        p.recording = j.at("recording").get<bool>();
        p.frame_count = j.at("frame_count").get<std::size_t>();
        p.demo_count = j.at("demo_count").get<std::size_t>();
        if (j.contains("third_image")) p.third_png = ws::base64_decode(j["third_image"].get<std::string>());
        if (j.contains("wrist_image")) p.wrist_png = ws::base64_decode(j["wrist_image"].get<std::string>());
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad frame packet: ") + e.what());
    }
    return p;
}

// --- mailbox ----------------------------------------------------------------

void CommandMailbox::deposit(const TwistCommand& cmd, double now_s) {
    std::lock_guard lock(mutex_);
    if (!slot_) slot_.emplace();
    slot_->twist = cmd;
    slot_->twist.gripper_toggle = false;
    slot_->twist.record_mark = RecordMark::none;
    if (cmd.gripper_toggle) ++slot_->toggles;
    if (cmd.record_mark != RecordMark::none) slot_->marks.push_back(cmd.record_mark);
    slot_->received_s = now_s;
}

std::optional<CommandMailbox::Pending> CommandMailbox::take() {
    std::lock_guard lock(mutex_);
    auto out = std::move(slot_);
    slot_.reset();
    return out;
}

// --- session ----------------------------------------------------------------

TeleopSession::TeleopSession(ArmSpec spec, TaskSpec task, std::uint64_t seed, TeleopOptions options)
    : spec_(std::move(spec)), task_(std::move(task)), seed_(seed), options_(options) {
    if (!(options_.capture_hz > 0.0) || !std::isfinite(options_.capture_hz)) {
        throw DomainError("capture_hz must be positive");
    }
    world_ = reset_task(spec_, task_, seed_);
}

void TeleopSession::submit(const TwistCommand& cmd, double now_s) {
    ++commands_;
    mailbox_.deposit(cmd, now_s);
}

TeleopStats TeleopSession::stats() const {
    TeleopStats s = stats_;
    s.commands = commands_;
    s.malformed = malformed_;
    return s;
}

void TeleopSession::finalize_demo() {
    if (current_.frames.empty()) return;
    reencode_actions(current_);
    Demonstration d = filter_noop_frames(current_);
    d.demo_id = "teleop_" + std::to_string(seed_) + "_" + std::to_string(demos_.size());
    demos_.push_back(std::move(d));
    current_ = {};
}

void TeleopSession::apply_mark(RecordMark mark) {
    switch (mark) {
        case RecordMark::none:
            break;
        case RecordMark::start:
            if (!recording_) {
                recording_ = true;
                current_ = {};
                current_.task_id = task_.task_id;
                current_.capture_hz = options_.capture_hz;
            }
            break;
        case RecordMark::stop:
            if (recording_) {
                finalize_demo();
                recording_ = false;
            }
            break;
        case RecordMark::discard:
            if (recording_) {
                current_ = {};
                recording_ = false;
                ++stats_.discarded;
            }
            break;
    }
}

TeleopFramePacket TeleopSession::tick(double now_s) {
    const double dt = 1.0 / options_.capture_hz;
    bool close_gripper = !world_.gripper_open;
    if (auto pending = mailbox_.take()) {
        held_ = pending->twist;
        last_command_s_ = pending->received_s;
        if (pending->toggles % 2 == 1) close_gripper = !close_gripper;
        for (RecordMark m : pending->marks) apply_mark(m);
    }
    TwistCommand twist = held_;
    if (!last_command_s_ || now_s - *last_command_s_ > options_.silence_timeout_s) {
        twist = TwistCommand{};
        ++stats_.held_ticks;
    }

    const Pose cur = forward_kinematics(spec_, world_.arm_config);
    const Pose target = integrate_twist(cur, twist, dt, options_.caps);
    const ActionArray action{target.position.x() - cur.position.x(),
                             target.position.y() - cur.position.y(),
                             target.position.z() - cur.position.z(),
                             wrap_angle(target.roll - cur.roll),
                             wrap_angle(target.pitch - cur.pitch),
                             wrap_angle(target.yaw - cur.yaw),
                             close_gripper ? 1.0 : 0.0};
    world_ = step_detailed(world_, spec_, task_, action, dt).world;

    std::optional<Observation> obs;
    if (recording_ || options_.images) {
        obs = make_observation(world_, spec_, task_, false);
    }
    if (recording_) {
        Frame f;
        f.step_index = static_cast<int>(current_.frames.size());
        f.timestamp_s = static_cast<double>(current_.frames.size()) / options_.capture_hz;
        f.third_image = obs->third_image;
        f.wrist_image = obs->wrist_image;
        f.state = obs->state;
        f.instruction = task_.instruction;
        current_.frames.push_back(std::move(f));
    }

    TeleopFramePacket p;
    p.tick = stats_.ticks++;
    p.time_s = world_.time_s;
    p.backbone = backbone_points(spec_, world_.arm_config);
    p.ee_pose = forward_kinematics(spec_, world_.arm_config);
    p.gripper_open = world_.gripper_open;
    p.attached_object = world_.attached_object;
    for (const auto& o : world_.objects) {
        p.objects.push_back({o.id, o.class_label, o.position, o.radius, o.color});
    }
    p.recording = recording_;
    p.frame_count = current_.frames.size();
    p.demo_count = demos_.size();
    if (options_.images) {
        p.third_png = encode_png(obs->third_image);
        p.wrist_png = encode_png(obs->wrist_image);
    }
    return p;
}

std::vector<Demonstration> TeleopSession::finish() {
    if (recording_) {
        current_ = {};
        recording_ = false;
        ++stats_.discarded;
    }
    return demos_;
}

// --- server -----------------------------------------------------------------

TeleopServer::TeleopServer(ArmSpec spec, TaskSpec task, std::uint64_t seed, TeleopServerOptions options)
    : options_(std::move(options)),
      session_(std::move(spec), std::move(task), seed, options_.session),
      listener_(options_.host, options_.port) {
    accept_thread_ = std::thread([this] { accept_loop(); });
    tick_thread_ = std::thread([this] { tick_loop(); });
}

TeleopServer::~TeleopServer() {
    stop();
    wait();
}

void TeleopServer::stop() { running_ = false; }

bool TeleopServer::finished() {
    std::lock_guard lock(done_mutex_);
    return done_;
}

TeleopSummary TeleopServer::wait() {
    {
        std::unique_lock lock(done_mutex_);
        done_cv_.wait(lock, [this] { return done_; });
    }
    if (tick_thread_.joinable()) tick_thread_.join();
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : receivers_) {
        if (t.joinable()) t.join();
    }
    receivers_.clear();
    std::lock_guard lock(conn_mutex_);
    if (conn_) {
        conn_->close();
        conn_.reset();
    }
    return *summary_;
}

void TeleopServer::accept_loop() {
    while (running_) {
        net::Socket sock;
        try {
            sock = listener_.accept(std::chrono::milliseconds(100));
        } catch (const Error&) {
            continue;
        }
        if (!sock.valid()) continue;
        try {
            auto conn = std::make_shared<ws::Connection>(ws::Connection::accept(std::move(sock), std::chrono::seconds(2)));
            std::lock_guard lock(conn_mutex_);
            if (conn_ && conn_->open()) {
                conn->send_text(json{{"type", "error"}, {"message", "session busy"}}.dump());
                conn->close();
                continue;
            }
            conn_ = conn;
            const auto& task = session_.task();
            conn->send_text(json{{"type", "hello"},
                                 {"version", kTeleopProtocolVersion},
                                 {"task_id", task.task_id},
                                 {"instruction", task.instruction},
                                 {"capture_hz", options_.session.capture_hz},
                                 {"images", options_.session.images}}
                                .dump());
            receivers_.emplace_back([this, conn] { receive_loop(conn); });
        } catch (const Error& e) {
            std::fprintf(stderr, "teleop: rejected connection: %s\n", e.what());
        }
    }
}

void TeleopServer::receive_loop(std::shared_ptr<ws::Connection> conn) {
    while (running_ && conn->open()) {
        std::optional<ws::WsMessage> msg;
        try {
            msg = conn->receive(std::chrono::milliseconds(100));
        } catch (const Error&) {
            break;
        }
        if (!msg) continue;
        if (msg->opcode == ws::Opcode::close) break;
        try {
            const json j = json::parse(msg->data);
            const std::string type = j.is_object() ? j.value("type", "") : "";
            if (type == "end") {
                running_ = false;
                break;
            }
            session_.submit(twist_command_from_json_text(msg->data), seconds_since(start_));
        } catch (const json::exception&) {
            session_.note_malformed();
        } catch (const FormatError&) {
            session_.note_malformed();
        }
    }
    std::lock_guard lock(conn_mutex_);
    if (conn_ == conn) conn_.reset();
}

void TeleopServer::tick_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(
        std::chrono::duration<double>(1.0 / options_.session.capture_hz));
    auto next = clock::now();
    while (running_) {
        std::this_thread::sleep_until(next);
        if (!running_) break;
        const double now = seconds_since(start_);
        tick_times_.push_back(now);
        std::string text;
        try {
            text = frame_packet_to_json_text(session_.tick(now));
        } catch (const Error& e) {
            std::fprintf(stderr, "teleop: tick failed: %s\n", e.what());
        }
        std::shared_ptr<ws::Connection> conn;
        {
            std::lock_guard lock(conn_mutex_);
            conn = conn_;
        }
        if (conn && !text.empty()) {
            try {
                conn->send_text(text);
            } catch (const Error&) {
                std::lock_guard lock(conn_mutex_);
                if (conn_ == conn) conn_.reset();
            }
        }
        next += period;
        if (clock::now() > next + period) next = clock::now();  // overrun: resync, never burst
    }

    TeleopSummary s;
    s.demos = session_.finish();
    s.stats = session_.stats();
    s.duration_s = seconds_since(start_);
    if (tick_times_.size() >= 2) {
        s.mean_tick_interval_s =
            (tick_times_.back() - tick_times_.front()) / static_cast<double>(tick_times_.size() - 1);
    }
    {
        std::lock_guard lock(conn_mutex_);
        if (conn_) {
            try {
                conn_->send_text(json{{"type", "end"}, {"demos", s.demos.size()}}.dump());
            } catch (const Error&) {
            }
        }
    }
    std::lock_guard lock(done_mutex_);
    summary_ = std::move(s);
    done_ = true;
    done_cv_.notify_all();
}

// --- client -----------------------------------------------------------------

TeleopClient TeleopClient::connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
    return TeleopClient(ws::Connection::connect(host, port, "/", timeout));
}

void TeleopClient::send(const TwistCommand& cmd) { conn_.send_text(twist_command_to_json_text(cmd)); }

void TeleopClient::send_raw(const std::string& text) { conn_.send_text(text); }

void TeleopClient::end_session() { conn_.send_text(json{{"type", "end"}}.dump()); }

std::optional<TeleopFramePacket> TeleopClient::next_frame(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (conn_.open()) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline -
                                                                                std::chrono::steady_clock::now());
        if (left.count() <= 0) return std::nullopt;
        auto msg = conn_.receive(left);
        if (!msg) return std::nullopt;
        if (msg->opcode == ws::Opcode::close) return std::nullopt;
        json j;
        try {
            j = json::parse(msg->data);
        } catch (const json::exception&) {
            throw ProtocolError("server sent non-JSON text");
        }
        const std::string type = j.value("type", "");
        if (type == "frame") return frame_packet_from_json_text(msg->data);
        if (type == "end") return std::nullopt;
        if (type == "error") throw Error("server error: " + j.value("message", ""));
    }
    return std::nullopt;
}

void export_both_formats(const std::vector<Demonstration>& demos, const std::filesystem::path& root,
                         const std::string& name) {
    export_demos(demos, DatasetFormat::episodic, root / "A", name);
    export_demos(demos, DatasetFormat::frame_table, root / "B", name);
}

}  // namespace softvla
