#pragma once

#include "softvla/dataset.hpp"
#include "softvla/simulator.hpp"
#include "softvla/websocket.hpp"

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <mutex>
#include <optional>
#include <thread>

namespace softvla {

inline constexpr int kTeleopProtocolVersion = 1;

enum class RecordMark { none, start, stop, discard };

std::string to_string(RecordMark m);
// Throws FormatError for unknown labels.
RecordMark record_mark_from_string(const std::string& s);

struct TwistCommand {
    Vec3 linear = Vec3::Zero();   // m/s
    Vec3 angular = Vec3::Zero();  // rad/s on roll, pitch, yaw
    bool gripper_toggle = false;
    RecordMark record_mark = RecordMark::none;

    bool operator==(const TwistCommand&) const = default;
};

struct TwistCaps {
    double linear = 0.05;  // m/s per component
    double angular = 0.2;  // rad/s per component
};

TwistCommand clamp_twist(const TwistCommand& cmd, const TwistCaps& caps = {});

// Caps first, then position += v dt and each angle wraps after += w dt.
// Throws DomainError for dt <= 0.
Pose integrate_twist(const Pose& pose, const TwistCommand& cmd, double dt, const TwistCaps& caps = {});

// {"type": "twist", "linear": [3], "angular": [3], "gripper_toggle": bool,
//  "record_mark": "none"|"start"|"stop"|"discard"}. Throws FormatError.
TwistCommand twist_command_from_json_text(const std::string& text);
std::string twist_command_to_json_text(const TwistCommand& cmd);

struct TeleopObject {
    std::string id;
    ObjectClass class_label = ObjectClass::orange;
    Vec3 position = Vec3::Zero();
    double radius = 0.0;
    Rgb color;

    bool operator==(const TeleopObject&) const = default;
};

struct TeleopFramePacket {
    std::uint64_t tick = 0;
    double time_s = 0.0;
    std::vector<Vec3> backbone;  // base to tool; the last point is the EE
    Pose ee_pose;
    bool gripper_open = true;
    std::optional<std::string> attached_object;
    std::vector<TeleopObject> objects;
    bool recording = false;
    std::size_t frame_count = 0;  // frames in the demonstration being recorded
    std::size_t demo_count = 0;   // finished demonstrations this session
    std::vector<std::uint8_t> third_png;  // empty when images are off
    std::vector<std::uint8_t> wrist_png;
};

// Server to client: {"type": "frame", ...}, PNG images base64-encoded.
std::string frame_packet_to_json_text(const TeleopFramePacket& p);
TeleopFramePacket frame_packet_from_json_text(const std::string& text);

// Single-slot mailbox between the network receiver and the tick loop. A
// newer twist replaces an unconsumed one; gripper toggles and record marks
// are edges, so they accumulate until taken instead of being overwritten.
class CommandMailbox {
public:
    struct Pending {
        TwistCommand twist;  // latest twist, edges cleared
        int toggles = 0;
        std::vector<RecordMark> marks;
        double received_s = 0.0;
    };

    void deposit(const TwistCommand& cmd, double now_s);
    std::optional<Pending> take();

private:
    std::mutex mutex_;
    std::optional<Pending> slot_;
};

struct TeleopOptions {
    double capture_hz = 5.0;
    bool images = true;
    TwistCaps caps;
    double silence_timeout_s = 2.0;
};

struct TeleopStats {
    std::uint64_t ticks = 0;
    std::uint64_t commands = 0;
    std::uint64_t malformed = 0;
    std::uint64_t held_ticks = 0;  // ticks run with zero twist due to client silence
    std::uint64_t discarded = 0;
};

// Owns the simulator. Only tick() touches the world; submit() may be called
// from any thread.
class TeleopSession {
public:
    TeleopSession(ArmSpec spec, TaskSpec task, std::uint64_t seed, TeleopOptions options = {});

    void submit(const TwistCommand& cmd, double now_s);
    void note_malformed() { ++malformed_; }

    // One control period at wall time now_s (seconds, any epoch).
    TeleopFramePacket tick(double now_s);

    // Drops an unfinished demonstration and returns the finished ones.
    std::vector<Demonstration> finish();

    const std::vector<Demonstration>& demos() const { return demos_; }
    const WorldState& world() const { return world_; }
    bool recording() const { return recording_; }
    TeleopStats stats() const;
    const TeleopOptions& options() const { return options_; }
    const TaskSpec& task() const { return task_; }

private:
    void apply_mark(RecordMark mark);
    void finalize_demo();

    ArmSpec spec_;
    TaskSpec task_;
    std::uint64_t seed_;
    TeleopOptions options_;
    WorldState world_;
    CommandMailbox mailbox_;
    TwistCommand held_;
    std::optional<double> last_command_s_;
    bool recording_ = false;
    Demonstration current_;
    std::vector<Demonstration> demos_;
    TeleopStats stats_;
    std::atomic<std::uint64_t> commands_{0};
    std::atomic<std::uint64_t> malformed_{0};
};

struct TeleopServerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0: ephemeral
    TeleopOptions session;
};

struct TeleopSummary {
    TeleopStats stats;
    std::vector<Demonstration> demos;
    double mean_tick_interval_s = 0.0;
    double duration_s = 0.0;
};

// WebSocket front end: one operator at a time, a fixed-rate tick thread and
// a receiver thread feeding the mailbox. The session ends when the client
// sends {"type": "end"} or stop() is called.
class TeleopServer {
public:
    TeleopServer(ArmSpec spec, TaskSpec task, std::uint64_t seed, TeleopServerOptions options = {});
    ~TeleopServer();
    TeleopServer(const TeleopServer&) = delete;
    TeleopServer& operator=(const TeleopServer&) = delete;

    std::uint16_t port() const { return listener_.port(); }
    void stop();
    // True once the session has ended (client "end" or stop()).
    bool finished();
    // Blocks until the session ends, then returns its summary.
    TeleopSummary wait();

private:
    void accept_loop();
    void tick_loop();
    void receive_loop(std::shared_ptr<ws::Connection> conn);

    TeleopServerOptions options_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
    TeleopSession session_;
    net::Listener listener_;
    std::atomic<bool> running_{true};
    std::mutex conn_mutex_;
    std::shared_ptr<ws::Connection> conn_;
    std::thread accept_thread_;
    std::thread tick_thread_;
    std::vector<std::thread> receivers_;
    std::mutex done_mutex_;
    std::condition_variable done_cv_;
    bool done_ = false;
    std::optional<TeleopSummary> summary_;
    std::vector<double> tick_times_;
};

// Headless operator, used by tests and scripts.
class TeleopClient {
public:
    static TeleopClient connect(const std::string& host, std::uint16_t port,
                                std::chrono::milliseconds timeout = std::chrono::seconds(5));

    void send(const TwistCommand& cmd);
    void send_raw(const std::string& text);
    void end_session();
    // Next frame packet, skipping other message types; nullopt on timeout.
    std::optional<TeleopFramePacket> next_frame(std::chrono::milliseconds timeout);
    void close() { conn_.close(); }

private:
    explicit TeleopClient(ws::Connection conn) : conn_(std::move(conn)) {}
    ws::Connection conn_;
};

// Writes the demonstrations as <root>/A (episodic) and <root>/B (frame table).
void export_both_formats(const std::vector<Demonstration>& demos, const std::filesystem::path& root,
                         const std::string& name = "softvla");

}  // namespace softvla
