#pragma once

#include "softvla/protocol.hpp"

#include <atomic>
#include <memory>
#include <mutex>
#include <thread>

namespace softvla {

class Policy {
public:
    virtual ~Policy() = default;
    virtual std::string name() const = 0;
    virtual void reset(const std::string& instruction) = 0;
    // Returns exactly chunk_size actions.
    virtual ActionChunk predict(const Observation& obs, int chunk_size) = 0;
};

// K zero motions with g echoing the observed state.
class ZeroPolicy : public Policy {
public:
    std::string name() const override { return "zero"; }
    void reset(const std::string&) override {}
    ActionChunk predict(const Observation& obs, int chunk_size) override;
};

// Replays the actions of frames 1..N of a demonstration, then zero motions.
class ReplayPolicy : public Policy {
public:
    explicit ReplayPolicy(Demonstration demo);
    std::string name() const override { return "replay"; }
    void reset(const std::string&) override { cursor_ = 1; }
    ActionChunk predict(const Observation& obs, int chunk_size) override;

private:
    Demonstration demo_;
    std::size_t cursor_ = 1;
};

inline constexpr double kMaxStepTranslation = 0.02;  // m
inline constexpr double kMaxStepRotation = 0.05;     // rad

struct Waypoint {
    enum class Kind { move, gripper };
    Kind kind = Kind::move;
    Vec3 position = Vec3::Zero();
    double g = 0.0;
};

// A reset instruction equal to a built-in task's switches the policy to it:
// within the same task only the target class changes, otherwise the
// built-in task replaces the current one. Other instructions pass through.
TaskSpec retarget_task(const TaskSpec& task, const std::string& instruction);

// Pick-and-place plan from the privileged scene: pre-grasp 0.10 m above the
// target, descend, close, lift 0.15 m, move above the goal, open. Task 3
// ends holding the marshmallow at the mouth zone. Throws DomainError when
// the target (or the goal) is absent.
std::vector<Waypoint> plan_waypoints(const WorldState& world, const TaskSpec& task);

// Plans in configuration space: each waypoint is solved with position-only
// IK and the arm is interpolated towards it, emitting the resulting pose
// deltas clipped to 0.02 m / 0.05 rad.
class ScriptedExpertPolicy : public Policy {
public:
    ScriptedExpertPolicy(ArmSpec spec, TaskSpec task, double dt = 0.02);
    std::string name() const override { return "scripted_expert"; }
    void reset(const std::string& instruction) override;
    ActionChunk predict(const Observation& obs, int chunk_size) override;

private:
    ActionVector next_action(const WorldState& w);
    ArmSpec spec_;
    TaskSpec task_;
    double dt_;
    std::vector<Waypoint> plan_;
    std::size_t phase_ = 0;
    std::optional<Configuration> goal_q_;
    bool planned_ = false;
};

// Straight Cartesian segments between the same waypoints with the tool held
// at a fixed orientation, as a rigid arm would move: near-vertical, leaning
// `tilt` towards +y. Most of those poses are beyond the bending limits of the
// soft arm, so it gets stuck; an arm with unlimited bends follows them.
class RigidStylePolicy : public Policy {
public:
    RigidStylePolicy(ArmSpec spec, TaskSpec task, double tilt = deg2rad(20.0), double dt = 0.02);
    std::string name() const override { return "rigid_style"; }
    void reset(const std::string& instruction) override;
    ActionChunk predict(const Observation& obs, int chunk_size) override;

private:
    ActionVector next_action(const WorldState& w);
    ArmSpec spec_;
    TaskSpec task_;
    double tilt_;
    double dt_;
    std::vector<Waypoint> plan_;
    std::size_t phase_ = 0;
    bool planned_ = false;
};

// --- serving ----------------------------------------------------------------

struct ServerOptions {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;  // 0: ephemeral
    // Each observation is answered no sooner than fixed + U[0, jitter]
    // seconds after it was received.
    double latency_s = 0.0;
    double latency_jitter_s = 0.0;
    std::uint64_t jitter_seed = 0;
};

class PolicyServer {
public:
    PolicyServer(std::shared_ptr<Policy> policy, ServerOptions options = {});
    ~PolicyServer();
    PolicyServer(const PolicyServer&) = delete;
    PolicyServer& operator=(const PolicyServer&) = delete;

    std::uint16_t port() const { return listener_.port(); }
    std::size_t sessions_served() const { return sessions_served_; }
    void stop();

private:
    void accept_loop();
    void run_session(net::Socket socket);

    std::shared_ptr<Policy> policy_;
    ServerOptions options_;
    net::Listener listener_;
    std::atomic<bool> running_{true};
    std::atomic<bool> busy_{false};
    std::atomic<std::size_t> sessions_served_{0};
    std::thread accept_thread_;
    std::thread session_thread_;
    std::mutex session_mutex_;
    int session_fd_ = -1;
};

// Blocking, strictly alternating client session.
class PolicyClient {
public:
    static PolicyClient connect(const std::string& host, std::uint16_t port, int chunk_size = kDefaultChunkSize,
                                std::chrono::milliseconds timeout = std::chrono::seconds(10),
                                int protocol_version = kProtocolVersion);
    PolicyClient(PolicyClient&&) = default;
    PolicyClient& operator=(PolicyClient&&) = default;
    ~PolicyClient();

    struct Reply {
        ActionChunk chunk;
        double latency_s = 0.0;
    };
    // Throws TransportError on timeout/reset, ProtocolError on a bad reply
    // (including a chunk of the wrong length), Error when the server answers
    // with an error message.
    Reply request_chunk(const Observation& obs);
    // Already-encoded observation, so the caller can serialize ahead of time.
    Reply request_chunk(const Message& encoded_observation);
    void reset(const std::string& instruction);
    void close();

    int chunk_size() const { return chunk_size_; }
    std::string server_policy() const { return server_policy_; }

private:
    PolicyClient() = default;
    net::Socket socket_;
    int chunk_size_ = kDefaultChunkSize;
    std::chrono::milliseconds timeout_{10000};
    std::string server_policy_;
};

// --- control loop -----------------------------------------------------------

struct LatencyReport {
    std::size_t total_steps = 0;
    double wall_time_s = 0.0;
    double effective_hz = 0.0;
    std::vector<double> per_request_latency_s;
    int chunk_size = kDefaultChunkSize;
    std::size_t requests = 0;
    // Steps of the final chunk executed before success ended the run.
    std::size_t terminal_partial_steps = 0;
    bool complete = true;
    std::string error;
};

std::string latency_report_to_json_text(const LatencyReport& r);

struct ControlLoopOptions {
    int max_steps = 400;
    double dt = 0.02;           // simulated seconds per step
    double step_period_s = 0.0;  // wall-clock pacing per step; 0 runs unpaced
    bool include_scene = true;
};

struct ControlLoopResult {
    bool success = false;
    LatencyReport report;
    // Frame 0 is the initial state; frame t holds the state after step t and
    // the action that was commanded, so replaying the actions is exact.
    Demonstration trajectory;
    std::size_t ik_nonconverged_steps = 0;
    WorldState final_world;
};

ControlLoopResult run_control_loop(const WorldState& world0, const ArmSpec& spec, const TaskSpec& task,
                                   PolicyClient& client, const ControlLoopOptions& options = {});

struct FrequencyRow {
    std::string platform;
    std::string model;
    std::string device;
    int chunk_size = 0;
    double hz = 0.0;
    bool empty = true;

    std::string format() const;
};

FrequencyRow measure_frequency(const LatencyReport& report, const std::string& model,
                               const std::string& platform = "Embuddy", const std::string& device = "loopback");

std::shared_ptr<Policy> make_policy(const std::string& name, const ArmSpec& spec, const TaskSpec& task);

}  // namespace softvla
