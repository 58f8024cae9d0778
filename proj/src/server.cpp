#include "softvla/errors.hpp"
#include "softvla/policy.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sys/socket.h>

namespace softvla {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

constexpr auto kPollSlice = std::chrono::milliseconds(50);
constexpr auto kMessageTimeout = std::chrono::seconds(10);

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

// --- server -----------------------------------------------------------------

PolicyServer::PolicyServer(std::shared_ptr<Policy> policy, ServerOptions options)
    : policy_(std::move(policy)), options_(std::move(options)), listener_(options_.host, options_.port) {
    if (!policy_) {
        throw DomainError("PolicyServer needs a policy");
    }
    if (options_.latency_s < 0.0 || options_.latency_jitter_s < 0.0) {
        throw DomainError("latency must be non-negative");
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
}

PolicyServer::~PolicyServer() { stop(); }

void PolicyServer::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    {
        std::lock_guard lock(session_mutex_);
        if (session_fd_ >= 0) {
            ::shutdown(session_fd_, SHUT_RDWR);
        }
    }
    if (accept_thread_.joinable()) accept_thread_.join();
    if (session_thread_.joinable()) session_thread_.join();
    listener_.close();
}

void PolicyServer::accept_loop() {
    while (running_) {
        net::Socket client = listener_.accept(kPollSlice);
        if (!client.valid()) {
            continue;
        }
        // A session that just said bye may need a moment to wind down.
        for (int i = 0; i < 10 && busy_; ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        if (busy_) {
            try {
                send_message(client, make_error("session busy"));
            } catch (const Error&) {
            }
            continue;
        }
        if (session_thread_.joinable()) {
            session_thread_.join();
        }
        busy_ = true;
        {
            std::lock_guard lock(session_mutex_);
            session_fd_ = client.fd();
        }
        session_thread_ = std::thread([this, s = std::move(client)]() mutable { run_session(std::move(s)); });
    }
}

void PolicyServer::run_session(net::Socket socket) {
    std::mt19937_64 jitter_rng(options_.jitter_seed);
    std::uniform_real_distribution<double> jitter(0.0, 1.0);
    bool greeted = false;
    int chunk_size = kDefaultChunkSize;
    try {
        while (running_) {
            if (!socket.wait_readable(kPollSlice)) {
                continue;
            }
            const auto received = Clock::now();
            Message m;
            try {
                m = receive_message(socket, kMessageTimeout);
            } catch (const ProtocolError& e) {
                send_message(socket, make_error(std::string("malformed frame: ") + e.what()));
                break;
            }
            const std::string type = m.type();
            if (!greeted) {
                if (type != "hello") {
                    send_message(socket, make_error("expected hello"));
                    break;
                }
                if (m.header.value("protocol_version", -1) != kProtocolVersion) {
                    send_message(socket, make_error("unsupported protocol_version"));
                    break;
                }
                chunk_size = m.header.value("chunk_size", kDefaultChunkSize);
                if (chunk_size <= 0 || chunk_size > 4096) {
                    send_message(socket, make_error("invalid chunk_size"));
                    break;
                }
                Message ack = make_hello(chunk_size);
                ack.header["ack"] = true;
                ack.header["policy"] = policy_->name();
                send_message(socket, ack);
                greeted = true;
                continue;
            }
            if (type == "bye") {
                break;
            }
            if (type == "reset") {
                try {
                    policy_->reset(m.header.value("instruction", ""));
                    send_message(socket, Message{json{{"type", "reset"}, {"ok", true}}, {}});
                } catch (const std::exception& e) {
                    send_message(socket, make_error(std::string("policy reset failed: ") + e.what()));
                }
                continue;
            }
            if (type != "observation") {
                send_message(socket, make_error("unexpected message type '" + type + "'"));
                break;
            }
            Observation obs;
            try {
                obs = decode_observation(m);
            } catch (const ProtocolError& e) {
                send_message(socket, make_error(std::string("malformed observation: ") + e.what()));
                break;
            }
            Message reply;
            try {
                ActionChunk chunk = policy_->predict(obs, chunk_size);
                if (static_cast<int>(chunk.actions.size()) != chunk_size) {
                    throw Error("policy returned " + std::to_string(chunk.actions.size()) + " actions");
                }
                reply = encode_chunk(chunk);
            } catch (const std::exception& e) {
                reply = make_error(std::string("policy failed: ") + e.what());
            }
            const double delay = options_.latency_s + options_.latency_jitter_s * jitter(jitter_rng);
            if (delay > 0.0) {
                std::this_thread::sleep_until(received + std::chrono::duration_cast<Clock::duration>(
                                                             std::chrono::duration<double>(delay)));
            }
            send_message(socket, reply);
        }
    } catch (const Error&) {
        // Peer vanished; the session simply ends.
    }
    {
        std::lock_guard lock(session_mutex_);
        session_fd_ = -1;
    }
    socket.close();
    ++sessions_served_;
    busy_ = false;
}

// --- client -----------------------------------------------------------------

PolicyClient PolicyClient::connect(const std::string& host, std::uint16_t port, int chunk_size,
                                   std::chrono::milliseconds timeout, int protocol_version) {
    if (chunk_size <= 0) {
        throw DomainError("chunk_size must be positive");
    }
    PolicyClient c;
    c.socket_ = net::Socket::connect(host, port, timeout);
    c.chunk_size_ = chunk_size;
    c.timeout_ = timeout;
    send_message(c.socket_, make_hello(chunk_size, protocol_version));
    const Message reply = receive_message(c.socket_, timeout);
    if (reply.type() == "error") {
        throw ProtocolError(reply.header.value("message", "handshake refused"));
    }
    if (reply.type() != "hello" || reply.header.value("protocol_version", -1) != kProtocolVersion ||
        reply.header.value("chunk_size", -1) != chunk_size) {
        throw ProtocolError("unexpected handshake reply");
    }
    c.server_policy_ = reply.header.value("policy", "");
    return c;
}

PolicyClient::~PolicyClient() {
    try {
        close();
    } catch (const Error&) {
    }
}

PolicyClient::Reply PolicyClient::request_chunk(const Observation& obs) {
    return request_chunk(encode_observation(obs));
}

PolicyClient::Reply PolicyClient::request_chunk(const Message& encoded) {
    if (!socket_.valid()) {
        throw TransportError("session is closed");
    }
    const auto t0 = Clock::now();
    send_message(socket_, encoded);
    const Message reply = receive_message(socket_, timeout_);
    const double latency = seconds_since(t0);
    if (reply.type() == "error") {
        throw Error("server error: " + reply.header.value("message", ""));
    }
    ActionChunk chunk = decode_chunk(reply);
    if (static_cast<int>(chunk.actions.size()) != chunk_size_) {
        throw ProtocolError("chunk has " + std::to_string(chunk.actions.size()) + " actions, negotiated " +
                            std::to_string(chunk_size_));
    }
    return {std::move(chunk), latency};
}

void PolicyClient::reset(const std::string& instruction) {
    send_message(socket_, make_reset(instruction));
    const Message reply = receive_message(socket_, timeout_);
    if (reply.type() == "error") {
        throw Error("server error: " + reply.header.value("message", ""));
    }
    if (reply.type() != "reset") {
        throw ProtocolError("unexpected reply to reset");
    }
}

void PolicyClient::close() {
    if (socket_.valid()) {
        try {
            send_message(socket_, make_bye());
        } catch (const Error&) {
        }
        socket_.close();
    }
}

// --- control loop -----------------------------------------------------------

std::string latency_report_to_json_text(const LatencyReport& r) {
    json j;
    j["total_steps"] = r.total_steps;
    j["wall_time_s"] = r.wall_time_s;
    j["effective_hz"] = r.effective_hz;
    j["chunk_size"] = r.chunk_size;
    j["requests"] = r.requests;
    j["terminal_partial_steps"] = r.terminal_partial_steps;
    j["per_request_latency_s"] = r.per_request_latency_s;
    j["complete"] = r.complete;
    if (!r.error.empty()) {
        j["error"] = r.error;
    }
    return j.dump(2);
}

ControlLoopResult run_control_loop(const WorldState& world0, const ArmSpec& spec, const TaskSpec& task,
                                   PolicyClient& client, const ControlLoopOptions& options) {
    if (options.max_steps <= 0) {
        throw DomainError("max_steps must be positive");
    }
    if (!(options.dt > 0.0) || options.step_period_s < 0.0) {
        throw DomainError("invalid dt or step period");
    }
    ControlLoopResult result;
    LatencyReport& report = result.report;
    report.chunk_size = client.chunk_size();
    Demonstration& traj = result.trajectory;
    traj.demo_id = "rollout";
    traj.task_id = task.task_id;
    traj.capture_hz = 1.0 / options.dt;

    try {
        client.reset(task.instruction);
    } catch (const Error& e) {
        report.complete = false;
        report.error = e.what();
        result.final_world = world0;
        return result;
    }

    WorldState world = world0;
    Observation obs = make_observation(world, spec, task, options.include_scene);
    Message encoded = encode_observation(obs);
    traj.frames.push_back(
        {0, world.time_s, obs.third_image, obs.wrist_image, obs.state, zero_action(obs.state[7]), task.instruction});

    result.success = check_success(world, task);
    const auto t_start = Clock::now();
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(options.step_period_s));
    int steps = 0;
    while (!result.success && steps < options.max_steps) {
        PolicyClient::Reply reply;
        try {
            reply = client.request_chunk(encoded);
        } catch (const Error& e) {
            report.complete = false;
            report.error = e.what();
            break;
        }
        ++report.requests;
        report.per_request_latency_s.push_back(reply.latency_s);
        const auto chunk_start = Clock::now();
        const auto& actions = reply.chunk.actions;
        for (std::size_t k = 0; k < actions.size() && steps < options.max_steps; ++k) {
            const StepOutcome out = step_detailed(world, spec, task, actions[k], options.dt);
            world = out.world;
            ++steps;
            if (!out.ik.converged) {
                ++result.ik_nonconverged_steps;
            }
            const StateVector state = world_state_vector(world, spec);
            traj.frames.push_back({steps, world.time_s, obs.third_image, obs.wrist_image, state, actions[k],
                                   task.instruction});
            result.success = check_success(world, task);
            const bool chunk_over = k + 1 == actions.size() || steps >= options.max_steps || result.success;
            if (chunk_over && !result.success && steps < options.max_steps) {
                // Observe inside the last tick so the cycle is latency + K periods.
                obs = make_observation(world, spec, task, options.include_scene);
                encoded = encode_observation(obs);
            }
            if (period.count() > 0) {
                std::this_thread::sleep_until(chunk_start + period * static_cast<long>(k + 1));
            }
            if (result.success) {
                if (k + 1 < actions.size()) {
                    report.terminal_partial_steps = k + 1;
                }
                break;
            }
        }
    }
    report.total_steps = static_cast<std::size_t>(steps);
    report.wall_time_s = seconds_since(t_start);
    report.effective_hz = report.wall_time_s > 0.0 ? static_cast<double>(steps) / report.wall_time_s : 0.0;
    result.final_world = world;
    return result;
}

std::string FrequencyRow::format() const {
    char buf[256];
    if (empty) {
        std::snprintf(buf, sizeof buf, "| %s | %s | %s | %d | (no steps) |", platform.c_str(), model.c_str(),
                      device.c_str(), chunk_size);
    } else {
        std::snprintf(buf, sizeof buf, "| %s | %s | %s | %d | %.1f |", platform.c_str(), model.c_str(),
                      device.c_str(), chunk_size, hz);
    }
    return buf;
}

FrequencyRow measure_frequency(const LatencyReport& report, const std::string& model, const std::string& platform,
                               const std::string& device) {
    FrequencyRow row{platform, model, device, report.chunk_size, 0.0, true};
    if (report.total_steps > 0 && report.wall_time_s > 0.0) {
        row.hz = static_cast<double>(report.total_steps) / report.wall_time_s;
        row.empty = false;
    }
    return row;
}

}  // namespace softvla
