#include "oracles.hpp"

#include "softvla/errors.hpp"
#include "softvla/policy.hpp"

#include <gtest/gtest.h>

#include <thread>

using namespace softvla;

namespace {

Observation sample_observation(bool scene) {
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(1);
    return make_observation(reset_task(spec, task, 2), spec, task, scene);
}

// Policy that fails on demand, for error-path tests.
class FlakyPolicy : public Policy {
public:
    std::string name() const override { return "flaky"; }
    void reset(const std::string&) override {}
    ActionChunk predict(const Observation& obs, int chunk_size) override {
        if (obs.instruction == "fail") throw DomainError("refusing");
        return ActionChunk{std::vector<ActionVector>(static_cast<std::size_t>(chunk_size), zero_action(0))};
    }
};

// Policy returning the wrong number of actions.
class ShortPolicy : public Policy {
public:
    std::string name() const override { return "short"; }
    void reset(const std::string&) override {}
    ActionChunk predict(const Observation&, int) override { return ActionChunk{{zero_action(0)}}; }
};

}  // namespace

TEST(Protocol, MessageFramingRoundTrip) {
    Message m{nlohmann::json{{"type", "x"}, {"v", 3}}, {1, 2, 3, 250}};
    const auto bytes = encode_message(m);
    ASSERT_EQ(bytes.size(), 4 + m.header.dump().size() + 4 + 4);
    // Big-endian header length prefix.
    const std::uint32_t n = (bytes[0] << 24) | (bytes[1] << 16) | (bytes[2] << 8) | bytes[3];
    EXPECT_EQ(n, m.header.dump().size());
    EXPECT_EQ(decode_message(bytes), m);
}

TEST(Protocol, TruncatedAndMalformedFramesThrow) {
    Message m{nlohmann::json{{"type", "x"}}, {9, 9}};
    auto bytes = encode_message(m);
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, bytes.size() - 1}) {
        EXPECT_THROW(decode_message(std::span(bytes.data(), cut)), ProtocolError) << cut;
    }
    std::vector<std::uint8_t> junk{0, 0, 0, 3, 'a', 'b', 'c', 0, 0, 0, 0};
    EXPECT_THROW(decode_message(junk), ProtocolError);
    std::vector<std::uint8_t> huge{0xff, 0xff, 0xff, 0xff};
    EXPECT_THROW(decode_message(huge), ProtocolError);
}

TEST(Protocol, ObservationAndChunkRoundTrip) {
    for (bool scene : {false, true}) {
        const Observation obs = sample_observation(scene);
        EXPECT_EQ(obs.third_image.width, 256);
        EXPECT_EQ(obs.wrist_image.height, 256);
        EXPECT_EQ(decode_observation(decode_message(encode_message(encode_observation(obs)))), obs);
    }
    ActionChunk c;
    for (int i = 0; i < 8; ++i) c.actions.push_back({0.001 * i, -0.002, 0.0, 0.01, -0.03, 3.1, i % 2 ? 1.0 : 0.0});
    EXPECT_EQ(decode_chunk(encode_chunk(c)), c);
}

TEST(Server, ServesChunksOfRequestedSize) {
    PolicyServer server(std::make_shared<ZeroPolicy>());
    PolicyClient client = PolicyClient::connect("127.0.0.1", server.port(), 5);
    EXPECT_EQ(client.server_policy(), "zero");
    client.reset("Put the orange in the plate");
    const auto reply = client.request_chunk(sample_observation(false));
    ASSERT_EQ(reply.chunk.actions.size(), 5u);
    for (const auto& a : reply.chunk.actions) EXPECT_EQ(a, zero_action(0.0));
    EXPECT_GE(reply.latency_s, 0.0);
}

TEST(Server, RejectsUnsupportedVersion) {
    PolicyServer server(std::make_shared<ZeroPolicy>());
    EXPECT_THROW(PolicyClient::connect("127.0.0.1", server.port(), 8, std::chrono::seconds(5), 99), Error);
}

TEST(Server, SecondClientIsTurnedAway) {
    PolicyServer server(std::make_shared<ZeroPolicy>());
    PolicyClient first = PolicyClient::connect("127.0.0.1", server.port());
    EXPECT_THROW(PolicyClient::connect("127.0.0.1", server.port()), Error);
    first.close();
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    EXPECT_NO_THROW(PolicyClient::connect("127.0.0.1", server.port()));
}

TEST(Server, PolicyErrorKeepsSessionOpen) {
    PolicyServer server(std::make_shared<FlakyPolicy>());
    PolicyClient client = PolicyClient::connect("127.0.0.1", server.port());
    Observation bad = sample_observation(false);
    bad.instruction = "fail";
    EXPECT_THROW(client.request_chunk(bad), Error);
    EXPECT_EQ(client.request_chunk(sample_observation(false)).chunk.actions.size(), 8u);
}

TEST(Server, WrongChunkLengthIsReported) {
    PolicyServer server(std::make_shared<ShortPolicy>());
    PolicyClient client = PolicyClient::connect("127.0.0.1", server.port());
    try {
        client.request_chunk(sample_observation(false));
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("returned 1 actions"), std::string::npos) << e.what();
    }
}

TEST(Server, InjectedLatencyDelaysReplies) {
    ServerOptions opts;
    opts.latency_s = 0.05;
    PolicyServer server(std::make_shared<ZeroPolicy>(), opts);
    PolicyClient client = PolicyClient::connect("127.0.0.1", server.port());
    const auto reply = client.request_chunk(sample_observation(false));
    EXPECT_GE(reply.latency_s, 0.05);
    EXPECT_LT(reply.latency_s, 0.5);
}

TEST(Server, ConnectToClosedPortFails) {
    std::uint16_t port;
    {
        net::Listener l("127.0.0.1", 0);
        port = l.port();
    }
    EXPECT_THROW(PolicyClient::connect("127.0.0.1", port, 8, std::chrono::milliseconds(500)), TransportError);
}

TEST(Policy, WaypointsFollowPlan) {
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(1);
    const WorldState w = reset_task(spec, task, 0);
    const auto plan = plan_waypoints(w, task);
    ASSERT_EQ(plan.size(), 6u);
    const Vec3 o = w.find("orange")->position;
    EXPECT_LT((plan[0].position - (o + Vec3(0, 0, 0.10))).norm(), 1e-12);
    EXPECT_LT((plan[1].position - (o + Vec3(0, 0, 0.01))).norm(), 1e-12);
    EXPECT_EQ(plan[2].kind, Waypoint::Kind::gripper);
    EXPECT_EQ(plan[2].g, 1.0);
    EXPECT_EQ(plan.back().kind, Waypoint::Kind::gripper);
    EXPECT_EQ(plan.back().g, 0.0);
}

TEST(Policy, ExpertActionsRespectStepCaps) {
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(1);
    ScriptedExpertPolicy expert(spec, task);
    expert.reset(task.instruction);
    Observation obs;
    obs.scene = reset_task(spec, task, 1);
    obs.state = world_state_vector(*obs.scene, spec);
    for (const auto& a : expert.predict(obs, 8).actions) {
        EXPECT_LE(std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]), kMaxStepTranslation + 1e-12);
        for (int k = 3; k < 6; ++k) EXPECT_LE(std::abs(a[k]), kMaxStepRotation + 1e-12);
    }
    Observation blind;
    EXPECT_THROW(expert.predict(blind, 8), DomainError);
}

TEST(Policy, RetargetSwitchesTaskTwoTarget) {
    const TaskSpec milk = default_task(2, ObjectClass::milk);
    const TaskSpec orange = default_task(2, ObjectClass::orange);
    EXPECT_EQ(retarget_task(milk, orange.instruction).target_object_class, ObjectClass::orange);
    EXPECT_EQ(retarget_task(default_task(1), default_task(3).instruction).task_id, 3);
    EXPECT_EQ(retarget_task(milk, "something else").instruction, milk.instruction);
}

TEST(ControlLoop, ExpertOverLoopbackSucceedsAndReplays) {
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(1);
    PolicyServer server(make_policy("scripted_expert", spec, task));
    PolicyClient client = PolicyClient::connect("127.0.0.1", server.port());
    const WorldState w0 = reset_task(spec, task, 5);
    const ControlLoopResult r = run_control_loop(w0, spec, task, client);
    ASSERT_TRUE(r.success);
    EXPECT_TRUE(r.report.complete);
    EXPECT_EQ(r.trajectory.frames.size(), r.report.total_steps + 1);
    EXPECT_EQ(r.report.requests, (r.report.total_steps + 7) / 8);
    // The recorded actions drive the simulator to the same final world.
    WorldState w = w0;
    for (std::size_t i = 1; i < r.trajectory.frames.size(); ++i) {
        const auto& a = r.trajectory.frames[i].action;
        w = step(w, spec, task, {a[0], a[1], a[2], a[3], a[4], a[5], a[6]}, 0.02);
    }
    EXPECT_EQ(w, r.final_world);
}

TEST(ControlLoop, PacedRateMatchesChunkArithmetic) {
    // Latency L per chunk of K steps at period T: K / (L + K T) steps/s.
    ServerOptions opts;
    opts.latency_s = 0.1;
    PolicyServer server(std::make_shared<ZeroPolicy>(), opts);
    PolicyClient client = PolicyClient::connect("127.0.0.1", server.port());
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(1);
    ControlLoopOptions lo;
    lo.max_steps = 32;
    lo.step_period_s = 0.01;
    const ControlLoopResult r = run_control_loop(reset_task(spec, task, 0), spec, task, client, lo);
    EXPECT_EQ(r.report.total_steps, 32u);
    // Observation rendering and the round trip only ever slow the loop down.
    const double ideal = oracle::chunked_rate(8, 0.1, 0.01);
    EXPECT_LE(r.report.effective_hz, ideal + 0.2);
    EXPECT_GE(r.report.effective_hz, 0.9 * ideal);
    const FrequencyRow row = measure_frequency(r.report, "zero");
    EXPECT_EQ(row.format().rfind("| Embuddy | zero | loopback | 8 | ", 0), 0u);
    EXPECT_TRUE(measure_frequency(LatencyReport{}, "x").empty);
}

TEST(ControlLoop, ServerVanishingIsFlagged) {
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(1);
    auto server = std::make_unique<PolicyServer>(std::make_shared<ZeroPolicy>());
    PolicyClient client = PolicyClient::connect("127.0.0.1", server->port(), 8, std::chrono::milliseconds(1000));
    server.reset();
    ControlLoopOptions lo;
    lo.max_steps = 16;
    const ControlLoopResult r = run_control_loop(reset_task(spec, task, 0), spec, task, client, lo);
    EXPECT_FALSE(r.report.complete);
    EXPECT_FALSE(r.report.error.empty());
}
