#include "oracles.hpp"

#include "softvla/errors.hpp"
#include "softvla/kinematics.hpp"
#include "softvla/protocol.hpp"
#include "softvla/teleop.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include <unistd.h>

using namespace softvla;
namespace fs = std::filesystem;

namespace {

TwistCommand twist(Vec3 lin, Vec3 ang = Vec3::Zero(), bool toggle = false, RecordMark mark = RecordMark::none) {
    TwistCommand c;
    c.linear = lin;
    c.angular = ang;
    c.gripper_toggle = toggle;
    c.record_mark = mark;
    return c;
}

TwistCommand mark(RecordMark m) { return twist(Vec3::Zero(), Vec3::Zero(), false, m); }

// Pose the arm can reach with its tool at p, from position-only IK.
Pose reachable_pose(const ArmSpec& spec, const WorldState& w, const Vec3& p) {
    IkOptions opt;
    opt.position_only = true;
    opt.max_iters = 300;
    return forward_kinematics(spec, ik_solve(spec, w.arm_config, Pose{p, 0, 0, 0}, opt).configuration);
}

// Twist that would cover the remaining offset to goal in one period.
TwistCommand twist_towards(const ArmSpec& spec, const WorldState& w, const Pose& goal, double period = 0.2) {
    const Pose cur = forward_kinematics(spec, w.arm_config);
    return twist((goal.position - cur.position) / period,
                 Vec3(wrap_angle(goal.roll - cur.roll), wrap_angle(goal.pitch - cur.pitch),
                      wrap_angle(goal.yaw - cur.yaw)) /
                     period);
}

TeleopOptions no_images() {
    TeleopOptions o;
    o.images = false;
    return o;
}

}  // namespace

TEST(Teleop, ZeroTwistLeavesPoseUnchanged) {
    Pose p;
    p.position = Vec3(0.1, 0.2, 0.3);
    p.roll = 1.0;
    p.pitch = -0.5;
    p.yaw = 3.0;
    const Pose q = integrate_twist(p, TwistCommand{}, 0.2);
    EXPECT_EQ(q.position, p.position);
    EXPECT_EQ(q.roll, p.roll);
    EXPECT_EQ(q.pitch, p.pitch);
    EXPECT_EQ(q.yaw, p.yaw);
}

TEST(Teleop, YawWrapsAcrossSeam) {
    Pose p;
    p.yaw = oracle::kPi - 0.02;
    const Pose q = integrate_twist(p, twist(Vec3::Zero(), Vec3(0, 0, 0.2)), 0.2);
    EXPECT_NEAR(q.yaw, oracle::wrap(oracle::kPi - 0.02 + 0.04), 1e-12);
    EXPECT_NEAR(q.yaw, -oracle::kPi + 0.02, 1e-12);
}

TEST(Teleop, CapsApplyBeforeIntegration) {
    const Pose q = integrate_twist(Pose{}, twist(Vec3(1.0, -1.0, 0.01), Vec3(5.0, 0, 0)), 0.2);
    EXPECT_NEAR(q.position.x(), 0.05 * 0.2, 1e-15);
    EXPECT_NEAR(q.position.y(), -0.05 * 0.2, 1e-15);
    EXPECT_NEAR(q.position.z(), 0.01 * 0.2, 1e-15);
    EXPECT_NEAR(q.roll, 0.2 * 0.2, 1e-15);
    EXPECT_THROW(integrate_twist(Pose{}, TwistCommand{}, 0.0), DomainError);
}

TEST(Teleop, CommandJsonRoundTripAndRejection) {
    const TwistCommand c = twist(Vec3(0.01, 0, -0.02), Vec3(0, 0.1, 0), true, RecordMark::stop);
    EXPECT_EQ(twist_command_from_json_text(twist_command_to_json_text(c)), c);
    EXPECT_THROW(twist_command_from_json_text("{"), FormatError);
    EXPECT_THROW(twist_command_from_json_text(R"({"type":"twist","linear":[1,2]})"), FormatError);
    EXPECT_THROW(twist_command_from_json_text(R"({"type":"twist","record_mark":"pause"})"), FormatError);
    EXPECT_THROW(twist_command_from_json_text(R"({"type":"move"})"), FormatError);
}

TEST(Teleop, MailboxLatestTwistWinsButEdgesAccumulate) {
    CommandMailbox box;
    EXPECT_FALSE(box.take().has_value());
    box.deposit(twist(Vec3(0.01, 0, 0), Vec3::Zero(), true, RecordMark::start), 1.0);
    box.deposit(twist(Vec3(0.02, 0, 0), Vec3::Zero(), true), 1.1);
    box.deposit(twist(Vec3(0.03, 0, 0), Vec3::Zero(), true, RecordMark::stop), 1.2);
    const auto p = box.take();
    ASSERT_TRUE(p.has_value());
    EXPECT_EQ(p->twist.linear.x(), 0.03);
    EXPECT_EQ(p->toggles, 3);
    EXPECT_EQ(p->marks, (std::vector<RecordMark>{RecordMark::start, RecordMark::stop}));
    EXPECT_EQ(p->received_s, 1.2);
    EXPECT_FALSE(box.take().has_value());
}

TEST(Teleop, ZeroTwistRecordingFiltersToOneFrame) {
    TeleopSession s(tabletop_arm_spec(), default_task(1), 0, no_images());
    s.submit(mark(RecordMark::start), 0.0);
    for (int i = 0; i < 10; ++i) {
        s.submit(TwistCommand{}, 0.2 * i);
        s.tick(0.2 * i);
    }
    s.submit(mark(RecordMark::stop), 2.0);
    s.tick(2.0);
    ASSERT_EQ(s.demos().size(), 1u);
    EXPECT_EQ(s.demos()[0].frames.size(), 1u);
}

TEST(Teleop, ConstantVelocityAdvancesPosition) {
    const ArmSpec spec = tabletop_arm_spec();
    TeleopSession s(spec, default_task(1), 0, no_images());
    const Pose p0 = forward_kinematics(spec, s.world().arm_config);
    // 1 s at 5 Hz: five ticks of 0.05 m/s.
    for (int i = 0; i < 5; ++i) {
        s.submit(twist(Vec3(0.05, 0, 0)), 0.2 * i);
        s.tick(0.2 * i);
    }
    const Pose p1 = forward_kinematics(spec, s.world().arm_config);
    EXPECT_NEAR(p1.position.x() - p0.position.x(), 0.05, 2e-3);
    EXPECT_NEAR(p1.position.y(), p0.position.y(), 2e-3);
}

TEST(Teleop, RecordedStateMatchesSimulatorEachTick) {
    const ArmSpec spec = tabletop_arm_spec();
    TeleopSession s(spec, default_task(1), 1, no_images());
    const Pose goal = reachable_pose(spec, s.world(), s.world().find("orange")->position + Vec3(0, 0, 0.10));
    TwistCommand first = twist_towards(spec, s.world(), goal);
    first.record_mark = RecordMark::start;
    s.submit(first, 0.0);
    std::vector<StateVector> truth;
    for (int i = 0; i < 8; ++i) {
        if (i > 0) s.submit(twist_towards(spec, s.world(), goal), 0.2 * i);
        const TeleopFramePacket p = s.tick(0.2 * i);
        truth.push_back(encode_state(forward_kinematics(spec, s.world().arm_config), !s.world().gripper_open));
        EXPECT_LT((p.backbone.back() - p.ee_pose.position).norm(), 1e-9);
        EXPECT_TRUE(p.recording);
        EXPECT_EQ(p.frame_count, static_cast<std::size_t>(i + 1));
    }
    s.submit(mark(RecordMark::stop), 1.6);
    s.tick(1.6);
    ASSERT_EQ(s.demos().size(), 1u);
    const Demonstration& d = s.demos()[0];
    ASSERT_EQ(d.frames.size(), truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        EXPECT_EQ(d.frames[i].state, truth[i]);
        EXPECT_EQ(d.frames[i].third_image.width, 256);
    }
    const auto folded = oracle::fold_actions(d);
    for (std::size_t i = 0; i < d.frames.size(); ++i) {
        for (int k = 0; k < 8; ++k) EXPECT_NEAR(folded[i][k], d.frames[i].state[k], 1e-9);
    }
}

TEST(Teleop, DiscardDropsDemo) {
    TeleopSession s(tabletop_arm_spec(), default_task(1), 0, no_images());
    s.submit(mark(RecordMark::start), 0.0);
    s.tick(0.0);
    s.submit(mark(RecordMark::discard), 0.2);
    s.tick(0.2);
    EXPECT_TRUE(s.demos().empty());
    EXPECT_FALSE(s.recording());
    EXPECT_EQ(s.stats().discarded, 1u);
}

TEST(Teleop, GripperToggleNearObjectAttachesIt) {
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(1);
    TeleopSession s(spec, task, 2, no_images());
    const Vec3 target = s.world().find("orange")->position + Vec3(0, 0, 0.01);
    const Pose goal = reachable_pose(spec, s.world(), target);
    ASSERT_LT((goal.position - target).norm(), 1e-3);
    double t = 0.0;
    for (int i = 0; i < 200; ++i, t += 0.2) {
        if ((forward_kinematics(spec, s.world().arm_config).position - target).norm() < 5e-3) break;
        s.submit(twist_towards(spec, s.world(), goal), t);
        s.tick(t);
    }
    s.submit(twist(Vec3::Zero(), Vec3::Zero(), true), t);
    const TeleopFramePacket p = s.tick(t);
    EXPECT_FALSE(p.gripper_open);
    ASSERT_TRUE(p.attached_object.has_value());
    EXPECT_EQ(*p.attached_object, "orange");
}

TEST(Teleop, SilenceHoldsZeroTwist) {
    const ArmSpec spec = tabletop_arm_spec();
    TeleopSession s(spec, default_task(1), 0, no_images());
    s.submit(twist(Vec3(0, 0, -0.05)), 0.0);
    s.tick(0.0);
    const Vec3 before = forward_kinematics(spec, s.world().arm_config).position;
    s.tick(1.0);  // still within 2 s: keeps moving
    const Vec3 mid = forward_kinematics(spec, s.world().arm_config).position;
    EXPECT_LT(mid.z(), before.z() - 0.005);
    s.tick(2.5);  // silent for more than 2 s: holds
    s.tick(2.7);
    const Vec3 after = forward_kinematics(spec, s.world().arm_config).position;
    EXPECT_LT((after - forward_kinematics(spec, s.world().arm_config).position).norm(), 1e-12);
    EXPECT_EQ(s.stats().held_ticks, 2u);
    const Vec3 held = after;
    s.tick(2.9);
    EXPECT_LT((forward_kinematics(spec, s.world().arm_config).position - held).norm(), 1e-6);
}

TEST(Teleop, PacketJsonRoundTrip) {
    TeleopOptions o;
    o.images = true;
    TeleopSession s(tabletop_arm_spec(), default_task(1), 0, o);
    const TeleopFramePacket p = s.tick(0.0);
    ASSERT_FALSE(p.third_png.empty());
    const TeleopFramePacket q = frame_packet_from_json_text(frame_packet_to_json_text(p));
    EXPECT_EQ(q.third_png, p.third_png);
    EXPECT_EQ(q.wrist_png, p.wrist_png);
    EXPECT_EQ(q.objects, p.objects);
    EXPECT_EQ(q.backbone.size(), p.backbone.size());
    EXPECT_EQ(decode_png(q.third_png).width, 256);
}

TEST(WebSocket, AcceptKeyMatchesRfcExample) {
    EXPECT_EQ(ws::accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
    const std::vector<std::uint8_t> bytes{0, 1, 2, 250, 251};
    EXPECT_EQ(ws::base64_decode(ws::base64_encode(bytes)), bytes);
    EXPECT_EQ(ws::base64_encode(std::vector<std::uint8_t>{'f', 'o'}), "Zm8=");
}

TEST(WebSocket, HeadlessSessionRecordsAndExports) {
    TeleopServerOptions opts;
    opts.session.images = false;
    opts.session.capture_hz = 20.0;
    TeleopServer server(tabletop_arm_spec(), default_task(1), 0, opts);
    TeleopClient client = TeleopClient::connect("127.0.0.1", server.port());
    ASSERT_TRUE(client.next_frame(std::chrono::seconds(2)).has_value());

    client.send_raw("not json");
    client.send_raw(R"({"type":"twist","linear":"fast"})");
    client.send(twist(Vec3(0.0, 0.03, -0.03), Vec3::Zero(), false, RecordMark::start));
    bool recording_seen = false;
    for (int i = 0; i < 15; ++i) {
        client.send(twist(Vec3(0.0, 0.03, -0.03)));
        auto p = client.next_frame(std::chrono::seconds(2));
        ASSERT_TRUE(p.has_value());
        recording_seen = recording_seen || p->recording;
        EXPECT_TRUE(p->third_png.empty());
    }
    EXPECT_TRUE(recording_seen);
    client.send(mark(RecordMark::stop));
    for (int i = 0; i < 3; ++i) client.next_frame(std::chrono::seconds(2));
    client.end_session();
    const TeleopSummary s = server.wait();
    ASSERT_EQ(s.demos.size(), 1u);
    EXPECT_GT(s.demos[0].frames.size(), 5u);
    EXPECT_EQ(s.stats.malformed, 2u);
    EXPECT_NEAR(s.mean_tick_interval_s, 0.05, 0.01);

    const fs::path out = fs::temp_directory_path() / ("softvla_teleop_" + std::to_string(::getpid()));
    fs::remove_all(out);
    export_both_formats(s.demos, out);
    EXPECT_EQ(import_demos(out / "A"), s.demos);
    EXPECT_EQ(import_demos(out / "B"), s.demos);
    fs::remove_all(out);
}

TEST(WebSocket, SecondOperatorIsRejected) {
    TeleopServerOptions opts;
    opts.session.images = false;
    TeleopServer server(tabletop_arm_spec(), default_task(1), 0, opts);
    TeleopClient first = TeleopClient::connect("127.0.0.1", server.port());
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
    TeleopClient second = TeleopClient::connect("127.0.0.1", server.port());
    EXPECT_THROW(second.next_frame(std::chrono::seconds(2)), Error);
    server.stop();
    server.wait();
}

TEST(WebSocket, PlainHttpIsRefused) {
    TeleopServerOptions opts;
    opts.session.images = false;
    TeleopServer server(tabletop_arm_spec(), default_task(1), 0, opts);
    net::Socket sock = net::Socket::connect("127.0.0.1", server.port(), std::chrono::seconds(2));
    sock.send_all(std::string("GET / HTTP/1.1\r\nHost: x\r\n\r\n"));
    const auto head = sock.recv_some(256, std::chrono::seconds(2));
    const std::string text(head.begin(), head.end());
    EXPECT_NE(text.find("400"), std::string::npos);
    server.stop();
    server.wait();
}
