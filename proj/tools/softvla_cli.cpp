// softvla: command-line front end for every pipeline stage.
//
// Exit codes: 0 success, 1 usage error, 2 domain failure (including IK
// non-convergence and aborted evaluations).

#include "softvla/errors.hpp"
#include "softvla/generate.hpp"
#include "softvla/policy.hpp"
#include "softvla/teleop.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

using namespace softvla;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitDomain = 2;

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void install_signal_handlers() {
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
}

// --json prints one object; otherwise one "key = value" line per field.
void emit(const ojson& j, bool as_json) {
    if (as_json) {
        std::cout << j.dump() << "\n";
    } else {
        for (const auto& [k, v] : j.items()) {
            std::cout << k << " = ";
            if (v.is_string()) {
                std::cout << v.get<std::string>();
            } else if (v.is_array()) {
                bool first = true;
                for (const auto& e : v) {
                    std::cout << (first ? "" : " ") << (e.is_string() ? e.get<std::string>() : e.dump());
                    first = false;
                }
            } else {
                std::cout << v.dump();
            }
            std::cout << "\n";
        }
    }
    std::cout.flush();
}

void log_line(const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); }

ArmSpec arm_from_options(const std::string& path, bool tabletop) {
    if (!path.empty()) return load_arm_spec(path);
    return tabletop ? tabletop_arm_spec() : default_embuddy_spec();
}

ojson pose_json(const Pose& p) {
    return ojson{{"position", {p.position.x(), p.position.y(), p.position.z()}},
                 {"rpy_deg", {rad2deg(p.roll), rad2deg(p.pitch), rad2deg(p.yaw)}}};
}

Configuration config_from_degrees(const std::vector<double>& phi, const std::vector<double>& theta) {
    if (phi.size() != theta.size()) {
        throw DimensionError("--phi and --theta need the same number of values");
    }
    Configuration q(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        q.sections[i] = {deg2rad(phi[i]), deg2rad(theta[i])};
    }
    return q;
}

// --- fk / ik ----------------------------------------------------------------

struct ArmArgs {
    std::string arm_path;
    bool tabletop = false;
};

void add_arm_options(CLI::App* cmd, ArmArgs& a) {
    cmd->add_option("--arm", a.arm_path, "Arm description JSON (default: the built-in 3-section arm)")
        ->check(CLI::ExistingFile);
    cmd->add_flag("--tabletop", a.tabletop, "Use the arm hung above the task table");
}

int cmd_fk(const ArmArgs& arm, const std::vector<double>& theta, std::vector<double> phi, bool as_json) {
    const ArmSpec spec = arm_from_options(arm.arm_path, arm.tabletop);
    if (phi.empty()) phi.assign(theta.size(), 0.0);
    const Configuration q = config_from_degrees(phi, theta);
    ojson out = pose_json(forward_kinematics(spec, q));
    emit(out, as_json);
    return 0;
}

int cmd_ik(const ArmArgs& arm, const std::vector<double>& target, const std::vector<double>& start, int max_iters,
           bool as_json) {
    const ArmSpec spec = arm_from_options(arm.arm_path, arm.tabletop);
    if (target.size() != 3 && target.size() != 6) {
        throw DomainError("--target takes x y z or x y z roll pitch yaw");
    }
    Pose goal;
    goal.position = Vec3(target[0], target[1], target[2]);
    IkOptions opts;
    opts.max_iters = max_iters;
    opts.position_only = target.size() == 3;
    if (!opts.position_only) {
        goal.roll = wrap_angle(deg2rad(target[3]));
        goal.pitch = wrap_angle(deg2rad(target[4]));
        goal.yaw = wrap_angle(deg2rad(target[5]));
    }
    Configuration q0 = straight_configuration(spec);
    if (!start.empty()) {
        if (start.size() != 2 * spec.section_count()) {
            throw DimensionError("--start takes phi theta per section");
        }
        for (std::size_t i = 0; i < spec.section_count(); ++i) {
            q0.sections[i] = {deg2rad(start[2 * i]), deg2rad(start[2 * i + 1])};
        }
    }
    const IkResult r = ik_solve(spec, q0, goal, opts);
    std::vector<double> phi, theta;
    for (const auto& s : r.configuration.sections) {
        phi.push_back(rad2deg(s.phi));
        theta.push_back(rad2deg(s.theta));
    }
    ojson out{{"converged", r.converged},
              {"iterations", r.iterations},
              {"position_error", r.position_error},
              {"orientation_error", r.orientation_error},
              {"phi_deg", phi},
              {"theta_deg", theta}};
    emit(out, as_json);
    return r.converged ? 0 : kExitDomain;
}

// --- gen-demos / convert ----------------------------------------------------

int cmd_gen_demos(int task_id, std::optional<int> count, std::uint64_t seed, const std::string& out_dir,
                  bool as_json) {
    GenerateOptions opts;
    opts.task_id = task_id;
    opts.count = count.value_or(default_demo_count(task_id));
    opts.seed = seed;
    const auto s = generate_dataset(tabletop_arm_spec(), opts, out_dir, log_line);
    ojson out{{"task", task_id},
              {"demos", s.demos},
              {"frames", s.frames},
              {"skipped_seeds", s.skipped_seeds},
              {"format_a", (std::filesystem::path(out_dir) / "A").string()},
              {"format_b", (std::filesystem::path(out_dir) / "B").string()}};
    emit(out, as_json);
    return 0;
}

int cmd_convert(const std::string& in, const std::string& out_dir, const std::string& format, bool as_json) {
    const auto s = convert_dataset(in, out_dir, dataset_format_from_string(format));
    ojson out{{"format", to_string(s.format)},
              {"demos", s.demo_count},
              {"frames", s.frame_count},
              {"files", s.files_written},
              {"out", out_dir}};
    emit(out, as_json);
    return 0;
}

// --- serve / eval -----------------------------------------------------------

struct ServeArgs {
    std::string policy = "scripted_expert";
    std::string host = "127.0.0.1";
    std::uint16_t port = 8765;
    double latency = 0.0;
    double jitter = 0.0;
    std::uint64_t jitter_seed = 0;
    int task = 1;
    std::string arm_path;
};

int cmd_serve(const ServeArgs& a, bool as_json) {
    const ArmSpec spec = a.arm_path.empty() ? tabletop_arm_spec() : load_arm_spec(a.arm_path);
    ServerOptions opts{a.host, a.port, a.latency, a.jitter, a.jitter_seed};
    PolicyServer server(make_policy(a.policy, spec, default_task(a.task)), opts);
    emit(ojson{{"policy", a.policy}, {"listening", a.host + ":" + std::to_string(server.port())}}, as_json);
    install_signal_handlers();
    while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    log_line("served " + std::to_string(server.sessions_served()) + " sessions");
    return 0;
}

struct EvalArgs {
    int task = 1;
    std::string endpoint;
    int trials = 10;
    std::uint64_t seed = 0;
    int chunk = kDefaultChunkSize;
    double step_period = 0.02;
    int max_steps = 0;
    std::string arm_path;
    std::string model;
};

int cmd_eval(const EvalArgs& a, bool as_json) {
    if (a.trials < 1) throw DomainError("trials must be at least 1");
    const ArmSpec spec = a.arm_path.empty() ? tabletop_arm_spec() : load_arm_spec(a.arm_path);
    const auto [host, port] = net::parse_address(a.endpoint);
    PolicyClient client = PolicyClient::connect(host, port, a.chunk);

    LatencyReport total;
    total.chunk_size = a.chunk;
    int successes = 0;
    int completed = 0;
    std::size_t stuck = 0;
    std::string error;
    ojson trials = ojson::array();
    for (int i = 0; i < a.trials; ++i) {
        const TaskSpec task = generator_task(a.task, static_cast<std::size_t>(i));
        const std::uint64_t seed = a.seed + static_cast<std::uint64_t>(i);
        ControlLoopOptions opts;
        opts.max_steps = a.max_steps > 0 ? a.max_steps : task.max_steps;
        opts.step_period_s = a.step_period;
        const ControlLoopResult r = run_control_loop(reset_task(spec, task, seed), spec, task, client, opts);
        total.total_steps += r.report.total_steps;
        total.wall_time_s += r.report.wall_time_s;
        total.requests += r.report.requests;
        total.per_request_latency_s.insert(total.per_request_latency_s.end(), r.report.per_request_latency_s.begin(),
                                           r.report.per_request_latency_s.end());
        stuck += r.ik_nonconverged_steps;
        trials.push_back({{"seed", seed},
                          {"success", r.success},
                          {"steps", r.report.total_steps},
                          {"stuck_steps", r.ik_nonconverged_steps}});
        if (r.ik_nonconverged_steps > 0) {
            log_line("trial " + std::to_string(i) + ": " + std::to_string(r.ik_nonconverged_steps) +
                     " steps with non-converged IK (stuck)");
        }
        if (!r.report.complete) {
            error = r.report.error;
            break;
        }
        ++completed;
        successes += r.success ? 1 : 0;
    }
    client.close();

    const std::string model = a.model.empty() ? client.server_policy() : a.model;
    const FrequencyRow row = measure_frequency(total, model);
    const bool partial = !error.empty();
    ojson out{{"task", a.task},
              {"successes", std::to_string(successes) + "/" + std::to_string(a.trials)},
              {"completed_trials", completed},
              {"partial", partial},
              {"stuck_steps", stuck},
              {"total_steps", total.total_steps},
              {"wall_time_s", total.wall_time_s},
              {"effective_hz", row.empty ? 0.0 : row.hz},
              {"frequency_row", row.format()}};
    if (partial) out["error"] = error;
    if (as_json) out["trials"] = trials;
    emit(out, as_json);
    return partial ? kExitDomain : 0;
}

// --- teleop -----------------------------------------------------------------

struct TeleopArgs {
    int task = 1;
    std::uint64_t seed = 0;
    double hz = 5.0;
    bool no_images = false;
    std::string out;
    std::string host = "127.0.0.1";
    std::uint16_t port = 8766;
};

int cmd_teleop(const TeleopArgs& a, bool as_json) {
    TeleopServerOptions opts;
    opts.host = a.host;
    opts.port = a.port;
    opts.session.capture_hz = a.hz;
    opts.session.images = !a.no_images;
    const ArmSpec spec = tabletop_arm_spec();
    const TaskSpec task = default_task(a.task);
    verify_placement_region(spec, task);
    TeleopServer server(spec, task, a.seed, opts);
    log_line("teleop listening on ws://" + a.host + ":" + std::to_string(server.port()) + "/");
    install_signal_handlers();
    while (!server.finished() && !g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    const TeleopSummary s = server.wait();

    std::size_t frames = 0;
    for (const auto& d : s.demos) frames += d.frames.size();
    if (!s.demos.empty()) {
        export_both_formats(s.demos, a.out);
    } else {
        log_line("no demonstrations recorded; nothing exported");
    }
    emit(ojson{{"demos", s.demos.size()},
               {"frames", frames},
               {"ticks", s.stats.ticks},
               {"commands", s.stats.commands},
               {"malformed", s.stats.malformed},
               {"held_ticks", s.stats.held_ticks},
               {"discarded", s.stats.discarded},
               {"mean_tick_interval_s", s.mean_tick_interval_s},
               {"out", s.demos.empty() ? std::string() : a.out}},
         as_json);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Soft continuum arm VLA toolkit"};
    app.require_subcommand(1);
    app.fallthrough();
    bool as_json = false;
    app.add_flag("--json", as_json, "Print one JSON object instead of key = value lines");

    ArmArgs fk_arm;
    std::vector<double> fk_theta, fk_phi;
    auto* fk = app.add_subcommand("fk", "Forward kinematics (angles in degrees)");
    fk->add_option("--theta", fk_theta, "Bend per section")->required();
    fk->add_option("--phi", fk_phi, "Bending-plane direction per section (default 0)");
    add_arm_options(fk, fk_arm);

    ArmArgs ik_arm;
    std::vector<double> ik_target, ik_start;
    int ik_iters = 200;
    auto* ik = app.add_subcommand("ik", "Inverse kinematics; exits 2 when it does not converge");
    ik->add_option("--target", ik_target, "x y z [roll pitch yaw], m and degrees")->required();
    ik->add_option("--start", ik_start, "Initial guess, phi theta per section in degrees (default straight)");
    ik->add_option("--max-iters", ik_iters, "Iteration cap")->check(CLI::PositiveNumber);
    add_arm_options(ik, ik_arm);

    int gen_task = 1;
    std::optional<int> gen_count;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    auto* gen = app.add_subcommand("gen-demos", "Scripted-expert demonstrations, exported as formats A and B");
    gen->add_option("--task", gen_task, "Task 1, 2 or 3")->required()->check(CLI::Range(1, 3));
    gen->add_option("--count", gen_count, "Demonstrations (default 50 / 100 / 20 for tasks 1 / 2 / 3)");
    gen->add_option("--seed", gen_seed, "First episode seed");
    gen->add_option("--out", gen_out, "Dataset root")->required();

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "Serve a policy over the action-chunk protocol");
    serve->add_option("--policy", serve_args.policy, "zero, scripted_expert or rigid_style");
    serve->add_option("--host", serve_args.host, "Bind address");
    serve->add_option("--port", serve_args.port, "Port (0 picks one)");
    serve->add_option("--latency", serve_args.latency, "Injected inference latency, s")->check(CLI::NonNegativeNumber);
    serve->add_option("--jitter", serve_args.jitter, "Extra uniform latency jitter, s")->check(CLI::NonNegativeNumber);
    serve->add_option("--jitter-seed", serve_args.jitter_seed, "Jitter RNG seed");
    serve->add_option("--task", serve_args.task, "Task the policy is built for")->check(CLI::Range(1, 3));
    serve->add_option("--arm", serve_args.arm_path, "Arm description JSON")->check(CLI::ExistingFile);

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Run seeded closed-loop trials against a policy server");
    eval->add_option("--task", eval_args.task, "Task 1, 2 or 3")->required()->check(CLI::Range(1, 3));
    eval->add_option("--endpoint", eval_args.endpoint, "host:port of the policy server")->required();
    eval->add_option("--trials", eval_args.trials, "Trials");
    eval->add_option("--seed", eval_args.seed, "First trial seed");
    eval->add_option("--chunk", eval_args.chunk, "Actions per request")->check(CLI::PositiveNumber);
    eval->add_option("--step-period", eval_args.step_period, "Wall-clock seconds per executed action")
        ->check(CLI::NonNegativeNumber);
    eval->add_option("--max-steps", eval_args.max_steps, "Step budget per trial (default: the task's)");
    eval->add_option("--arm", eval_args.arm_path, "Arm description JSON")->check(CLI::ExistingFile);
    eval->add_option("--model", eval_args.model, "Model label in the frequency row (default: server policy)");

    std::string conv_in, conv_out, conv_format;
    auto* conv = app.add_subcommand("convert", "Convert a dataset between formats A and B");
    conv->add_option("--in", conv_in, "Source dataset root")->required()->check(CLI::ExistingDirectory);
    conv->add_option("--out", conv_out, "Destination root")->required();
    conv->add_option("--format", conv_format, "Target format, A or B")->required();

    TeleopArgs tele_args;
    auto* tele = app.add_subcommand("teleop", "Teleoperation session over WebSocket");
    tele->add_option("--task", tele_args.task, "Task 1, 2 or 3")->check(CLI::Range(1, 3));
    tele->add_option("--seed", tele_args.seed, "Scene seed");
    tele->add_option("--hz", tele_args.hz, "Capture rate")->check(CLI::PositiveNumber);
    tele->add_flag("--no-images", tele_args.no_images, "Stream the backbone and scene only");
    tele->add_option("--out", tele_args.out, "Dataset root for the recorded demonstrations")->required();
    tele->add_option("--host", tele_args.host, "Bind address");
    tele->add_option("--port", tele_args.port, "Port (0 picks one)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*fk) return cmd_fk(fk_arm, fk_theta, fk_phi, as_json);
        if (*ik) return cmd_ik(ik_arm, ik_target, ik_start, ik_iters, as_json);
        if (*gen) return cmd_gen_demos(gen_task, gen_count, gen_seed, gen_out, as_json);
        if (*serve) return cmd_serve(serve_args, as_json);
        if (*eval) return cmd_eval(eval_args, as_json);
        if (*conv) return cmd_convert(conv_in, conv_out, conv_format, as_json);
        if (*tele) return cmd_teleop(tele_args, as_json);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitDomain;
    }
    return 1;
}
