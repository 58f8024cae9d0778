#pragma once

#include "softvla/dataset.hpp"
#include "softvla/net.hpp"
#include "softvla/simulator.hpp"

#include <json.hpp>

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace softvla {

inline constexpr int kProtocolVersion = 1;
inline constexpr int kDefaultChunkSize = 8;

struct Observation {
    Image third_image;  // 256 x 256
    Image wrist_image;  // 256 x 256, mirrored
    StateVector state{};
    std::string instruction;
    // Privileged simulator state for scripted policies. Travels in the open
    // as an optional "scene" header field; learned policies ignore it.
    std::optional<WorldState> scene;

    bool operator==(const Observation&) const = default;
};

struct ActionChunk {
    std::vector<ActionVector> actions;

    bool operator==(const ActionChunk&) const = default;
};

// One framed message: [u32 BE header length][UTF-8 JSON header]
// [u32 BE payload length][payload]. The header always carries "type".
struct Message {
    nlohmann::json header;
    std::vector<std::uint8_t> payload;

    std::string type() const;
    bool operator==(const Message&) const = default;
};

inline constexpr std::uint32_t kMaxHeaderBytes = 16u << 20;
inline constexpr std::uint32_t kMaxPayloadBytes = 256u << 20;

std::vector<std::uint8_t> encode_message(const Message& m);
// Throws ProtocolError on truncated or malformed input.
Message decode_message(std::span<const std::uint8_t> bytes);

void send_message(net::Socket& socket, const Message& m);
Message receive_message(net::Socket& socket, std::chrono::milliseconds timeout);

Message make_hello(int chunk_size, int protocol_version = kProtocolVersion);
Message make_error(const std::string& message);
Message make_reset(const std::string& instruction);
Message make_bye();

Message encode_observation(const Observation& obs);
Observation decode_observation(const Message& m);
Message encode_chunk(const ActionChunk& chunk);
ActionChunk decode_chunk(const Message& m);

nlohmann::json world_state_to_json(const WorldState& w);
WorldState world_state_from_json(const nlohmann::json& j);

// Renders both cameras, crops/resizes to 256 x 256 (wrist mirrored) and
// encodes the proprioceptive state.
Observation make_observation(const WorldState& world, const ArmSpec& spec, const TaskSpec& task,
                             bool include_scene);

StateVector world_state_vector(const WorldState& world, const ArmSpec& spec);

}  // namespace softvla
