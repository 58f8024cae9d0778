#pragma once

#include "softvla/net.hpp"

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace softvla::ws {

// base64(SHA-1(key + RFC 6455 GUID)).
std::string accept_key(const std::string& client_key);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

enum class Opcode : std::uint8_t { continuation = 0, text = 1, binary = 2, close = 8, ping = 9, pong = 10 };

struct WsMessage {
    Opcode opcode = Opcode::text;
    std::string data;
};

// Minimal RFC 6455 endpoint over an accepted or connected socket. Text and
// binary messages, fragmentation on receive, ping/pong and close. One
// thread may receive while another sends.
class Connection {
public:
    Connection() = default;
    Connection(net::Socket socket, bool client_side);

    // Server side: reads the HTTP upgrade request and answers it. Throws
    // ProtocolError for anything that is not a WebSocket upgrade.
    static Connection accept(net::Socket socket, std::chrono::milliseconds timeout);
    static Connection connect(const std::string& host, std::uint16_t port, const std::string& path = "/",
                              std::chrono::milliseconds timeout = std::chrono::seconds(5));

    bool open() const { return socket_.valid() && !closed_; }
    void send_text(const std::string& text);
    // Returns nullopt on timeout. Control frames are handled internally;
    // a close frame yields a WsMessage with opcode close.
    std::optional<WsMessage> receive(std::chrono::milliseconds timeout);
    void close();
    net::Socket& socket() { return socket_; }

private:
    void send_frame(Opcode op, std::string_view payload);
    net::Socket socket_;
    bool client_side_ = false;
    bool closed_ = false;
    std::uint32_t mask_state_ = 0x9e3779b9u;
    std::unique_ptr<std::mutex> send_mutex_ = std::make_unique<std::mutex>();
};

}  // namespace softvla::ws
