#pragma once

#include <chrono>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace softvla::net {

// Owning TCP socket. Every failure surfaces as TransportError.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket();
    Socket(Socket&& other) noexcept;
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    static Socket connect(const std::string& host, std::uint16_t port,
                          std::chrono::milliseconds timeout = std::chrono::seconds(10));

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

    void send_all(std::span<const std::uint8_t> bytes);
    void send_all(const std::string& text);
    // Blocks until exactly n bytes arrive; a negative timeout waits forever.
    std::vector<std::uint8_t> recv_exact(std::size_t n, std::chrono::milliseconds timeout);
    // Reads up to max bytes; returns empty on orderly shutdown.
    std::vector<std::uint8_t> recv_some(std::size_t max, std::chrono::milliseconds timeout);
    // True when data (or EOF) is ready within the timeout.
    bool wait_readable(std::chrono::milliseconds timeout) const;
    void shutdown();
    void close();

private:
    int fd_ = -1;
};

class Listener {
public:
    // Port 0 picks an ephemeral port.
    Listener(const std::string& host, std::uint16_t port);
    ~Listener();
    Listener(const Listener&) = delete;
    Listener& operator=(const Listener&) = delete;

    std::uint16_t port() const { return port_; }
    // Returns an invalid socket when the timeout expires.
    Socket accept(std::chrono::milliseconds timeout);
    void close();

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

// "host:port" -> parts. Throws DomainError on a malformed address.
std::pair<std::string, std::uint16_t> parse_address(const std::string& address);

}  // namespace softvla::net
