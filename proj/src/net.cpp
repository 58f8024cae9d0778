#include "softvla/net.hpp"

#include "softvla/errors.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace softvla::net {

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

int remaining_ms(Clock::time_point deadline, bool forever) {
    if (forever) {
        return -1;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left > 0 ? static_cast<int>(left) : 0;
}

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    const std::string h = host.empty() || host == "localhost" ? "127.0.0.1" : host;
    if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) == 1) {
        return addr;
    }
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || !res) {
        throw TransportError("cannot resolve host '" + host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return addr;
}

}  // namespace

Socket::~Socket() { close(); }

Socket::Socket(Socket&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = other.fd_;
        other.fd_ = -1;
    }
    return *this;
}

Socket Socket::connect(const std::string& host, std::uint16_t port, std::chrono::milliseconds timeout) {
    const sockaddr_in addr = resolve(host, port);
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) {
        throw TransportError(errno_text("socket"));
    }
    const int flags = fcntl(s.fd_, F_GETFL, 0);
    fcntl(s.fd_, F_SETFL, flags | O_NONBLOCK);
    if (::connect(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        if (errno != EINPROGRESS) {
            throw TransportError(errno_text("connect"));
        }
        pollfd p{s.fd_, POLLOUT, 0};
        const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r <= 0) {
            throw TransportError("connect: timed out");
        }
        int err = 0;
        socklen_t len = sizeof err;
        getsockopt(s.fd_, SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            errno = err;
            throw TransportError(errno_text("connect"));
        }
    }
    fcntl(s.fd_, F_SETFL, flags);
    const int one = 1;
    setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return s;
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("send"));
        }
        sent += static_cast<std::size_t>(n);
    }
}

void Socket::send_all(const std::string& text) {
    send_all(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

bool Socket::wait_readable(std::chrono::milliseconds timeout) const {
    pollfd p{fd_, POLLIN, 0};
    for (;;) {
        const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
        if (r < 0 && errno == EINTR) continue;
        if (r < 0) {
            throw TransportError(errno_text("poll"));
        }
        return r > 0;
    }
}

std::vector<std::uint8_t> Socket::recv_exact(std::size_t n, std::chrono::milliseconds timeout) {
    std::vector<std::uint8_t> out(n);
    std::size_t got = 0;
    const bool forever = timeout.count() < 0;
    const auto deadline = Clock::now() + timeout;
    while (got < n) {
        pollfd p{fd_, POLLIN, 0};
        const int r = ::poll(&p, 1, remaining_ms(deadline, forever));
        if (r < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("poll"));
        }
        if (r == 0) {
            throw TransportError("receive timed out");
        }
        const ssize_t k = ::recv(fd_, out.data() + got, n - got, 0);
        if (k < 0) {
            if (errno == EINTR) continue;
            throw TransportError(errno_text("recv"));
        }
        if (k == 0) {
            throw TransportError("connection closed by peer");
        }
        got += static_cast<std::size_t>(k);
    }
    return out;
}

std::vector<std::uint8_t> Socket::recv_some(std::size_t max, std::chrono::milliseconds timeout) {
    if (!wait_readable(timeout)) {
        throw TransportError("receive timed out");
    }
    std::vector<std::uint8_t> out(max);
    ssize_t k;
    do {
        k = ::recv(fd_, out.data(), max, 0);
    } while (k < 0 && errno == EINTR);
    if (k < 0) {
        throw TransportError(errno_text("recv"));
    }
    out.resize(static_cast<std::size_t>(k));
    return out;
}

void Socket::shutdown() {
    if (fd_ >= 0) {
        ::shutdown(fd_, SHUT_RDWR);
    }
}

void Socket::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

Listener::Listener(const std::string& host, std::uint16_t port) {
    const sockaddr_in addr = resolve(host, port);
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) {
        throw TransportError(errno_text("socket"));
    }
    const int one = 1;
    setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
        const std::string msg = errno_text("bind");
        close();
        throw TransportError(msg);
    }
    if (::listen(fd_, 8) != 0) {
        const std::string msg = errno_text("listen");
        close();
        throw TransportError(msg);
    }
    sockaddr_in bound{};
    socklen_t len = sizeof bound;
    getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
    port_ = ntohs(bound.sin_port);
}

Listener::~Listener() { close(); }

Socket Listener::accept(std::chrono::milliseconds timeout) {
    if (fd_ < 0) {
        return Socket();
    }
    pollfd p{fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, static_cast<int>(timeout.count()));
    if (r <= 0) {
        return Socket();
    }
    const int c = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (c < 0) {
        return Socket();
    }
    const int one = 1;
    setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(c);
}

void Listener::close() {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

std::pair<std::string, std::uint16_t> parse_address(const std::string& address) {
    const auto colon = address.rfind(':');
    if (colon == std::string::npos) {
        throw DomainError("address must look like host:port, got '" + address + "'");
    }
    const std::string host = address.substr(0, colon);
    const std::string port_text = address.substr(colon + 1);
    int port = -1;
    try {
        std::size_t used = 0;
        port = std::stoi(port_text, &used);
        if (used != port_text.size()) port = -1;
    } catch (const std::exception&) {
        port = -1;
    }
    if (port < 0 || port > 65535) {
        throw DomainError("invalid port in '" + address + "'");
    }
    return {host, static_cast<std::uint16_t>(port)};
}

}  // namespace softvla::net
