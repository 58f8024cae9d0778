#include "softvla/websocket.hpp"

#include "softvla/errors.hpp"

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cctype>
#include <sstream>

namespace softvla::ws {

namespace {

constexpr const char* kGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxMessage = 64u << 20;

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// Reads the HTTP head up to the blank line, byte by byte so no frame data
// is consumed.
std::string read_http_head(net::Socket& socket, std::chrono::milliseconds timeout) {
    std::string head;
    while (head.size() < 16384) {
        const auto b = socket.recv_exact(1, timeout);
        head.push_back(static_cast<char>(b[0]));
        if (head.size() >= 4 && head.compare(head.size() - 4, 4, "\r\n\r\n") == 0) {
            return head;
        }
    }
    throw ProtocolError("HTTP head too long");
}

std::string header_value(const std::string& head, const std::string& name) {
    std::istringstream in(head);
    std::string line;
    const std::string want = to_lower(name);
    while (std::getline(in, line)) {
        const auto colon = line.find(':');
        if (colon != std::string::npos && to_lower(trim(line.substr(0, colon))) == want) {
            return trim(line.substr(colon + 1));
        }
    }
    return "";
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) {
        throw FormatError("base64 length must be a multiple of 4");
    }
    std::vector<std::uint8_t> out(text.size() / 4 * 3);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()),
                                  static_cast<int>(text.size()));
    if (n < 0) {
        throw FormatError("invalid base64");
    }
    std::size_t pad = 0;
    if (!text.empty() && text.back() == '=') ++pad;
    if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
    out.resize(static_cast<std::size_t>(n) - pad);
    return out;
}

std::string accept_key(const std::string& client_key) {
    const std::string s = client_key + kGuid;
    unsigned char digest[SHA_DIGEST_LENGTH];
    SHA1(reinterpret_cast<const unsigned char*>(s.data()), s.size(), digest);
    return base64_encode(std::span<const std::uint8_t>(digest, SHA_DIGEST_LENGTH));
}

Connection::Connection(net::Socket socket, bool client_side)
    : socket_(std::move(socket)), client_side_(client_side) {}

Connection Connection::accept(net::Socket socket, std::chrono::milliseconds timeout) {
    const std::string head = read_http_head(socket, timeout);
    if (head.rfind("GET ", 0) != 0 || to_lower(header_value(head, "Upgrade")) != "websocket") {
        socket.send_all(std::string("HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n"));
        throw ProtocolError("not a WebSocket upgrade request");
    }
    const std::string key = header_value(head, "Sec-WebSocket-Key");
    if (key.empty()) {
        throw ProtocolError("missing Sec-WebSocket-Key");
    }
    socket.send_all("HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                    "Sec-WebSocket-Accept: " +
                    accept_key(key) + "\r\n\r\n");
    return Connection(std::move(socket), false);
}

Connection Connection::connect(const std::string& host, std::uint16_t port, const std::string& path,
                               std::chrono::milliseconds timeout) {
    net::Socket socket = net::Socket::connect(host, port, timeout);
    const std::string key = "c29mdHZsYS10ZWxlb3Ata2V5";  // fixed 16-byte nonce, base64
    socket.send_all("GET " + path + " HTTP/1.1\r\nHost: " + host + ":" + std::to_string(port) +
                    "\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: " + key +
                    "\r\nSec-WebSocket-Version: 13\r\n\r\n");
    const std::string head = read_http_head(socket, timeout);
    if (head.find(" 101 ") == std::string::npos || header_value(head, "Sec-WebSocket-Accept") != accept_key(key)) {
        throw ProtocolError("WebSocket handshake rejected");
    }
    return Connection(std::move(socket), true);
}

void Connection::send_frame(Opcode op, std::string_view payload) {
    std::lock_guard lock(*send_mutex_);
    std::vector<std::uint8_t> out;
    out.reserve(payload.size() + 14);
    out.push_back(static_cast<std::uint8_t>(0x80 | static_cast<std::uint8_t>(op)));
    const std::uint8_t mask_bit = client_side_ ? 0x80 : 0x00;
    const std::size_t n = payload.size();
    if (n < 126) {
        out.push_back(static_cast<std::uint8_t>(mask_bit | n));
    } else if (n <= 0xFFFF) {
        out.push_back(mask_bit | 126);
        out.push_back(static_cast<std::uint8_t>(n >> 8));
        out.push_back(static_cast<std::uint8_t>(n));
    } else {
        out.push_back(mask_bit | 127);
        for (int i = 7; i >= 0; --i) {
            out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(n) >> (8 * i)));
        }
    }
    std::uint8_t mask[4] = {0, 0, 0, 0};
    if (client_side_) {
        // xorshift; masking only needs to be unpredictable to proxies.
        mask_state_ ^= mask_state_ << 13;
        mask_state_ ^= mask_state_ >> 17;
        mask_state_ ^= mask_state_ << 5;
        for (int i = 0; i < 4; ++i) {
            mask[i] = static_cast<std::uint8_t>(mask_state_ >> (8 * i));
            out.push_back(mask[i]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(static_cast<std::uint8_t>(payload[i]) ^ mask[i % 4]);
    }
    socket_.send_all(out);
}

void Connection::send_text(const std::string& text) {
    if (!open()) {
        throw TransportError("WebSocket is closed");
    }
    send_frame(Opcode::text, text);
}

std::optional<WsMessage> Connection::receive(std::chrono::milliseconds timeout) {
    if (!open()) {
        throw TransportError("WebSocket is closed");
    }
    if (!socket_.wait_readable(timeout)) {
        return std::nullopt;
    }
    const auto io_timeout = std::chrono::milliseconds(5000);
    WsMessage msg;
    bool started = false;
    for (;;) {
        const auto h = socket_.recv_exact(2, io_timeout);
        const bool fin = h[0] & 0x80;
        const auto op = static_cast<Opcode>(h[0] & 0x0F);
        const bool masked = h[1] & 0x80;
        std::uint64_t len = h[1] & 0x7F;
        if (len == 126) {
            const auto e = socket_.recv_exact(2, io_timeout);
            len = (std::uint64_t{e[0]} << 8) | e[1];
        } else if (len == 127) {
            const auto e = socket_.recv_exact(8, io_timeout);
            len = 0;
            for (auto b : e) len = (len << 8) | b;
        }
        if (len > kMaxMessage) {
            throw ProtocolError("WebSocket frame too large");
        }
        std::uint8_t mask[4] = {0, 0, 0, 0};
        if (masked) {
            const auto m = socket_.recv_exact(4, io_timeout);
            std::copy(m.begin(), m.end(), mask);
        }
        auto payload = socket_.recv_exact(static_cast<std::size_t>(len), io_timeout);
        for (std::size_t i = 0; i < payload.size(); ++i) {
            payload[i] ^= mask[i % 4];
        }
        const std::string data(payload.begin(), payload.end());
        switch (op) {
            case Opcode::ping:
                send_frame(Opcode::pong, data);
                continue;
            case Opcode::pong:
                continue;
            case Opcode::close:
                if (!closed_) {
                    try {
                        send_frame(Opcode::close, "");
                    } catch (const Error&) {
                    }
                }
                closed_ = true;
                return WsMessage{Opcode::close, data};
            case Opcode::continuation:
                if (!started) {
                    throw ProtocolError("continuation frame without a message");
                }
                msg.data += data;
                break;
            case Opcode::text:
            case Opcode::binary:
                msg.opcode = op;
                msg.data = data;
                started = true;
                break;
            default:
                throw ProtocolError("unknown WebSocket opcode");
        }
        if (msg.data.size() > kMaxMessage) {
            throw ProtocolError("WebSocket message too large");
        }
        if (fin) {
            return msg;
        }
    }
}

void Connection::close() {
    if (socket_.valid() && !closed_) {
        try {
            send_frame(Opcode::close, "");
        } catch (const Error&) {
        }
    }
    closed_ = true;
    socket_.close();
}

}  // namespace softvla::ws
