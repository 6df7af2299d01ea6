#pragma once

// Reliable byte streams for the wire protocol: an in-process pipe for
// deterministic tests and POSIX TCP on loopback.

#include "regmpc/netsim/codec.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <system_error>

namespace regmpc::netsim {

class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void write_all(std::span<const std::uint8_t> data) = 0;
    // Blocks until at least one byte is available; 0 means end of stream.
    virtual std::size_t read_some(std::uint8_t* dst, std::size_t max) = 0;
    virtual void close() = 0;
};

inline Bytes read_exact(ByteStream& s, std::size_t n) {
    Bytes out(n);
    std::size_t got = 0;
    while (got < n) {
        const std::size_t k = s.read_some(out.data() + got, n - got);
        if (k == 0)
            throw ProtocolError("stream closed inside a frame");
        got += k;
    }
    return out;
}

inline void write_frame(ByteStream& s, const Frame& f) {
    const Bytes b = encode_frame(f);
    s.write_all(b);
}

// nullopt on a clean end of stream between frames.
inline std::optional<Frame> read_frame(ByteStream& s) {
    std::uint8_t magic = 0;
    if (s.read_some(&magic, 1) == 0)
        return std::nullopt;
    if (magic != kMagic)
        throw ProtocolError("bad magic byte " + std::to_string(magic));
    const std::uint8_t type = read_exact(s, 1)[0];
    return decode_frame_body(type, [&](std::size_t n) { return read_exact(s, n); });
}

// ---------------------------------------------------------------------------
// In-process pipe

namespace detail {

struct Channel {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint8_t> buf;
    bool closed = false;
};

}  // namespace detail

class PipeStream final : public ByteStream {
public:
    PipeStream(std::shared_ptr<detail::Channel> in, std::shared_ptr<detail::Channel> out)
        : in_(std::move(in)), out_(std::move(out)) {}
    ~PipeStream() override { close(); }

    void write_all(std::span<const std::uint8_t> data) override {
        {
            std::lock_guard lock(out_->mu);
            if (out_->closed)
                throw ProtocolError("write to closed pipe");
            out_->buf.insert(out_->buf.end(), data.begin(), data.end());
        }
        out_->cv.notify_all();
    }

    std::size_t read_some(std::uint8_t* dst, std::size_t max) override {
        std::unique_lock lock(in_->mu);
        in_->cv.wait(lock, [&] { return !in_->buf.empty() || in_->closed; });
        std::size_t k = 0;
        while (k < max && !in_->buf.empty()) {
            dst[k++] = in_->buf.front();
            in_->buf.pop_front();
        }
        return k;
    }

    void close() override {
        for (auto* ch : {in_.get(), out_.get()}) {
            {
                std::lock_guard lock(ch->mu);
                ch->closed = true;
            }
            ch->cv.notify_all();
        }
    }

private:
    std::shared_ptr<detail::Channel> in_, out_;
};

inline std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_pipe() {
    auto a = std::make_shared<detail::Channel>();
    auto b = std::make_shared<detail::Channel>();
    return {std::make_unique<PipeStream>(a, b), std::make_unique<PipeStream>(b, a)};
}

// ---------------------------------------------------------------------------
// TCP

[[noreturn]] inline void throw_errno(const std::string& what) {
    throw std::system_error(errno, std::generic_category(), what);
}

class TcpStream final : public ByteStream {
public:
    explicit TcpStream(int fd) : fd_(fd) {
        int one = 1;
        ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;
    ~TcpStream() override { close(); }

    void write_all(std::span<const std::uint8_t> data) override {
        std::size_t sent = 0;
        while (sent < data.size()) {
            const ssize_t k = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
            if (k < 0) {
                if (errno == EINTR)
                    continue;
                throw_errno("send");
            }
            sent += static_cast<std::size_t>(k);
        }
    }

    std::size_t read_some(std::uint8_t* dst, std::size_t max) override {
        for (;;) {
            const ssize_t k = ::recv(fd_, dst, max, 0);
            if (k >= 0)
                return static_cast<std::size_t>(k);
            if (errno != EINTR)
                throw_errno("recv");
        }
    }

    void close() override {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
};

class TcpListener {
public:
    // Binds 127.0.0.1:port; port 0 picks a free port.
    explicit TcpListener(std::uint16_t port = 0) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0)
            throw_errno("socket");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd_, 8) < 0) {
            const int err = errno;
            ::close(fd_);
            throw std::system_error(err, std::generic_category(), "bind/listen");
        }
        socklen_t len = sizeof addr;
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener() { close(); }

    [[nodiscard]] std::uint16_t port() const noexcept { return port_; }

    // Null once the listener has been closed.
    std::unique_ptr<TcpStream> accept() {
        for (;;) {
            const int fd = ::accept(fd_, nullptr, nullptr);
            if (fd >= 0)
                return std::make_unique<TcpStream>(fd);
            if (errno == EINTR)
                continue;
            return nullptr;
        }
    }

    void close() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_ = -1;
    std::uint16_t port_ = 0;
};

inline std::unique_ptr<TcpStream> tcp_connect(const std::string& host, std::uint16_t port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0)
        throw_errno("socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw std::invalid_argument("tcp_connect: bad IPv4 address '" + host + "'");
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
        const int err = errno;
        ::close(fd);
        throw std::system_error(err, std::generic_category(), "connect");
    }
    return std::make_unique<TcpStream>(fd);
}

// ---------------------------------------------------------------------------
// FNV-1a digest over every byte in both directions, in stream order.

class TranscriptStream final : public ByteStream {
public:
    explicit TranscriptStream(ByteStream& inner) : inner_(inner) {}

    void write_all(std::span<const std::uint8_t> data) override {
        absorb(data.data(), data.size());
        inner_.write_all(data);
    }
    std::size_t read_some(std::uint8_t* dst, std::size_t max) override {
        const std::size_t k = inner_.read_some(dst, max);
        absorb(dst, k);
        return k;
    }
    void close() override { inner_.close(); }

    [[nodiscard]] std::uint64_t digest() const noexcept { return hash_; }
    [[nodiscard]] std::uint64_t bytes() const noexcept { return bytes_; }

private:
    void absorb(const std::uint8_t* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            hash_ ^= p[i];
            hash_ *= 0x100000001b3ULL;
        }
        bytes_ += n;
    }

    ByteStream& inner_;
    std::uint64_t hash_ = 0xcbf29ce484222325ULL;
    std::uint64_t bytes_ = 0;
};

}  // namespace regmpc::netsim
