#pragma once

// Wire format of the networked experiment. All integers little-endian.
//
//   REQUEST   A5 01 | u16 n | n x f64 state
//   RESPONSE  A5 02 | u8 flags | u16 count | u16 q | count x ceil(q/8) bytes
//   ERROR     A5 03 | u8 code
//
// An active set travels as q bits, bit (i-1)%8 of byte (i-1)/8 set iff i in A.

#include "regmpc/types.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <variant>

namespace regmpc::netsim {

inline constexpr std::uint8_t kMagic = 0xA5;

enum class FrameType : std::uint8_t { Request = 0x01, Response = 0x02, Error = 0x03 };

enum class ErrorCode : std::uint8_t { Infeasible = 1, Malformed = 2 };

inline constexpr std::uint8_t kFlagCriterion = 0x01;

struct ActiveSetWire {
    std::vector<std::uint8_t> bits;
    int q = 0;

    friend bool operator==(const ActiveSetWire&, const ActiveSetWire&) = default;
};

[[nodiscard]] constexpr std::size_t wire_bytes(int q) noexcept { return (static_cast<std::size_t>(q) + 7) / 8; }

inline ActiveSetWire encode_active_set(const ActiveSet& A, int q) {
    if (q < 0)
        throw DimensionError("encode_active_set: negative q");
    if (A.max_index() > q)
        throw IndexOutOfRange("encode_active_set: index " + std::to_string(A.max_index()) + " exceeds q=" +
                              std::to_string(q));
    ActiveSetWire w{std::vector<std::uint8_t>(wire_bytes(q), 0), q};
    for (int i : A.indices())
        w.bits[static_cast<std::size_t>(i - 1) / 8] |= static_cast<std::uint8_t>(1u << ((i - 1) % 8));
    return w;
}

inline ActiveSet decode_active_set(const ActiveSetWire& w) {
    if (w.bits.size() != wire_bytes(w.q))
        throw ProtocolError("decode_active_set: payload has " + std::to_string(w.bits.size()) + " bytes, expected " +
                            std::to_string(wire_bytes(w.q)));
    std::vector<int> idx;
    for (int i = 1; i <= w.q; ++i) {
        if (w.bits[static_cast<std::size_t>(i - 1) / 8] & (1u << ((i - 1) % 8)))
            idx.push_back(i);
    }
    const std::size_t tail = static_cast<std::size_t>(w.q) % 8;
    if (tail != 0 && (w.bits.back() >> tail) != 0)
        throw ProtocolError("decode_active_set: bits set beyond q");
    return ActiveSet(std::move(idx));
}

// Descending by sum of 2^(i-1) over i in A.
[[nodiscard]] inline bool value_greater(const ActiveSet& a, const ActiveSet& b) { return binary_less(b, a); }

inline std::vector<ActiveSet> sort_and_truncate(std::vector<ActiveSet> family, std::size_t l) {
    if (l < 1)
        throw DimensionError("sort_and_truncate: l must be at least 1");
    std::stable_sort(family.begin(), family.end(), value_greater);
    if (family.size() > l)
        family.resize(l);
    return family;
}

struct RequestFrame {
    Vector state;
};

struct ResponseFrame {
    std::uint8_t flags = 0;
    int q = 0;
    std::vector<ActiveSet> sets;

    [[nodiscard]] bool criterion_applied() const noexcept { return flags & kFlagCriterion; }
};

struct ErrorFrame {
    ErrorCode code = ErrorCode::Malformed;
};

using Frame = std::variant<RequestFrame, ResponseFrame, ErrorFrame>;

using Bytes = std::vector<std::uint8_t>;

namespace detail {

inline void put_u16(Bytes& out, std::size_t v) {
    if (v > 0xFFFF)
        throw DimensionError("frame field exceeds u16: " + std::to_string(v));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_f64(Bytes& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k, bits >>= 8)
        out.push_back(static_cast<std::uint8_t>(bits & 0xFF));
}

inline std::uint16_t get_u16(std::span<const std::uint8_t> s) {
    return static_cast<std::uint16_t>(s[0] | (s[1] << 8));
}

inline double get_f64(std::span<const std::uint8_t> s) {
    std::uint64_t bits = 0;
    for (int k = 7; k >= 0; --k)
        bits = (bits << 8) | s[static_cast<std::size_t>(k)];
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline Bytes encode_frame(const RequestFrame& f) {
    Bytes out{kMagic, static_cast<std::uint8_t>(FrameType::Request)};
    detail::put_u16(out, static_cast<std::size_t>(f.state.size()));
    for (Eigen::Index i = 0; i < f.state.size(); ++i)
        detail::put_f64(out, f.state(i));
    return out;
}

inline Bytes encode_frame(const ResponseFrame& f) {
    Bytes out{kMagic, static_cast<std::uint8_t>(FrameType::Response), f.flags};
    detail::put_u16(out, f.sets.size());
    detail::put_u16(out, static_cast<std::size_t>(f.q));
    for (const auto& A : f.sets) {
        const auto w = encode_active_set(A, f.q);
        out.insert(out.end(), w.bits.begin(), w.bits.end());
    }
    return out;
}

inline Bytes encode_frame(const ErrorFrame& f) {
    return {kMagic, static_cast<std::uint8_t>(FrameType::Error), static_cast<std::uint8_t>(f.code)};
}

inline Bytes encode_frame(const Frame& f) {
    return std::visit([](const auto& v) { return encode_frame(v); }, f);
}

// Decodes what follows the two header bytes. `read(n)` returns exactly n
// bytes or throws.
template <typename ReadExact>
Frame decode_frame_body(std::uint8_t type, ReadExact&& read) {
    switch (static_cast<FrameType>(type)) {
        case FrameType::Request: {
            const auto n = detail::get_u16(read(2));
            const Bytes body = read(8 * static_cast<std::size_t>(n));
            RequestFrame f{Vector(n)};
            for (std::size_t i = 0; i < n; ++i)
                f.state(static_cast<Eigen::Index>(i)) = detail::get_f64(std::span(body).subspan(8 * i, 8));
            return f;
        }
        case FrameType::Response: {
            const Bytes head = read(5);
            ResponseFrame f;
            f.flags = head[0];
            const std::size_t count = detail::get_u16(std::span(head).subspan(1, 2));
            f.q = detail::get_u16(std::span(head).subspan(3, 2));
            const std::size_t nb = wire_bytes(f.q);
            const Bytes body = read(count * nb);
            for (std::size_t k = 0; k < count; ++k) {
                ActiveSetWire w{Bytes(body.begin() + static_cast<std::ptrdiff_t>(k * nb),
                                      body.begin() + static_cast<std::ptrdiff_t>((k + 1) * nb)),
                                f.q};
                f.sets.push_back(decode_active_set(w));
            }
            return f;
        }
        case FrameType::Error: {
            const Bytes b = read(1);
            if (b[0] != static_cast<std::uint8_t>(ErrorCode::Infeasible) &&
                b[0] != static_cast<std::uint8_t>(ErrorCode::Malformed))
                throw ProtocolError("unknown error code " + std::to_string(b[0]));
            return ErrorFrame{static_cast<ErrorCode>(b[0])};
        }
    }
    throw ProtocolError("unknown frame type " + std::to_string(type));
}

// Decodes one complete frame from a buffer; trailing bytes are an error.
inline Frame decode_frame(std::span<const std::uint8_t> buf) {
    std::size_t pos = 0;
    auto read = [&](std::size_t n) {
        if (buf.size() - pos < n)
            throw ProtocolError("truncated frame");
        Bytes out(buf.begin() + static_cast<std::ptrdiff_t>(pos), buf.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return out;
    };
    const Bytes hdr = read(2);
    if (hdr[0] != kMagic)
        throw ProtocolError("bad magic byte");
    Frame f = decode_frame_body(hdr[1], read);
    if (pos != buf.size())
        throw ProtocolError("trailing bytes after frame");
    return f;
}

}  // namespace regmpc::netsim
