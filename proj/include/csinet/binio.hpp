#pragma once

// Little-endian primitives for the on-disk formats (dataset files and
// checkpoints). Values are serialized LSB-first regardless of host order;
// on little-endian hosts the bulk float paths degrade to memcpy.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <vector>

namespace csinet::binio {

inline constexpr bool kHostLittle = std::endian::native == std::endian::little;

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& os, float v) {
    put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline void put_f64(std::ostream& os, double v) {
    put_u64(os, std::bit_cast<std::uint64_t>(v));
}

inline void put_f32_array(std::ostream& os, const float* data, std::size_t count) {
    if constexpr (kHostLittle) {
        os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
    } else {
        for (std::size_t i = 0; i < count; ++i) put_f32(os, data[i]);
    }
}

// Readers return false on short reads so callers can raise their own format
// errors with file context.
inline bool get_u32(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

inline bool get_u64(std::istream& is, std::uint64_t& v) {
    std::uint32_t lo = 0, hi = 0;
    if (!get_u32(is, lo) || !get_u32(is, hi)) return false;
    v = static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
    return true;
}

inline bool get_f32(std::istream& is, float& v) {
    std::uint32_t u = 0;
    if (!get_u32(is, u)) return false;
    v = std::bit_cast<float>(u);
    return true;
}

inline bool get_f64(std::istream& is, double& v) {
    std::uint64_t u = 0;
    if (!get_u64(is, u)) return false;
    v = std::bit_cast<double>(u);
    return true;
}

inline bool get_f32_array(std::istream& is, float* data, std::size_t count) {
    if constexpr (kHostLittle) {
        return static_cast<bool>(
            is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4)));
    }
    for (std::size_t i = 0; i < count; ++i)
        if (!get_f32(is, data[i])) return false;
    return true;
}

}  // namespace csinet::binio
