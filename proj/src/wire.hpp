#pragma once

// Little-endian byte helpers for the QVIT / QDAT file formats. Values are
// packed byte-by-byte so files are identical regardless of host endianness.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "qsearch/errors.hpp"

namespace qsearch::wire {

inline void put_u8(std::ostream& os, uint8_t v) {
    os.put(static_cast<char>(v));
}

inline void put_u32(std::ostream& os, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff), static_cast<char>((v >> 16) & 0xff),
                 static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline void put_i32(std::ostream& os, int32_t v) {
    put_u32(os, static_cast<uint32_t>(v));
}

inline void put_f32(std::ostream& os, float v) {
    put_u32(os, std::bit_cast<uint32_t>(v));
}

inline uint8_t get_u8(std::istream& is, const char* what) {
    int c = is.get();
    if (c == EOF) {
        throw DataError(std::string("file truncated while reading ") + what);
    }
    return static_cast<uint8_t>(c);
}

inline uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw DataError(std::string("file truncated while reading ") + what);
    }
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) | (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
}

inline int32_t get_i32(std::istream& is, const char* what) {
    return static_cast<int32_t>(get_u32(is, what));
}

inline float get_f32(std::istream& is, const char* what) {
    return std::bit_cast<float>(get_u32(is, what));
}

} // namespace qsearch::wire
