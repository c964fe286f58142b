#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace oslr {

// FNV-1a 64-bit. Used for golden-byte regression anchors; stable everywhere.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::vector<uint8_t>& bytes) {
    return fnv1a64(bytes.data(), bytes.size());
}

inline std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

} // namespace oslr
