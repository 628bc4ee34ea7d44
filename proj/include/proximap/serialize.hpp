#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "proximap/errors.hpp"

namespace proximap {

// base64 (standard alphabet, padded) over little-endian f64 payloads. Used by
// the prior / kernel / mask JSON formats.

namespace detail {
inline const char* b64_alphabet() {
    return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}
}  // namespace detail

inline std::string base64_encode(const std::vector<uint8_t>& bytes) {
    const char* tab = detail::b64_alphabet();
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += tab[(v >> 18) & 63];
        out += tab[(v >> 12) & 63];
        out += tab[(v >> 6) & 63];
        out += tab[v & 63];
    }
    const size_t rem = bytes.size() - i;
    if (rem == 1) {
        const uint32_t v = bytes[i] << 16;
        out += tab[(v >> 18) & 63];
        out += tab[(v >> 12) & 63];
        out += "==";
    } else if (rem == 2) {
        const uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += tab[(v >> 18) & 63];
        out += tab[(v >> 12) & 63];
        out += tab[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

inline std::vector<uint8_t> base64_decode(const std::string& text) {
    int lut[256];
    for (int i = 0; i < 256; ++i) lut[i] = -1;
    const char* tab = detail::b64_alphabet();
    for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(tab[i])] = i;
    if (text.size() % 4 != 0)
        throw ParseError("base64: length not a multiple of 4", static_cast<long>(text.size()));
    std::vector<uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        int vals[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=') {
                if (k < 2) throw ParseError("base64: misplaced padding", static_cast<long>(i + k));
                vals[k] = 0;
                ++pad;
            } else {
                vals[k] = lut[static_cast<unsigned char>(c)];
                if (vals[k] < 0 || pad > 0)
                    throw ParseError("base64: invalid character", static_cast<long>(i + k));
            }
        }
        const uint32_t v = (vals[0] << 18) | (vals[1] << 12) | (vals[2] << 6) | vals[3];
        out.push_back(static_cast<uint8_t>((v >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<uint8_t>((v >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<uint8_t>(v & 0xFF));
    }
    return out;
}

inline std::string encode_f64_le(const std::vector<double>& values) {
    std::vector<uint8_t> bytes(values.size() * 8);
    for (size_t i = 0; i < values.size(); ++i) {
        uint64_t u;
        std::memcpy(&u, &values[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<uint8_t>((u >> (8 * b)) & 0xFF);
    }
    return base64_encode(bytes);
}

inline std::vector<double> decode_f64_le(const std::string& text) {
    const std::vector<uint8_t> bytes = base64_decode(text);
    if (bytes.size() % 8 != 0)
        throw ParseError("f64 payload: byte count not a multiple of 8",
                         static_cast<long>(bytes.size()));
    std::vector<double> values(bytes.size() / 8);
    for (size_t i = 0; i < values.size(); ++i) {
        uint64_t u = 0;
        for (int b = 0; b < 8; ++b) u |= static_cast<uint64_t>(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&values[i], &u, 8);
    }
    return values;
}

/// FNV-1a over a string; the stable config-hash primitive.
inline uint64_t fnv1a(const std::string& text) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace proximap
