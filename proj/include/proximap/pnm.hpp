#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "proximap/errors.hpp"
#include "proximap/field.hpp"

namespace proximap {

// Binary PNM, 16-bit big-endian samples, maxval 65535. P5 for one channel,
// P6 for three. [0,1] maps linearly to [0,65535] with round-half-even, so the
// write/read round-trip error is at most one quantization step.

namespace detail {

inline uint16_t quantize_u16(double v) {
    v = std::min(1.0, std::max(0.0, v)) * 65535.0;
    const double f = std::floor(v);
    const double frac = v - f;
    double out = f;
    if (frac > 0.5)
        out = f + 1.0;
    else if (frac == 0.5 && std::fmod(f, 2.0) != 0.0)
        out = f + 1.0;  // ties to even
    return static_cast<uint16_t>(out);
}

struct PnmReader {
    std::istream& in;
    long offset = 0;

    int get() {
        const int c = in.get();
        if (c != EOF) ++offset;
        return c;
    }

    void skip_space_and_comments() {
        while (true) {
            int c = in.peek();
            if (c == '#') {
                while (c != EOF && c != '\n') c = get();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                get();
            } else {
                return;
            }
        }
    }

    long parse_int(const char* what) {
        skip_space_and_comments();
        long v = 0;
        bool any = false;
        while (std::isdigit(in.peek())) {
            v = v * 10 + (get() - '0');
            any = true;
        }
        if (!any) throw ParseError(std::string("pnm: expected ") + what, offset);
        return v;
    }
};

}  // namespace detail

inline void write_pnm(const std::string& path, const Field& f) {
    if (f.channels != 1 && f.channels != 3)
        throw ShapeError("write_pnm: needs 1 or 3 channels, got " + std::to_string(f.channels));
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("write_pnm: cannot open " + path);
    out << (f.channels == 1 ? "P5" : "P6") << "\n"
        << f.width << " " << f.height << "\n65535\n";
    std::vector<uint8_t> bytes;
    bytes.reserve(f.size() * 2);
    for (double v : f.data) {
        const uint16_t q = detail::quantize_u16(v);
        bytes.push_back(static_cast<uint8_t>(q >> 8));  // big-endian
        bytes.push_back(static_cast<uint8_t>(q & 0xFF));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write_pnm: short write to " + path);
}

inline Field read_pnm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_pnm: cannot open " + path);
    detail::PnmReader r{in};
    const int m0 = r.get(), m1 = r.get();
    int channels = 0;
    if (m0 == 'P' && m1 == '5')
        channels = 1;
    else if (m0 == 'P' && m1 == '6')
        channels = 3;
    else
        throw ParseError("pnm: bad magic", 0);
    const long w = r.parse_int("width");
    const long h = r.parse_int("height");
    const long maxval = r.parse_int("maxval");
    if (maxval != 65535) throw ParseError("pnm: maxval must be 65535", r.offset);
    const int sep = r.get();
    if (sep != ' ' && sep != '\t' && sep != '\n' && sep != '\r')
        throw ParseError("pnm: expected single whitespace after maxval", r.offset);
    if (h <= 0 || w <= 0) throw ParseError("pnm: non-positive dimensions", r.offset);

    Field f(static_cast<int>(h), static_cast<int>(w), channels);
    std::vector<uint8_t> bytes(f.size() * 2);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<size_t>(in.gcount()) != bytes.size())
        throw ParseError("pnm: truncated sample data", r.offset + in.gcount());
    for (size_t i = 0; i < f.size(); ++i) {
        const uint16_t q = static_cast<uint16_t>((bytes[2 * i] << 8) | bytes[2 * i + 1]);
        f.data[i] = static_cast<double>(q) / 65535.0;
    }
    return f;
}

}  // namespace proximap
