#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "proximap/errors.hpp"

namespace proximap {

/// Dense HxWxC grid of 64-bit reals, row-major with the channel index
/// innermost. The common currency of the whole library: images, iterates,
/// kernels and masks are all Fields.
struct Field {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<double> data;

    Field() = default;
    Field(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c, fill) {
        if (h <= 0 || w <= 0 || c <= 0)
            throw ShapeError("Field: non-positive dimension");
    }

    size_t size() const { return data.size(); }

    double& at(int r, int c, int ch = 0) {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    double at(int r, int c, int ch = 0) const {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }

    bool same_shape(const Field& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
    std::string shape_str() const {
        return std::to_string(height) + "x" + std::to_string(width) + "x" +
               std::to_string(channels);
    }
};

/// Fourier-domain companion of Field: same shape metadata, complex entries.
struct ComplexField {
    int height = 0;
    int width = 0;
    int channels = 1;
    std::vector<std::complex<double>> data;

    ComplexField() = default;
    ComplexField(int h, int w, int c)
        : height(h), width(w), channels(c),
          data(static_cast<size_t>(h) * w * c) {}

    std::complex<double>& at(int r, int c, int ch = 0) {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
    std::complex<double> at(int r, int c, int ch = 0) const {
        return data[(static_cast<size_t>(r) * width + c) * channels + ch];
    }
};

inline void require_same_shape(const Field& a, const Field& b, const char* where) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

inline bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

// -- elementwise arithmetic --------------------------------------------------

inline Field operator+(const Field& a, const Field& b) {
    require_same_shape(a, b, "operator+");
    Field out = a;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Field operator-(const Field& a, const Field& b) {
    require_same_shape(a, b, "operator-");
    Field out = a;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Field operator*(double s, const Field& a) {
    Field out = a;
    for (double& v : out.data) v *= s;
    return out;
}

inline Field& operator+=(Field& a, const Field& b) {
    require_same_shape(a, b, "operator+=");
    for (size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
    return a;
}

inline Field hadamard(const Field& a, const Field& b) {
    require_same_shape(a, b, "hadamard");
    Field out = a;
    for (size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

/// out = ca*a + cb*b, the workhorse of the solver loops.
inline Field lincomb(double ca, const Field& a, double cb, const Field& b) {
    require_same_shape(a, b, "lincomb");
    Field out(a.height, a.width, a.channels);
    for (size_t i = 0; i < out.size(); ++i)
        out.data[i] = ca * a.data[i] + cb * b.data[i];
    return out;
}

inline void axpy(double alpha, const Field& x, Field& y) {
    require_same_shape(x, y, "axpy");
    for (size_t i = 0; i < y.size(); ++i) y.data[i] += alpha * x.data[i];
}

inline double dot(const Field& a, const Field& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double sqnorm(const Field& a) { return dot(a, a); }
inline double norm(const Field& a) { return std::sqrt(sqnorm(a)); }

inline double sqdist(const Field& a, const Field& b) {
    require_same_shape(a, b, "sqdist");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return s;
}

inline double max_abs_diff(const Field& a, const Field& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline bool all_finite(const Field& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace proximap
