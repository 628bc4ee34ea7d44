#pragma once

#include <complex>
#include <vector>

#include "proximap/errors.hpp"
#include "proximap/field.hpp"

namespace proximap {

namespace detail {

// Iterative radix-2 Cooley-Tukey on a contiguous buffer. sign = -1 forward,
// +1 inverse (unscaled).
inline void fft1d_pow2(std::complex<double>* a, int n, int sign) {
    for (int i = 1, j = 0; i < n; ++i) {
        int bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (int len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / len;
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (int i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (int k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

// In-place 2-D transform of one channel plane, rows then columns.
inline void fft2d_plane(std::vector<std::complex<double>>& plane, int h, int w, int sign) {
    for (int r = 0; r < h; ++r) fft1d_pow2(plane.data() + static_cast<size_t>(r) * w, w, sign);
    std::vector<std::complex<double>> col(h);
    for (int c = 0; c < w; ++c) {
        for (int r = 0; r < h; ++r) col[r] = plane[static_cast<size_t>(r) * w + c];
        fft1d_pow2(col.data(), h, sign);
        for (int r = 0; r < h; ++r) plane[static_cast<size_t>(r) * w + c] = col[r];
    }
}

inline void require_pow2_shape(int h, int w, const char* where) {
    if (!is_pow2(h) || !is_pow2(w))
        throw ShapeError(std::string(where) + ": height and width must be powers of two, got " +
                         std::to_string(h) + "x" + std::to_string(w));
}

}  // namespace detail

/// Unnormalized forward 2-D DFT, applied per channel. Inverse carries the
/// 1/(H*W) factor. Power-of-two grids only.
inline ComplexField dft2(const Field& f) {
    detail::require_pow2_shape(f.height, f.width, "dft2");
    ComplexField out(f.height, f.width, f.channels);
    std::vector<std::complex<double>> plane(static_cast<size_t>(f.height) * f.width);
    for (int ch = 0; ch < f.channels; ++ch) {
        for (int r = 0; r < f.height; ++r)
            for (int c = 0; c < f.width; ++c)
                plane[static_cast<size_t>(r) * f.width + c] = f.at(r, c, ch);
        detail::fft2d_plane(plane, f.height, f.width, -1);
        for (int r = 0; r < f.height; ++r)
            for (int c = 0; c < f.width; ++c)
                out.at(r, c, ch) = plane[static_cast<size_t>(r) * f.width + c];
    }
    return out;
}

/// Inverse of dft2; returns the real part (inputs are expected to be DFTs of
/// real fields, i.e. conjugate-symmetric).
inline Field idft2(const ComplexField& F) {
    detail::require_pow2_shape(F.height, F.width, "idft2");
    Field out(F.height, F.width, F.channels);
    const double scale = 1.0 / (static_cast<double>(F.height) * F.width);
    std::vector<std::complex<double>> plane(static_cast<size_t>(F.height) * F.width);
    for (int ch = 0; ch < F.channels; ++ch) {
        for (int r = 0; r < F.height; ++r)
            for (int c = 0; c < F.width; ++c)
                plane[static_cast<size_t>(r) * F.width + c] = F.at(r, c, ch);
        detail::fft2d_plane(plane, F.height, F.width, +1);
        for (int r = 0; r < F.height; ++r)
            for (int c = 0; c < F.width; ++c)
                out.at(r, c, ch) = plane[static_cast<size_t>(r) * F.width + c].real() * scale;
    }
    return out;
}

/// Embed an odd-sized centered kernel onto an HxW DFT grid: the kernel center
/// lands on index (0,0) with circular wrap, which makes the delta kernel the
/// exact identity.
inline Field embed_kernel(const Field& kernel, int h, int w) {
    if (kernel.channels != 1)
        throw ShapeError("embed_kernel: kernel must be single-channel");
    if (kernel.height % 2 == 0 || kernel.width % 2 == 0)
        throw ShapeError("embed_kernel: kernel sides must be odd");
    if (kernel.height > h || kernel.width > w)
        throw ShapeError("embed_kernel: kernel larger than field");
    Field grid(h, w, 1);
    const int cr = kernel.height / 2;
    const int cc = kernel.width / 2;
    for (int i = 0; i < kernel.height; ++i)
        for (int j = 0; j < kernel.width; ++j) {
            const int r = ((i - cr) % h + h) % h;
            const int c = ((j - cc) % w + w) % w;
            grid.at(r, c) += kernel.at(i, j);
        }
    return grid;
}

/// Circular convolution with a centered odd-sized kernel, per channel, via the
/// pointwise Fourier product.
inline Field circular_convolve(const Field& f, const Field& kernel) {
    detail::require_pow2_shape(f.height, f.width, "circular_convolve");
    const Field grid = embed_kernel(kernel, f.height, f.width);
    const ComplexField K = dft2(grid);
    ComplexField F = dft2(f);
    for (int ch = 0; ch < F.channels; ++ch)
        for (int r = 0; r < F.height; ++r)
            for (int c = 0; c < F.width; ++c)
                F.at(r, c, ch) *= K.at(r, c);
    return idft2(F);
}

}  // namespace proximap
