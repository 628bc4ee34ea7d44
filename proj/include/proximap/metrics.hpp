#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "proximap/errors.hpp"
#include "proximap/field.hpp"

namespace proximap {

inline double mse(const Field& x, const Field& ref) {
    require_same_shape(x, ref, "mse");
    return sqdist(x, ref) / static_cast<double>(x.size());
}

/// Peak signal-to-noise ratio in dB against MAX = 1. Identical inputs give
/// +inf (serialized as "inf" downstream).
inline double psnr(const Field& x, const Field& ref) {
    const double m = mse(x, ref);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / m);
}

/// Structural-similarity sharpness proxy: non-overlapping 8x8 windows
/// (shrunk on tiny fields), standard constants K1 = 0.01, K2 = 0.03 at unit
/// dynamic range, averaged over windows and channels.
inline double ssim(const Field& x, const Field& ref) {
    require_same_shape(x, ref, "ssim");
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    const int win_h = std::min(8, x.height);
    const int win_w = std::min(8, x.width);
    double acc = 0.0;
    long windows = 0;
    for (int ch = 0; ch < x.channels; ++ch)
        for (int r0 = 0; r0 + win_h <= x.height; r0 += win_h)
            for (int c0 = 0; c0 + win_w <= x.width; c0 += win_w) {
                double mx = 0.0, my = 0.0;
                const int n = win_h * win_w;
                for (int r = r0; r < r0 + win_h; ++r)
                    for (int c = c0; c < c0 + win_w; ++c) {
                        mx += x.at(r, c, ch);
                        my += ref.at(r, c, ch);
                    }
                mx /= n;
                my /= n;
                double vx = 0.0, vy = 0.0, cov = 0.0;
                for (int r = r0; r < r0 + win_h; ++r)
                    for (int c = c0; c < c0 + win_w; ++c) {
                        const double dx = x.at(r, c, ch) - mx;
                        const double dy = ref.at(r, c, ch) - my;
                        vx += dx * dx;
                        vy += dy * dy;
                        cov += dx * dy;
                    }
                vx /= n;
                vy /= n;
                cov /= n;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                       ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
    return acc / static_cast<double>(windows);
}

}  // namespace proximap
