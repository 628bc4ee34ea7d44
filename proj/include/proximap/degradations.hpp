#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "proximap/errors.hpp"
#include "proximap/fft.hpp"
#include "proximap/field.hpp"
#include "proximap/rng.hpp"
#include "proximap/serialize.hpp"

namespace proximap {

enum class Degradation { gaussian_blur, motion_blur, sr, inpaint, hdr, phase_retrieval };

inline std::string degradation_name(Degradation v) {
    switch (v) {
        case Degradation::gaussian_blur: return "gaussian_blur";
        case Degradation::motion_blur: return "motion_blur";
        case Degradation::sr: return "sr";
        case Degradation::inpaint: return "inpaint";
        case Degradation::hdr: return "hdr";
        case Degradation::phase_retrieval: return "phase_retrieval";
    }
    return "?";
}

inline Degradation degradation_from_name(const std::string& s) {
    if (s == "gaussian_blur") return Degradation::gaussian_blur;
    if (s == "motion_blur") return Degradation::motion_blur;
    if (s == "sr") return Degradation::sr;
    if (s == "inpaint") return Degradation::inpaint;
    if (s == "hdr") return Degradation::hdr;
    if (s == "phase_retrieval") return Degradation::phase_retrieval;
    throw DomainError("unknown degradation variant: " + s);
}

// Separable antialias taps for the decimating operator: the standard cubic
// weights (a = -0.5) sampled at half-integer offsets, normalized. The values
// are exact dyadic rationals, so outputs are bit-reproducible.
inline std::array<double, 8> bicubic_antialias_taps() {
    auto cubic = [](double t) {
        const double a = -0.5;
        const double at = std::abs(t);
        if (at <= 1.0) return (a + 2.0) * at * at * at - (a + 3.0) * at * at + 1.0;
        if (at < 2.0) return a * at * at * at - 5.0 * a * at * at + 8.0 * a * at - 4.0 * a;
        return 0.0;
    };
    std::array<double, 8> taps{};
    double sum = 0.0;
    for (int k = 0; k < 8; ++k) {
        taps[k] = cubic((k - 3.5) / 2.0);
        sum += taps[k];
    }
    for (double& t : taps) t /= sum;
    return taps;
}

/// Forward operator A of one restoration task plus the measurement noise
/// level. Immutable after construction; apply/adjoint/prox are pure.
struct DegradationOp {
    Degradation variant;
    double sigma_y = 0.0;
    Field kernel;        // blur variants
    Field mask;          // inpaint: {0,1} per pixel, single channel
    int sr_factor = 4;

    static DegradationOp blur(Degradation which, Field k, double sigma_y) {
        if (which != Degradation::gaussian_blur && which != Degradation::motion_blur)
            throw DomainError("DegradationOp::blur: not a blur variant");
        DegradationOp op{which, sigma_y, std::move(k), {}, 0};
        return op;
    }
    static DegradationOp super_resolution(int factor, double sigma_y) {
        if (factor < 1) throw DomainError("DegradationOp: sr factor must be >= 1");
        DegradationOp op{Degradation::sr, sigma_y, {}, {}, factor};
        return op;
    }
    static DegradationOp inpaint(Field mask01, double sigma_y) {
        for (double v : mask01.data)
            if (v != 0.0 && v != 1.0) throw DomainError("inpaint mask must be 0/1 valued");
        if (mask01.channels != 1) throw ShapeError("inpaint mask must be single-channel");
        DegradationOp op{Degradation::inpaint, sigma_y, {}, std::move(mask01), 0};
        return op;
    }
    static DegradationOp hdr(double sigma_y) {
        return DegradationOp{Degradation::hdr, sigma_y, {}, {}, 0};
    }
    static DegradationOp phase_retrieval(double sigma_y) {
        return DegradationOp{Degradation::phase_retrieval, sigma_y, {}, {}, 0};
    }

    bool linear() const {
        return variant == Degradation::gaussian_blur || variant == Degradation::motion_blur ||
               variant == Degradation::sr || variant == Degradation::inpaint ||
               variant == Degradation::phase_retrieval;  // Re(DFT) is linear
    }
    /// Variants with a closed-form or CG proximal path. Phase retrieval is
    /// excluded: the proximal-splitting solvers treat it as a non-linear task.
    bool has_prox() const {
        return variant == Degradation::gaussian_blur || variant == Degradation::motion_blur ||
               variant == Degradation::sr || variant == Degradation::inpaint;
    }
};

// -- kernel generators ---------------------------------------------------------

/// Normalized isotropic Gaussian kernel; defaults follow the blur task spec
/// (61x61, std 3).
inline Field make_gaussian_kernel(int size = 61, double stddev = 3.0) {
    if (size < 1 || size % 2 == 0) throw DomainError("make_gaussian_kernel: size must be odd");
    if (stddev <= 0.0) throw DomainError("make_gaussian_kernel: stddev must be positive");
    Field k(size, size, 1);
    const int c = size / 2;
    double sum = 0.0;
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            const double d2 = (i - c) * (i - c) + (j - c) * (j - c);
            k.at(i, j) = std::exp(-d2 / (2.0 * stddev * stddev));
            sum += k.at(i, j);
        }
    for (double& v : k.data) v /= sum;
    return k;
}

/// Seeded random-walk motion kernel: a smooth trajectory of length
/// proportional to the intensity, splatted with bilinear weights, box-blurred
/// 3x3 and normalized. Zero intensity degenerates to a single-pixel delta.
inline Field make_motion_kernel(Rng& rng, double intensity, int size = 61) {
    if (size < 3 || size % 2 == 0) throw DomainError("make_motion_kernel: size must be odd >= 3");
    if (intensity < 0.0 || intensity > 1.0)
        throw DomainError("make_motion_kernel: intensity must be in [0,1]");
    const int c = size / 2;
    Field k(size, size, 1);
    const int steps = static_cast<int>(std::lround(intensity * 2.0 * size));
    if (steps == 0) {
        k.at(c, c) = 1.0;
        return k;
    }

    Field splat(size, size, 1);
    double r = c, col = c;
    double heading = rng.uniform(0.0, 2.0 * M_PI);
    const double step_len = 0.75;
    auto deposit = [&](double pr, double pc) {
        const int r0 = static_cast<int>(std::floor(pr));
        const int c0 = static_cast<int>(std::floor(pc));
        const double fr = pr - r0, fc = pc - c0;
        const double w[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc};
        const int rr[4] = {r0, r0, r0 + 1, r0 + 1};
        const int cc[4] = {c0, c0 + 1, c0, c0 + 1};
        for (int q = 0; q < 4; ++q)
            if (rr[q] >= 0 && rr[q] < size && cc[q] >= 0 && cc[q] < size)
                splat.at(rr[q], cc[q]) += w[q];
    };
    deposit(r, col);
    for (int t = 0; t < steps; ++t) {
        heading += 0.6 * rng.normal();
        r = std::clamp(r + step_len * std::sin(heading), 1.0, static_cast<double>(size - 2));
        col = std::clamp(col + step_len * std::cos(heading), 1.0, static_cast<double>(size - 2));
        deposit(r, col);
    }

    // 3x3 box blur, clamped at the kernel border
    for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
            double acc = 0.0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    const int ii = i + di, jj = j + dj;
                    if (ii >= 0 && ii < size && jj >= 0 && jj < size) acc += splat.at(ii, jj);
                }
            k.at(i, j) = acc / 9.0;
        }
    double sum = 0.0;
    for (double v : k.data) sum += v;
    for (double& v : k.data) v /= sum;
    return k;
}

/// Random per-pixel {0,1} mask keeping roughly (1 - fraction) of the pixels.
inline Field make_random_mask(Rng& rng, int h, int w, double masked_fraction) {
    if (masked_fraction < 0.0 || masked_fraction > 1.0)
        throw DomainError("make_random_mask: fraction must be in [0,1]");
    Field m(h, w, 1);
    for (double& v : m.data) v = rng.uniform01() < masked_fraction ? 0.0 : 1.0;
    return m;
}

/// Block mask: zeros a bw x bh rectangle at (bx, by); geometry is caller's
/// choice (no canonical default).
inline Field make_block_mask(int h, int w, int bx, int by, int bw, int bh) {
    Field m(h, w, 1, 1.0);
    for (int r = by; r < by + bh; ++r)
        for (int c = bx; c < bx + bw; ++c)
            if (r >= 0 && r < h && c >= 0 && c < w) m.at(r, c) = 0.0;
    return m;
}

// -- apply / adjoint -----------------------------------------------------------

namespace detail {

inline Field separable_filter(const Field& x, const std::array<double, 8>& taps, bool reversed) {
    // taps sit at offsets {-4..3} (reversed: {-3..4}); circular indexing
    Field tmp(x.height, x.width, x.channels);
    for (int ch = 0; ch < x.channels; ++ch)
        for (int r = 0; r < x.height; ++r)
            for (int c = 0; c < x.width; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 8; ++k) {
                    const int off = reversed ? (4 - k) : (k - 4);
                    acc += taps[k] * x.at(((r + off) % x.height + x.height) % x.height, c, ch);
                }
                tmp.at(r, c, ch) = acc;
            }
    Field out(x.height, x.width, x.channels);
    for (int ch = 0; ch < x.channels; ++ch)
        for (int r = 0; r < x.height; ++r)
            for (int c = 0; c < x.width; ++c) {
                double acc = 0.0;
                for (int k = 0; k < 8; ++k) {
                    const int off = reversed ? (4 - k) : (k - 4);
                    acc += taps[k] * tmp.at(r, ((c + off) % x.width + x.width) % x.width, ch);
                }
                out.at(r, c, ch) = acc;
            }
    return out;
}

inline Field decimate(const Field& x, int factor) {
    if (x.height % factor != 0 || x.width % factor != 0)
        throw ShapeError("decimate: shape not divisible by factor");
    Field out(x.height / factor, x.width / factor, x.channels);
    for (int ch = 0; ch < x.channels; ++ch)
        for (int r = 0; r < out.height; ++r)
            for (int c = 0; c < out.width; ++c)
                out.at(r, c, ch) = x.at(r * factor, c * factor, ch);
    return out;
}

inline Field upsample_zeros(const Field& u, int factor) {
    Field out(u.height * factor, u.width * factor, u.channels);
    for (int ch = 0; ch < u.channels; ++ch)
        for (int r = 0; r < u.height; ++r)
            for (int c = 0; c < u.width; ++c)
                out.at(r * factor, c * factor, ch) = u.at(r, c, ch);
    return out;
}

inline Field mask_multiply(const Field& x, const Field& mask) {
    if (mask.height != x.height || mask.width != x.width)
        throw ShapeError("mask shape does not match field");
    Field out = x;
    for (int ch = 0; ch < x.channels; ++ch)
        for (int r = 0; r < x.height; ++r)
            for (int c = 0; c < x.width; ++c)
                out.at(r, c, ch) *= mask.at(r, c);
    return out;
}

inline Field real_dft(const Field& x) {
    const ComplexField F = dft2(x);
    Field out(x.height, x.width, x.channels);
    for (size_t i = 0; i < out.size(); ++i) out.data[i] = F.data[i].real();
    return out;
}

inline ComplexField kernel_transfer(const DegradationOp& op, int h, int w) {
    return dft2(embed_kernel(op.kernel, h, w));
}

}  // namespace detail

inline Field apply(const DegradationOp& op, const Field& x) {
    switch (op.variant) {
        case Degradation::gaussian_blur:
        case Degradation::motion_blur:
            return circular_convolve(x, op.kernel);
        case Degradation::sr:
            return detail::decimate(detail::separable_filter(x, bicubic_antialias_taps(), false),
                                    op.sr_factor);
        case Degradation::inpaint:
            return detail::mask_multiply(x, op.mask);
        case Degradation::hdr: {
            Field out = x;
            for (double& v : out.data) v = std::clamp(2.0 * v, 0.0, 1.0);
            return out;
        }
        case Degradation::phase_retrieval:
            return detail::real_dft(x);
    }
    throw Error("apply: unreachable");
}

inline Field adjoint(const DegradationOp& op, const Field& u) {
    switch (op.variant) {
        case Degradation::gaussian_blur:
        case Degradation::motion_blur: {
            // conj transfer function = correlation with the kernel
            ComplexField U = dft2(u);
            const ComplexField K = detail::kernel_transfer(op, u.height, u.width);
            for (int ch = 0; ch < U.channels; ++ch)
                for (int r = 0; r < U.height; ++r)
                    for (int c = 0; c < U.width; ++c)
                        U.at(r, c, ch) *= std::conj(K.at(r, c));
            return idft2(U);
        }
        case Degradation::sr:
            return detail::separable_filter(detail::upsample_zeros(u, op.sr_factor),
                                            bicubic_antialias_taps(), true);
        case Degradation::inpaint:
            return detail::mask_multiply(u, op.mask);
        case Degradation::hdr:
            throw UnsupportedError("adjoint: hdr forward model is nonlinear");
        case Degradation::phase_retrieval:
            // the real-part-of-DFT matrix is symmetric
            return detail::real_dft(u);
    }
    throw Error("adjoint: unreachable");
}

// -- data fidelity ---------------------------------------------------------------

/// f(x) = ||A(x) - y||^2 / (2 sigma_y^2); sigma_y = 0 means the hard
/// constraint A(x) = y (inpainting only on the prox path).
struct DataFidelity {
    DegradationOp op;
    Field y;
};

inline double fidelity_value(const DataFidelity& fid, const Field& x) {
    const double ss = sqdist(apply(fid.op, x), fid.y);
    if (fid.op.sigma_y > 0.0) return ss / (2.0 * fid.op.sigma_y * fid.op.sigma_y);
    return 0.5 * ss;
}

inline Field grad_data(const DataFidelity& fid, const Field& x) {
    const double sigma = fid.op.sigma_y;
    if (sigma <= 0.0) throw DomainError("grad_data: sigma_y must be positive (use the projection path)");
    const double inv = 1.0 / (sigma * sigma);
    switch (fid.op.variant) {
        case Degradation::hdr: {
            Field g(x.height, x.width, x.channels);
            for (size_t i = 0; i < x.size(); ++i) {
                const double t = 2.0 * x.data[i];
                const double resid = std::clamp(t, 0.0, 1.0) - fid.y.data[i];
                g.data[i] = (t > 0.0 && t < 1.0) ? 2.0 * resid * inv : 0.0;
            }
            return g;
        }
        default: {
            const Field resid = apply(fid.op, x) - fid.y;
            Field g = adjoint(fid.op, resid);
            for (double& v : g.data) v *= inv;
            return g;
        }
    }
}

namespace detail {

// CG on (I + lambda A^T A) x = b. Absolute residual target 1e-8 plus a
// roundoff floor for extreme lambda, where double precision cannot certify
// 1e-8; see the operator notes.
inline Field cg_normal_equations(const DegradationOp& op, double lambda, const Field& b,
                                 const Field& x0) {
    const auto apply_M = [&](const Field& v) {
        Field out = adjoint(op, apply(op, v));
        for (size_t i = 0; i < out.size(); ++i) out.data[i] = v.data[i] + lambda * out.data[i];
        return out;
    };
    Field x = x0;
    Field r = b - apply_M(x);
    Field p = r;
    double rs = sqnorm(r);
    const double eps = 2.2204460492503131e-16;
    for (int it = 0; it < 500; ++it) {
        const double floor_tol =
            std::max(1e-8, 50.0 * eps * (1.0 + lambda) * std::max(1.0, norm(x)));
        if (std::sqrt(rs) <= floor_tol) return x;
        const Field Mp = apply_M(p);
        const double alpha = rs / dot(p, Mp);
        axpy(alpha, p, x);
        axpy(-alpha, Mp, r);
        if (it % 50 == 49) r = b - apply_M(x);  // refresh against drift
        const double rs_new = sqnorm(r);
        p = lincomb(1.0, r, rs_new / rs, p);
        rs = rs_new;
    }
    const double floor_tol = std::max(1e-8, 50.0 * eps * (1.0 + lambda) * std::max(1.0, norm(x)));
    if (std::sqrt(rs) <= floor_tol) return x;
    throw ConvergenceError("prox_data: CG did not reach tolerance in 500 iterations (residual " +
                           std::to_string(std::sqrt(rs)) + ")");
}

}  // namespace detail

/// prox of gamma*f at z: argmin 1/2||x-z||^2 + gamma f(x). Closed Fourier
/// solve for blurs, pointwise for inpainting, CG on the normal equations for
/// the decimating operator. Nonlinear variants have no prox here.
inline Field prox_data(const DataFidelity& fid, const Field& z, double gamma) {
    if (gamma <= 0.0) throw DomainError("prox_data: gamma must be positive");
    const double sigma = fid.op.sigma_y;
    switch (fid.op.variant) {
        case Degradation::gaussian_blur:
        case Degradation::motion_blur: {
            if (sigma <= 0.0) throw DomainError("prox_data: blur prox needs sigma_y > 0");
            const double lam = gamma / (sigma * sigma);
            const ComplexField K = detail::kernel_transfer(fid.op, z.height, z.width);
            const ComplexField Y = dft2(fid.y);
            ComplexField Z = dft2(z);
            for (int ch = 0; ch < Z.channels; ++ch)
                for (int r = 0; r < Z.height; ++r)
                    for (int c = 0; c < Z.width; ++c) {
                        const std::complex<double> h = K.at(r, c);
                        Z.at(r, c, ch) = (lam * std::conj(h) * Y.at(r, c, ch) + Z.at(r, c, ch)) /
                                         (lam * std::norm(h) + 1.0);
                    }
            return idft2(Z);
        }
        case Degradation::inpaint: {
            Field out = z;
            if (sigma <= 0.0) {
                // exact replacement on the observed set
                for (int ch = 0; ch < z.channels; ++ch)
                    for (int r = 0; r < z.height; ++r)
                        for (int c = 0; c < z.width; ++c)
                            if (fid.op.mask.at(r, c) != 0.0) out.at(r, c, ch) = fid.y.at(r, c, ch);
                return out;
            }
            const double lam = gamma / (sigma * sigma);
            for (int ch = 0; ch < z.channels; ++ch)
                for (int r = 0; r < z.height; ++r)
                    for (int c = 0; c < z.width; ++c) {
                        const double m = fid.op.mask.at(r, c);
                        out.at(r, c, ch) = (lam * m * fid.y.at(r, c, ch) + z.at(r, c, ch)) /
                                           (lam * m + 1.0);
                    }
            return out;
        }
        case Degradation::sr: {
            if (sigma <= 0.0) throw DomainError("prox_data: sr prox needs sigma_y > 0");
            const double lam = gamma / (sigma * sigma);
            Field b = adjoint(fid.op, fid.y);
            for (size_t i = 0; i < b.size(); ++i) b.data[i] = z.data[i] + lam * b.data[i];
            return detail::cg_normal_equations(fid.op, lam, b, z);
        }
        case Degradation::hdr:
        case Degradation::phase_retrieval:
            throw UnsupportedError("prox_data: no proximal path for " +
                                   degradation_name(fid.op.variant));
    }
    throw Error("prox_data: unreachable");
}

// -- flip-robust evaluation ------------------------------------------------------

/// Circular reflection fixing pixel (0,0): (r,c) -> ((H-r) mod H, (W-c) mod W).
/// The real part of the DFT is exactly invariant under it, so a reconstruction
/// from phase-retrieval data may come back reflected. An involution.
inline Field flip_circular(const Field& x) {
    Field out(x.height, x.width, x.channels);
    for (int ch = 0; ch < x.channels; ++ch)
        for (int r = 0; r < x.height; ++r)
            for (int c = 0; c < x.width; ++c)
                out.at((x.height - r) % x.height, (x.width - c) % x.width, ch) = x.at(r, c, ch);
    return out;
}

/// Evaluate metric_fn on x or on its reflection, whichever orientation has the
/// higher PSNR against ref (i.e. the smaller squared error).
template <typename MetricFn>
double evaluate_with_flip(MetricFn&& metric_fn, const Field& x, const Field& ref) {
    const Field flipped = flip_circular(x);
    if (sqdist(flipped, ref) < sqdist(x, ref)) return metric_fn(flipped, ref);
    return metric_fn(x, ref);
}

// -- serialization ----------------------------------------------------------------

inline nlohmann::json field_to_json(const Field& f) {
    return nlohmann::json{{"height", f.height},
                          {"width", f.width},
                          {"channels", f.channels},
                          {"data", encode_f64_le(f.data)}};
}

inline Field field_from_json(const nlohmann::json& j) {
    Field f(j.at("height").get<int>(), j.at("width").get<int>(), j.at("channels").get<int>());
    const std::vector<double> data = decode_f64_le(j.at("data").get<std::string>());
    if (data.size() != f.size())
        throw ParseError("field_from_json: payload size mismatch", static_cast<long>(data.size()));
    f.data = data;
    return f;
}

inline nlohmann::json op_to_json(const DegradationOp& op) {
    nlohmann::json j{{"variant", degradation_name(op.variant)}, {"sigma_y", op.sigma_y}};
    if (op.variant == Degradation::gaussian_blur || op.variant == Degradation::motion_blur)
        j["kernel"] = field_to_json(op.kernel);
    if (op.variant == Degradation::inpaint) j["mask"] = field_to_json(op.mask);
    if (op.variant == Degradation::sr) j["factor"] = op.sr_factor;
    return j;
}

inline DegradationOp op_from_json(const nlohmann::json& j) {
    const Degradation v = degradation_from_name(j.at("variant").get<std::string>());
    const double sigma_y = j.at("sigma_y").get<double>();
    switch (v) {
        case Degradation::gaussian_blur:
        case Degradation::motion_blur:
            return DegradationOp::blur(v, field_from_json(j.at("kernel")), sigma_y);
        case Degradation::sr:
            return DegradationOp::super_resolution(j.at("factor").get<int>(), sigma_y);
        case Degradation::inpaint:
            return DegradationOp::inpaint(field_from_json(j.at("mask")), sigma_y);
        case Degradation::hdr:
            return DegradationOp::hdr(sigma_y);
        case Degradation::phase_retrieval:
            return DegradationOp::phase_retrieval(sigma_y);
    }
    throw Error("op_from_json: unreachable");
}

}  // namespace proximap
