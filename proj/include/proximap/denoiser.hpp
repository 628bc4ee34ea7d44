#pragma once

#include <atomic>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "proximap/errors.hpp"
#include "proximap/field.hpp"
#include "proximap/gmm.hpp"

namespace proximap {

enum class DenoiserKind { gmm_exact, gmm_biased, external };

/// Callable denoiser D(x, sigma) -> Field of identical shape. Carries a shared
/// call counter so solvers can report exact NFE numbers; atomic because one
/// handle may serve concurrent runs.
struct DenoiserHandle {
    DenoiserKind kind = DenoiserKind::gmm_exact;
    double delta2 = 0.0;
    std::function<Field(const Field&, double)> fn;
    std::shared_ptr<std::atomic<long long>> calls =
        std::make_shared<std::atomic<long long>>(0);

    Field operator()(const Field& x, double sigma) const {
        ++*calls;
        Field out = fn(x, sigma);
        if (!out.same_shape(x))
            throw ShapeError("denoiser returned wrong shape " + out.shape_str());
        if (!all_finite(out)) throw Error("denoiser returned non-finite values");
        return out;
    }
};

/// Exact posterior-mean denoiser of the prior, or its learned-score-error
/// surrogate. The biased handle is the delta2-inflated model's own posterior
/// mean, D(x, sigma) = mmse(x, sqrt(sigma^2 + delta2)): it confidently returns
/// clean content drawn toward the over-smoothed model's high-density regions,
/// which is the failure mode the diagnosis needs. delta2 = 0 is exact.
inline DenoiserHandle make_gmm_denoiser(const GmmPrior& prior, double delta2 = 0.0) {
    if (delta2 < 0.0) throw DomainError("make_gmm_denoiser: delta2 must be nonnegative");
    DenoiserHandle h;
    h.kind = delta2 > 0.0 ? DenoiserKind::gmm_biased : DenoiserKind::gmm_exact;
    h.delta2 = delta2;
    h.fn = [prior, delta2](const Field& x, double sigma) {
        return mmse_denoise(prior, x, std::sqrt(sigma * sigma + delta2));
    };
    return h;
}

// -- external denoiser protocol ----------------------------------------------
//
// A child process spoken over stdin/stdout. Request and response share one
// layout: a 32-byte little-endian header
//   bytes  0..3   magic "PMDN"
//   bytes  4..15  u32 height, u32 width, u32 channels
//   bytes 16..23  f64 sigma
//   bytes 24..31  reserved, zero
// followed by height*width*channels f64 samples. Since both directions use the
// same layout, `cat` is a valid identity denoiser.

namespace detail {

inline void put_u32_le(std::vector<uint8_t>& buf, uint32_t v) {
    for (int b = 0; b < 4; ++b) buf.push_back(static_cast<uint8_t>((v >> (8 * b)) & 0xFF));
}

inline void put_f64_le(std::vector<uint8_t>& buf, double v) {
    uint64_t u;
    std::memcpy(&u, &v, 8);
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<uint8_t>((u >> (8 * b)) & 0xFF));
}

inline uint32_t get_u32_le(const uint8_t* p) {
    uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<uint32_t>(p[b]) << (8 * b);
    return v;
}

inline double get_f64_le(const uint8_t* p) {
    uint64_t u = 0;
    for (int b = 0; b < 8; ++b) u |= static_cast<uint64_t>(p[b]) << (8 * b);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

inline void write_all(int fd, const uint8_t* data, size_t n) {
    size_t done = 0;
    while (done < n) {
        const ssize_t w = ::write(fd, data + done, n - done);
        if (w <= 0) throw Error("external denoiser: write to child failed");
        done += static_cast<size_t>(w);
    }
}

inline void read_all(int fd, uint8_t* data, size_t n) {
    size_t done = 0;
    while (done < n) {
        const ssize_t r = ::read(fd, data + done, n - done);
        if (r <= 0) throw Error("external denoiser: child closed the stream early");
        done += static_cast<size_t>(r);
    }
}

}  // namespace detail

inline std::vector<uint8_t> encode_denoise_message(const Field& x, double sigma) {
    std::vector<uint8_t> buf;
    buf.reserve(32 + x.size() * 8);
    buf.push_back('P');
    buf.push_back('M');
    buf.push_back('D');
    buf.push_back('N');
    detail::put_u32_le(buf, static_cast<uint32_t>(x.height));
    detail::put_u32_le(buf, static_cast<uint32_t>(x.width));
    detail::put_u32_le(buf, static_cast<uint32_t>(x.channels));
    detail::put_f64_le(buf, sigma);
    for (int b = 0; b < 8; ++b) buf.push_back(0);
    for (double v : x.data) detail::put_f64_le(buf, v);
    return buf;
}

inline Field decode_denoise_message(const std::vector<uint8_t>& buf, double* sigma_out = nullptr) {
    if (buf.size() < 32 || std::memcmp(buf.data(), "PMDN", 4) != 0)
        throw ParseError("denoise message: bad magic", 0);
    const uint32_t h = detail::get_u32_le(buf.data() + 4);
    const uint32_t w = detail::get_u32_le(buf.data() + 8);
    const uint32_t c = detail::get_u32_le(buf.data() + 12);
    if (sigma_out) *sigma_out = detail::get_f64_le(buf.data() + 16);
    const size_t n = static_cast<size_t>(h) * w * c;
    if (buf.size() != 32 + n * 8)
        throw ParseError("denoise message: payload size mismatch", static_cast<long>(buf.size()));
    Field out(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c));
    for (size_t i = 0; i < n; ++i) out.data[i] = detail::get_f64_le(buf.data() + 32 + i * 8);
    return out;
}

/// Child process wrapper implementing the byte protocol. Access is serialized
/// per process; the handle owns the pipes and reaps the child on destruction.
class ExternalDenoiser {
  public:
    explicit ExternalDenoiser(const std::string& command) {
        int to_child[2], from_child[2];
        if (pipe(to_child) != 0 || pipe(from_child) != 0)
            throw Error("external denoiser: pipe() failed");
        pid_ = fork();
        if (pid_ < 0) throw Error("external denoiser: fork() failed");
        if (pid_ == 0) {
            dup2(to_child[0], STDIN_FILENO);
            dup2(from_child[1], STDOUT_FILENO);
            close(to_child[0]);
            close(to_child[1]);
            close(from_child[0]);
            close(from_child[1]);
            execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        close(to_child[0]);
        close(from_child[1]);
        write_fd_ = to_child[1];
        read_fd_ = from_child[0];
    }

    ~ExternalDenoiser() {
        if (write_fd_ >= 0) close(write_fd_);
        if (read_fd_ >= 0) close(read_fd_);
        if (pid_ > 0) waitpid(pid_, nullptr, 0);
    }

    ExternalDenoiser(const ExternalDenoiser&) = delete;
    ExternalDenoiser& operator=(const ExternalDenoiser&) = delete;

    Field denoise(const Field& x, double sigma) {
        std::lock_guard<std::mutex> lock(mu_);
        const std::vector<uint8_t> req = encode_denoise_message(x, sigma);
        detail::write_all(write_fd_, req.data(), req.size());
        std::vector<uint8_t> resp(req.size());
        detail::read_all(read_fd_, resp.data(), resp.size());
        Field out = decode_denoise_message(resp);
        if (!out.same_shape(x))
            throw ShapeError("external denoiser: response shape " + out.shape_str() +
                             " does not match request " + x.shape_str());
        return out;
    }

  private:
    pid_t pid_ = -1;
    int write_fd_ = -1;
    int read_fd_ = -1;
    std::mutex mu_;
};

inline DenoiserHandle make_external_denoiser(const std::string& command) {
    DenoiserHandle h;
    h.kind = DenoiserKind::external;
    auto proc = std::make_shared<ExternalDenoiser>(command);
    h.fn = [proc](const Field& x, double sigma) { return proc->denoise(x, sigma); };
    return h;
}

}  // namespace proximap
