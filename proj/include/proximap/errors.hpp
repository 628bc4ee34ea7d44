#pragma once

#include <stdexcept>
#include <string>

namespace proximap {

// Exception taxonomy shared by every module. All library errors derive from
// Error so callers can catch the whole family at once.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& what) : Error(what) {}
};

struct DomainError : Error {
    explicit DomainError(const std::string& what) : Error(what) {}
};

struct ConvergenceError : Error {
    explicit ConvergenceError(const std::string& what) : Error(what) {}
};

struct InfeasibleTarget : Error {
    explicit InfeasibleTarget(const std::string& what) : Error(what) {}
};

struct UnsupportedError : Error {
    explicit UnsupportedError(const std::string& what) : Error(what) {}
};

// Raised when a solver iterate stops being finite; carries the outer
// iteration index at which the blow-up was detected.
struct DivergenceError : Error {
    int iteration;
    DivergenceError(const std::string& what, int iter)
        : Error(what + " (iteration " + std::to_string(iter) + ")"), iteration(iter) {}
};

// Malformed input file; byte_offset points at the offending byte.
struct ParseError : Error {
    long byte_offset;
    ParseError(const std::string& what, long offset)
        : Error(what + " (byte " + std::to_string(offset) + ")"), byte_offset(offset) {}
};

struct NoViableConfig : Error {
    explicit NoViableConfig(const std::string& what) : Error(what) {}
};

}  // namespace proximap
