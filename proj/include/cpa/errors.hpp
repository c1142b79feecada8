#pragma once

#include <stdexcept>
#include <string>

namespace cpa {

enum class ErrorKind {
    InputSize,
    Shape,
    Degenerate,
    Config,
    Io,
    Format,
    Invariant,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InputSize: return "input-size";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Config: return "config";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Invariant: return "invariant";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

} // namespace cpa
