#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bivad {

enum class ErrorCode {
    invalid_argument,
    numeric_error,
    state_error,
    format_error,
    io_error,
    config_error,
    unsupported_metric,
    undefined_metric,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::numeric_error: return "numeric-error";
    case ErrorCode::state_error: return "state-error";
    case ErrorCode::format_error: return "format-error";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::config_error: return "config-error";
    case ErrorCode::unsupported_metric: return "unsupported-metric";
    case ErrorCode::undefined_metric: return "undefined-metric";
    }
    return "unknown";
}

/// Every failure in the library is reported through this type. The code is
/// stable and machine-readable; the message is for humans.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
    if (!condition) fail(code, message);
}

} // namespace bivad
