#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hetlab {

// Machine-readable failure category shared by the library, the CLI exit codes
// and the HTTP error payloads.
enum class ErrorCode {
    BadInput,
    NotFound,
    UnsupportedArchitecture,
    Numeric,
    Internal,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline Error bad_input(const std::string& message) { return {ErrorCode::BadInput, message}; }
inline Error not_found(const std::string& message) { return {ErrorCode::NotFound, message}; }
inline Error numeric_error(const std::string& message) { return {ErrorCode::Numeric, message}; }
inline Error unsupported_architecture(const std::string& message) {
    return {ErrorCode::UnsupportedArchitecture, message};
}

}  // namespace hetlab
