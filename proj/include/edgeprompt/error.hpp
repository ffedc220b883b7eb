#pragma once

#include <stdexcept>
#include <string>

namespace edgeprompt {

enum class ErrorKind {
    Shape,
    Index,
    Parse,
    Validation,
    Config,
    Format,
    Range,
    Compatibility,
    InsufficientData,
    State,
    Io,
    Domain,
};

const char* to_string(ErrorKind kind) noexcept;

// Every error raised by the library carries a kind so the C API can map it to a
// status code without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace edgeprompt
