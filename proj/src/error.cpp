#include "edgeprompt/error.hpp"

namespace edgeprompt {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Shape: return "shape error";
        case ErrorKind::Index: return "index error";
        case ErrorKind::Parse: return "parse error";
        case ErrorKind::Validation: return "validation error";
        case ErrorKind::Config: return "config error";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Range: return "range error";
        case ErrorKind::Compatibility: return "compatibility error";
        case ErrorKind::InsufficientData: return "insufficient data";
        case ErrorKind::State: return "state error";
        case ErrorKind::Io: return "io error";
        case ErrorKind::Domain: return "domain error";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace edgeprompt
