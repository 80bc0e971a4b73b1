#include "hmeval/error.hpp"

namespace hmeval {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid argument";
        case ErrorKind::ShapeMismatch: return "shape mismatch";
        case ErrorKind::StaleTrace: return "stale trace";
        case ErrorKind::Format: return "format error";
        case ErrorKind::Version: return "version mismatch";
        case ErrorKind::Truncated: return "truncated input";
        case ErrorKind::Validation: return "validation error";
        case ErrorKind::Numeric: return "numeric error";
        case ErrorKind::Io: return "i/o error";
        case ErrorKind::Encoder: return "encoder error";
        case ErrorKind::Degenerate: return "degenerate data";
        case ErrorKind::Sampling: return "sampling error";
    }
    return "error";
}

void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

}  // namespace hmeval
