#include "fade/error.hpp"

namespace fade {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::dimension: return "dimension";
        case ErrorCode::config: return "config";
        case ErrorCode::usage: return "usage";
        case ErrorCode::format: return "format";
        case ErrorCode::version: return "version";
        case ErrorCode::checksum: return "checksum";
        case ErrorCode::divergence: return "divergence";
        case ErrorCode::corruption: return "corruption";
        case ErrorCode::io: return "io";
    }
    return "unknown";
}

}  // namespace fade
