#pragma once

#include <stdexcept>
#include <string>

namespace fade {

enum class ErrorCode {
    dimension,   // tensor shape mismatch
    config,      // invalid hyperparameters
    usage,       // API misuse (bad arguments, wrong call order)
    format,      // bad magic / malformed container
    version,     // unsupported container version
    checksum,    // CRC mismatch
    divergence,  // NaN/Inf in the model
    corruption,  // bitstream does not decode consistently
    io,          // filesystem failure
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Thrown when the model produces a non-finite value; carries the step index.
class DivergenceError : public Error {
public:
    DivergenceError(long long step, const std::string& what)
        : Error(ErrorCode::divergence, what + " at step " + std::to_string(step)), step_(step) {}

    long long step() const noexcept { return step_; }

private:
    long long step_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool ok, ErrorCode code, const char* what) {
    if (!ok) throw Error(code, what);
}

}  // namespace fade
