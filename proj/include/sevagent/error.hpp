#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sevagent {

enum class ErrorCode {
    // schema
    FileUnreadable,
    SchemaMismatch,
    ValueOutOfDomain,
    MissingSeverity,
    Unsplittable,
    InvalidSchema,
    LeakageGuard,
    // gateway
    Transport,
    RateLimited,
    Malformed,
    CredentialMissing,
    NoFixture,
    // agents
    UnparseableDecision,
    UnassignedVariable,
    EmptyAssignment,
    UnparseableScore,
    // numerics
    DimensionMismatch,
    NonFiniteGradient,
    LengthMismatch,
    EmptyInput,
    NotConverged,
    OutOfRange,
    ZeroVariance,
    DegenerateTable,
    // experiment
    UnknownCategory,
    UnwritableOutput,
    UnsupportedBaseline,
    InvalidConfig,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Single exception type for the library. The code identifies the failure
/// class; the message carries the specifics (row, column, status, ...).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Gateway failure that may carry an HTTP status and a server-suggested delay.
class GatewayError : public Error {
public:
    GatewayError(ErrorCode code, const std::string& message, int status = 0, double retry_after_s = 0.0)
        : Error(code, message), status_(status), retry_after_s_(retry_after_s) {}

    int status() const noexcept { return status_; }
    double retry_after_seconds() const noexcept { return retry_after_s_; }
    bool retryable() const noexcept {
        return code() == ErrorCode::RateLimited ||
               (code() == ErrorCode::Transport && (status_ == 0 || status_ >= 500));
    }

private:
    int status_;
    double retry_after_s_;
};

}  // namespace sevagent
