#include "sevagent/error.hpp"
#include "sevagent/log.hpp"

#include <iostream>
#include <mutex>

namespace sevagent {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::FileUnreadable: return "FileUnreadable";
        case ErrorCode::SchemaMismatch: return "SchemaMismatch";
        case ErrorCode::ValueOutOfDomain: return "ValueOutOfDomain";
        case ErrorCode::MissingSeverity: return "MissingSeverity";
        case ErrorCode::Unsplittable: return "Unsplittable";
        case ErrorCode::InvalidSchema: return "InvalidSchema";
        case ErrorCode::LeakageGuard: return "LeakageGuard";
        case ErrorCode::Transport: return "Transport";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::Malformed: return "Malformed";
        case ErrorCode::CredentialMissing: return "CredentialMissing";
        case ErrorCode::NoFixture: return "NoFixture";
        case ErrorCode::UnparseableDecision: return "UnparseableDecision";
        case ErrorCode::UnassignedVariable: return "UnassignedVariable";
        case ErrorCode::EmptyAssignment: return "EmptyAssignment";
        case ErrorCode::UnparseableScore: return "UnparseableScore";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::NotConverged: return "NotConverged";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::ZeroVariance: return "ZeroVariance";
        case ErrorCode::DegenerateTable: return "DegenerateTable";
        case ErrorCode::UnknownCategory: return "UnknownCategory";
        case ErrorCode::UnwritableOutput: return "UnwritableOutput";
        case ErrorCode::UnsupportedBaseline: return "UnsupportedBaseline";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

namespace {

std::mutex g_sink_mutex;

LogSink& sink_ref() {
    static LogSink sink = [](LogLevel level, const std::string& message) {
        if (level == LogLevel::Warn) std::cerr << "warning: " << message << '\n';
    };
    return sink;
}

void emit(LogLevel level, const std::string& message) {
    std::lock_guard lock(g_sink_mutex);
    if (sink_ref()) sink_ref()(level, message);
}

}  // namespace

LogSink set_log_sink(LogSink sink) {
    std::lock_guard lock(g_sink_mutex);
    auto previous = std::move(sink_ref());
    sink_ref() = std::move(sink);
    return previous;
}

void log_info(const std::string& message) { emit(LogLevel::Info, message); }
void log_warn(const std::string& message) { emit(LogLevel::Warn, message); }

}  // namespace sevagent
