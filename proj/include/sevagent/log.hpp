#pragma once

#include <functional>
#include <string>

namespace sevagent {

enum class LogLevel { Info, Warn };

using LogSink = std::function<void(LogLevel, const std::string&)>;

/// Replaces the process-wide sink (default: stderr for warnings, silent for
/// info). Returns the previous sink so tests can restore it.
LogSink set_log_sink(LogSink sink);

void log_info(const std::string& message);
void log_warn(const std::string& message);

}  // namespace sevagent
