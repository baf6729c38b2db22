#pragma once

#include <string>

namespace ncdiff {

enum class LogLevel { kInfo, kWarn, kError };

void log_message(LogLevel level, const std::string& msg);
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_error(const std::string& msg);

/// Suppresses info-level output (warnings and errors always print).
void set_log_quiet(bool quiet);

/// Number of warnings emitted since process start; tests use this to assert
/// that fallback paths actually logged.
int64_t warn_count();

}  // namespace ncdiff
