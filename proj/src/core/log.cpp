#include "ncdiff/log.hpp"

#include <atomic>
#include <cstdio>

namespace ncdiff {

static std::atomic<bool> g_quiet{false};
static std::atomic<int64_t> g_warns{0};

void set_log_quiet(bool quiet) { g_quiet = quiet; }

int64_t warn_count() { return g_warns.load(); }

void log_message(LogLevel level, const std::string& msg) {
  switch (level) {
    case LogLevel::kInfo:
      if (!g_quiet) std::fprintf(stderr, "[ncd] %s\n", msg.c_str());
      break;
    case LogLevel::kWarn:
      ++g_warns;
      std::fprintf(stderr, "[ncd] warning: %s\n", msg.c_str());
      break;
    case LogLevel::kError:
      std::fprintf(stderr, "[ncd] error: %s\n", msg.c_str());
      break;
  }
}

void log_info(const std::string& msg) { log_message(LogLevel::kInfo, msg); }
void log_warn(const std::string& msg) { log_message(LogLevel::kWarn, msg); }
void log_error(const std::string& msg) { log_message(LogLevel::kError, msg); }

}  // namespace ncdiff
