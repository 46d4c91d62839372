#include "sptok/log.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace sptok::log {
namespace {

Level parse_env() {
  const char* env = std::getenv("SPTOK_LOG_LEVEL");
  if (env == nullptr) return Level::kWarn;
  if (std::strcmp(env, "debug") == 0) return Level::kDebug;
  if (std::strcmp(env, "info") == 0) return Level::kInfo;
  if (std::strcmp(env, "error") == 0) return Level::kError;
  if (std::strcmp(env, "off") == 0) return Level::kOff;
  return Level::kWarn;
}

std::atomic<int>& threshold_storage() {
  static std::atomic<int> value{static_cast<int>(parse_env())};
  return value;
}

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "debug";
    case Level::kInfo: return "info";
    case Level::kWarn: return "warn";
    case Level::kError: return "error";
    default: return "";
  }
}

}  // namespace

Level threshold() { return static_cast<Level>(threshold_storage().load()); }

void set_threshold(Level level) { threshold_storage().store(static_cast<int>(level)); }

void write(Level level, const char* fmt, ...) {
  if (static_cast<int>(level) < static_cast<int>(threshold())) return;
  std::fprintf(stderr, "[sptok %s] ", tag(level));
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

}  // namespace sptok::log
