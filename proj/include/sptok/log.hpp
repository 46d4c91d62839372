#pragma once

#include <cstdarg>
#include <cstdio>

namespace sptok::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

// Process-wide threshold; SPTOK_LOG_LEVEL=debug|info|warn|error|off overrides the default (warn).
Level threshold();
void set_threshold(Level level);

void write(Level level, const char* fmt, ...) __attribute__((format(printf, 2, 3)));

}  // namespace sptok::log

#define SPTOK_LOG_DEBUG(...) ::sptok::log::write(::sptok::log::Level::kDebug, __VA_ARGS__)
#define SPTOK_LOG_INFO(...) ::sptok::log::write(::sptok::log::Level::kInfo, __VA_ARGS__)
#define SPTOK_LOG_WARN(...) ::sptok::log::write(::sptok::log::Level::kWarn, __VA_ARGS__)
#define SPTOK_LOG_ERROR(...) ::sptok::log::write(::sptok::log::Level::kError, __VA_ARGS__)
