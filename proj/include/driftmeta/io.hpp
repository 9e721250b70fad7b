#pragma once

#include <string>
#include <string_view>

namespace driftmeta {

// Writes via a temp file in the same directory plus rename, so readers never
// observe a half-written file.
void write_file_atomic(const std::string& path, std::string_view content);

std::string read_file(const std::string& path);

// Formats a double with enough digits to round-trip exactly through text.
std::string format_double(double v);

namespace log {

enum class Level { Debug = 0, Info = 1, Warn = 2, Error = 3 };

// Threshold comes from DRIFTMETA_LOG (debug|info|warn|error), default info.
Level threshold();

void emit(Level level, const std::string& msg);

inline void debug(const std::string& m) { emit(Level::Debug, m); }
inline void info(const std::string& m) { emit(Level::Info, m); }
inline void warn(const std::string& m) { emit(Level::Warn, m); }
inline void error(const std::string& m) { emit(Level::Error, m); }

}  // namespace log
}  // namespace driftmeta
