#pragma once

#include <string_view>

namespace sensa {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

void set_log_level(LogLevel level);
LogLevel log_level();

void log_warning(std::string_view message);
void log_info(std::string_view message);

}  // namespace sensa
