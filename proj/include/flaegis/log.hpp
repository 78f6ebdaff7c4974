#pragma once

#include <string_view>

namespace flaegis {

enum class LogLevel { error = 0, info = 1, debug = 2 };

/// Level from FLAEGIS_LOG (error, info, debug); defaults to error.
LogLevel log_level();
void log(LogLevel level, std::string_view message);

} // namespace flaegis
