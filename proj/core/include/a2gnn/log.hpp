#pragma once

#include <string>

namespace a2gnn {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Level comes from the A2GNN_LOG environment variable (error|info|debug),
// default info. Lines are written atomically to stderr.
LogLevel log_level();
void log_error(const std::string& msg);
void log_info(const std::string& msg);
void log_debug(const std::string& msg);

} // namespace a2gnn
