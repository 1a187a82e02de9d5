#pragma once

#include <string>

namespace dig {

/// 0 silences progress lines; warnings are always printed.
void set_verbosity(int level);
int verbosity();

/// Progress line on stderr when verbosity > 0.
void log_info(const std::string& message);
void log_warning(const std::string& message);

}  // namespace dig
