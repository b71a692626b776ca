#pragma once

#include <string_view>

namespace sarkit {

// Warnings go to stderr unless silenced (tests, library embedding).
void warn(std::string_view message);
void set_warnings_enabled(bool enabled);

}  // namespace sarkit
