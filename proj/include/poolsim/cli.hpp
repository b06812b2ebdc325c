#pragma once

#include <string>
#include <vector>

namespace poolsim {

// Exit codes: 0 on success, 1 on configuration problems (unreadable or
// invalid scenario, bad flags), 2 when an experiment assertion fails.
inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 1;
inline constexpr int exit_experiment = 2;

int cli_main(int argc, const char* const* argv);

// Convenience for tests: arguments without the program name.
int cli_main(const std::vector<std::string>& args);

} // namespace poolsim
