#pragma once

#include "bgm/config.hpp"

#include <iosfwd>

namespace bgm {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitRuntime = 3;

// Each command reports progress and errors on `log` and returns an exit
// code: 0 success, 2 bad input or configuration, 3 runtime failure.
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_predict(const RunConfig& cfg, std::ostream& log);
int cmd_impute(const RunConfig& cfg, std::ostream& log);
int cmd_benchmark(const RunConfig& cfg, std::ostream& log);

// Maps the library's exception types onto exit codes after printing them.
int exit_code_for(const std::exception& e, std::ostream& log);

}  // namespace bgm
