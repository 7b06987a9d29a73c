#pragma once

// Subcommands of the causeptr tool. Each returns a process exit code:
// 0 success, 2 usage error, 3 data error, 4 numeric failure.

#include <filesystem>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "causeptr_cli/run_config.hpp"

namespace causeptr::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4 };

/// Full command line (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

void cmd_prepare(const RunConfig& config, std::ostream& out);
void cmd_train(const RunConfig& config, std::ostream& out);
void cmd_predict(const RunConfig& config, std::ostream& out);
void cmd_eval(const RunConfig& config, std::ostream& out);
void cmd_crossval(const RunConfig& config, std::ostream& out);

/// Writes to a sibling temp file, then renames over path.
void write_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace causeptr::cli
