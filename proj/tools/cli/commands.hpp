#pragma once

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace voxelprior::cli {

enum class ExitCode : int {
  ok = 0,
  failure = 1,
  usage = 2,
  config = 3,
  missing_input = 4,
  io = 5,
  divergence = 6,
  check_failed = 7,
};

std::string_view exit_code_name(ExitCode code);

// A failure that maps onto a specific exit code.
class CommandError : public std::runtime_error {
 public:
  CommandError(ExitCode code, const std::string& message, std::string path = {})
      : std::runtime_error(message), code_(code), path_(std::move(path)) {}
  ExitCode code() const noexcept { return code_; }
  const std::string& path() const noexcept { return path_; }

 private:
  ExitCode code_;
  std::string path_;
};

const std::vector<std::string>& command_names();

// Runs one command with a fully resolved config. Progress goes to `log`.
// Throws on failure; see error_exit for the mapping to exit codes.
void run_command(const std::string& command, const RunConfig& config, std::ostream& log);

// Exit code and one-line JSON error for an in-flight exception.
ExitCode describe_error(std::exception_ptr error, std::string& json_line);

std::string_view tool_version();

}  // namespace voxelprior::cli
