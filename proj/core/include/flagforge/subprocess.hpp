#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace flagforge {

struct ProcessResult {
  int exit_code = 0;             // valid when !signaled
  bool signaled = false;
  int signal = 0;
  bool timed_out = false;
  double wall_seconds = 0.0;
  std::int64_t started_ns = 0;   // steady clock
  std::int64_t finished_ns = 0;
};

struct ProcessOptions {
  std::filesystem::path workdir;
  std::map<std::string, std::string> env;        // added to the inherited environment
  std::optional<std::filesystem::path> stdout_file;
  std::optional<std::filesystem::path> stderr_file;
  std::chrono::duration<double> timeout{60.0};
};

/// Runs `command` through /bin/sh -c and waits for it, killing the whole
/// process group on timeout.
ProcessResult run_shell(const std::string& command, const ProcessOptions& options);

/// Runs a command and captures its standard output (stderr merged).
/// Returns nullopt when the command cannot be started or exits non-zero.
std::optional<std::string> capture_output(const std::string& command,
                                          std::chrono::duration<double> timeout = std::chrono::seconds(10));

std::string shell_quote(const std::string& text);

}  // namespace flagforge
