#include "flagforge/subprocess.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "flagforge/error.hpp"
#include "flagforge/util.hpp"

namespace flagforge {
namespace {

std::int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void redirect(int target, const std::optional<std::filesystem::path>& file) {
  const char* path = file ? file->c_str() : "/dev/null";
  int fd = ::open(path, O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd >= 0) {
    ::dup2(fd, target);
    ::close(fd);
  }
}

}  // namespace

std::string shell_quote(const std::string& text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  out.push_back('\'');
  return out;
}

ProcessResult run_shell(const std::string& command, const ProcessOptions& options) {
  ProcessResult result;
  result.started_ns = steady_ns();
  pid_t pid = ::fork();
  if (pid < 0) throw EnvironmentError("fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    if (!options.workdir.empty() && ::chdir(options.workdir.c_str()) != 0) ::_exit(127);
    for (const auto& [key, value] : options.env) ::setenv(key.c_str(), value.c_str(), 1);
    int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) {
      ::dup2(devnull, 0);
      ::close(devnull);
    }
    redirect(1, options.stdout_file);
    redirect(2, options.stderr_file);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);

  std::mutex mutex;
  std::condition_variable cv;
  bool done = false;
  std::atomic<bool> killed{false};
  std::thread watchdog([&] {
    std::unique_lock lock(mutex);
    if (!cv.wait_for(lock, options.timeout, [&] { return done; })) {
      killed = true;
      ::kill(-pid, SIGKILL);
    }
  });

  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  result.finished_ns = steady_ns();
  {
    std::lock_guard lock(mutex);
    done = true;
  }
  cv.notify_all();
  watchdog.join();

  result.wall_seconds = static_cast<double>(result.finished_ns - result.started_ns) * 1e-9;
  result.timed_out = killed.load();
  if (WIFSIGNALED(status)) {
    result.signaled = true;
    result.signal = WTERMSIG(status);
    result.exit_code = 128 + result.signal;
  } else {
    result.exit_code = WEXITSTATUS(status);
  }
  return result;
}

std::optional<std::string> capture_output(const std::string& command, std::chrono::duration<double> timeout) {
  char pattern[] = "/tmp/flagforge-capture-XXXXXX";
  int fd = ::mkstemp(pattern);
  if (fd < 0) return std::nullopt;
  ::close(fd);
  std::filesystem::path file(pattern);
  ProcessOptions options;
  options.stdout_file = file;
  options.stderr_file = std::filesystem::path(pattern).string() + ".err";
  options.timeout = timeout;
  std::optional<std::string> out;
  try {
    auto result = run_shell(command, options);
    if (!result.timed_out && !result.signaled && result.exit_code == 0) {
      out = read_file(file) + read_file(*options.stderr_file);
    }
  } catch (const std::exception&) {
    out.reset();
  }
  std::error_code ec;
  std::filesystem::remove(file, ec);
  std::filesystem::remove(*options.stderr_file, ec);
  return out;
}

}  // namespace flagforge
