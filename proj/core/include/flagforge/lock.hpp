#pragma once

#include <filesystem>

namespace flagforge {

/// Exclusive advisory lock on a file (flock). Blocks until acquired and
/// releases on destruction. Used for the registry write lock, per-entry
/// experiment locks and the machine-wide measurement lock.
class FileLock {
 public:
  explicit FileLock(const std::filesystem::path& path);
  ~FileLock();

  FileLock(const FileLock&) = delete;
  FileLock& operator=(const FileLock&) = delete;
  FileLock(FileLock&& other) noexcept;
  FileLock& operator=(FileLock&& other) noexcept;

 private:
  int fd_ = -1;
};

}  // namespace flagforge
