#pragma once

// Append-only JSON-lines journal. Each record is one line; a tick's
// records are flushed (and optionally fsync'd) together.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "replimarket/core.hpp"
#include "json.hpp"

namespace replimarket {

class Journal {
 public:
  Journal() = default;
  explicit Journal(const std::filesystem::path& path, bool fsync_batches = true)
      : path_(path), fsync_(fsync_batches) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open journal " + path.string() + ": " + std::strerror(errno));
  }
  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;
  ~Journal() {
    if (fd_ >= 0) ::close(fd_);
  }

  bool is_open() const noexcept { return fd_ >= 0; }
  const std::filesystem::path& path() const noexcept { return path_; }

  /// Writes the records as one contiguous batch.
  void append(const std::vector<nlohmann::json>& records) {
    if (fd_ < 0 || records.empty()) return;
    std::string buf;
    for (const auto& r : records) {
      buf += r.dump();
      buf += '\n';
    }
    std::lock_guard lock(mu_);
    const char* p = buf.data();
    std::size_t left = buf.size();
    while (left > 0) {
      const ssize_t n = ::write(fd_, p, left);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("journal write failed: " + std::string(std::strerror(errno)));
      }
      p += n;
      left -= static_cast<std::size_t>(n);
    }
    if (fsync_) ::fsync(fd_);
  }

  void append(const nlohmann::json& record) { append(std::vector<nlohmann::json>{record}); }

 private:
  std::filesystem::path path_;
  bool fsync_ = true;
  int fd_ = -1;
  std::mutex mu_;
};

struct JournalReadResult {
  std::vector<nlohmann::json> records;
  bool complete = true;       // false when reading stopped at a bad line
  std::size_t bad_line = 0;   // 1-based
  std::string error;
};

/// Reads records up to the first line that is not a JSON object with a
/// string "type" field.
inline JournalReadResult read_journal(const std::filesystem::path& path) {
  JournalReadResult res;
  std::ifstream in(path);
  if (!in) return res;  // no journal: fresh service
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw DataError("record has no type");
      res.records.push_back(std::move(j));
    } catch (const std::exception& e) {
      res.complete = false;
      res.bad_line = n;
      res.error = e.what();
      break;
    }
  }
  return res;
}

}  // namespace replimarket
