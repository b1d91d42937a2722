// avlabel/subprocess.hpp

// Copyright 2026  The avlabel Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Child processes with piped stdin/stdout (POSIX).

#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "avlabel/errors.hpp"

extern char **environ;

namespace avlabel {

struct ProcessSpec {
  std::vector<std::string> argv;
  std::map<std::string, std::string> env;  // added to or overriding the parent's
  std::filesystem::path cwd;               // empty: inherit
  std::filesystem::path stderr_path;       // empty: inherit
};

// "exited with status N" or "killed by signal N" for a waitpid status.
inline std::string describe_wait_status(int st) {
  if (WIFEXITED(st)) return "exited with status " + std::to_string(WEXITSTATUS(st));
  if (WIFSIGNALED(st)) return "killed by signal " + std::to_string(WTERMSIG(st));
  return "stopped (" + std::to_string(st) + ")";
}

class Subprocess {
 public:
  Subprocess() = default;
  explicit Subprocess(const ProcessSpec &spec) { start(spec); }
  ~Subprocess() { terminate(); }
  Subprocess(const Subprocess &) = delete;
  Subprocess &operator=(const Subprocess &) = delete;
  Subprocess(Subprocess &&o) noexcept { swap(o); }
  Subprocess &operator=(Subprocess &&o) noexcept {
    if (this != &o) {
      terminate();
      swap(o);
    }
    return *this;
  }

  pid_t pid() const { return pid_; }
  int stdout_fd() const { return out_fd_; }

  // False if the child closed its stdin.
  bool write_all(std::string_view data) {
    if (in_fd_ < 0) return false;
    while (!data.empty()) {
      ssize_t n = ::write(in_fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        return false;
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
  }

  void close_stdin() { CloseFd(in_fd_); }

  void kill(int sig = SIGKILL) {
    if (pid_ > 0 && !status_) ::kill(pid_, sig);
  }

  // Blocks until exit; returns the raw wait status.
  int wait() {
    if (pid_ <= 0) return 0;
    if (!status_) {
      int st = 0;
      while (::waitpid(pid_, &st, 0) < 0 && errno == EINTR) {
      }
      status_ = st;
    }
    return *status_;
  }

  bool running() {
    if (pid_ <= 0 || status_) return false;
    int st = 0;
    pid_t r = ::waitpid(pid_, &st, WNOHANG);
    if (r == pid_) {
      status_ = st;
      return false;
    }
    return r == 0;
  }

  void terminate() {
    close_stdin();
    if (pid_ > 0) {
      kill(SIGKILL);
      wait();
    }
    CloseFd(out_fd_);
    pid_ = -1;
  }

 private:
  static void CloseFd(int &fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
  }

  void swap(Subprocess &o) noexcept {
    std::swap(pid_, o.pid_);
    std::swap(in_fd_, o.in_fd_);
    std::swap(out_fd_, o.out_fd_);
    std::swap(status_, o.status_);
  }

  void start(const ProcessSpec &spec) {
    if (spec.argv.empty()) throw ArgumentError("empty argv");
    // A dead reader must surface as EPIPE, not kill the orchestrator.
    ::signal(SIGPIPE, SIG_IGN);

    std::vector<std::string> env_store;
    for (char **e = environ; e && *e; ++e) {
      std::string_view kv(*e);
      auto eq = kv.find('=');
      if (eq != std::string_view::npos && spec.env.count(std::string(kv.substr(0, eq)))) continue;
      env_store.emplace_back(kv);
    }
    for (const auto &[k, v] : spec.env) env_store.push_back(k + "=" + v);
    std::vector<char *> envp, argv;
    for (auto &s : env_store) envp.push_back(s.data());
    envp.push_back(nullptr);
    std::vector<std::string> arg_store = spec.argv;
    for (auto &s : arg_store) argv.push_back(s.data());
    argv.push_back(nullptr);
    std::string cwd = spec.cwd.string();
    std::string err_path = spec.stderr_path.string();

    int in[2], out[2], status[2];
    if (::pipe2(in, O_CLOEXEC) < 0) throw WorkerUnavailable(std::string("pipe: ") + std::strerror(errno));
    if (::pipe2(out, O_CLOEXEC) < 0) {
      ::close(in[0]);
      ::close(in[1]);
      throw WorkerUnavailable(std::string("pipe: ") + std::strerror(errno));
    }
    if (::pipe2(status, O_CLOEXEC) < 0) {
      for (int fd : {in[0], in[1], out[0], out[1]}) ::close(fd);
      throw WorkerUnavailable(std::string("pipe: ") + std::strerror(errno));
    }

    pid_t pid = ::fork();
    if (pid < 0) {
      for (int fd : {in[0], in[1], out[0], out[1], status[0], status[1]}) ::close(fd);
      throw WorkerUnavailable(std::string("fork: ") + std::strerror(errno));
    }
    if (pid == 0) {
      ::dup2(in[0], 0);
      ::dup2(out[1], 1);
      if (!err_path.empty()) {
        int fd = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
        if (fd >= 0) ::dup2(fd, 2);
      }
      ::signal(SIGPIPE, SIG_DFL);
      int err = 0;
      if (!cwd.empty() && ::chdir(cwd.c_str()) < 0) {
        err = errno;
      } else {
        ::execvpe(argv[0], argv.data(), envp.data());
        err = errno;
      }
      ssize_t ignored = ::write(status[1], &err, sizeof err);
      (void)ignored;
      ::_exit(127);
    }
    ::close(in[0]);
    ::close(out[1]);
    ::close(status[1]);
    int child_errno = 0;
    ssize_t n;
    while ((n = ::read(status[0], &child_errno, sizeof child_errno)) < 0 && errno == EINTR) {
    }
    ::close(status[0]);
    pid_ = pid;
    in_fd_ = in[1];
    out_fd_ = out[0];
    if (n > 0) {
      wait();
      terminate();
      throw WorkerUnavailable("cannot start '" + spec.argv[0] + "': " + std::strerror(child_errno));
    }
  }

  pid_t pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::optional<int> status_;
};

// Buffered line reader over a file descriptor.
class LineReader {
 public:
  enum class Status { kLine, kTimeout, kEof };

  explicit LineReader(int fd = -1) : fd_(fd) {}

  // Waits up to `timeout` for a complete line (without the newline).
  Status read_line(std::string &line, std::chrono::milliseconds timeout) {
    auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      auto nl = buf_.find('\n');
      if (nl != std::string::npos) {
        line = buf_.substr(0, nl);
        buf_.erase(0, nl + 1);
        return Status::kLine;
      }
      if (eof_) {
        if (!buf_.empty()) {
          line = std::move(buf_);
          buf_.clear();
          return Status::kLine;
        }
        return Status::kEof;
      }
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() < 0) return Status::kTimeout;
      pollfd p{fd_, POLLIN, 0};
      int r = ::poll(&p, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        eof_ = true;
        continue;
      }
      if (r == 0) return Status::kTimeout;
      char tmp[65536];
      ssize_t n = ::read(fd_, tmp, sizeof tmp);
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        eof_ = true;
      } else if (n == 0) {
        eof_ = true;
      } else {
        buf_.append(tmp, static_cast<std::size_t>(n));
      }
    }
  }

 private:
  int fd_;
  std::string buf_;
  bool eof_ = false;
};

}  // namespace avlabel
