// Copyright 2026 The migrl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Minimal POSIX child-process runner: feeds stdin, captures stdout/stderr,
// enforces a wall-clock timeout and optionally scrubs the environment.

#ifndef MIGRL_PROCESS_HPP_
#define MIGRL_PROCESS_HPP_

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "migrl/error.hpp"

namespace migrl {

struct ProcessOptions {
  std::vector<std::string> argv;
  std::string stdin_data;
  std::chrono::milliseconds timeout{5000};
  // Empty means "inherit the parent's working directory".
  std::filesystem::path cwd;
  // When set, the child sees only these variables (copied from our own
  // environment when present).
  std::optional<std::vector<std::string>> env_allowlist;
};

struct ProcessResult {
  int exit_code = -1;
  int term_signal = 0;
  bool timed_out = false;
  std::string out;
  std::string err;

  bool ok() const noexcept { return !timed_out && term_signal == 0 && exit_code == 0; }
};

// Resolves argv[0] the way execvp would. Returns nullopt if nothing
// executable is found.
inline std::optional<std::filesystem::path> find_executable(std::string_view name) {
  if (name.empty()) return std::nullopt;
  auto executable = [](const std::filesystem::path& p) {
    std::error_code ec;
    return std::filesystem::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
  };
  if (name.find('/') != std::string_view::npos) {
    std::filesystem::path p(name);
    return executable(p) ? std::optional(p) : std::nullopt;
  }
  const char* path_env = std::getenv("PATH");
  std::string search = path_env ? path_env : "/usr/bin:/bin";
  std::stringstream ss(search);
  for (std::string dir; std::getline(ss, dir, ':');) {
    if (dir.empty()) dir = ".";
    auto candidate = std::filesystem::path(dir) / std::string(name);
    if (executable(candidate)) return candidate;
  }
  return std::nullopt;
}

namespace detail {

struct Pipe {
  int fd[2] = {-1, -1};
  Pipe() {
    if (::pipe2(fd, O_CLOEXEC) != 0) throw Error(std::string("pipe2: ") + std::strerror(errno));
  }
  ~Pipe() { close_both(); }
  Pipe(const Pipe&) = delete;
  Pipe& operator=(const Pipe&) = delete;
  void close_end(int i) {
    if (fd[i] >= 0) ::close(fd[i]);
    fd[i] = -1;
  }
  void close_both() {
    close_end(0);
    close_end(1);
  }
};

inline void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

// Writes without taking SIGPIPE if the child already closed its stdin.
inline ssize_t write_nosigpipe(int fd, const char* data, std::size_t len) {
  sigset_t block, old;
  sigemptyset(&block);
  sigaddset(&block, SIGPIPE);
  pthread_sigmask(SIG_BLOCK, &block, &old);
  ssize_t n = ::write(fd, data, len);
  int saved = errno;
  if (n < 0 && saved == EPIPE) {
    timespec zero{0, 0};
    sigtimedwait(&block, nullptr, &zero);
  }
  pthread_sigmask(SIG_SETMASK, &old, nullptr);
  errno = saved;
  return n;
}

}  // namespace detail

inline ProcessResult run_process(const ProcessOptions& opts) {
  if (opts.argv.empty()) throw ConfigError("empty command line");

  std::vector<std::string> env_strings;
  if (opts.env_allowlist) {
    for (const auto& name : *opts.env_allowlist) {
      if (const char* v = std::getenv(name.c_str())) env_strings.push_back(name + "=" + v);
    }
  }
  std::vector<char*> argv;
  for (const auto& a : opts.argv) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(nullptr);
  std::vector<char*> envp;
  for (auto& e : env_strings) envp.push_back(e.data());
  envp.push_back(nullptr);

  detail::Pipe in, out, err;
  const pid_t pid = ::fork();
  if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(in.fd[0], STDIN_FILENO);
    ::dup2(out.fd[1], STDOUT_FILENO);
    ::dup2(err.fd[1], STDERR_FILENO);
    if (!opts.cwd.empty() && ::chdir(opts.cwd.c_str()) != 0) ::_exit(126);
    if (opts.env_allowlist) {
      ::execvpe(argv[0], argv.data(), envp.data());
    } else {
      ::execvp(argv[0], argv.data());
    }
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  in.close_end(0);
  out.close_end(1);
  err.close_end(1);
  detail::set_nonblocking(in.fd[1]);
  detail::set_nonblocking(out.fd[0]);
  detail::set_nonblocking(err.fd[0]);

  ProcessResult result;
  std::size_t written = 0;
  if (opts.stdin_data.empty()) in.close_end(1);

  const auto deadline = std::chrono::steady_clock::now() + opts.timeout;
  int status = 0;
  bool exited = false;
  char buf[4096];
  while (true) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      result.timed_out = true;
      break;
    }
    if (!exited && ::waitpid(pid, &status, WNOHANG) == pid) exited = true;

    std::vector<pollfd> fds;
    if (in.fd[1] >= 0) fds.push_back({in.fd[1], POLLOUT, 0});
    if (out.fd[0] >= 0) fds.push_back({out.fd[0], POLLIN, 0});
    if (err.fd[0] >= 0) fds.push_back({err.fd[0], POLLIN, 0});
    if (fds.empty()) {
      if (exited) break;
      std::this_thread::sleep_for(std::chrono::microseconds(200));
      continue;
    }
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    int wait_ms = static_cast<int>(std::min<long long>(remaining + 1, exited ? 50 : 10));
    if (::poll(fds.data(), fds.size(), wait_ms) < 0 && errno != EINTR) break;
    for (const auto& p : fds) {
      if (p.revents == 0) continue;
      if (p.fd == in.fd[1]) {
        ssize_t n = detail::write_nosigpipe(in.fd[1], opts.stdin_data.data() + written,
                                            opts.stdin_data.size() - written);
        if (n > 0) written += static_cast<std::size_t>(n);
        if ((n < 0 && errno != EAGAIN) || written == opts.stdin_data.size()) in.close_end(1);
      } else {
        ssize_t n = ::read(p.fd, buf, sizeof buf);
        std::string& sink = p.fd == out.fd[0] ? result.out : result.err;
        if (n > 0) {
          sink.append(buf, static_cast<std::size_t>(n));
        } else if (n == 0 || errno != EAGAIN) {
          if (p.fd == out.fd[0]) out.close_end(0); else err.close_end(0);
        }
      }
    }
  }

  if (result.timed_out) {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
    if (!exited) ::waitpid(pid, &status, 0);
    return result;
  }
  if (!exited) ::waitpid(pid, &status, 0);
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.term_signal = WTERMSIG(status);
  }
  return result;
}

}  // namespace migrl

#endif  // MIGRL_PROCESS_HPP_
