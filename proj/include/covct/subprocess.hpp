//*****************************************************************************
// Copyright 2026 The covct Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//*****************************************************************************
#pragma once

// Run a shell command with a byte payload on stdin, collecting stdout and
// stderr, under a wall-clock timeout. POSIX only.

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include "covct/error.hpp"

namespace covct::process {

struct Result {
    int exit_code = -1;       // valid when !signaled
    bool signaled = false;
    int signal = 0;
    std::string out;
    std::string err;
};

namespace detail {

class Fd {
public:
    Fd() = default;
    explicit Fd(int fd) : fd_(fd) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    Fd(Fd&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Fd& operator=(Fd&& other) noexcept {
        if (this != &other) {
            reset();
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    ~Fd() { reset(); }

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

inline void make_pipe(Fd& read_end, Fd& write_end) {
    int fds[2];
    if (::pipe2(fds, O_CLOEXEC) != 0) throw Error(ErrorKind::Backend, std::string("pipe: ") + std::strerror(errno));
    read_end = Fd(fds[0]);
    write_end = Fd(fds[1]);
}

// A child that exits early must not kill us with SIGPIPE on our next write.
inline void ignore_sigpipe_once() {
    static std::once_flag flag;
    std::call_once(flag, [] { std::signal(SIGPIPE, SIG_IGN); });
}

} // namespace detail

/// Runs `/bin/sh -c command`, feeding `input` on stdin. Throws
/// Error(Timeout) after killing the child if `timeout` elapses.
inline Result run(const std::string& command, std::span<const std::uint8_t> input,
                  std::chrono::milliseconds timeout) {
    detail::ignore_sigpipe_once();
    detail::Fd in_r, in_w, out_r, out_w, err_r, err_w;
    detail::make_pipe(in_r, in_w);
    detail::make_pipe(out_r, out_w);
    detail::make_pipe(err_r, err_w);

    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorKind::Backend, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
        // Child: only async-signal-safe calls from here on.
        ::dup2(in_r.get(), 0);
        ::dup2(out_w.get(), 1);
        ::dup2(err_w.get(), 2);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    in_r.reset();
    out_w.reset();
    err_w.reset();
    ::fcntl(in_w.get(), F_SETFL, O_NONBLOCK);

    Result result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::size_t written = 0;
    if (input.empty()) in_w.reset();
    char buf[65536];
    bool timed_out = false;

    while (out_r || err_r) {
        pollfd fds[3];
        int nfds = 0;
        int idx_in = -1, idx_out = -1, idx_err = -1;
        if (in_w) { idx_in = nfds; fds[nfds++] = {in_w.get(), POLLOUT, 0}; }
        if (out_r) { idx_out = nfds; fds[nfds++] = {out_r.get(), POLLIN, 0}; }
        if (err_r) { idx_err = nfds; fds[nfds++] = {err_r.get(), POLLIN, 0}; }

        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            timed_out = true;
            break;
        }
        const int ready = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (ready < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (idx_in >= 0 && fds[idx_in].revents) {
            if (fds[idx_in].revents & (POLLERR | POLLHUP)) {
                in_w.reset(); // child closed stdin early
            } else {
                const ssize_t n = ::write(in_w.get(), input.data() + written, input.size() - written);
                if (n > 0) written += static_cast<std::size_t>(n);
                else if (n < 0 && errno != EAGAIN && errno != EINTR) in_w.reset();
                if (written == input.size()) in_w.reset();
            }
        }
        auto drain = [&](int idx, detail::Fd& fd, std::string& sink) {
            if (idx < 0 || !fds[idx].revents) return;
            const ssize_t n = ::read(fd.get(), buf, sizeof(buf));
            if (n > 0) sink.append(buf, static_cast<std::size_t>(n));
            else if (n == 0 || (errno != EAGAIN && errno != EINTR)) fd.reset();
        };
        drain(idx_out, out_r, result.out);
        drain(idx_err, err_r, result.err);
    }
    in_w.reset();

    int status = 0;
    if (timed_out) {
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        throw Error(ErrorKind::Timeout, "scorer command exceeded " + std::to_string(timeout.count()) +
                                            " ms: " + command);
    }
    // Outputs closed; the child may still be running. Honour the deadline.
    while (true) {
        const pid_t w = ::waitpid(pid, &status, WNOHANG);
        if (w == pid) break;
        if (w < 0 && errno != EINTR) throw Error(ErrorKind::Backend, std::string("waitpid: ") + std::strerror(errno));
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            throw Error(ErrorKind::Timeout, "scorer command exceeded " + std::to_string(timeout.count()) +
                                                " ms: " + command);
        }
        ::usleep(1000);
    }
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.signaled = true;
        result.signal = WTERMSIG(status);
    }
    return result;
}

} // namespace covct::process
