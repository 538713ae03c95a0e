// Copyright 2026 The miro Authors. All Rights Reserved.
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

// Client for an external language model speaking newline-delimited JSON over
// the child's stdin/stdout:
//
//   -> {"type":"hello","version":1}
//   <- {"type":"model","n_vocab":N,"name":"..."}
//   -> {"type":"next","prefix":[ids...]}
//   <- {"type":"dist","probs_sparse":[[id,prob],...],"rest_mass":r}
//   -> {"type":"bye"}
//
// rest_mass is spread uniformly over the ids missing from probs_sparse. The
// server may answer any request with {"type":"error","message":"..."}.

#pragma once

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "miro/decoding.hpp"
#include "miro/error.hpp"
#include "miro/models/model_source.hpp"

namespace miro {

struct StdioClientConfig {
  std::chrono::milliseconds timeout{60000};
  /// When set, the handshake must advertise exactly this vocabulary size.
  std::optional<std::size_t> expected_n_vocab;
  /// Allowed |sum(probs_sparse) + rest_mass - 1| before renormalizing.
  double mass_tolerance = 1e-6;
};

class StdioModelClient final : public ModelSource {
 public:
  /// Starts `command` through /bin/sh and performs the handshake.
  explicit StdioModelClient(const std::string& command, StdioClientConfig config = {})
      : config_(config) {
    int sv[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0)
      throw ModelIoError(std::string("socketpair: ") + std::strerror(errno));
    pid_ = ::fork();
    if (pid_ < 0) {
      ::close(sv[0]);
      ::close(sv[1]);
      throw ModelIoError(std::string("fork: ") + std::strerror(errno));
    }
    if (pid_ == 0) {
      ::close(sv[0]);
      ::dup2(sv[1], STDIN_FILENO);
      ::dup2(sv[1], STDOUT_FILENO);
      if (sv[1] > STDOUT_FILENO) ::close(sv[1]);
      ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(sv[1]);
    fd_ = sv[0];

    try {
      send(nlohmann::json{{"type", "hello"}, {"version", 1}});
      const auto reply = receive(-1);
      if (reply.value("type", "") != "model" || !reply.contains("n_vocab") ||
          !reply["n_vocab"].is_number_unsigned())
        throw ModelIoError("handshake: expected a model reply, got " + reply.dump());
      n_vocab_ = reply["n_vocab"].get<std::size_t>();
      if (n_vocab_ == 0) throw ModelIoError("handshake: server advertises n_vocab = 0");
      name_ = reply.value("name", std::string("stdio"));
      if (config_.expected_n_vocab && *config_.expected_n_vocab != n_vocab_)
        throw ModelIoError("handshake: server n_vocab " + std::to_string(n_vocab_) +
                           " does not match requested " +
                           std::to_string(*config_.expected_n_vocab));
    } catch (...) {
      shutdown(false);
      throw;
    }
  }

  StdioModelClient(const StdioModelClient&) = delete;
  StdioModelClient& operator=(const StdioModelClient&) = delete;

  ~StdioModelClient() override { shutdown(true); }

  std::size_t n_vocab() const override { return n_vocab_; }
  std::string name() const override { return "stdio(" + name_ + ")"; }

  std::shared_ptr<const TokenDistribution> next_distribution(
      std::span<const TokenId> prefix) override {
    const long step = static_cast<long>(requests_++);
    send(nlohmann::json{{"type", "next"}, {"prefix", std::vector<TokenId>(prefix.begin(), prefix.end())}},
         step);
    const auto reply = receive(step);
    return std::make_shared<const TokenDistribution>(parse_dist(reply, step));
  }

  /// Sends "bye" and reaps the child. Returns its exit status.
  int close() {
    shutdown(true);
    return exit_status_;
  }

 private:
  TokenDistribution parse_dist(const nlohmann::json& reply, long step) const {
    if (reply.value("type", "") == "error")
      throw ModelIoError("server error: " + reply.value("message", std::string("?")), step);
    if (reply.value("type", "") != "dist" || !reply.contains("probs_sparse") ||
        !reply["probs_sparse"].is_array())
      throw ModelIoError("malformed response: " + reply.dump().substr(0, 200), step);
    const double rest = reply.value("rest_mass", 0.0);
    if (!(rest >= 0.0 && rest <= 1.0)) throw ModelIoError("rest_mass outside [0, 1]", step);

    std::vector<bool> listed(n_vocab_, false);
    std::vector<TokenId> ids;
    std::vector<double> weights;
    double mass = rest;
    for (const auto& entry : reply["probs_sparse"]) {
      if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_unsigned() ||
          !entry[1].is_number())
        throw ModelIoError("malformed probs_sparse entry: " + entry.dump(), step);
      const auto id = entry[0].get<std::uint64_t>();
      const double p = entry[1].get<double>();
      if (id >= n_vocab_) throw ModelIoError("token id " + std::to_string(id) + " >= n_vocab", step);
      if (listed[id]) throw ModelIoError("duplicate token id " + std::to_string(id), step);
      if (!(p >= 0.0) || !std::isfinite(p)) throw ModelIoError("invalid probability", step);
      listed[id] = true;
      ids.push_back(static_cast<TokenId>(id));
      weights.push_back(p);
      mass += p;
    }
    if (std::abs(mass - 1.0) > config_.mass_tolerance)
      throw ModelIoError("probabilities sum to " + std::to_string(mass) + ", not 1", step);
    const std::size_t unlisted = n_vocab_ - ids.size();
    if (rest > 0.0 && unlisted > 0) {
      const double each = rest / static_cast<double>(unlisted);
      for (std::size_t t = 0; t < n_vocab_; ++t) {
        if (listed[t]) continue;
        ids.push_back(static_cast<TokenId>(t));
        weights.push_back(each);
      }
    }
    try {
      return TokenDistribution::from_weights(std::move(ids), std::move(weights), n_vocab_);
    } catch (const InvalidDistribution& e) {
      throw ModelIoError(e.what(), step);
    }
  }

  void send(const nlohmann::json& msg, long step = -1) {
    const std::string line = msg.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::send(fd_, line.data() + off, line.size() - off, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ModelIoError(child_failure("write failed: " + std::string(std::strerror(errno))),
                           step);
      }
      off += static_cast<std::size_t>(n);
    }
  }

  nlohmann::json receive(long step) {
    const auto deadline = std::chrono::steady_clock::now() + config_.timeout;
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        const std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (line.empty()) continue;
        try {
          return nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
          throw ModelIoError("malformed JSON from server: " + line.substr(0, 200), step);
        }
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
          deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) throw ModelIoError("timed out waiting for server", step);
      pollfd pfd{fd_, POLLIN, 0};
      const int r = ::poll(&pfd, 1, static_cast<int>(left.count()));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw ModelIoError(std::string("poll: ") + std::strerror(errno), step);
      }
      if (r == 0) throw ModelIoError("timed out waiting for server", step);
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ModelIoError(child_failure(std::string("read: ") + std::strerror(errno)), step);
      }
      if (n == 0) throw ModelIoError(child_failure("server closed the connection"), step);
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// Appends the child's exit status to `what` if it has already exited.
  std::string child_failure(const std::string& what) {
    if (pid_ > 0) {
      int status = 0;
      for (int i = 0; i < 50; ++i) {
        const pid_t r = ::waitpid(pid_, &status, WNOHANG);
        if (r == pid_) {
          pid_ = -1;
          exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
          break;
        }
        ::usleep(2000);
      }
    }
    if (pid_ < 0 && exit_status_ != 0)
      return what + " (server exited with status " + std::to_string(exit_status_) + ")";
    return what;
  }

  void shutdown(bool polite) {
    if (fd_ >= 0) {
      if (polite) {
        const std::string bye = "{\"type\":\"bye\"}\n";
        (void)::send(fd_, bye.data(), bye.size(), MSG_NOSIGNAL);
      }
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ > 0) {
      int status = 0;
      pid_t r = 0;
      for (int i = 0; i < 250 && r == 0; ++i) {
        r = ::waitpid(pid_, &status, WNOHANG);
        if (r == 0) ::usleep(2000);
      }
      if (r == 0) {
        ::kill(pid_, SIGKILL);
        r = ::waitpid(pid_, &status, 0);
      }
      if (r == pid_)
        exit_status_ = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
      pid_ = -1;
    }
  }

  StdioClientConfig config_;
  pid_t pid_ = -1;
  int fd_ = -1;
  std::size_t n_vocab_ = 0;
  std::string name_;
  std::string buffer_;
  std::size_t requests_ = 0;
  int exit_status_ = 0;
};

}  // namespace miro
