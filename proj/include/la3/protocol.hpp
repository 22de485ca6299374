#pragma once

// Evaluator wire protocol: line-delimited JSON over a child process's stdin/stdout.
//
//   parent -> {"cmd":"init","num_labels":N,"ops":[16 names],"val_spec":...}
//   child  <- {"ok":true}
//   parent -> {"cmd":"eval","label":y,"triple":[i,j,k],"scope":"label"|"dataset","seed":s}
//   child  <- {"reward":r}            (or {"error":"..."})
//   parent -> {"cmd":"shutdown"}

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <csignal>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "la3/augment.hpp"
#include "la3/common.hpp"
#include "la3/evaluator.hpp"

namespace la3 {

inline constexpr int kProtocolVersion = 1;

inline nlohmann::json op_names_json() {
  auto arr = nlohmann::json::array();
  for (auto name : kOpNames) arr.push_back(std::string(name));
  return arr;
}

inline nlohmann::json triple_to_json(const AugTriple& t) {
  return nlohmann::json::array({op_code(t[0]), op_code(t[1]), op_code(t[2])});
}

inline AugTriple triple_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw format_error("triple must be an array of 3 op codes");
  for (const auto& v : j)
    if (!v.is_number_integer()) throw format_error("triple entries must be integers");
  return AugTriple::from_codes(j[0].get<int>(), j[1].get<int>(), j[2].get<int>());
}

/// Serves the protocol on the given streams, answering from `source`.
/// Malformed requests get an {"error":...} reply; returns on shutdown or EOF.
inline void serve_protocol(std::istream& in, std::ostream& out, RewardSource& source) {
  std::string line;
  auto reply = [&](const nlohmann::json& j) { out << j.dump() << '\n' << std::flush; };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json req;
    try {
      req = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      reply({{"error", std::string("malformed json: ") + e.what()}});
      continue;
    }
    try {
      const std::string cmd = req.at("cmd").get<std::string>();
      if (cmd == "init") {
        const int n = req.at("num_labels").get<int>();
        if (n != source.num_labels()) {
          reply({{"error", "num_labels mismatch: evaluator has " + std::to_string(source.num_labels())}});
          continue;
        }
        if (req.contains("ops") && req["ops"] != op_names_json()) {
          reply({{"error", "op table mismatch"}});
          continue;
        }
        reply({{"ok", true}, {"version", kProtocolVersion}});
      } else if (cmd == "eval") {
        const AugTriple t = triple_from_json(req.at("triple"));
        const auto seed = req.at("seed").get<std::uint64_t>();
        const std::string scope = req.value("scope", std::string("label"));
        double r = 0.0;
        if (scope == "label") {
          r = source.label_reward(t, req.at("label").get<int>(), seed);
        } else if (scope == "dataset") {
          r = source.dataset_reward(t, seed);
        } else {
          reply({{"error", "unknown scope '" + scope + "'"}});
          continue;
        }
        reply({{"reward", r}});
      } else if (cmd == "shutdown") {
        return;
      } else {
        reply({{"error", "unknown cmd '" + cmd + "'"}});
      }
    } catch (const std::exception& e) {
      reply({{"error", e.what()}});
    }
  }
}

/// Parent side: spawns `/bin/sh -c command` and talks the protocol to it.
/// One request in flight at a time; any protocol failure raises an
/// evaluator_unavailable error.
class ExternalEvaluator final : public RewardSource {
 public:
  struct Options {
    int num_labels = 0;
    nlohmann::json val_spec = nullptr;
    int handshake_timeout_ms = 10000;
    int request_timeout_ms = 600000;
  };

  ExternalEvaluator(const std::string& command, Options opt) : opt_(std::move(opt)) {
    if (opt_.num_labels <= 0) throw config_error("external evaluator: num_labels must be positive");
    std::signal(SIGPIPE, SIG_IGN);
    int to_child[2], from_child[2];
    if (pipe(to_child) != 0) throw evaluator_error("pipe failed");
    if (pipe(from_child) != 0) {
      close(to_child[0]);
      close(to_child[1]);
      throw evaluator_error("pipe failed");
    }
    pid_ = fork();
    if (pid_ < 0) throw evaluator_error("fork failed");
    if (pid_ == 0) {
      dup2(to_child[0], STDIN_FILENO);
      dup2(from_child[1], STDOUT_FILENO);
      close(to_child[0]);
      close(to_child[1]);
      close(from_child[0]);
      close(from_child[1]);
      execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    write_fd_ = to_child[1];
    read_fd_ = from_child[0];
    fcntl(write_fd_, F_SETFD, FD_CLOEXEC);
    fcntl(read_fd_, F_SETFD, FD_CLOEXEC);

    try {
      nlohmann::json init = {{"cmd", "init"},
                             {"num_labels", opt_.num_labels},
                             {"ops", op_names_json()},
                             {"val_spec", opt_.val_spec},
                             {"version", kProtocolVersion}};
      auto resp = exchange(init, opt_.handshake_timeout_ms);
      if (!resp.is_object() || resp.value("ok", false) != true)
        throw evaluator_error("external evaluator: bad handshake reply: " + resp.dump());
    } catch (...) {
      terminate_child();
      throw;
    }
  }

  ExternalEvaluator(const ExternalEvaluator&) = delete;
  ExternalEvaluator& operator=(const ExternalEvaluator&) = delete;

  ~ExternalEvaluator() override {
    if (pid_ > 0) {
      const std::string msg = "{\"cmd\":\"shutdown\"}\n";
      [[maybe_unused]] auto n = ::write(write_fd_, msg.data(), msg.size());
      terminate_child();
    }
  }

  int num_labels() const override { return opt_.num_labels; }

  double label_reward(const AugTriple& triple, int label, std::uint64_t seed) override {
    if (label < 0 || label >= opt_.num_labels) throw input_error("unknown label " + std::to_string(label));
    return request({{"cmd", "eval"}, {"label", label}, {"triple", triple_to_json(triple)}, {"scope", "label"}, {"seed", seed}});
  }

  double dataset_reward(const AugTriple& triple, std::uint64_t seed) override {
    return request({{"cmd", "eval"}, {"label", 0}, {"triple", triple_to_json(triple)}, {"scope", "dataset"}, {"seed", seed}});
  }

 private:
  double request(const nlohmann::json& req) {
    auto resp = exchange(req, opt_.request_timeout_ms);
    if (resp.is_object() && resp.contains("error"))
      throw evaluator_error("external evaluator error: " + resp["error"].dump());
    if (!resp.is_object() || !resp.contains("reward") || !resp["reward"].is_number())
      throw evaluator_error("external evaluator: malformed reply: " + resp.dump());
    return resp["reward"].get<double>();
  }

  nlohmann::json exchange(const nlohmann::json& req, int timeout_ms) {
    if (pid_ <= 0) throw evaluator_error("external evaluator: process not running");
    const std::string line = req.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
      const auto n = ::write(write_fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw evaluator_error(std::string("external evaluator: write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
    const std::string resp = read_line(timeout_ms);
    try {
      return nlohmann::json::parse(resp);
    } catch (const nlohmann::json::exception&) {
      throw evaluator_error("external evaluator: malformed reply line: " + resp);
    }
  }

  std::string read_line(int timeout_ms) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
      if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
      if (left <= 0) throw evaluator_error("external evaluator: timed out waiting for reply");
      pollfd pfd{read_fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(left));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw evaluator_error("external evaluator: poll failed");
      }
      if (rc == 0) continue;
      char chunk[4096];
      const auto n = ::read(read_fd_, chunk, sizeof chunk);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw evaluator_error("external evaluator: read failed");
      }
      if (n == 0) throw evaluator_error("external evaluator: process exited");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void terminate_child() {
    if (write_fd_ >= 0) close(write_fd_);
    write_fd_ = -1;
    if (pid_ > 0) {
      // give the child a moment to exit on its own, then kill it
      for (int i = 0; i < 50; ++i) {
        int status = 0;
        if (waitpid(pid_, &status, WNOHANG) == pid_) {
          pid_ = -1;
          break;
        }
        usleep(10000);
      }
      if (pid_ > 0) {
        kill(pid_, SIGKILL);
        waitpid(pid_, nullptr, 0);
        pid_ = -1;
      }
    }
    if (read_fd_ >= 0) close(read_fd_);
    read_fd_ = -1;
  }

  Options opt_;
  pid_t pid_ = -1;
  int write_fd_ = -1;
  int read_fd_ = -1;
  std::string buffer_;
};

}  // namespace la3
