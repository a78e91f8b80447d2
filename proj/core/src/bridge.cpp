#include "conslab/bridge.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>

#include <netdb.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

namespace conslab {
namespace {

using nlohmann::json;

class FdChannel : public LineChannel {
 public:
  FdChannel(int read_fd, int write_fd, pid_t child = -1)
      : read_fd_(read_fd), write_fd_(write_fd), child_(child) {}

  ~FdChannel() override {
    if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
    if (read_fd_ >= 0) ::close(read_fd_);
    if (child_ > 0) {
      int status = 0;
      ::waitpid(child_, &status, 0);
    }
  }

  FdChannel(const FdChannel&) = delete;
  FdChannel& operator=(const FdChannel&) = delete;

  void write_line(std::string_view line) override {
    std::string buffer(line);
    buffer.push_back('\n');
    std::size_t sent = 0;
    while (sent < buffer.size()) {
      const auto n = ::write(write_fd_, buffer.data() + sent, buffer.size() - sent);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ScorerError(std::string("bridge write failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  bool read_line(std::string& line) override {
    line.clear();
    while (true) {
      const auto nl = pending_.find('\n');
      if (nl != std::string::npos) {
        line = pending_.substr(0, nl);
        pending_.erase(0, nl + 1);
        return true;
      }
      char chunk[4096];
      const auto n = ::read(read_fd_, chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ScorerError(std::string("bridge read failed: ") + std::strerror(errno));
      }
      if (n == 0) {
        if (pending_.empty()) return false;
        line = std::move(pending_);
        pending_.clear();
        return true;
      }
      pending_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int read_fd_;
  int write_fd_;
  pid_t child_;
  std::string pending_;
};

}  // namespace

std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command) {
  std::signal(SIGPIPE, SIG_IGN);
  int to_child[2];
  int from_child[2];
  if (::pipe(to_child) != 0) throw ScorerError("pipe() failed");
  if (::pipe(from_child) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw ScorerError("pipe() failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw ScorerError("fork() failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::close(to_child[0]);
    ::close(to_child[1]);
    ::close(from_child[0]);
    ::close(from_child[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  return std::make_unique<FdChannel>(from_child[0], to_child[1], pid);
}

std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const auto service = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
    throw ScorerError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  int fd = -1;
  for (auto* ai = found; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(found);
  if (fd < 0) throw ScorerError("cannot connect to " + host + ":" + service);
  std::signal(SIGPIPE, SIG_IGN);
  return std::make_unique<FdChannel>(fd, fd);
}

std::unique_ptr<LineChannel> open_channel(const std::string& endpoint) {
  constexpr std::string_view kTcp = "tcp://";
  constexpr std::string_view kStdio = "stdio:";
  if (endpoint.starts_with(kTcp)) {
    const auto rest = endpoint.substr(kTcp.size());
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos) throw ScorerError("bridge endpoint lacks a port: " + endpoint);
    const auto port = std::stoul(rest.substr(colon + 1));
    if (port == 0 || port > 65535) throw ScorerError("bad port in " + endpoint);
    return connect_tcp_channel(rest.substr(0, colon), static_cast<std::uint16_t>(port));
  }
  if (endpoint.starts_with(kStdio)) return spawn_process_channel(endpoint.substr(kStdio.size()));
  if (endpoint.empty()) throw ScorerError("empty bridge endpoint");
  return spawn_process_channel(endpoint);
}

BridgeScorer::BridgeScorer(std::unique_ptr<LineChannel> channel) : channel_(std::move(channel)) {
  json reply;
  try {
    channel_->write_line(json{{"type", "hello"}, {"id", 0}}.dump());
    std::string line;
    if (!channel_->read_line(line)) throw ScorerError("bridge closed before handshake");
    reply = json::parse(line);
  } catch (const json::exception& e) {
    throw ScorerError(std::string("bridge handshake: malformed reply: ") + e.what());
  }
  if (reply.value("type", "") == "error") {
    throw ScorerError("bridge handshake failed: " + reply.value("message", std::string("?")));
  }
  try {
    if (reply.at("type") != "hello" || reply.at("id") != 0) {
      throw ScorerError("bridge handshake: unexpected reply " + reply.dump());
    }
    hello_.model_id = reply.at("model_id").get<std::string>();
    hello_.mask_token = reply.at("mask_token").get<std::string>();
    hello_.vocab_size = reply.at("vocab_size").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw ScorerError(std::string("bridge handshake: ") + e.what());
  }
  if (hello_.mask_token.empty()) throw ScorerError("bridge handshake: empty mask token");
}

std::unique_ptr<BridgeScorer> BridgeScorer::connect(const std::string& endpoint) {
  return std::make_unique<BridgeScorer>(open_channel(endpoint));
}

json BridgeScorer::round_trip(json request) const {
  std::lock_guard lock(mutex_);
  const auto id = next_id_++;
  request["id"] = id;
  std::string wire;
  try {
    wire = request.dump();
  } catch (const json::exception& e) {
    throw ScorerError(std::string("bridge request is not encodable: ") + e.what());
  }
  channel_->write_line(wire);
  std::string line;
  if (!channel_->read_line(line)) throw ScorerError("bridge closed the connection");
  json reply;
  try {
    reply = json::parse(line);
  } catch (const json::exception& e) {
    throw ScorerError(std::string("bridge sent malformed JSON: ") + e.what());
  }
  if (!reply.contains("id") || reply["id"] != id) {
    throw ScorerError("bridge reply id mismatch: expected " + std::to_string(id) + ", got " +
                      line);
  }
  if (reply.value("type", "") == "error") {
    throw ScorerError("bridge error: " + reply.value("message", std::string("?")));
  }
  return reply;
}

ScoreResponse BridgeScorer::score(const ScoreRequest& request) const {
  if (request.candidates.empty()) throw ScorerError("empty candidate set");
  const auto reply = round_trip({{"type", "score"},
                                 {"text", request.text},
                                 {"candidates", request.candidates},
                                 {"want_hidden", request.want_hidden}});
  ScoreResponse response;
  response.model_id = hello_.model_id;
  if (!reply.contains("log_probs")) throw ScorerError("bridge reply lacks log_probs: " + reply.dump());
  const auto& scores = reply["log_probs"];
  if (!scores.is_array() || scores.size() != request.candidates.size()) {
    throw ScorerError("bridge returned a score vector of the wrong length");
  }
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!scores[i].is_number()) {
      throw ScorerError("bridge could not score candidate \"" + request.candidates[i] + "\"");
    }
    const auto v = scores[i].get<double>();
    if (!std::isfinite(v)) throw ScorerError("bridge returned a non-finite score");
    response.log_scores.push_back(v);
  }
  if (request.want_hidden) {
    if (!reply.contains("hidden")) throw ScorerError("bridge did not return a hidden vector");
    try {
      response.hidden = reply["hidden"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ScorerError(std::string("bridge returned a bad hidden vector: ") + e.what());
    }
  }
  return response;
}

std::vector<bool> BridgeScorer::tokenize_check(std::span<const std::string> words) const {
  const auto reply = round_trip(
      {{"type", "tokenize_check"}, {"words", std::vector<std::string>(words.begin(), words.end())}});
  std::vector<bool> flags;
  try {
    flags = reply.at("single").get<std::vector<bool>>();
  } catch (const json::exception& e) {
    throw ScorerError(std::string("bridge returned bad verdicts: ") + e.what());
  }
  if (flags.size() != words.size()) throw ScorerError("bridge returned wrong verdict count");
  return flags;
}

}  // namespace conslab
