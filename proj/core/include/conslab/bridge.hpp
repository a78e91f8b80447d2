#pragma once

// Client side of the JSON-lines scorer bridge. The bridge process wraps a
// pretrained masked LM; this harness only speaks the protocol:
//
//   {"type":"hello","id":0}
//     -> {"type":"hello","id":0,"model_id":str,"mask_token":str,"vocab_size":int}
//   {"type":"tokenize_check","id":n,"words":[...]}
//     -> {"id":n,"single":[bool,...]}
//   {"type":"score","id":n,"text":str,"candidates":[...],"want_hidden":bool}
//     -> {"id":n,"log_probs":[...],"hidden":[...]?}
//
// Any request may instead be answered with {"type":"error","id":n,"message":str}.
// A null entry in log_probs marks a candidate the bridge could not score.

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "conslab/scorer.hpp"

namespace conslab {

/// A bidirectional newline-delimited text channel.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  virtual void write_line(std::string_view line) = 0;
  /// Returns false on end of stream.
  virtual bool read_line(std::string& line) = 0;
};

/// Spawns `/bin/sh -c command` and talks to it over its stdin/stdout.
std::unique_ptr<LineChannel> spawn_process_channel(const std::string& command);
/// Connects to host:port over TCP.
std::unique_ptr<LineChannel> connect_tcp_channel(const std::string& host, std::uint16_t port);

/// Endpoint syntax: "tcp://host:port", "stdio:<command>", or a bare command.
std::unique_ptr<LineChannel> open_channel(const std::string& endpoint);

struct BridgeHello {
  std::string model_id;
  std::string mask_token;
  std::int64_t vocab_size = 0;
};

class BridgeScorer final : public Scorer {
 public:
  /// Performs the hello handshake; throws ScorerError on failure.
  explicit BridgeScorer(std::unique_ptr<LineChannel> channel);
  static std::unique_ptr<BridgeScorer> connect(const std::string& endpoint);

  std::string model_id() const override { return hello_.model_id; }
  std::string mask_token() const override { return hello_.mask_token; }
  ScoreResponse score(const ScoreRequest& request) const override;
  std::vector<bool> tokenize_check(std::span<const std::string> words) const override;
  bool supports_hidden() const override { return true; }

  const BridgeHello& hello() const { return hello_; }

 private:
  nlohmann::json round_trip(nlohmann::json request) const;

  std::unique_ptr<LineChannel> channel_;
  BridgeHello hello_;
  mutable std::mutex mutex_;
  mutable std::int64_t next_id_ = 1;
};

}  // namespace conslab
