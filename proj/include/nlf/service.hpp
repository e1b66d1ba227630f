// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nlf/dataset.hpp"
#include "nlf/network.hpp"

namespace nlf {

/// Orthonormalizes a pose whose rotation is within `tol` of orthonormal and
/// rejects anything further off.
Pose accept_pose(const Pose& pose, double tol = 1e-3);

/// Eval-mode render of one pose to PNG bytes. The service and `nlf render`
/// both go through here, so their frames are byte-identical.
std::string render_frame_png(Model<float>& model, const ModelCamera& camera, const Pose& pose,
                             std::optional<double> near = std::nullopt, std::optional<double> far = std::nullopt);

struct RenderRequest {
  nlohmann::json id;  // echoed verbatim; any JSON scalar
  Pose pose;
  std::optional<double> near;
  std::optional<double> far;

  /// Throws std::invalid_argument naming the offending field.
  static RenderRequest from_json(const nlohmann::json& j);
};

/// Wire framing. Requests: u32 big-endian length + UTF-8 JSON. Responses:
/// u32 big-endian header length + JSON header + `bytes` payload bytes.
namespace wire {
inline constexpr std::uint32_t kMaxRequestBytes = 1 << 20;
std::string frame_request(const std::string& json_text);
std::string frame_response(const nlohmann::json& header, const std::string& payload);
/// Splits a response message; throws on truncation or a byte-count mismatch.
std::pair<nlohmann::json, std::string> parse_response(const std::string& message);
std::uint32_t read_be32(const unsigned char* p);
void append_be32(std::string& out, std::uint32_t v);
}  // namespace wire

/// RFC 6455 helpers for the browser transport.
namespace websocket {
std::string accept_key(const std::string& client_key);
/// Single frame with FIN set. Servers send unmasked frames; clients must mask.
std::string encode_frame(const std::string& payload, std::uint8_t opcode = 0x2, bool mask = false);
}  // namespace websocket

struct ServerOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;  // 0: pick a free port
  std::size_t max_queue = 8;
};

/// Pose-in, PNG-out render service. One worker renders queued requests in
/// arrival order; a connection's newer request replaces its queued, not yet
/// started one (the replaced request gets no reply). When the queue is full a
/// new request is answered with an error.
class RenderServer {
 public:
  RenderServer(Model<float> model, ModelCamera camera, ServerOptions options);
  ~RenderServer();
  RenderServer(const RenderServer&) = delete;
  RenderServer& operator=(const RenderServer&) = delete;

  /// Binds and starts serving; returns the bound port.
  std::uint16_t start();
  void stop();

  std::uint16_t port() const { return port_; }
  std::uint64_t frames_rendered() const { return frames_rendered_.load(); }

 private:
  struct Connection;
  struct Reader {
    std::shared_ptr<Connection> conn;
    std::thread thread;
  };
  struct Job {
    std::shared_ptr<Connection> conn;
    RenderRequest request;
  };

  void accept_loop();
  void serve_connection(std::shared_ptr<Connection> conn);
  void handle_message(const std::shared_ptr<Connection>& conn, const std::string& text);
  void worker_loop();
  void send(const std::shared_ptr<Connection>& conn, const nlohmann::json& header, const std::string& payload);

  Model<float> model_;
  ModelCamera camera_;
  ServerOptions options_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::atomic<std::uint64_t> frames_rendered_{0};

  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Job> queue_;
  std::vector<Reader> readers_;

  std::thread acceptor_;
  std::thread worker_;
};

}  // namespace nlf
