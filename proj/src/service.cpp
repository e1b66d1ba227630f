// Copyright 2026 The nlf Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlf/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "nlf/image_io.hpp"

namespace nlf {

using nlohmann::json;

Pose accept_pose(const Pose& pose, double tol) {
  if (!pose.matrix.allFinite()) throw std::invalid_argument("pose: non-finite entries");
  const Eigen::Matrix3d r = pose.rotation();
  const double dev = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (dev > tol)
    throw std::invalid_argument("pose: rotation deviates from orthonormal by " + std::to_string(dev) +
                                " (tolerance " + std::to_string(tol) + ")");
  return orthonormalized(pose);
}

std::string render_frame_png(Model<float>& model, const ModelCamera& camera, const Pose& pose,
                             std::optional<double> near, std::optional<double> far) {
  if (model.config.upsample_factor() != camera.sr_factor)
    throw std::invalid_argument("model upsamples by " + std::to_string(model.config.upsample_factor()) +
                                " but the camera expects " + std::to_string(camera.sr_factor));
  const double n = near.value_or(camera.near), f = far.value_or(camera.far);
  if (!(n > 0) || !(n < f)) throw std::invalid_argument("near/far must satisfy 0 < near < far");
  const RayGrid grid = generate_ray_grid(camera.lo, accept_pose(pose), n, f);
  Rng unused(0);
  const EncodedRayTensor enc = encode_rays(grid, model.config.K, model.config.L, SampleMode::test, unused);
  return encode_png(model.infer(enc.tensor));
}

RenderRequest RenderRequest::from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("request must be a JSON object");
  RenderRequest r;
  if (j.contains("id")) {
    r.id = j.at("id");
    if (!r.id.is_primitive()) throw std::invalid_argument("id must be a string, number or null");
  }
  if (!j.contains("pose")) throw std::invalid_argument("missing field 'pose'");
  const auto& p = j.at("pose");
  if (!p.is_array() || p.size() != 12) throw std::invalid_argument("pose must be an array of 12 numbers");
  std::vector<double> v;
  for (const auto& e : p) {
    if (!e.is_number()) throw std::invalid_argument("pose must be an array of 12 numbers");
    v.push_back(e.get<double>());
  }
  r.pose = Pose::from_row_major(v);
  for (const char* key : {"near", "far"}) {
    if (!j.contains(key) || j.at(key).is_null()) continue;
    if (!j.at(key).is_number()) throw std::invalid_argument(std::string(key) + " must be a number");
    (std::string(key) == "near" ? r.near : r.far) = j.at(key).get<double>();
  }
  return r;
}

namespace wire {

std::uint32_t read_be32(const unsigned char* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

void append_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v >> 24));
  out.push_back(static_cast<char>(v >> 16));
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v));
}

std::string frame_request(const std::string& json_text) {
  std::string out;
  append_be32(out, static_cast<std::uint32_t>(json_text.size()));
  return out + json_text;
}

std::string frame_response(const json& header, const std::string& payload) {
  const std::string h = header.dump();
  std::string out;
  out.reserve(4 + h.size() + payload.size());
  append_be32(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  out += payload;
  return out;
}

std::pair<json, std::string> parse_response(const std::string& message) {
  if (message.size() < 4) throw std::runtime_error("response shorter than its length prefix");
  const std::uint32_t hlen = read_be32(reinterpret_cast<const unsigned char*>(message.data()));
  if (message.size() < 4ull + hlen) throw std::runtime_error("response header truncated");
  json header = json::parse(message.substr(4, hlen));
  std::string payload = message.substr(4 + hlen);
  if (payload.size() != header.value("bytes", std::uint64_t{0}))
    throw std::runtime_error("response payload is " + std::to_string(payload.size()) + " bytes, header says " +
                             header.value("bytes", json(0)).dump());
  return {std::move(header), std::move(payload)};
}

}  // namespace wire

namespace websocket {

std::string accept_key(const std::string& client_key) {
  const std::string src = client_key + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(src.data(), src.size(), digest, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("websocket: SHA-1 failed");
  unsigned char b64[64];
  const int n = EVP_EncodeBlock(b64, digest, static_cast<int>(len));
  return std::string(reinterpret_cast<char*>(b64), static_cast<std::size_t>(n));
}

std::string encode_frame(const std::string& payload, std::uint8_t opcode, bool mask) {
  std::string out;
  out.push_back(static_cast<char>(0x80 | (opcode & 0x0f)));
  const std::uint8_t mask_bit = mask ? 0x80 : 0;
  const std::uint64_t n = payload.size();
  if (n < 126) {
    out.push_back(static_cast<char>(mask_bit | n));
  } else if (n <= 0xffff) {
    out.push_back(static_cast<char>(mask_bit | 126));
    out.push_back(static_cast<char>(n >> 8));
    out.push_back(static_cast<char>(n));
  } else {
    out.push_back(static_cast<char>(mask_bit | 127));
    for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<char>(n >> s));
  }
  if (!mask) return out + payload;
  // Client frames only (tests); a fixed key is enough there.
  const unsigned char key[4] = {0x37, 0xfa, 0x21, 0x3d};
  out.append(reinterpret_cast<const char*>(key), 4);
  for (std::size_t i = 0; i < payload.size(); ++i) out.push_back(static_cast<char>(payload[i] ^ key[i % 4]));
  return out;
}

}  // namespace websocket

namespace {

bool read_exact(int fd, char* buf, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r <= 0) {
      if (r < 0 && errno == EINTR) continue;
      return false;
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

bool write_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t r = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (r <= 0) {
      if (r < 0 && errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::optional<std::string> header_value(const std::string& request, const std::string& name) {
  const std::string low = lower(request);
  const std::string needle = "\r\n" + lower(name) + ":";
  const auto pos = low.find(needle);
  if (pos == std::string::npos) return std::nullopt;
  auto start = pos + needle.size();
  const auto end = request.find("\r\n", start);
  while (start < end && (request[start] == ' ' || request[start] == '\t')) ++start;
  auto stop = end;
  while (stop > start && (request[stop - 1] == ' ' || request[stop - 1] == '\t')) --stop;
  return request.substr(start, stop - start);
}

}  // namespace

struct RenderServer::Connection {
  int fd = -1;
  bool websocket = false;
  std::mutex write_mu;
  std::atomic<bool> done{false};
};

RenderServer::RenderServer(Model<float> model, ModelCamera camera, ServerOptions options)
    : model_(std::move(model)), camera_(std::move(camera)), options_(std::move(options)) {
  if (options_.max_queue < 1) throw std::invalid_argument("max-queue must be >= 1");
  if (model_.config.upsample_factor() != camera_.sr_factor)
    throw std::invalid_argument("model and camera disagree on the upsampling factor");
  model_.mode = Mode::eval;
}

RenderServer::~RenderServer() { stop(); }

std::uint16_t RenderServer::start() {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(options_.port);
  if (::inet_pton(AF_INET, options_.host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw std::invalid_argument("bad listen address '" + options_.host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
    ::close(listen_fd_);
    throw std::runtime_error("cannot listen on " + options_.host + ":" + std::to_string(options_.port));
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  worker_ = std::thread([this] { worker_loop(); });
  acceptor_ = std::thread([this] { accept_loop(); });
  return port_;
}

void RenderServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  {
    std::lock_guard lock(mu_);
    for (auto& r : readers_) ::shutdown(r.conn->fd, SHUT_RDWR);
    queue_.clear();
  }
  cv_.notify_all();
  if (acceptor_.joinable()) acceptor_.join();
  if (worker_.joinable()) worker_.join();
  std::lock_guard lock(mu_);
  for (auto& r : readers_) {
    r.thread.join();
    ::close(r.conn->fd);
  }
  readers_.clear();
}

void RenderServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      return;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto conn = std::make_shared<Connection>();
    conn->fd = fd;
    std::lock_guard lock(mu_);
    if (!running_) {
      ::close(fd);
      return;
    }
    // Reap finished connections so a long-lived server does not accumulate them.
    std::erase_if(readers_, [](Reader& r) {
      if (!r.conn->done) return false;
      r.thread.join();
      ::close(r.conn->fd);
      return true;
    });
    readers_.push_back({conn, std::thread([this, conn] { serve_connection(conn); })});
  }
}

void RenderServer::serve_connection(std::shared_ptr<Connection> conn) {
  char head[4];
  if (!read_exact(conn->fd, head, 4)) return;
  if (std::string(head, 4) == "GET ") {
    std::string req(head, 4);
    char ch;
    while (req.size() < 16384 && req.find("\r\n\r\n") == std::string::npos) {
      if (!read_exact(conn->fd, &ch, 1)) return;
      req.push_back(ch);
    }
    const auto key = header_value(req, "Sec-WebSocket-Key");
    if (!key) {
      write_all(conn->fd, "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
      ::shutdown(conn->fd, SHUT_RDWR);
      return;
    }
    conn->websocket = true;
    {
      std::lock_guard lock(conn->write_mu);
      write_all(conn->fd, "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\n"
                          "Sec-WebSocket-Accept: " + websocket::accept_key(*key) + "\r\n\r\n");
    }
    std::string message;
    while (running_) {
      unsigned char h[2];
      if (!read_exact(conn->fd, reinterpret_cast<char*>(h), 2)) break;
      const bool fin = h[0] & 0x80;
      const int opcode = h[0] & 0x0f;
      const bool masked = h[1] & 0x80;
      std::uint64_t len = h[1] & 0x7f;
      unsigned char ext[8];
      if (len == 126) {
        if (!read_exact(conn->fd, reinterpret_cast<char*>(ext), 2)) break;
        len = (std::uint64_t{ext[0]} << 8) | ext[1];
      } else if (len == 127) {
        if (!read_exact(conn->fd, reinterpret_cast<char*>(ext), 8)) break;
        len = 0;
        for (int i = 0; i < 8; ++i) len = (len << 8) | ext[i];
      }
      if (len > wire::kMaxRequestBytes || message.size() + len > wire::kMaxRequestBytes) break;
      unsigned char key[4] = {0, 0, 0, 0};
      if (masked && !read_exact(conn->fd, reinterpret_cast<char*>(key), 4)) break;
      std::string payload(len, '\0');
      if (len && !read_exact(conn->fd, payload.data(), len)) break;
      for (std::size_t i = 0; i < payload.size(); ++i) payload[i] = static_cast<char>(payload[i] ^ key[i % 4]);
      if (opcode == 0x8) {
        std::lock_guard lock(conn->write_mu);
        write_all(conn->fd, websocket::encode_frame(payload.substr(0, 2), 0x8));
        break;
      }
      if (opcode == 0x9) {
        std::lock_guard lock(conn->write_mu);
        write_all(conn->fd, websocket::encode_frame(payload, 0xA));
        continue;
      }
      if (opcode == 0xA) continue;
      message += payload;
      if (!fin) continue;
      handle_message(conn, message);
      message.clear();
    }
  } else {
    while (running_) {
      const std::uint32_t len = wire::read_be32(reinterpret_cast<const unsigned char*>(head));
      if (len > wire::kMaxRequestBytes) {
        send(conn, {{"id", nullptr}, {"error", "request of " + std::to_string(len) + " bytes exceeds the limit"},
                    {"bytes", 0}}, "");
        break;  // the stream cannot be resynchronised
      }
      std::string text(len, '\0');
      if (len && !read_exact(conn->fd, text.data(), len)) break;
      handle_message(conn, text);
      if (!read_exact(conn->fd, head, 4)) break;
    }
  }
  conn->done = true;
  ::shutdown(conn->fd, SHUT_RDWR);
}

void RenderServer::handle_message(const std::shared_ptr<Connection>& conn, const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    send(conn, {{"id", nullptr}, {"error", std::string("malformed JSON: ") + e.what()}, {"bytes", 0}}, "");
    return;
  }
  RenderRequest req;
  try {
    req = RenderRequest::from_json(j);
    accept_pose(req.pose);
  } catch (const std::exception& e) {
    const json id = j.is_object() && j.contains("id") && j["id"].is_primitive() ? j["id"] : json(nullptr);
    send(conn, {{"id", id}, {"error", e.what()}, {"bytes", 0}}, "");
    return;
  }
  bool full = false;
  {
    std::lock_guard lock(mu_);
    auto it = std::find_if(queue_.begin(), queue_.end(), [&](const Job& job) { return job.conn == conn; });
    if (it != queue_.end())
      it->request = std::move(req);  // latest wins; the superseded request gets no reply
    else if (queue_.size() >= options_.max_queue)
      full = true;
    else
      queue_.push_back({conn, std::move(req)});
  }
  if (full)
    send(conn, {{"id", j.value("id", json(nullptr))}, {"error", "queue full"}, {"bytes", 0}}, "");
  else
    cv_.notify_one();
}

void RenderServer::worker_loop() {
  while (true) {
    Job job;
    {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [&] { return !running_ || !queue_.empty(); });
      if (!running_) return;
      job = std::move(queue_.front());
      queue_.pop_front();
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const std::string png = render_frame_png(model_, camera_, job.request.pose, job.request.near, job.request.far);
      const auto us = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - t0);
      const CameraIntrinsics hi = camera_.hi();
      frames_rendered_++;
      send(job.conn, {{"id", job.request.id}, {"width", hi.width}, {"height", hi.height},
                      {"render_us", us.count()}, {"bytes", png.size()}}, png);
    } catch (const std::exception& e) {
      send(job.conn, {{"id", job.request.id}, {"error", e.what()}, {"bytes", 0}}, "");
    }
  }
}

void RenderServer::send(const std::shared_ptr<Connection>& conn, const json& header, const std::string& payload) {
  std::string msg = wire::frame_response(header, payload);
  if (conn->websocket) msg = websocket::encode_frame(msg, 0x2);
  std::lock_guard lock(conn->write_mu);
  write_all(conn->fd, msg);
}

}  // namespace nlf
