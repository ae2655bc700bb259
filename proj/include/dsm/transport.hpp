/*
 * Copyright (c) 2026, The slicedsm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef DSM_TRANSPORT_HPP_
#define DSM_TRANSPORT_HPP_

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/message.hpp"

namespace dsm {

// ---------------------------------------------------------------------------
// Framing
// ---------------------------------------------------------------------------

/// kind u16 + page u64 + src u16 + seq u64.
inline constexpr std::size_t kFrameHeaderBytes = 20;
/// Body length prefix.
inline constexpr std::size_t kFrameLengthBytes = 4;

/// u32 LE body length followed by the body. Throws FrameError if the body
/// would not fit in the length field.
Bytes encode_frame(const Message& msg);
void encode_frame_into(const Message& msg, Bytes& out);

/// Decodes exactly one frame that must span all of `frame`. Truncated,
/// oversized or malformed input throws FrameError.
Message decode_frame(std::span<const std::byte> frame);

/// Decodes the frame at the start of `buf` if it is complete. Returns
/// nullopt and consumes nothing otherwise; on success `consumed` is the
/// frame's total size. A complete but malformed frame throws FrameError.
std::optional<Message> try_decode_frame(std::span<const std::byte> buf, std::size_t& consumed);

/// Reassembles frames from an arbitrary chunking of a byte stream.
class FrameReader {
 public:
  void feed(std::span<const std::byte> bytes);
  std::optional<Message> next();
  std::size_t buffered() const { return buf_.size() - head_; }

 private:
  Bytes buf_;
  std::size_t head_ = 0;
};

// ---------------------------------------------------------------------------
// Simulated network
// ---------------------------------------------------------------------------

struct LatencyModel {
  Duration base_latency = 10us;
  /// Bytes per microsecond.
  double bandwidth = 250.0;

  void validate() const;
  /// base_latency + payload_bytes / bandwidth, rounded up to whole ns.
  Duration delay(std::size_t payload_bytes) const;
};

/// Delivery-time computation for the simulator: latency model plus
/// per-pair FIFO. The event queue itself lives in the cluster.
class SimNetwork {
 public:
  SimNetwork(std::uint32_t num_servers, std::uint32_t num_computes, LatencyModel model = {});

  bool knows(NodeId n) const;
  /// Time at which `msg` sent at `now` from `src` reaches `dst`. Never
  /// earlier than the previous delivery on the same pair.
  Duration deliver_at(NodeId src, NodeId dst, const Message& msg, Duration now);

  const LatencyModel& model() const { return model_; }

 private:
  std::uint32_t num_servers_;
  std::uint32_t num_computes_;
  LatencyModel model_;
  std::map<std::pair<NodeId, NodeId>, Duration> last_delivery_;
};

// ---------------------------------------------------------------------------
// Stream backend
// ---------------------------------------------------------------------------

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

using HostMap = std::map<NodeId, Endpoint>;

/// `node_id host:port` per line; `#` comments and blank lines ignored.
HostMap parse_hosts(std::istream& in);
HostMap load_hosts(const std::string& path);
/// $DSM_HOSTS if set, else `fallback`.
std::string hosts_path(const std::string& fallback);

/// One process's endpoint in a TCP mesh. Outgoing connections are opened
/// lazily, one per peer, so each (src, dst) pair is a single ordered byte
/// stream. Inbound frames from all peers are funneled into one queue.
class StreamTransport {
 public:
  StreamTransport(NodeId self, HostMap hosts);
  ~StreamTransport();
  StreamTransport(const StreamTransport&) = delete;
  StreamTransport& operator=(const StreamTransport&) = delete;

  /// Binds and starts accepting. Throws ConnectError if the port is taken.
  void listen();

  /// Thread-safe. Unknown destination throws TransportError; a peer that
  /// does not accept within the connect timeout throws ConnectError.
  void send(NodeId dst, const Message& msg);

  /// Next inbound message, or nullopt after `timeout`.
  std::optional<Message> receive(std::chrono::nanoseconds timeout);

  /// Opens the connection to `dst` now (retrying until the timeout).
  void connect(NodeId dst);

  void shutdown();

  NodeId self() const { return self_; }
  std::chrono::milliseconds connect_timeout{5000};

 private:
  struct Peer {
    int fd = -1;
    std::mutex mu;
  };

  Peer& peer(NodeId dst);
  void open(NodeId dst, Peer& p);
  void accept_loop();
  void read_loop(int fd);
  void push(Message m);

  NodeId self_;
  HostMap hosts_;
  int listen_fd_ = -1;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex threads_mu_;
  std::vector<std::thread> readers_;
  std::vector<int> inbound_fds_;

  std::mutex peers_mu_;
  std::map<NodeId, std::unique_ptr<Peer>> peers_;

  std::mutex inbox_mu_;
  std::condition_variable inbox_cv_;
  std::deque<Message> inbox_;
};

}  // namespace dsm

#endif  // DSM_TRANSPORT_HPP_
