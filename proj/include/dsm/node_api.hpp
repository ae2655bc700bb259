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


#ifndef DSM_NODE_API_HPP_
#define DSM_NODE_API_HPP_

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/protocol.hpp"
#include "dsm/sim.hpp"
#include "dsm/transport.hpp"

namespace dsm {

/// Walks a byte range page by page through a compute node. Each call to
/// step() serves every page it can from the cache and stops at the first
/// miss, leaving that access outstanding on the node.
class OpExecutor {
 public:
  static OpExecutor read(const GasConfig& cfg, std::uint64_t addr, std::span<std::byte> dst);
  static OpExecutor write(const GasConfig& cfg, std::uint64_t addr, std::span<const std::byte> src);
  /// Read-modify-write of the little-endian u64 at `addr` (8-byte aligned).
  static OpExecutor increment(const GasConfig& cfg, std::uint64_t addr);

  OpExecutor(const OpExecutor&) = delete;
  OpExecutor& operator=(const OpExecutor&) = delete;
  OpExecutor(OpExecutor&&) = default;

  bool done() const { return pos_ == end_; }
  Actions step(ComputeNode& node, LocalTime now);

 private:
  enum class Kind : std::uint8_t { Read, Write, Increment };
  OpExecutor(const GasConfig& cfg, Kind kind, std::uint64_t addr, std::uint64_t len);
  void apply(std::span<std::byte> page);

  std::uint64_t page_size_;
  Kind kind_;
  std::uint64_t begin_;
  std::uint64_t pos_;
  std::uint64_t end_;
  std::byte* dst_ = nullptr;
  const std::byte* src_ = nullptr;
};

/// Where a session's compute node runs and how its events are driven.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual const GasConfig& config() const = 0;
  virtual NodeId id() const = 0;
  /// Runs `op`, dispatches its actions and blocks until the node has no
  /// outstanding operation.
  virtual void execute(const NodeOp& op) = 0;
  /// Direct cache lookup; empty on a miss. Callers must not be inside
  /// execute().
  virtual std::span<std::byte> try_hit(PageId page, AccessMode mode) = 0;
};

/// Drives one compute node of a SimCluster. Several SimBackends may share
/// a cluster; each execute() runs the cluster until its own node is idle.
class SimBackend : public Backend {
 public:
  SimBackend(std::shared_ptr<SimCluster> cluster, std::uint16_t compute);

  const GasConfig& config() const override { return cluster_->config(); }
  NodeId id() const override { return NodeId::compute(index_); }
  void execute(const NodeOp& op) override;
  std::span<std::byte> try_hit(PageId page, AccessMode mode) override;

  SimCluster& cluster() { return *cluster_; }
  /// Wall time spent processing events inside execute().
  std::chrono::nanoseconds sim_wall() const { return sim_wall_; }

 private:
  std::shared_ptr<SimCluster> cluster_;
  std::uint16_t index_;
  std::chrono::nanoseconds sim_wall_{0};
};

/// Runs the compute node in this process against remote servers over TCP.
/// A background thread handles inbound protocol traffic and slice timers
/// between application calls.
class StreamBackend : public Backend {
 public:
  StreamBackend(const GasConfig& cfg, std::uint16_t compute, HostMap hosts);
  ~StreamBackend() override;

  const GasConfig& config() const override { return node_.config(); }
  NodeId id() const override { return node_.id(); }
  void execute(const NodeOp& op) override;
  std::span<std::byte> try_hit(PageId page, AccessMode mode) override;

 private:
  LocalTime local_now() const;
  void apply(Actions& a);
  void pump();

  ComputeNode node_;
  StreamTransport transport_;
  std::chrono::steady_clock::time_point epoch_;
  std::mutex mu_;
  std::condition_variable done_cv_;
  std::vector<TimerRequest> timers_;
  std::exception_ptr failure_;
  bool stop_ = false;
  std::thread pump_;
};

struct DsmRegion {
  enum class Mode : std::uint8_t { Shared, RemotePaging };
  std::uint64_t base = 0;
  std::uint64_t len = 0;
  Mode mode = Mode::Shared;
  friend bool operator==(const DsmRegion&, const DsmRegion&) = default;
};

struct SessionOptions {
  /// Bytes at the bottom of the GAS used for shared data. The rest is the
  /// remote-paging area, split evenly between compute nodes.
  std::optional<std::uint64_t> shared_size;
};

/// Application-facing handle of one compute node.
class Session {
 public:
  Session(std::unique_ptr<Backend> backend, SessionOptions options = {});

  const GasConfig& config() const { return backend_->config(); }
  NodeId id() const { return backend_->id(); }
  Backend& backend() { return *backend_; }

  std::uint64_t num_pages() const { return config().num_pages(); }
  DsmRegion shared_region() const { return {0, shared_size_, DsmRegion::Mode::Shared}; }

  Bytes read(std::uint64_t addr, std::uint64_t len);
  void read_into(std::uint64_t addr, std::span<std::byte> dst);
  void write(std::uint64_t addr, std::span<const std::byte> bytes);
  void fill(std::uint64_t addr, std::uint64_t len, std::byte value);

  void lock(SyncId id);
  void unlock(SyncId id);
  void barrier(SyncId id, std::uint32_t participants);
  void flush();

  /// Bump allocation from the top of this node's paging slice.
  DsmRegion paging_alloc(std::uint64_t len);
  /// [begin, end) of this node's paging slice.
  std::pair<std::uint64_t, std::uint64_t> paging_slice() const;

 private:
  void check_range(std::uint64_t addr, std::uint64_t len) const;
  void run(OpExecutor& exec);

  std::unique_ptr<Backend> backend_;
  std::uint64_t shared_size_;
  std::uint64_t paging_top_;
};

enum class BackendKind : std::uint8_t { Sim, Stream };

struct MapOptions {
  BackendKind backend = BackendKind::Sim;
  std::uint16_t compute = 0;
  /// Stream backend only.
  HostMap hosts;
  /// Sim backend only.
  LatencyModel latency;
  ClockSkew skew;
  SessionOptions session;
};

/// Serves one memory server over TCP until `stop` becomes true.
void serve_stream(const GasConfig& cfg, std::uint16_t server, const HostMap& hosts,
                  const std::atomic<bool>& stop);

/// Validates `cfg` (ConfigError) and joins the cluster. The stream backend
/// connects to every server up front (ConnectError if unreachable).
std::unique_ptr<Session> dsm_map(const GasConfig& cfg, const MapOptions& options = {});

}  // namespace dsm

#endif  // DSM_NODE_API_HPP_
