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


#ifndef DSM_SIM_HPP_
#define DSM_SIM_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/message.hpp"
#include "dsm/protocol.hpp"
#include "dsm/sync.hpp"
#include "dsm/transport.hpp"

namespace dsm {

// ---------------------------------------------------------------------------
// Clocks
// ---------------------------------------------------------------------------

/// local(t) = (t + offset) * drift, drift > 0.
struct NodeClock {
  Duration offset{0};
  double drift = 1.0;

  LocalTime local(Duration t) const {
    return LocalTime((static_cast<double>(t.count()) + static_cast<double>(offset.count())) * drift);
  }
  /// Earliest global instant whose local reading is >= `l`.
  Duration global_at(LocalTime l) const;
};

struct ClockSkew {
  std::map<NodeId, NodeClock> clocks;

  NodeClock of(NodeId n) const;
  void set(NodeId n, NodeClock c) { clocks[n] = c; }
  /// Throws ConfigError for non-positive or non-finite drift.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// One delivered message. `sent_at` is the global time it left its sender.
struct TraceEvent {
  Duration time{0};
  NodeId src;
  NodeId dst;
  MessageKind kind = MessageKind::ReadReq;
  std::uint64_t page = 0;
  std::uint64_t seq = 0;
  Duration sent_at{0};

  friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

using Trace = std::vector<TraceEvent>;

/// Tab-separated `time src dst kind page seq sent_at`, times in ns.
void write_trace(std::ostream& os, const Trace& trace);
std::string format_trace(const Trace& trace);
/// Accepts 6-column lines (sent_at taken as the delivery time) or 7.
Trace parse_trace(std::istream& in);
Trace load_trace(const std::string& path);
/// FNV-1a over the formatted trace.
std::uint64_t trace_hash(const Trace& trace);

// ---------------------------------------------------------------------------
// Memory image
// ---------------------------------------------------------------------------

/// Sparse GAS contents; absent pages read as zero.
class GasImage {
 public:
  GasImage() = default;
  GasImage(std::uint64_t gas_size, std::uint64_t page_size);

  std::uint64_t gas_size() const { return gas_size_; }
  std::uint64_t page_size() const { return page_size_; }

  void write(std::uint64_t addr, std::span<const std::byte> bytes);
  Bytes read(std::uint64_t addr, std::uint64_t len) const;
  void set_page(std::uint64_t index, Bytes bytes);
  const std::map<std::uint64_t, Bytes>& pages() const { return pages_; }

  /// First differing byte address, if any.
  std::optional<std::uint64_t> first_difference(const GasImage& other) const;
  friend bool operator==(const GasImage& a, const GasImage& b) {
    return a.gas_size_ == b.gas_size_ && !a.first_difference(b);
  }

 private:
  std::uint64_t gas_size_ = 0;
  std::uint64_t page_size_ = 1;
  std::map<std::uint64_t, Bytes> pages_;
};

// ---------------------------------------------------------------------------
// Cluster
// ---------------------------------------------------------------------------

using NodeOp = std::function<Actions(ComputeNode&, LocalTime)>;

/// All servers and compute nodes of one configuration driven from a single
/// virtual-time event queue.
class SimCluster {
 public:
  explicit SimCluster(const GasConfig& cfg, ClockSkew skew = {}, LatencyModel latency = {});
  ~SimCluster();

  const GasConfig& config() const { return cfg_; }
  ServerNode& server(std::uint16_t i) { return *servers_.at(i); }
  ComputeNode& compute(std::uint16_t i) { return *computes_.at(i); }
  const ServerNode& server(std::uint16_t i) const { return *servers_.at(i); }
  const ComputeNode& compute(std::uint16_t i) const { return *computes_.at(i); }

  Duration now() const { return now_; }
  LocalTime local_now(std::uint16_t compute) const;

  /// Runs `op` against compute `c` at the current instant and dispatches
  /// what it emits. Returns true if the operation completed synchronously
  /// (the completion hook is not called in that case).
  bool invoke(std::uint16_t c, const NodeOp& op);

  /// Schedules the wake hook for compute `c`.
  void wake_at(std::uint16_t c, Duration at);

  /// Processes one event. False if the queue was empty.
  bool step();
  bool idle() const;
  std::size_t pending_events() const;
  std::uint64_t events_processed() const { return processed_; }

  /// Called when an event completes compute c's outstanding operation.
  std::function<void(std::uint16_t)> on_complete;
  std::function<void(std::uint16_t)> on_wake;

  void set_tracing(bool on) { tracing_ = on; }
  const Trace& trace() const { return trace_; }
  Trace take_trace() { return std::move(trace_); }

  /// Latest contents of every page: the copy of whichever compute node
  /// holds Write privilege or the dirty copy, else the server copy.
  GasImage image() const;

 private:
  struct Event;
  struct EventOrder {
    bool operator()(const Event& a, const Event& b) const;
  };

  void dispatch(NodeId from, Actions& a);
  void deliver(Event& e);

  GasConfig cfg_;
  ClockSkew skew_;
  SimNetwork net_;
  std::vector<std::unique_ptr<ServerNode>> servers_;
  std::vector<std::unique_ptr<ComputeNode>> computes_;
  std::vector<NodeClock> clocks_;
  std::unique_ptr<std::set<Event, EventOrder>> queue_;
  Duration now_{0};
  std::uint64_t order_ = 0;
  std::uint64_t processed_ = 0;
  bool tracing_ = true;
  Trace trace_;
};

// ---------------------------------------------------------------------------
// Workloads
// ---------------------------------------------------------------------------

struct WorkloadOp {
  enum class Kind : std::uint8_t { Read, Write, Increment, Lock, Unlock, Barrier, Flush };
  Kind kind = Kind::Read;
  std::uint64_t addr = 0;
  std::uint64_t len = 0;
  Bytes data;
  SyncId id = 0;
  std::uint32_t participants = 0;

  static WorkloadOp read(std::uint64_t addr, std::uint64_t len);
  static WorkloadOp write(std::uint64_t addr, Bytes data);
  /// Adds one to the little-endian u64 at `addr` (8-byte aligned).
  static WorkloadOp increment(std::uint64_t addr);
  static WorkloadOp lock(SyncId id);
  static WorkloadOp unlock(SyncId id);
  static WorkloadOp barrier(SyncId id, std::uint32_t participants);
  static WorkloadOp flush();

  std::string str() const;
};

/// ops[c] is compute c's program, issued in order.
struct Workload {
  std::vector<std::vector<WorkloadOp>> ops;
};

enum class Profile : std::uint8_t { ReadHeavy, WriteContended, LockProtected };
Profile parse_profile(std::string_view name);
std::string_view profile_name(Profile p);

struct WorkloadParams {
  Profile profile = Profile::LockProtected;
  std::uint32_t num_computes = 4;
  std::uint64_t gas_size = 16u << 20;
  std::uint64_t page_size = 4096;
  /// Data operations per node.
  std::uint32_t ops_per_node = 24;
  std::uint32_t num_locks = 6;
  std::uint32_t pages_per_lock = 2;
};

/// Reproducible pseudo-random workload. The lock-protected profile wraps
/// every data op in the lock that owns its page region and adds one
/// all-node barrier halfway through.
Workload gen_workload(std::uint64_t seed, const WorkloadParams& params);

/// Throws ConfigError for out-of-range addresses, unbalanced locks or more
/// programs than compute nodes. Nodes without a program stay idle.
void validate_workload(const GasConfig& cfg, const Workload& w);

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunOptions {
  LatencyModel latency;
  ClockSkew skew;
  /// Upper bound of the uniform think time before each op.
  Duration max_think = 20us;
  bool record_trace = true;
  /// Livelock guard.
  std::uint64_t max_events = 50'000'000;
};

struct RunResult {
  GasImage image;
  Trace trace;
  /// Results of each node's Read ops, in issue order.
  std::vector<std::vector<Bytes>> reads;
  Duration end_time{0};
  std::uint64_t events = 0;
};

/// Deterministic in (cfg, workload, seed, options). Throws DeadlockError
/// if the queue drains with operations still blocked.
RunResult run(const GasConfig& cfg, const Workload& workload, std::uint64_t seed,
              const RunOptions& options = {});

struct OracleResult {
  GasImage image;
  std::vector<std::vector<Bytes>> reads;
};

/// Sequential replay of `workload` that orders critical sections by the
/// LockGrant order in `trace` and separates barrier epochs. Exact for
/// data-race-free (lock-protected) workloads. Throws OracleViolation if
/// the trace breaks single-writer or mutual exclusion, or cannot be
/// replayed.
OracleResult serial_oracle(const GasConfig& cfg, const Workload& workload, const Trace& trace);

// ---------------------------------------------------------------------------
// Trace checks
// ---------------------------------------------------------------------------

enum class ViolationKind : std::uint8_t {
  SingleWriter,
  GrantSafety,
  Slice,
  SpontaneousRelinquish,
  Fifo,
  MutualExclusion,
  Barrier,
};
std::string_view violation_name(ViolationKind k);

struct Violation {
  ViolationKind kind;
  std::size_t event_index = 0;
  std::string detail;
};

struct CheckContext {
  Duration slice_len = 10ms;
  ClockSkew skew;
  /// Participants per barrier epoch.
  std::uint32_t num_computes = 1;
};

struct CheckReport {
  /// First violation of each kind, by event index.
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(ViolationKind k) const;
  /// `VIOLATION <kind> <event_index>` per line.
  std::string machine() const;
  std::string text() const;
};

CheckReport check_trace(const Trace& trace, const CheckContext& ctx);

/// Write-privilege intervals reconstructed from a trace: from delivery of
/// WriteGrant/PrivilegeTransfer to the holder's first PrivilegeTransfer,
/// Downgrade or Writeback for the page.
struct Tenure {
  NodeId holder;
  std::uint64_t page = 0;
  std::size_t start_index = 0;
  Duration start{0};
  std::optional<std::size_t> end_index;
  Duration end{0};
  MessageKind end_kind = MessageKind::Writeback;
};
std::vector<Tenure> tenures(const Trace& trace);

}  // namespace dsm

#endif  // DSM_SIM_HPP_
