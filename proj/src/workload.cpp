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


#include <algorithm>
#include <random>
#include <string>

#include "dsm/node_api.hpp"
#include "dsm/sim.hpp"

namespace dsm {

namespace {

constexpr SyncId kMidBarrier = 1000;

using Kind = WorkloadOp::Kind;

bool is_data(Kind k) { return k == Kind::Read || k == Kind::Write || k == Kind::Increment; }

Bytes random_bytes(std::mt19937_64& rng, std::uint64_t n) {
  Bytes b(n);
  for (auto& x : b) x = std::byte(rng() & 0xFF);
  return b;
}

}  // namespace

WorkloadOp WorkloadOp::read(std::uint64_t addr, std::uint64_t len) {
  WorkloadOp op;
  op.kind = Kind::Read;
  op.addr = addr;
  op.len = len;
  return op;
}

WorkloadOp WorkloadOp::write(std::uint64_t addr, Bytes data) {
  WorkloadOp op;
  op.kind = Kind::Write;
  op.addr = addr;
  op.len = data.size();
  op.data = std::move(data);
  return op;
}

WorkloadOp WorkloadOp::increment(std::uint64_t addr) {
  WorkloadOp op;
  op.kind = Kind::Increment;
  op.addr = addr;
  op.len = 8;
  return op;
}

WorkloadOp WorkloadOp::lock(SyncId id) {
  WorkloadOp op;
  op.kind = Kind::Lock;
  op.id = id;
  return op;
}

WorkloadOp WorkloadOp::unlock(SyncId id) {
  WorkloadOp op;
  op.kind = Kind::Unlock;
  op.id = id;
  return op;
}

WorkloadOp WorkloadOp::barrier(SyncId id, std::uint32_t participants) {
  WorkloadOp op;
  op.kind = Kind::Barrier;
  op.id = id;
  op.participants = participants;
  return op;
}

WorkloadOp WorkloadOp::flush() {
  WorkloadOp op;
  op.kind = Kind::Flush;
  return op;
}

std::string WorkloadOp::str() const {
  switch (kind) {
    case Kind::Read: return "Read(" + std::to_string(addr) + ", " + std::to_string(len) + ")";
    case Kind::Write: return "Write(" + std::to_string(addr) + ", " + std::to_string(len) + " bytes)";
    case Kind::Increment: return "Increment(" + std::to_string(addr) + ")";
    case Kind::Lock: return "Lock(" + std::to_string(id) + ")";
    case Kind::Unlock: return "Unlock(" + std::to_string(id) + ")";
    case Kind::Barrier: return "Barrier(" + std::to_string(id) + ", " + std::to_string(participants) + ")";
    case Kind::Flush: return "Flush";
  }
  return "?";
}

Profile parse_profile(std::string_view name) {
  if (name == "read-heavy") return Profile::ReadHeavy;
  if (name == "write-contended") return Profile::WriteContended;
  if (name == "lock-protected") return Profile::LockProtected;
  throw ConfigError("unknown workload profile '" + std::string(name) + "'");
}

std::string_view profile_name(Profile p) {
  switch (p) {
    case Profile::ReadHeavy: return "read-heavy";
    case Profile::WriteContended: return "write-contended";
    case Profile::LockProtected: return "lock-protected";
  }
  return "?";
}

Workload gen_workload(std::uint64_t seed, const WorkloadParams& p) {
  std::mt19937_64 rng(seed);
  const std::uint64_t ps = p.page_size;
  const std::uint64_t num_pages = p.gas_size / ps;
  Workload w;
  w.ops.resize(p.num_computes);

  // A random access inside [base, base + span), at most two pages long.
  auto pick = [&](std::uint64_t base, std::uint64_t span) {
    std::uint64_t off = rng() % span;
    std::uint64_t len = 1 + rng() % std::min<std::uint64_t>(span - off, 2 * ps);
    return std::pair{base + off, len};
  };

  if (p.profile == Profile::LockProtected) {
    std::uint32_t locks = std::max<std::uint32_t>(p.num_locks, 1);
    std::uint64_t region = std::uint64_t{p.pages_per_lock} * ps;
    std::uint64_t stride = std::max<std::uint64_t>(num_pages / locks, p.pages_per_lock) * ps;
    if (stride * (locks - 1) + region > p.gas_size) throw ConfigError("lock regions do not fit the GAS");
    for (auto& prog : w.ops) {
      std::uint32_t done = 0;
      bool barrier_placed = false;
      while (done < p.ops_per_node) {
        if (!barrier_placed && done >= p.ops_per_node / 2) {
          prog.push_back(WorkloadOp::barrier(kMidBarrier, p.num_computes));
          barrier_placed = true;
        }
        if (rng() % 10 == 0) prog.push_back(WorkloadOp::flush());
        SyncId lock = rng() % locks;
        std::uint64_t base = lock * stride;
        prog.push_back(WorkloadOp::lock(lock));
        std::uint32_t n = 1 + static_cast<std::uint32_t>(rng() % 3);
        for (std::uint32_t i = 0; i < n && done < p.ops_per_node; ++i, ++done) {
          auto choice = rng() % 10;
          if (choice < 3) {
            auto [a, len] = pick(base, region);
            prog.push_back(WorkloadOp::read(a, len));
          } else if (choice < 6) {
            auto [a, len] = pick(base, region);
            prog.push_back(WorkloadOp::write(a, random_bytes(rng, len)));
          } else {
            prog.push_back(WorkloadOp::increment(base + (rng() % (region / 8)) * 8));
          }
        }
        prog.push_back(WorkloadOp::unlock(lock));
      }
      if (!barrier_placed) prog.push_back(WorkloadOp::barrier(kMidBarrier, p.num_computes));
    }
    return w;
  }

  // Unsynchronised profiles share a small window so nodes collide.
  std::uint64_t window = std::min<std::uint64_t>(p.profile == Profile::ReadHeavy ? 8 : 2, num_pages) * ps;
  std::uint64_t writes_in_10 = p.profile == Profile::ReadHeavy ? 2 : 8;
  for (auto& prog : w.ops) {
    for (std::uint32_t i = 0; i < p.ops_per_node; ++i) {
      auto [a, len] = pick(0, window);
      if (rng() % 10 < writes_in_10) {
        prog.push_back(WorkloadOp::write(a, random_bytes(rng, len)));
      } else {
        prog.push_back(WorkloadOp::read(a, len));
      }
    }
  }
  return w;
}

void validate_workload(const GasConfig& cfg, const Workload& w) {
  if (w.ops.size() > cfg.num_computes) {
    throw ConfigError("workload has " + std::to_string(w.ops.size()) + " programs for " +
                      std::to_string(cfg.num_computes) + " compute nodes");
  }
  for (std::size_t c = 0; c < w.ops.size(); ++c) {
    std::set<SyncId> held;
    for (const WorkloadOp& op : w.ops[c]) {
      std::string where = "c" + std::to_string(c) + " " + op.str();
      if (is_data(op.kind) && (op.addr > cfg.gas_size || op.len > cfg.gas_size - op.addr)) {
        throw ConfigError(where + ": outside the GAS");
      }
      if (op.kind == Kind::Write && op.data.size() != op.len) throw ConfigError(where + ": length mismatch");
      if (op.kind == Kind::Increment && op.addr % 8 != 0) throw ConfigError(where + ": unaligned");
      if (op.kind == Kind::Lock && !held.insert(op.id).second) throw ConfigError(where + ": reentrant");
      if (op.kind == Kind::Unlock && held.erase(op.id) == 0) throw ConfigError(where + ": not held");
      if (op.kind == Kind::Barrier && (op.participants == 0 || op.participants > cfg.num_computes)) {
        throw ConfigError(where + ": bad participant count");
      }
    }
    if (!held.empty()) throw ConfigError("c" + std::to_string(c) + " ends holding a lock");
  }
}

// ---------------------------------------------------------------------------

RunResult run(const GasConfig& cfg, const Workload& workload, std::uint64_t seed, const RunOptions& opts) {
  validate_workload(cfg, workload);
  SimCluster cluster(cfg, opts.skew, opts.latency);
  cluster.set_tracing(opts.record_trace);
  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::uint16_t>(workload.ops.size());

  struct Driver {
    std::size_t next = 0;
    std::unique_ptr<OpExecutor> exec;
    Bytes buf;
  };
  std::vector<Driver> drv(n);
  RunResult result;
  result.reads.resize(n);

  auto think = [&] {
    auto span = static_cast<std::uint64_t>(opts.max_think.count());
    return Duration(span ? static_cast<std::int64_t>(rng() % (span + 1)) : 0);
  };
  auto current = [&](std::uint16_t c) -> const WorkloadOp& { return workload.ops[c][drv[c].next]; };

  auto finish = [&](std::uint16_t c) {
    Driver& d = drv[c];
    if (current(c).kind == Kind::Read) result.reads[c].push_back(std::move(d.buf));
    d.exec.reset();
    ++d.next;
    cluster.wake_at(c, cluster.now() + think());
  };
  auto resume = [&](std::uint16_t c) {
    Driver& d = drv[c];
    cluster.invoke(c, [&d](ComputeNode& node, LocalTime now) { return d.exec->step(node, now); });
    if (d.exec->done()) finish(c);
  };
  auto sync_op = [&](std::uint16_t c, const NodeOp& op) {
    if (cluster.invoke(c, op)) finish(c);
  };
  auto start = [&](std::uint16_t c) {
    Driver& d = drv[c];
    if (d.next >= workload.ops[c].size()) return;
    const WorkloadOp& op = current(c);
    switch (op.kind) {
      case Kind::Read:
        d.buf.assign(op.len, std::byte{0});
        d.exec = std::make_unique<OpExecutor>(OpExecutor::read(cfg, op.addr, d.buf));
        resume(c);
        break;
      case Kind::Write:
        d.exec = std::make_unique<OpExecutor>(OpExecutor::write(cfg, op.addr, op.data));
        resume(c);
        break;
      case Kind::Increment:
        d.exec = std::make_unique<OpExecutor>(OpExecutor::increment(cfg, op.addr));
        resume(c);
        break;
      case Kind::Lock:
        sync_op(c, [&op](ComputeNode& node, LocalTime) { return node.lock_acquire(op.id); });
        break;
      case Kind::Unlock:
        sync_op(c, [&op](ComputeNode& node, LocalTime) { return node.lock_release(op.id); });
        break;
      case Kind::Barrier:
        sync_op(c, [&op](ComputeNode& node, LocalTime) { return node.barrier_enter(op.id, op.participants); });
        break;
      case Kind::Flush:
        sync_op(c, [](ComputeNode& node, LocalTime) { return node.flush(); });
        break;
    }
  };

  cluster.on_wake = start;
  cluster.on_complete = [&](std::uint16_t c) {
    if (is_data(current(c).kind)) {
      resume(c);
    } else {
      finish(c);
    }
  };

  for (std::uint16_t c = 0; c < n; ++c) cluster.wake_at(c, think());
  while (cluster.step()) {
    if (cluster.events_processed() > opts.max_events) {
      throw Error("event limit of " + std::to_string(opts.max_events) + " reached (livelock?)");
    }
  }

  std::string blocked;
  for (std::uint16_t c = 0; c < n; ++c) {
    if (drv[c].next < workload.ops[c].size()) {
      blocked += "  c" + std::to_string(c) + " blocked at op " + std::to_string(drv[c].next) + ": " +
                 current(c).str() + "\n";
    }
  }
  if (!blocked.empty()) {
    throw DeadlockError("deadlock at t=" + std::to_string(cluster.now().count()) + "ns\n" + blocked);
  }

  result.image = cluster.image();
  result.end_time = cluster.now();
  result.events = cluster.events_processed();
  result.trace = cluster.take_trace();
  return result;
}

// ---------------------------------------------------------------------------

OracleResult serial_oracle(const GasConfig& cfg, const Workload& workload, const Trace& trace) {
  CheckContext ctx;
  ctx.slice_len = cfg.slice_len;
  ctx.num_computes = cfg.num_computes;
  CheckReport rep = check_trace(trace, ctx);
  for (const Violation& v : rep.violations) {
    if (v.kind == ViolationKind::SingleWriter || v.kind == ViolationKind::MutualExclusion) {
      throw OracleViolation(std::string(violation_name(v.kind)) + " at event " + std::to_string(v.event_index) +
                            ": " + v.detail);
    }
  }

  std::map<SyncId, std::deque<std::uint16_t>> grants;
  for (const TraceEvent& e : trace) {
    if (e.kind == MessageKind::LockGrant) grants[e.page].push_back(e.dst.index);
  }

  OracleResult out;
  out.image = GasImage(cfg.gas_size, cfg.page_size);
  const std::size_t n = workload.ops.size();
  out.reads.resize(n);
  std::vector<std::size_t> pc(n, 0);
  std::map<SyncId, std::optional<std::uint16_t>> holder;
  std::map<SyncId, std::set<std::uint16_t>> waiting;

  for (bool progress = true; progress;) {
    progress = false;
    for (std::uint16_t c = 0; c < n; ++c) {
      const auto& prog = workload.ops[c];
      while (pc[c] < prog.size()) {
        const WorkloadOp& op = prog[pc[c]];
        if (op.kind == Kind::Lock) {
          if (holder[op.id]) break;
          auto& q = grants[op.id];
          if (q.empty()) {
            throw OracleViolation("trace has no LockGrant left for c" + std::to_string(c) + " " + op.str());
          }
          if (q.front() != c) break;
          q.pop_front();
          holder[op.id] = c;
        } else if (op.kind == Kind::Unlock) {
          holder[op.id].reset();
        } else if (op.kind == Kind::Barrier) {
          auto& w = waiting[op.id];
          if (w.contains(c)) break;
          w.insert(c);
          if (w.size() < op.participants) {
            progress = true;
            break;
          }
          for (std::uint16_t x : w) {
            if (x != c) ++pc[x];
          }
          w.clear();
        } else if (op.kind == Kind::Read) {
          out.reads[c].push_back(out.image.read(op.addr, op.len));
        } else if (op.kind == Kind::Write) {
          out.image.write(op.addr, op.data);
        } else if (op.kind == Kind::Increment) {
          Bytes b = out.image.read(op.addr, 8);
          std::uint64_t v = 0;
          for (int i = 0; i < 8; ++i) v |= std::to_integer<std::uint64_t>(b[i]) << (8 * i);
          ++v;
          for (int i = 0; i < 8; ++i) b[i] = std::byte((v >> (8 * i)) & 0xFF);
          out.image.write(op.addr, b);
        }
        ++pc[c];
        progress = true;
      }
    }
  }
  for (std::uint16_t c = 0; c < n; ++c) {
    if (pc[c] < workload.ops[c].size()) {
      throw OracleViolation("trace order cannot be replayed: c" + std::to_string(c) + " stuck at " +
                            workload.ops[c][pc[c]].str());
    }
  }
  return out;
}

}  // namespace dsm
