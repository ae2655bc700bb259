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
#include <cstring>
#include <string>

#include "dsm/node_api.hpp"

namespace dsm {

namespace {

void check_gas_range(const GasConfig& cfg, std::uint64_t addr, std::uint64_t len) {
  if (addr > cfg.gas_size || len > cfg.gas_size - addr) {
    throw AddressError("range [" + std::to_string(addr) + ", +" + std::to_string(len) +
                       ") outside the " + format_size(cfg.gas_size) + " global address space");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

OpExecutor::OpExecutor(const GasConfig& cfg, Kind kind, std::uint64_t addr, std::uint64_t len)
    : page_size_(cfg.page_size), kind_(kind), begin_(addr), pos_(addr), end_(addr + len) {
  check_gas_range(cfg, addr, len);
}

OpExecutor OpExecutor::read(const GasConfig& cfg, std::uint64_t addr, std::span<std::byte> dst) {
  OpExecutor e(cfg, Kind::Read, addr, dst.size());
  e.dst_ = dst.data();
  return e;
}

OpExecutor OpExecutor::write(const GasConfig& cfg, std::uint64_t addr, std::span<const std::byte> src) {
  OpExecutor e(cfg, Kind::Write, addr, src.size());
  e.src_ = src.data();
  return e;
}

OpExecutor OpExecutor::increment(const GasConfig& cfg, std::uint64_t addr) {
  if (addr % 8 != 0) throw AddressError("increment address " + std::to_string(addr) + " not 8-byte aligned");
  return OpExecutor(cfg, Kind::Increment, addr, 8);
}

void OpExecutor::apply(std::span<std::byte> page) {
  std::uint64_t off = pos_ % page_size_;
  std::uint64_t n = std::min(page_size_ - off, end_ - pos_);
  std::byte* p = page.data() + off;
  switch (kind_) {
    case Kind::Read:
      std::memcpy(dst_ + (pos_ - begin_), p, n);
      break;
    case Kind::Write:
      std::memcpy(p, src_ + (pos_ - begin_), n);
      break;
    case Kind::Increment: {
      std::uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v |= std::to_integer<std::uint64_t>(p[i]) << (8 * i);
      ++v;
      for (int i = 0; i < 8; ++i) p[i] = std::byte((v >> (8 * i)) & 0xFF);
      break;
    }
  }
  pos_ += n;
}

Actions OpExecutor::step(ComputeNode& node, LocalTime now) {
  Actions out;
  AccessMode mode = kind_ == Kind::Read ? AccessMode::Read : AccessMode::Write;
  while (!done() && !node.busy()) {
    PageId page{pos_ / page_size_};
    if (auto hit = node.try_hit(page, mode); !hit.empty()) {
      apply(hit);
      continue;
    }
    Actions a = node.access(page, mode, now, [this](std::span<std::byte> bytes) { apply(bytes); });
    bool finished = a.completed;
    a.completed = false;
    out.merge(std::move(a));
    if (!finished) break;
  }
  return out;
}

// ---------------------------------------------------------------------------

SimBackend::SimBackend(std::shared_ptr<SimCluster> cluster, std::uint16_t compute)
    : cluster_(std::move(cluster)), index_(compute) {
  if (compute >= cluster_->config().num_computes) throw ConfigError("compute index out of range");
}

void SimBackend::execute(const NodeOp& op) {
  auto t0 = std::chrono::steady_clock::now();
  cluster_->invoke(index_, op);
  while (cluster_->compute(index_).busy()) {
    if (!cluster_->step()) {
      throw DeadlockError("c" + std::to_string(index_) + " blocked with no events left to process");
    }
  }
  sim_wall_ += std::chrono::steady_clock::now() - t0;
}

std::span<std::byte> SimBackend::try_hit(PageId page, AccessMode mode) {
  return cluster_->compute(index_).try_hit(page, mode);
}

// ---------------------------------------------------------------------------

StreamBackend::StreamBackend(const GasConfig& cfg, std::uint16_t compute, HostMap hosts)
    : node_(cfg, compute), transport_(NodeId::compute(compute), std::move(hosts)),
      epoch_(std::chrono::steady_clock::now()) {
  transport_.listen();
  for (std::uint32_t s = 0; s < cfg.num_servers; ++s) {
    transport_.connect(NodeId::server(static_cast<std::uint16_t>(s)));
  }
  pump_ = std::thread([this] { pump(); });
}

StreamBackend::~StreamBackend() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  if (pump_.joinable()) pump_.join();
  transport_.shutdown();
}

LocalTime StreamBackend::local_now() const {
  return std::chrono::duration_cast<LocalTime>(std::chrono::steady_clock::now() - epoch_);
}

void StreamBackend::apply(Actions& a) {
  for (Envelope& e : a.sends) transport_.send(e.dst, e.msg);
  for (const TimerRequest& t : a.timers) timers_.push_back(t);
}

void StreamBackend::execute(const NodeOp& op) {
  std::unique_lock lk(mu_);
  if (failure_) std::rethrow_exception(failure_);
  Actions a = op(node_, local_now());
  apply(a);
  done_cv_.wait(lk, [this] { return !node_.busy() || failure_; });
  if (failure_) std::rethrow_exception(failure_);
}

// The pump thread may drop or hand off pages at any moment, so the cache
// is only touched under the lock inside execute().
std::span<std::byte> StreamBackend::try_hit(PageId, AccessMode) { return {}; }

void StreamBackend::pump() {
  for (;;) {
    std::chrono::nanoseconds wait = std::chrono::milliseconds(20);
    {
      std::lock_guard lk(mu_);
      if (stop_) return;
      LocalTime now = local_now();
      for (const TimerRequest& t : timers_) {
        auto left = std::chrono::duration_cast<std::chrono::nanoseconds>(t.deadline - now);
        wait = std::max(std::chrono::nanoseconds(0), std::min(wait, left));
      }
    }
    auto msg = transport_.receive(wait);
    std::lock_guard lk(mu_);
    if (stop_) return;
    try {
      if (msg) {
        Actions a = node_.handle(*msg, local_now());
        apply(a);
      }
      LocalTime now = local_now();
      std::vector<TimerRequest> due;
      auto split = std::partition(timers_.begin(), timers_.end(),
                                  [&](const TimerRequest& t) { return t.deadline > now; });
      due.assign(split, timers_.end());
      timers_.erase(split, timers_.end());
      for (const TimerRequest& t : due) {
        Actions a = node_.on_slice_deadline(t.page, now);
        apply(a);
      }
    } catch (...) {
      failure_ = std::current_exception();
    }
    done_cv_.notify_all();
  }
}

// ---------------------------------------------------------------------------

Session::Session(std::unique_ptr<Backend> backend, SessionOptions options) : backend_(std::move(backend)) {
  const GasConfig& cfg = backend_->config();
  shared_size_ = options.shared_size.value_or(cfg.gas_size / 2);
  shared_size_ -= shared_size_ % cfg.page_size;
  if (shared_size_ > cfg.gas_size) throw ConfigError("shared size exceeds the global address space");
  paging_top_ = paging_slice().second;
}

std::pair<std::uint64_t, std::uint64_t> Session::paging_slice() const {
  const GasConfig& cfg = config();
  std::uint64_t per = (cfg.gas_size - shared_size_) / cfg.num_computes;
  per -= per % cfg.page_size;
  std::uint64_t begin = shared_size_ + per * id().index;
  return {begin, begin + per};
}

DsmRegion Session::paging_alloc(std::uint64_t len) {
  std::uint64_t ps = config().page_size;
  std::uint64_t rounded = (len + ps - 1) / ps * ps;
  auto [begin, end] = paging_slice();
  (void)end;
  if (rounded > paging_top_ - begin) {
    throw AllocError("paging area exhausted: " + format_size(rounded) + " requested, " +
                     format_size(paging_top_ - begin) + " left");
  }
  paging_top_ -= rounded;
  return {paging_top_, rounded, DsmRegion::Mode::RemotePaging};
}

void Session::check_range(std::uint64_t addr, std::uint64_t len) const {
  check_gas_range(config(), addr, len);
  if (len == 0 || addr + len <= shared_size_) return;
  auto [begin, end] = paging_slice();
  std::uint64_t lo = std::max(addr, shared_size_);
  if (lo < begin || addr + len > end) {
    throw AddressError("access to [" + std::to_string(addr) + ", +" + std::to_string(len) +
                       ") reaches another node's paging area");
  }
}

void Session::run(OpExecutor& exec) {
  while (!exec.done()) {
    backend_->execute([&exec](ComputeNode& n, LocalTime now) { return exec.step(n, now); });
  }
}

void Session::read_into(std::uint64_t addr, std::span<std::byte> dst) {
  check_range(addr, dst.size());
  const std::uint64_t ps = config().page_size;
  std::uint64_t pos = addr;
  std::uint64_t end = addr + dst.size();
  // Cached pages that sit next to each other in the frame arena are copied
  // with one memcpy, as an application would copy mapped memory.
  std::byte* run_dst = nullptr;
  const std::byte* run_src = nullptr;
  std::size_t run_len = 0;
  auto flush_run = [&] {
    if (run_len) std::memcpy(run_dst, run_src, run_len);
    run_len = 0;
  };
  while (pos < end) {
    std::uint64_t off = pos % ps;
    std::uint64_t n = std::min(ps - off, end - pos);
    std::span<std::byte> out = dst.subspan(pos - addr, n);
    if (auto hit = backend_->try_hit(PageId{pos / ps}, AccessMode::Read); !hit.empty()) {
      const std::byte* src = hit.data() + off;
      if (run_len && src != run_src + run_len) flush_run();
      if (!run_len) {
        run_dst = out.data();
        run_src = src;
      }
      run_len += n;
    } else {
      flush_run();
      OpExecutor exec = OpExecutor::read(config(), pos, out);
      run(exec);
    }
    pos += n;
  }
  flush_run();
}

Bytes Session::read(std::uint64_t addr, std::uint64_t len) {
  check_range(addr, len);
  Bytes out(len);
  read_into(addr, out);
  return out;
}

void Session::write(std::uint64_t addr, std::span<const std::byte> bytes) {
  check_range(addr, bytes.size());
  const std::uint64_t ps = config().page_size;
  std::uint64_t pos = addr;
  std::uint64_t end = addr + bytes.size();
  while (pos < end) {
    std::uint64_t off = pos % ps;
    std::uint64_t n = std::min(ps - off, end - pos);
    auto in = bytes.subspan(pos - addr, n);
    if (auto hit = backend_->try_hit(PageId{pos / ps}, AccessMode::Write); !hit.empty()) {
      std::memcpy(hit.data() + off, in.data(), n);
    } else {
      OpExecutor exec = OpExecutor::write(config(), pos, in);
      run(exec);
    }
    pos += n;
  }
}

void Session::fill(std::uint64_t addr, std::uint64_t len, std::byte value) {
  check_range(addr, len);
  Bytes chunk(std::min<std::uint64_t>(len, config().page_size), value);
  for (std::uint64_t done = 0; done < len;) {
    std::uint64_t n = std::min<std::uint64_t>(chunk.size(), len - done);
    // Keep chunks page-aligned after the first so each maps to one page.
    if (std::uint64_t off = (addr + done) % config().page_size; off != 0) {
      n = std::min(n, config().page_size - off);
    }
    write(addr + done, std::span<const std::byte>(chunk.data(), n));
    done += n;
  }
}

void Session::lock(SyncId id) {
  backend_->execute([id](ComputeNode& n, LocalTime) { return n.lock_acquire(id); });
}

void Session::unlock(SyncId id) {
  backend_->execute([id](ComputeNode& n, LocalTime) { return n.lock_release(id); });
}

void Session::barrier(SyncId id, std::uint32_t participants) {
  backend_->execute([id, participants](ComputeNode& n, LocalTime) { return n.barrier_enter(id, participants); });
}

void Session::flush() {
  backend_->execute([](ComputeNode& n, LocalTime) { return n.flush(); });
}

void serve_stream(const GasConfig& cfg, std::uint16_t server, const HostMap& hosts,
                  const std::atomic<bool>& stop) {
  ServerNode node(cfg, server);
  StreamTransport transport(node.id(), hosts);
  transport.listen();
  while (!stop) {
    auto msg = transport.receive(std::chrono::milliseconds(50));
    if (!msg) continue;
    Actions a = node.handle(*msg);
    for (Envelope& e : a.sends) transport.send(e.dst, e.msg);
  }
}

std::unique_ptr<Session> dsm_map(const GasConfig& cfg, const MapOptions& options) {
  cfg.validate();
  std::unique_ptr<Backend> backend;
  if (options.backend == BackendKind::Sim) {
    auto cluster = std::make_shared<SimCluster>(cfg, options.skew, options.latency);
    backend = std::make_unique<SimBackend>(std::move(cluster), options.compute);
  } else {
    if (options.compute >= cfg.num_computes) throw ConfigError("compute index out of range");
    backend = std::make_unique<StreamBackend>(cfg, options.compute, options.hosts);
  }
  return std::make_unique<Session>(std::move(backend), options.session);
}

}  // namespace dsm
