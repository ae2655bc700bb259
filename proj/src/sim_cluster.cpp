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
#include <cmath>
#include <string>

#include "dsm/sim.hpp"

namespace dsm {

Duration NodeClock::global_at(LocalTime l) const {
  double guess = std::ceil(l.count() / drift - static_cast<double>(offset.count()));
  Duration t(static_cast<std::int64_t>(guess));
  // The division rounds; settle on the exact first instant.
  while (local(t) < l) t += Duration(1);
  while (local(t - Duration(1)) >= l) t -= Duration(1);
  return t;
}

NodeClock ClockSkew::of(NodeId n) const {
  auto it = clocks.find(n);
  return it == clocks.end() ? NodeClock{} : it->second;
}

void ClockSkew::validate() const {
  for (const auto& [n, c] : clocks) {
    if (!(c.drift > 0.0) || !std::isfinite(c.drift)) {
      throw ConfigError("clock drift of " + n.str() + " must be positive");
    }
  }
}

// ---------------------------------------------------------------------------

GasImage::GasImage(std::uint64_t gas_size, std::uint64_t page_size)
    : gas_size_(gas_size), page_size_(page_size) {}

void GasImage::write(std::uint64_t addr, std::span<const std::byte> bytes) {
  if (addr > gas_size_ || bytes.size() > gas_size_ - addr) throw AddressError("image write out of range");
  std::uint64_t pos = addr;
  std::size_t done = 0;
  while (done < bytes.size()) {
    std::uint64_t idx = pos / page_size_;
    std::uint64_t off = pos % page_size_;
    std::uint64_t n = std::min<std::uint64_t>(page_size_ - off, bytes.size() - done);
    Bytes& page = pages_[idx];
    if (page.empty()) page.resize(page_size_);
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(done), n,
                page.begin() + static_cast<std::ptrdiff_t>(off));
    pos += n;
    done += n;
  }
}

Bytes GasImage::read(std::uint64_t addr, std::uint64_t len) const {
  if (addr > gas_size_ || len > gas_size_ - addr) throw AddressError("image read out of range");
  Bytes out(len);
  std::uint64_t pos = addr;
  std::uint64_t done = 0;
  while (done < len) {
    std::uint64_t idx = pos / page_size_;
    std::uint64_t off = pos % page_size_;
    std::uint64_t n = std::min(page_size_ - off, len - done);
    if (auto it = pages_.find(idx); it != pages_.end()) {
      std::copy_n(it->second.begin() + static_cast<std::ptrdiff_t>(off), n,
                  out.begin() + static_cast<std::ptrdiff_t>(done));
    }
    pos += n;
    done += n;
  }
  return out;
}

void GasImage::set_page(std::uint64_t index, Bytes bytes) {
  if (bytes.size() != page_size_) throw AddressError("page image of wrong size");
  pages_[index] = std::move(bytes);
}

std::optional<std::uint64_t> GasImage::first_difference(const GasImage& other) const {
  // Every byte outside both images' stored pages is zero on both sides.
  std::set<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const auto& [i, _] : pages_) ranges.insert({i * page_size_, page_size_});
  for (const auto& [i, _] : other.pages_) ranges.insert({i * other.page_size_, other.page_size_});
  for (auto [addr, len] : ranges) {
    if (addr + len > gas_size_ || addr + len > other.gas_size_) return addr;
    Bytes a = read(addr, len);
    Bytes b = other.read(addr, len);
    if (a == b) continue;
    auto mm = std::mismatch(a.begin(), a.end(), b.begin());
    return addr + static_cast<std::uint64_t>(mm.first - a.begin());
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

struct SimCluster::Event {
  enum class Type : std::uint8_t { Deliver, Timer, Wake };
  Duration time{0};
  NodeId dst;
  NodeId src;
  std::uint64_t seq = 0;
  std::uint64_t order = 0;
  Type type = Type::Deliver;
  Message msg;
  PageId page;
  Duration sent_at{0};
};

bool SimCluster::EventOrder::operator()(const Event& a, const Event& b) const {
  if (a.time != b.time) return a.time < b.time;
  if (a.dst != b.dst) return a.dst < b.dst;
  if (a.src != b.src) return a.src < b.src;
  if (a.seq != b.seq) return a.seq < b.seq;
  return a.order < b.order;
}

SimCluster::SimCluster(const GasConfig& cfg, ClockSkew skew, LatencyModel latency)
    : cfg_(cfg),
      skew_(std::move(skew)),
      net_(cfg.num_servers, cfg.num_computes, latency),
      queue_(std::make_unique<std::set<Event, EventOrder>>()) {
  cfg_.validate();
  skew_.validate();
  for (std::uint32_t i = 0; i < cfg_.num_servers; ++i) {
    servers_.push_back(std::make_unique<ServerNode>(cfg_, static_cast<std::uint16_t>(i)));
  }
  for (std::uint32_t i = 0; i < cfg_.num_computes; ++i) {
    auto id = static_cast<std::uint16_t>(i);
    computes_.push_back(std::make_unique<ComputeNode>(cfg_, id));
    clocks_.push_back(skew_.of(NodeId::compute(id)));
  }
}

SimCluster::~SimCluster() = default;

LocalTime SimCluster::local_now(std::uint16_t c) const { return clocks_.at(c).local(now_); }

bool SimCluster::invoke(std::uint16_t c, const NodeOp& op) {
  Actions a = op(compute(c), local_now(c));
  dispatch(NodeId::compute(c), a);
  return a.completed;
}

void SimCluster::wake_at(std::uint16_t c, Duration at) {
  Event e;
  e.time = std::max(at, now_);
  e.dst = e.src = NodeId::compute(c);
  e.order = order_++;
  e.type = Event::Type::Wake;
  queue_->insert(std::move(e));
}

void SimCluster::dispatch(NodeId from, Actions& a) {
  for (Envelope& env : a.sends) {
    Event e;
    e.time = net_.deliver_at(from, env.dst, env.msg, now_);
    e.dst = env.dst;
    e.src = from;
    e.seq = env.msg.seq;
    e.order = order_++;
    e.sent_at = now_;
    e.msg = std::move(env.msg);
    queue_->insert(std::move(e));
  }
  for (const TimerRequest& t : a.timers) {
    Event e;
    e.time = std::max(now_, clocks_.at(from.index).global_at(t.deadline));
    e.dst = e.src = from;
    e.order = order_++;
    e.type = Event::Type::Timer;
    e.page = t.page;
    queue_->insert(std::move(e));
  }
}

bool SimCluster::step() {
  if (queue_->empty()) return false;
  auto node = queue_->extract(queue_->begin());
  Event& e = node.value();
  now_ = e.time;
  ++processed_;
  deliver(e);
  return true;
}

void SimCluster::deliver(Event& e) {
  switch (e.type) {
    case Event::Type::Deliver: {
      if (tracing_) {
        trace_.push_back({e.time, e.src, e.dst, e.msg.kind, e.msg.page, e.msg.seq, e.sent_at});
      }
      if (e.dst.is_server()) {
        Actions a = server(e.dst.index).handle(e.msg);
        dispatch(e.dst, a);
      } else {
        std::uint16_t c = e.dst.index;
        Actions a = compute(c).handle(e.msg, local_now(c));
        dispatch(e.dst, a);
        if (a.completed && on_complete) on_complete(c);
      }
      break;
    }
    case Event::Type::Timer: {
      std::uint16_t c = e.dst.index;
      Actions a = compute(c).on_slice_deadline(e.page, local_now(c));
      dispatch(e.dst, a);
      if (a.completed && on_complete) on_complete(c);
      break;
    }
    case Event::Type::Wake:
      if (on_wake) on_wake(e.dst.index);
      break;
  }
}

bool SimCluster::idle() const { return queue_->empty(); }
std::size_t SimCluster::pending_events() const { return queue_->size(); }

GasImage SimCluster::image() const {
  GasImage img(cfg_.gas_size, cfg_.page_size);
  std::set<std::uint64_t> touched;
  for (const auto& s : servers_) {
    for (PageId p : s->touched_pages()) touched.insert(p.index);
  }
  for (const auto& c : computes_) {
    for (PageId p : c->resident_pages()) touched.insert(p.index);
  }
  for (std::uint64_t idx : touched) {
    PageId p{idx};
    std::optional<Bytes> latest;
    for (const auto& c : computes_) {
      const CachedPage* cp = c->find(p);
      if (cp && (cp->privilege == Privilege::Write || cp->dirty)) {
        if (latest) throw ProtocolError("two nodes hold the latest copy of page " + std::to_string(idx));
        latest = cp->bytes();
      }
    }
    if (!latest) {
      const ServerPageView* v = servers_[owner_of(p, cfg_.num_servers).index]->find(p);
      if (v && !v->entry.server_copy.empty()) latest = v->entry.server_copy;
    }
    if (latest) img.set_page(idx, std::move(*latest));
  }
  return img;
}

}  // namespace dsm
