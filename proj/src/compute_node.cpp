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
#include <string>

#include "dsm/protocol.hpp"

namespace dsm {

namespace {

std::string page_str(PageId p) { return "page " + std::to_string(p.index); }

}  // namespace

ComputeNode::ComputeNode(const GasConfig& cfg, std::uint16_t index)
    : cfg_(cfg), self_(NodeId::compute(index)) {
  cfg_.validate();
  if (index >= cfg_.num_computes) throw ConfigError("compute index out of range");
  if (cfg_.num_pages() >= kNil) throw ConfigError("too many pages for one compute node");
  slots_.resize(cfg_.num_pages());
  // Left uninitialised; frames are always filled before use.
  arena_.reset(new std::byte[cfg_.cache_frames() * cfg_.page_size]);
  free_frames_.resize(cfg_.cache_frames());
  for (std::size_t i = 0; i < free_frames_.size(); ++i) {
    free_frames_[i] = static_cast<std::uint32_t>(free_frames_.size() - 1 - i);
  }
}

void ComputeNode::check_page(PageId page) const {
  if (page.index >= cfg_.num_pages()) {
    throw AddressError(page_str(page) + " outside the global address space");
  }
}

const CachedPage* ComputeNode::find(PageId page) const {
  if (page.index >= slots_.size()) return nullptr;
  const Slot* s = slot(page);
  return s ? &s->page : nullptr;
}

std::vector<PageId> ComputeNode::resident_pages() const {
  std::vector<PageId> out;
  for (std::uint64_t i : lru_order()) out.push_back(PageId{i});
  std::sort(out.begin(), out.end());
  return out;
}

void ComputeNode::send(Actions& out, NodeId dst, Message m) {
  m.src = self_;
  m.seq = next_seq_++;
  out.sends.push_back({dst, std::move(m)});
}

void ComputeNode::lru_unlink(std::uint32_t idx) {
  Slot& s = slots_[idx];
  (s.prev == kNil ? lru_head_ : slots_[s.prev].next) = s.next;
  (s.next == kNil ? lru_tail_ : slots_[s.next].prev) = s.prev;
  s.prev = s.next = kNil;
}

void ComputeNode::lru_append(std::uint32_t idx) {
  Slot& s = slots_[idx];
  s.prev = lru_tail_;
  s.next = kNil;
  (lru_tail_ == kNil ? lru_head_ : slots_[lru_tail_].next) = idx;
  lru_tail_ = idx;
}

std::vector<std::uint64_t> ComputeNode::lru_order() const {
  std::vector<std::uint64_t> out;
  for (std::uint32_t i = lru_head_; i != kNil; i = slots_[i].next) out.push_back(i);
  return out;
}

void ComputeNode::touch(Slot& s) {
  auto idx = static_cast<std::uint32_t>(s.page.page.index);
  if (idx == lru_tail_) return;
  lru_unlink(idx);
  lru_append(idx);
}

void ComputeNode::complete(Actions& out) {
  pending_.reset();
  out.completed = true;
}

std::span<std::byte> ComputeNode::try_hit(PageId page, AccessMode mode) {
  if (page.index >= slots_.size()) return {};
  Slot* s = slot(page);
  if (!s) return {};
  if (mode == AccessMode::Write && s->page.privilege != Privilege::Write) return {};
  touch(*s);
  if (mode == AccessMode::Write) s->page.dirty = true;
  return s->page.data;
}

Actions ComputeNode::access(PageId page, AccessMode mode, LocalTime /*now*/, PageVisitor visit) {
  if (pending_) throw ProtocolError(self_.str() + ": access while another operation is outstanding");
  check_page(page);
  Actions out;
  if (auto bytes = try_hit(page, mode); !bytes.empty()) {
    visit(bytes);
    out.completed = true;
    return out;
  }
  pending_.emplace();
  pending_->kind = Pending::Kind::Access;
  pending_->page = page;
  pending_->mode = mode;
  pending_->visit = std::move(visit);

  if (Slot* s = slot(page)) {
    // Read copy, write wanted. The latest-copy holder returns its bytes to
    // the server first so the grant can carry them.
    if (s->page.dirty) {
      send(out, owner_of(page, cfg_.num_servers),
           Message::with_bytes(MessageKind::Writeback, page.index, s->page.bytes()));
      ++awaiting_writeback_acks_[page];
      drop(page);
    }
    send_request(out);
    return out;
  }
  obtain_frame(out);
  return out;
}

void ComputeNode::send_request(Actions& out) {
  pending_->stage = Pending::Stage::AwaitServer;
  auto kind = pending_->mode == AccessMode::Read ? MessageKind::ReadReq : MessageKind::WriteReq;
  send(out, owner_of(pending_->page, cfg_.num_servers), Message::make(kind, pending_->page.index));
}

// Least recently used page that is not mid-handoff. Clean copies go
// silently (plus a ReaderDrop so the directory stays exact); anything the
// directory names us for is written back and the request waits for the ack.
void ComputeNode::obtain_frame(Actions& out) {
  if (resident_ < cfg_.cache_frames()) {
    send_request(out);
    return;
  }
  for (std::uint32_t idx = lru_head_; idx != kNil; idx = slots_[idx].next) {
    CachedPage& p = slots_[idx].page;
    if (p.pinned()) continue;
    PageId victim{idx};
    NodeId owner = owner_of(victim, cfg_.num_servers);
    if (p.privilege == Privilege::Read && !p.dirty) {
      send(out, owner, Message::make(MessageKind::ReaderDrop, idx));
      drop(victim);
      send_request(out);
      return;
    }
    send(out, owner, Message::with_bytes(MessageKind::Writeback, idx, p.bytes()));
    ++awaiting_writeback_acks_[victim];
    drop(victim);
    pending_->stage = Pending::Stage::AwaitWriteback;
    pending_->victim = victim;
    return;
  }
  // Every frame is pinned until its slice ends; retried after the next event.
  pending_->stage = Pending::Stage::NeedFrame;
}

void ComputeNode::drop(PageId page) {
  Slot* s = slot(page);
  free_frames_.push_back(s->page.frame);
  lru_unlink(static_cast<std::uint32_t>(page.index));
  slots_[page.index] = Slot{};
  copy_reqs_.erase(page);
  --resident_;
}

void ComputeNode::install(Actions& out, PageId page, Bytes data, Privilege priv, LocalTime now) {
  if (data.size() != cfg_.page_size) {
    throw ProtocolError("page transfer of " + std::to_string(data.size()) + " bytes");
  }
  Pending p = std::move(*pending_);
  complete(out);
  if (priv == Privilege::Read && p.invalidated) {
    // Good for this one access only: the directory has already forgotten us.
    p.visit(data);
    return;
  }
  Slot* s = slot(page);
  std::uint32_t frame = 0;
  if (!s) {
    if (free_frames_.empty()) throw ProtocolError("internal: no free frame for " + page_str(page));
    frame = free_frames_.back();
    free_frames_.pop_back();
    s = &slots_[page.index];
    s->used = true;
    lru_append(static_cast<std::uint32_t>(page.index));
    ++resident_;
  } else {
    frame = s->page.frame;
    touch(*s);
  }
  s->page = CachedPage{};
  s->page.page = page;
  s->page.frame = frame;
  s->page.data = std::span<std::byte>(arena_.get() + std::uint64_t{frame} * cfg_.page_size, cfg_.page_size);
  std::copy(data.begin(), data.end(), s->page.data.begin());
  s->page.privilege = priv;
  s->page.dirty = priv == Privilege::Write;
  if (priv == Privilege::Write) s->page.slice_deadline = now + cfg_.slice_len;
  p.visit(s->page.data);
}

Actions ComputeNode::handle(const Message& m, LocalTime now) {
  Actions out;
  PageId page{m.page};
  auto expect_access = [&](AccessMode mode) {
    if (!pending_ || pending_->kind != Pending::Kind::Access || pending_->page != page ||
        pending_->mode != mode ||
        (pending_->stage != Pending::Stage::AwaitServer &&
         pending_->stage != Pending::Stage::AwaitHolder)) {
      throw ProtocolError(self_.str() + ": unexpected " + std::string(kind_name(m.kind)) +
                          " for " + page_str(page) + " from " + m.src.str());
    }
  };

  switch (m.kind) {
    case MessageKind::PageData:
      expect_access(AccessMode::Read);
      install(out, page, m.payload, Privilege::Read, now);
      break;
    case MessageKind::WriteGrant:
    case MessageKind::PrivilegeTransfer:
      expect_access(AccessMode::Write);
      install(out, page, m.payload, Privilege::Write, now);
      break;
    case MessageKind::Redirect: {
      if (!pending_ || pending_->kind != Pending::Kind::Access || pending_->page != page ||
          pending_->stage != Pending::Stage::AwaitServer) {
        throw ProtocolError(self_.str() + ": unexpected Redirect for " + page_str(page));
      }
      // Everything the server sent before registering us has arrived by now.
      pending_->invalidated = false;
      pending_->holder = m.node_arg();
      pending_->holder_req_seq = next_seq_;
      auto kind = pending_->mode == AccessMode::Read ? MessageKind::CopyReq : MessageKind::HandoffReq;
      send(out, pending_->holder, Message::make(kind, page.index));
      pending_->stage = Pending::Stage::AwaitHolder;
      break;
    }
    case MessageKind::Nack:
      // Only the answer to our latest holder request counts; older ones
      // belong to chains that were already satisfied.
      if (pending_ && pending_->kind == Pending::Kind::Access && pending_->page == page &&
          pending_->stage == Pending::Stage::AwaitHolder && pending_->holder == m.src &&
          pending_->holder_req_seq == m.nacked_seq()) {
        send_request(out);
      }
      break;
    case MessageKind::Invalidate:
      out.merge(handle_invalidate(page, m.src));
      break;
    case MessageKind::CopyReq:
    case MessageKind::HandoffReq:
      out.merge(handle_handoff_or_copy_req(page, m.src, m.kind, m.seq, now));
      break;
    case MessageKind::WritebackAck: {
      auto it = awaiting_writeback_acks_.find(page);
      if (it == awaiting_writeback_acks_.end()) {
        throw ProtocolError(self_.str() + ": unexpected WritebackAck for " + page_str(page));
      }
      if (--it->second == 0) awaiting_writeback_acks_.erase(it);
      if (pending_ && pending_->kind == Pending::Kind::Access &&
          pending_->stage == Pending::Stage::AwaitWriteback && pending_->victim == page) {
        pending_->victim.reset();
        obtain_frame(out);
      } else if (pending_ && pending_->kind == Pending::Kind::Flush &&
                 awaiting_writeback_acks_.empty()) {
        complete(out);
      }
      break;
    }
    case MessageKind::LockGrant:
      if (!pending_ || pending_->kind != Pending::Kind::Lock || pending_->sync_id != m.page) {
        throw ProtocolError(self_.str() + ": unexpected LockGrant for " + std::to_string(m.page));
      }
      held_locks_.insert(m.page);
      complete(out);
      break;
    case MessageKind::BarrierRelease:
      if (!pending_ || pending_->kind != Pending::Kind::Barrier || pending_->sync_id != m.page) {
        throw ProtocolError(self_.str() + ": unexpected BarrierRelease for " + std::to_string(m.page));
      }
      complete(out);
      break;
    default:
      throw ProtocolError(self_.str() + " cannot handle " + std::string(kind_name(m.kind)));
  }
  after_event(out);
  return out;
}

void ComputeNode::after_event(Actions& out) {
  if (pending_ && pending_->kind == Pending::Kind::Access &&
      pending_->stage == Pending::Stage::NeedFrame) {
    obtain_frame(out);
  }
}

Actions ComputeNode::handle_invalidate(PageId page, NodeId from) {
  Actions out;
  if (page.index < slots_.size()) {
    if (Slot* s = slot(page)) {
      if (s->page.privilege == Privilege::Write || s->page.dirty) {
        throw ProtocolError(self_.str() + ": Invalidate for " + page_str(page) +
                            " which it holds as writer or latest-copy holder");
      }
      drop(page);
    } else if (pending_ && pending_->kind == Pending::Kind::Access && pending_->page == page &&
               pending_->mode == AccessMode::Read &&
               pending_->stage == Pending::Stage::AwaitHolder) {
      pending_->invalidated = true;
    }
  }
  send(out, from, Message::make(MessageKind::InvalidateAck, page.index));
  return out;
}

void ComputeNode::nack(Actions& out, PageId page, NodeId requester, std::uint64_t request_seq) {
  send(out, requester, Message::nack(page.index, request_seq));
}

// The time-slice rule: a writer answers HandoffReq/CopyReq only once its
// slice (fixed at grant time, local clock) has run out.
Actions ComputeNode::handle_handoff_or_copy_req(PageId page, NodeId requester, MessageKind kind,
                                                std::uint64_t request_seq, LocalTime now) {
  Actions out;
  Slot* s = page.index < slots_.size() ? slot(page) : nullptr;
  if (!s || (s->page.privilege == Privilege::Read && !s->page.dirty)) {
    nack(out, page, requester, request_seq);
    return out;
  }
  CachedPage& p = s->page;
  if (p.privilege == Privilege::Read) {
    if (kind == MessageKind::CopyReq) {
      send(out, requester, Message::with_bytes(MessageKind::PageData, page.index, p.bytes()));
    } else {
      p.pending_handoff = requester;
      relinquish(out, p);
    }
    return out;
  }
  if (kind == MessageKind::HandoffReq) {
    if (p.pending_handoff) {
      if (*p.pending_handoff == requester) return out;
      throw ProtocolError(self_.str() + ": second handoff for " + page_str(page) + " from " +
                          requester.str() + " while " + p.pending_handoff->str() + " waits");
    }
    p.pending_handoff = requester;
  } else {
    copy_reqs_[page].emplace(requester, request_seq);
    p.copy_reqs_waiting = true;
  }
  if (now >= p.slice_deadline) {
    act_on_deadline(out, p);
  } else if (!p.timer_armed) {
    p.timer_armed = true;
    out.timers.push_back({page, p.slice_deadline});
  }
  return out;
}

Actions ComputeNode::on_slice_deadline(PageId page, LocalTime now) {
  Actions out;
  Slot* s = page.index < slots_.size() ? slot(page) : nullptr;
  // Stale timers (page gone, or a later tenure with its own deadline) are
  // ignored. Nothing pending means nothing to give up.
  if (!s || s->page.privilege != Privilege::Write || now < s->page.slice_deadline) return out;
  s->page.timer_armed = false;
  act_on_deadline(out, s->page);
  after_event(out);
  return out;
}

void ComputeNode::act_on_deadline(Actions& out, CachedPage& p) {
  if (p.pending_handoff) {
    relinquish(out, p);
  } else if (p.copy_reqs_waiting) {
    downgrade(out, p);
  }
}

void ComputeNode::relinquish(Actions& out, CachedPage& p) {
  PageId page = p.page;
  NodeId to = *p.pending_handoff;
  if (auto it = copy_reqs_.find(page); it != copy_reqs_.end()) {
    for (auto [r, seq] : it->second) nack(out, page, r, seq);
  }
  send(out, to, Message::with_bytes(MessageKind::PrivilegeTransfer, page.index, p.bytes()));
  send(out, owner_of(page, cfg_.num_servers),
       Message::with_node(MessageKind::TransferNotice, page.index, to));
  drop(page);
}

void ComputeNode::downgrade(Actions& out, CachedPage& p) {
  p.privilege = Privilege::Read;
  p.timer_armed = false;
  send(out, owner_of(p.page, cfg_.num_servers), Message::make(MessageKind::Downgrade, p.page.index));
  if (auto it = copy_reqs_.find(p.page); it != copy_reqs_.end()) {
    for (auto [r, seq] : it->second) {
      send(out, r, Message::with_bytes(MessageKind::PageData, p.page.index, p.bytes()));
    }
    copy_reqs_.erase(it);
  }
  p.copy_reqs_waiting = false;
}

Actions ComputeNode::lock_acquire(SyncId id) {
  if (pending_) throw ProtocolError(self_.str() + ": lock while another operation is outstanding");
  if (held_locks_.contains(id)) {
    throw LockError(self_.str() + " already holds lock " + std::to_string(id));
  }
  Actions out;
  pending_.emplace();
  pending_->kind = Pending::Kind::Lock;
  pending_->sync_id = id;
  send(out, sync_manager_for(id, cfg_.num_servers), Message::make(MessageKind::LockReq, id));
  return out;
}

Actions ComputeNode::lock_release(SyncId id) {
  if (pending_) throw ProtocolError(self_.str() + ": unlock while another operation is outstanding");
  if (held_locks_.erase(id) == 0) {
    throw LockError(self_.str() + " released lock " + std::to_string(id) + " it does not hold");
  }
  Actions out;
  send(out, sync_manager_for(id, cfg_.num_servers), Message::make(MessageKind::LockRelease, id));
  out.completed = true;
  return out;
}

Actions ComputeNode::barrier_enter(SyncId id, std::uint32_t expected) {
  if (pending_) throw ProtocolError(self_.str() + ": barrier while another operation is outstanding");
  Actions out;
  pending_.emplace();
  pending_->kind = Pending::Kind::Barrier;
  pending_->sync_id = id;
  send(out, sync_manager_for(id, cfg_.num_servers), Message::barrier_enter(id, expected));
  return out;
}

Actions ComputeNode::flush() {
  if (pending_) throw ProtocolError(self_.str() + ": flush while another operation is outstanding");
  Actions out;
  std::vector<std::uint64_t> order = lru_order();
  for (std::uint64_t idx : order) {
    CachedPage& p = slots_[idx].page;
    if (p.pinned()) continue;
    NodeId owner = owner_of(p.page, cfg_.num_servers);
    if (p.privilege == Privilege::Read && !p.dirty) {
      send(out, owner, Message::make(MessageKind::ReaderDrop, idx));
    } else {
      send(out, owner, Message::with_bytes(MessageKind::Writeback, idx, p.bytes()));
      ++awaiting_writeback_acks_[p.page];
    }
    drop(PageId{idx});
  }
  if (awaiting_writeback_acks_.empty()) {
    out.completed = true;
  } else {
    pending_.emplace();
    pending_->kind = Pending::Kind::Flush;
  }
  return out;
}

}  // namespace dsm
