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

void Actions::merge(Actions&& other) {
  for (auto& e : other.sends) sends.push_back(std::move(e));
  for (auto& t : other.timers) timers.push_back(t);
  completed = completed || other.completed;
}

ServerNode::ServerNode(const GasConfig& cfg, std::uint16_t index)
    : cfg_(cfg), self_(NodeId::server(index)) {
  cfg_.validate();
  if (index >= cfg_.num_servers) throw ConfigError("server index out of range");
}

ServerPageView& ServerNode::state(PageId page) {
  if (page.index >= cfg_.num_pages()) {
    throw AddressError(page_str(page) + " outside the global address space");
  }
  if (owner_of(page, cfg_.num_servers) != self_) {
    throw ProtocolError(self_.str() + " does not own " + page_str(page));
  }
  auto [it, fresh] = pages_.try_emplace(page);
  if (fresh) it->second.entry.server_copy.assign(cfg_.page_size, std::byte{0});
  return it->second;
}

const ServerPageView* ServerNode::find(PageId page) const {
  auto it = pages_.find(page);
  return it == pages_.end() ? nullptr : &it->second;
}

std::vector<PageId> ServerNode::touched_pages() const {
  std::vector<PageId> out;
  out.reserve(pages_.size());
  for (const auto& [p, v] : pages_) out.push_back(p);
  std::sort(out.begin(), out.end());
  return out;
}

void ServerNode::send(Actions& out, NodeId dst, Message m) {
  m.src = self_;
  m.seq = next_seq_++;
  out.sends.push_back({dst, std::move(m)});
}

void ServerNode::require_compute(NodeId n, const char* what) const {
  if (!n.is_compute()) throw ProtocolError(std::string(what) + " from server node " + n.str());
  if (n.index >= cfg_.num_computes) throw ProtocolError(std::string(what) + " from unknown node " + n.str());
}

Actions ServerNode::handle(const Message& m) {
  PageId page{m.page};
  switch (m.kind) {
    case MessageKind::ReadReq:
      return handle_read_req(page, m.src);
    case MessageKind::WriteReq:
      return handle_write_req(page, m.src);
    case MessageKind::InvalidateAck:
      return handle_invalidate_ack(page, m.src);
    case MessageKind::TransferNotice:
      return handle_transfer_notice(page, m.src, m.node_arg());
    case MessageKind::Downgrade:
      return handle_downgrade(page, m.src);
    case MessageKind::Writeback:
      return handle_writeback(page, m.payload, m.src);
    case MessageKind::ReaderDrop:
      return handle_reader_drop(page, m.src);
    case MessageKind::BarrierEnter:
    case MessageKind::LockReq:
    case MessageKind::LockRelease: {
      require_compute(m.src, "sync request");
      if (sync_manager_for(m.page, cfg_.num_servers) != self_) {
        throw ProtocolError(self_.str() + " does not manage sync id " + std::to_string(m.page));
      }
      Actions out;
      if (m.kind == MessageKind::BarrierEnter) {
        for (NodeId n : barriers_.enter(m.page, m.barrier_expected(), m.src)) {
          send(out, n, Message::make(MessageKind::BarrierRelease, m.page));
        }
      } else if (m.kind == MessageKind::LockReq) {
        if (auto granted = mutexes_.acquire(m.page, m.src)) {
          send(out, *granted, Message::make(MessageKind::LockGrant, m.page));
        }
      } else if (auto next = mutexes_.release(m.page, m.src)) {
        send(out, *next, Message::make(MessageKind::LockGrant, m.page));
      }
      return out;
    }
    default:
      throw ProtocolError(self_.str() + " cannot handle " + std::string(kind_name(m.kind)));
  }
}

// Scenario 1 (Current: send the page) and scenario 2 (redirect to the node
// with the latest copy). A WriteLocked page also redirects: the writer
// answers at the end of its slice by downgrading.
void ServerNode::respond_read(Actions& out, PageId page, ServerPageView& v, NodeId reader) {
  auto& e = v.entry;
  if (e.status.is_current()) {
    send(out, reader, Message::with_bytes(MessageKind::PageData, page.index, e.server_copy));
    e.readers.insert(reader);
    return;
  }
  NodeId holder = e.status.node();
  if (holder == reader) {
    throw ProtocolError(reader.str() + " requested " + page_str(page) + " which it holds");
  }
  send(out, reader, Message::with_node(MessageKind::Redirect, page.index, holder));
  e.readers.insert(reader);
}

Actions ServerNode::handle_read_req(PageId page, NodeId requester) {
  require_compute(requester, "ReadReq");
  auto& v = state(page);
  Actions out;
  if (!v.entry.write_queue.empty()) {
    // A writer is being granted; a copy handed out now could outlive the
    // invalidation round.
    auto& pr = v.pending_readers;
    if (std::find(pr.begin(), pr.end(), requester) == pr.end()) pr.push_back(requester);
    return out;
  }
  respond_read(out, page, v, requester);
  return out;
}

Actions ServerNode::handle_write_req(PageId page, NodeId requester) {
  require_compute(requester, "WriteReq");
  auto& v = state(page);
  auto& e = v.entry;
  Actions out;
  if (e.status.is_write_locked() && e.status.node() == requester) return out;

  auto queued = std::find(e.write_queue.begin(), e.write_queue.end(), requester);
  if (queued != e.write_queue.end()) {
    // A retry after the holder bounced our HandoffReq: point it back.
    if (queued == e.write_queue.begin() && v.pending &&
        v.pending->stage == PendingGrant::Stage::Redirected) {
      send(out, requester, Message::with_node(MessageKind::Redirect, page.index, v.pending->holder));
    }
    return out;
  }
  if (e.status.is_on_compute() && e.status.node() == requester) {
    throw ProtocolError(requester.str() + " asked for write on " + page_str(page) +
                        " while holding the latest copy without writing it back");
  }
  e.write_queue.push_back(requester);
  if (e.write_queue.size() == 1) start_front(out, page, v);
  return out;
}

// Scenario 3/4 entry: invalidate every reader other than the holder of the
// latest data and the incoming writer, then grant or redirect.
void ServerNode::start_front(Actions& out, PageId page, ServerPageView& v) {
  auto& e = v.entry;
  PendingGrant g;
  g.writer = e.write_queue.front();
  g.stage = PendingGrant::Stage::Invalidating;
  for (NodeId r : e.readers) {
    if (r != g.writer && !e.status.names(r)) g.outstanding.insert(r);
  }
  if (!e.status.is_current()) g.holder = e.status.node();
  v.pending = g;
  for (NodeId r : g.outstanding) send(out, r, Message::make(MessageKind::Invalidate, page.index));
  if (g.outstanding.empty()) advance_front(out, page, v);
}

void ServerNode::advance_front(Actions& out, PageId page, ServerPageView& v) {
  auto& e = v.entry;
  if (e.status.is_current()) {
    grant_from_server(out, page, v);
    return;
  }
  v.pending->stage = PendingGrant::Stage::Redirected;
  v.pending->holder = e.status.node();
  send(out, v.pending->writer, Message::with_node(MessageKind::Redirect, page.index, v.pending->holder));
}

void ServerNode::grant_from_server(Actions& out, PageId page, ServerPageView& v) {
  auto& e = v.entry;
  NodeId writer = v.pending->writer;
  e.write_queue.pop_front();
  e.readers.erase(writer);
  if (!e.readers.empty()) {
    throw ProtocolError("internal: granting " + page_str(page) + " with live readers");
  }
  e.status = PageStatus::write_locked(writer);
  v.pending.reset();
  send(out, writer, Message::with_bytes(MessageKind::WriteGrant, page.index, e.server_copy));
  front_done(out, page, v);
}

void ServerNode::front_done(Actions& out, PageId page, ServerPageView& v) {
  if (!v.entry.write_queue.empty()) {
    start_front(out, page, v);
    return;
  }
  auto parked = std::move(v.pending_readers);
  v.pending_readers.clear();
  for (NodeId r : parked) respond_read(out, page, v, r);
}

void ServerNode::replay_deferred(Actions& out, PageId /*page*/, ServerPageView& v) {
  auto deferred = std::move(v.deferred);
  v.deferred.clear();
  for (const Message& m : deferred) out.merge(handle(m));
}

Actions ServerNode::handle_invalidate_ack(PageId page, NodeId acker) {
  auto& v = state(page);
  Actions out;
  if (!v.pending || v.pending->stage != PendingGrant::Stage::Invalidating ||
      v.pending->outstanding.erase(acker) == 0) {
    throw ProtocolError("unexpected InvalidateAck from " + acker.str() + " for " + page_str(page));
  }
  v.entry.readers.erase(acker);
  if (v.pending->outstanding.empty()) advance_front(out, page, v);
  return out;
}

namespace {

// The writer that has been redirected but whose TransferNotice has not
// reached us yet may already be writing back or downgrading.
bool is_incoming_writer(const ServerPageView& v, NodeId n) {
  return v.pending && v.pending->stage == PendingGrant::Stage::Redirected &&
         v.pending->writer == n && !v.entry.status.names(n);
}

}  // namespace

Actions ServerNode::handle_transfer_notice(PageId page, NodeId old_writer, NodeId new_writer) {
  auto& v = state(page);
  auto& e = v.entry;
  Actions out;
  if (!v.pending || v.pending->stage != PendingGrant::Stage::Redirected ||
      v.pending->writer != new_writer || v.pending->holder != old_writer ||
      !e.status.names(old_writer)) {
    throw ProtocolError("TransferNotice " + old_writer.str() + "->" + new_writer.str() +
                        " does not match the directory for " + page_str(page) + " (" +
                        e.status.str() + ")");
  }
  e.write_queue.pop_front();
  e.readers.erase(old_writer);
  e.readers.erase(new_writer);
  if (!e.readers.empty()) {
    throw ProtocolError("internal: handoff of " + page_str(page) + " with live readers");
  }
  e.status = PageStatus::write_locked(new_writer);
  v.pending.reset();
  // Replay before advancing the queue so a writeback that overtook the
  // notice turns the next grant into a direct one.
  replay_deferred(out, page, v);
  front_done(out, page, v);
  return out;
}

Actions ServerNode::handle_downgrade(PageId page, NodeId holder) {
  auto& v = state(page);
  auto& e = v.entry;
  Actions out;
  if (e.status.is_write_locked() && e.status.node() == holder) {
    e.status = PageStatus::on_compute(holder);
    e.readers.insert(holder);
    return out;
  }
  if (is_incoming_writer(v, holder)) {
    Message m = Message::make(MessageKind::Downgrade, page.index);
    m.src = holder;
    v.deferred.push_back(std::move(m));
    return out;
  }
  throw ProtocolError("Downgrade from non-writer " + holder.str() + " for " + page_str(page));
}

Actions ServerNode::handle_writeback(PageId page, Bytes bytes, NodeId from) {
  auto& v = state(page);
  auto& e = v.entry;
  Actions out;
  if (bytes.size() != cfg_.page_size) {
    throw ProtocolError("Writeback of " + std::to_string(bytes.size()) + " bytes");
  }
  if (e.status.names(from)) {
    e.server_copy = std::move(bytes);
    e.status = PageStatus::current();
    e.readers.erase(from);
    send(out, from, Message::make(MessageKind::WritebackAck, page.index));
    // The redirected writer's HandoffReq will bounce; the data is here now.
    if (v.pending && v.pending->stage == PendingGrant::Stage::Redirected) {
      grant_from_server(out, page, v);
    }
    return out;
  }
  if (is_incoming_writer(v, from)) {
    Message m = Message::with_bytes(MessageKind::Writeback, page.index, std::move(bytes));
    m.src = from;
    v.deferred.push_back(std::move(m));
    return out;
  }
  throw ProtocolError("Writeback from stale holder " + from.str() + " for " + page_str(page) +
                      " (" + e.status.str() + ")");
}

Actions ServerNode::handle_reader_drop(PageId page, NodeId reader) {
  auto& v = state(page);
  if (v.entry.status.is_on_compute() && v.entry.status.node() == reader) {
    throw ProtocolError("holder " + reader.str() + " dropped " + page_str(page) +
                        " without writing it back");
  }
  v.entry.readers.erase(reader);
  return {};
}

}  // namespace dsm
