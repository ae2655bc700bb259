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

#ifndef DSM_PROTOCOL_HPP_
#define DSM_PROTOCOL_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <unordered_map>
#include <vector>

#include "dsm/core.hpp"
#include "dsm/message.hpp"
#include "dsm/sync.hpp"

namespace dsm {

/// Ask the driver to call ComputeNode::on_slice_deadline(page, ...) once the
/// node's local clock reaches `deadline`.
struct TimerRequest {
  PageId page;
  LocalTime deadline;
};

/// Everything a node wants done as a result of one event.
struct Actions {
  std::vector<Envelope> sends;
  std::vector<TimerRequest> timers;
  /// The node's outstanding application operation finished in this event.
  bool completed = false;

  void merge(Actions&& other);
};

// ---------------------------------------------------------------------------
// Memory server
// ---------------------------------------------------------------------------

/// Progress of the writer at the front of a page's write queue.
struct PendingGrant {
  enum class Stage : std::uint8_t {
    Invalidating,  // waiting for InvalidateAck from `outstanding`
    Redirected,    // writer sent to `holder`, waiting for TransferNotice
  };
  NodeId writer;
  std::set<NodeId> outstanding;
  Stage stage = Stage::Invalidating;
  NodeId holder;
};

struct ServerPageView {
  PageDirectoryEntry entry;
  std::optional<PendingGrant> pending;
  /// Readers that arrived while a writer was being granted; served once the
  /// write queue drains.
  std::vector<NodeId> pending_readers;
  /// Notices from the incoming writer that overtook the TransferNotice
  /// naming it; replayed once that notice lands.
  std::vector<Message> deferred;
};

/// Memory manager of one memory server node. Also hosts the barrier and
/// mutex managers for the sync ids that hash to it.
///
/// Single-threaded: one message is handled to completion before the next.
class ServerNode {
 public:
  ServerNode(const GasConfig& cfg, std::uint16_t index);

  NodeId id() const { return self_; }

  Actions handle(const Message& msg);

  Actions handle_read_req(PageId page, NodeId requester);
  Actions handle_write_req(PageId page, NodeId requester);
  Actions handle_invalidate_ack(PageId page, NodeId acker);
  Actions handle_transfer_notice(PageId page, NodeId old_writer, NodeId new_writer);
  Actions handle_downgrade(PageId page, NodeId holder);
  Actions handle_writeback(PageId page, Bytes bytes, NodeId from);
  Actions handle_reader_drop(PageId page, NodeId reader);

  /// Directory state for an owned page (created on first touch).
  const ServerPageView& view(PageId page) { return state(page); }
  const ServerPageView* find(PageId page) const;
  /// Test seam for constructing directory states directly.
  ServerPageView& mutable_view(PageId page) { return state(page); }

  /// Pages this server has touched, ascending.
  std::vector<PageId> touched_pages() const;

  const BarrierManager& barriers() const { return barriers_; }
  const MutexManager& mutexes() const { return mutexes_; }

 private:
  ServerPageView& state(PageId page);
  void send(Actions& out, NodeId dst, Message m);
  void respond_read(Actions& out, PageId page, ServerPageView& v, NodeId reader);
  void start_front(Actions& out, PageId page, ServerPageView& v);
  void advance_front(Actions& out, PageId page, ServerPageView& v);
  void grant_from_server(Actions& out, PageId page, ServerPageView& v);
  void front_done(Actions& out, PageId page, ServerPageView& v);
  void replay_deferred(Actions& out, PageId page, ServerPageView& v);
  void require_compute(NodeId n, const char* what) const;

  GasConfig cfg_;
  NodeId self_;
  std::uint64_t next_seq_ = 0;
  std::unordered_map<PageId, ServerPageView> pages_;
  BarrierManager barriers_;
  MutexManager mutexes_;
};

// ---------------------------------------------------------------------------
// Compute node
// ---------------------------------------------------------------------------

enum class AccessMode : std::uint8_t { Read, Write };
enum class Privilege : std::uint8_t { Read, Write };

struct CachedPage {
  PageId page;
  /// The page's frame in the node's cache arena.
  std::span<std::byte> data;
  std::uint32_t frame = 0;
  Privilege privilege = Privilege::Read;
  /// Write privilege, or a Read copy held as the directory's
  /// CurrentOnCompute holder.
  bool dirty = false;
  /// Local clock; meaningful only with Write privilege.
  LocalTime slice_deadline{};
  std::optional<NodeId> pending_handoff;
  /// CopyReqs are waiting for the slice deadline.
  bool copy_reqs_waiting = false;
  bool timer_armed = false;

  bool pinned() const { return pending_handoff.has_value() || copy_reqs_waiting; }
  Bytes bytes() const { return Bytes(data.begin(), data.end()); }
};

/// Called exactly once with the page bytes when an access is satisfied.
/// The span is only valid for the duration of the call.
using PageVisitor = std::function<void(std::span<std::byte>)>;

/// Memory manager of one compute node: the local page cache and its side
/// of the consistency protocol. At most one application operation may be
/// outstanding at a time.
class ComputeNode {
 public:
  ComputeNode(const GasConfig& cfg, std::uint16_t index);

  NodeId id() const { return self_; }
  const GasConfig& config() const { return cfg_; }

  /// Fast path: the page bytes if `page` is cached with enough privilege
  /// (marks it recently used, and dirty for Write), else an empty span.
  std::span<std::byte> try_hit(PageId page, AccessMode mode);

  /// Starts an access. On a hit `visit` runs immediately and the result is
  /// `completed`; otherwise requests are emitted and `visit` runs when the
  /// page is installed.
  Actions access(PageId page, AccessMode mode, LocalTime now, PageVisitor visit);

  Actions handle(const Message& msg, LocalTime now);

  Actions handle_invalidate(PageId page, NodeId from);
  Actions handle_handoff_or_copy_req(PageId page, NodeId requester, MessageKind kind,
                                     std::uint64_t request_seq, LocalTime now);
  Actions on_slice_deadline(PageId page, LocalTime now);

  Actions lock_acquire(SyncId id);
  Actions lock_release(SyncId id);
  Actions barrier_enter(SyncId id, std::uint32_t expected);

  /// Empties the cache (clean copies dropped, dirty ones written back).
  /// Completes once every writeback is acknowledged. Pinned pages stay.
  Actions flush();

  bool busy() const { return pending_.has_value(); }
  const CachedPage* find(PageId page) const;
  std::size_t resident() const { return resident_; }
  std::vector<PageId> resident_pages() const;
  const std::set<SyncId>& held_locks() const { return held_locks_; }

 private:
  struct Pending {
    enum class Kind : std::uint8_t { Access, Lock, Barrier, Flush };
    enum class Stage : std::uint8_t { NeedFrame, AwaitWriteback, AwaitServer, AwaitHolder };
    Kind kind = Kind::Access;
    Stage stage = Stage::AwaitServer;
    PageId page;
    AccessMode mode = AccessMode::Read;
    SyncId sync_id = 0;
    /// Invalidated after the server registered us but before data came.
    bool invalidated = false;
    std::optional<PageId> victim;
    NodeId holder;
    std::uint64_t holder_req_seq = 0;
    PageVisitor visit;
  };

  static constexpr std::uint32_t kNil = ~std::uint32_t{0};

  // Stored inline and linked by page index so that a sequential sweep over
  // cached pages touches neighbouring memory, one cache line per page.
  struct alignas(64) Slot {
    CachedPage page;
    std::uint32_t prev = kNil;  // towards least recently used
    std::uint32_t next = kNil;
    bool used = false;
  };

  Slot* slot(PageId page) {
    Slot& s = slots_[page.index];
    return s.used ? &s : nullptr;
  }
  const Slot* slot(PageId page) const {
    const Slot& s = slots_[page.index];
    return s.used ? &s : nullptr;
  }
  void lru_unlink(std::uint32_t idx);
  void lru_append(std::uint32_t idx);
  std::vector<std::uint64_t> lru_order() const;
  void check_page(PageId page) const;
  void send(Actions& out, NodeId dst, Message m);
  void send_request(Actions& out);
  void obtain_frame(Actions& out);
  void install(Actions& out, PageId page, Bytes data, Privilege priv, LocalTime now);
  void drop(PageId page);
  void act_on_deadline(Actions& out, CachedPage& p);
  void relinquish(Actions& out, CachedPage& p);
  void downgrade(Actions& out, CachedPage& p);
  void nack(Actions& out, PageId page, NodeId requester, std::uint64_t request_seq);
  void after_event(Actions& out);
  void touch(Slot& s);
  void complete(Actions& out);

  GasConfig cfg_;
  NodeId self_;
  std::uint64_t next_seq_ = 0;
  std::vector<Slot> slots_;
  /// cache_frames() page frames, contiguous. Frames are handed out lowest
  /// first so pages installed in address order sit in address order.
  std::unique_ptr<std::byte[]> arena_;
  std::vector<std::uint32_t> free_frames_;
  std::uint32_t lru_head_ = kNil;  // least recently used
  std::uint32_t lru_tail_ = kNil;
  std::size_t resident_ = 0;
  std::optional<Pending> pending_;
  std::unordered_map<PageId, int> awaiting_writeback_acks_;
  /// Deferred CopyReq senders per page and the seq of their request (echoed
  /// if the request is bounced).
  std::map<PageId, std::map<NodeId, std::uint64_t>> copy_reqs_;
  std::set<SyncId> held_locks_;
};

}  // namespace dsm

#endif  // DSM_PROTOCOL_HPP_
