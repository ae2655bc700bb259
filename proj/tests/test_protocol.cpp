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


#include <gtest/gtest.h>

#include <algorithm>

#include "dsm/message.hpp"
#include "dsm/protocol.hpp"
#include "dsm/sim.hpp"
#include "support.hpp"

namespace dsm {
namespace {

using testing::access;
using testing::cluster_cfg;
using K = MessageKind;

const NodeId c0 = NodeId::compute(0);
const NodeId c1 = NodeId::compute(1);
const NodeId c2 = NodeId::compute(2);
const NodeId c3 = NodeId::compute(3);
const NodeId s0 = NodeId::server(0);
const PageId p0{0};

std::vector<std::pair<NodeId, K>> sends(const Actions& a) {
  std::vector<std::pair<NodeId, K>> out;
  for (const auto& e : a.sends) out.emplace_back(e.dst, e.msg.kind);
  return out;
}

using SendList = std::vector<std::pair<NodeId, K>>;

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

class ServerTest : public ::testing::Test {
 protected:
  GasConfig cfg = cluster_cfg(4, 1);
  ServerNode s{cfg, 0};

  const PageDirectoryEntry& entry() { return s.view(p0).entry; }
  void set(PageStatus st, std::set<NodeId> readers) {
    auto& v = s.mutable_view(p0);
    v.entry.status = st;
    v.entry.readers = std::move(readers);
  }
};

TEST_F(ServerTest, ReadCurrentSendsCopy) {
  Actions a = s.handle_read_req(p0, c1);
  EXPECT_EQ(sends(a), (SendList{{c1, K::PageData}}));
  EXPECT_EQ(a.sends[0].msg.payload.size(), cfg.page_size);
  EXPECT_EQ(entry().readers, (std::set<NodeId>{c1}));
  entry().check_invariants();
}

TEST_F(ServerTest, ReadOnComputeRedirects) {
  set(PageStatus::on_compute(c2), {c2});
  Actions a = s.handle_read_req(p0, c1);
  EXPECT_EQ(sends(a), (SendList{{c1, K::Redirect}}));
  EXPECT_EQ(a.sends[0].msg.node_arg(), c2);
  EXPECT_TRUE(entry().readers.contains(c1));
  entry().check_invariants();
}

TEST_F(ServerTest, ReadWriteLockedRedirectsToWriter) {
  set(PageStatus::write_locked(c2), {});
  Actions a = s.handle_read_req(p0, c1);
  EXPECT_EQ(sends(a), (SendList{{c1, K::Redirect}}));
  EXPECT_EQ(a.sends[0].msg.node_arg(), c2);
}

TEST_F(ServerTest, RequestsFromServersRejected) {
  EXPECT_THROW(s.handle_read_req(p0, s0), ProtocolError);
  EXPECT_THROW(s.handle_write_req(p0, s0), ProtocolError);
}

TEST_F(ServerTest, PagesOwnedElsewhereRejected) {
  GasConfig two = cluster_cfg(4, 2);
  ServerNode s1(two, 1);
  EXPECT_THROW(s1.handle_read_req(p0, c1), ProtocolError);
  EXPECT_NO_THROW(s1.handle_read_req(PageId{1}, c1));
  EXPECT_THROW(s1.handle_read_req(PageId{two.num_pages() + 1}, c1), AddressError);
}

TEST_F(ServerTest, WriteInvalidatesReadersThenGrants) {
  set(PageStatus::current(), {c2, c3});
  Actions a = s.handle_write_req(p0, c1);
  EXPECT_EQ(sends(a), (SendList{{c2, K::Invalidate}, {c3, K::Invalidate}}));

  a = s.handle_invalidate_ack(p0, c2);
  EXPECT_TRUE(a.sends.empty());
  EXPECT_EQ(s.view(p0).pending->outstanding, (std::set<NodeId>{c3}));
  EXPECT_THROW(s.handle_invalidate_ack(p0, NodeId::compute(0)), ProtocolError);

  a = s.handle_invalidate_ack(p0, c3);
  EXPECT_EQ(sends(a), (SendList{{c1, K::WriteGrant}}));
  EXPECT_EQ(entry().status, PageStatus::write_locked(c1));
  EXPECT_TRUE(entry().readers.empty());
  EXPECT_TRUE(entry().write_queue.empty());
  entry().check_invariants();
}

TEST_F(ServerTest, WriteWithoutReadersGrantsAtOnce) {
  Actions a = s.handle_write_req(p0, c1);
  EXPECT_EQ(sends(a), (SendList{{c1, K::WriteGrant}}));
  EXPECT_EQ(entry().status, PageStatus::write_locked(c1));
}

TEST_F(ServerTest, WriterOwnReadCopyIsNotInvalidated) {
  set(PageStatus::current(), {c1, c2});
  Actions a = s.handle_write_req(p0, c1);
  EXPECT_EQ(sends(a), (SendList{{c2, K::Invalidate}}));
}

TEST_F(ServerTest, WriteLockedRedirectsAndQueues) {
  set(PageStatus::write_locked(c2), {});
  Actions a = s.handle_write_req(p0, c1);
  EXPECT_EQ(sends(a), (SendList{{c1, K::Redirect}}));
  EXPECT_EQ(a.sends[0].msg.node_arg(), c2);
  EXPECT_EQ(entry().write_queue, (std::deque<NodeId>{c1}));
}

TEST_F(ServerTest, DuplicateWriteReqIgnored) {
  s.handle_write_req(p0, c1);
  EXPECT_TRUE(s.handle_write_req(p0, c1).sends.empty());
  EXPECT_EQ(entry().status, PageStatus::write_locked(c1));
}

TEST_F(ServerTest, TransferNoticeCompletesHandoff) {
  set(PageStatus::write_locked(c2), {});
  s.handle_write_req(p0, c1);
  Actions a = s.handle_transfer_notice(p0, c2, c1);
  EXPECT_TRUE(a.sends.empty());
  EXPECT_EQ(entry().status, PageStatus::write_locked(c1));
  EXPECT_TRUE(entry().write_queue.empty());
  entry().check_invariants();
}

TEST_F(ServerTest, TransferNoticeRedirectsNextInQueue) {
  set(PageStatus::write_locked(c2), {});
  s.handle_write_req(p0, c1);
  EXPECT_TRUE(s.handle_write_req(p0, c3).sends.empty());
  EXPECT_EQ(entry().write_queue, (std::deque<NodeId>{c1, c3}));
  Actions a = s.handle_transfer_notice(p0, c2, c1);
  EXPECT_EQ(sends(a), (SendList{{c3, K::Redirect}}));
  EXPECT_EQ(a.sends[0].msg.node_arg(), c1);
  EXPECT_EQ(entry().status, PageStatus::write_locked(c1));
  EXPECT_EQ(entry().write_queue, (std::deque<NodeId>{c3}));
}

TEST_F(ServerTest, TransferNoticeFromNonWriterRejected) {
  set(PageStatus::write_locked(c2), {});
  s.handle_write_req(p0, c1);
  EXPECT_THROW(s.handle_transfer_notice(p0, c3, c1), ProtocolError);
  EXPECT_THROW(s.handle_transfer_notice(p0, c2, c3), ProtocolError);
}

TEST_F(ServerTest, Writebacks) {
  set(PageStatus::on_compute(c2), {c2});
  EXPECT_THROW(s.handle_writeback(p0, Bytes(cfg.page_size), c3), ProtocolError);
  Bytes data = testing::pattern(cfg.page_size, 9);
  Actions a = s.handle_writeback(p0, data, c2);
  EXPECT_EQ(sends(a), (SendList{{c2, K::WritebackAck}}));
  EXPECT_TRUE(entry().status.is_current());
  EXPECT_EQ(entry().server_copy, data);

  set(PageStatus::write_locked(c2), {});
  a = s.handle_writeback(p0, Bytes(cfg.page_size), c2);
  EXPECT_EQ(sends(a), (SendList{{c2, K::WritebackAck}}));
  EXPECT_TRUE(entry().status.is_current());

  EXPECT_THROW(s.handle_writeback(p0, Bytes(3), c2), ProtocolError);
}

TEST_F(ServerTest, DowngradeMakesWriterHolder) {
  set(PageStatus::write_locked(c2), {});
  EXPECT_TRUE(s.handle_downgrade(p0, c2).sends.empty());
  EXPECT_EQ(entry().status, PageStatus::on_compute(c2));
  entry().check_invariants();
  EXPECT_THROW(s.handle_downgrade(p0, c3), ProtocolError);
}

TEST_F(ServerTest, ReadersParkedDuringGrant) {
  set(PageStatus::current(), {c2});
  s.handle_write_req(p0, c1);
  EXPECT_TRUE(s.handle_read_req(p0, c3).sends.empty());
  Actions a = s.handle_invalidate_ack(p0, c2);
  EXPECT_EQ(sends(a), (SendList{{c1, K::WriteGrant}, {c3, K::Redirect}}));
  EXPECT_EQ(a.sends[1].msg.node_arg(), c1);
}

TEST_F(ServerTest, ReaderDropKeepsSetExact) {
  s.handle_read_req(p0, c1);
  s.handle_read_req(p0, c2);
  s.handle_reader_drop(p0, c1);
  EXPECT_EQ(entry().readers, (std::set<NodeId>{c2}));
  EXPECT_EQ(sends(s.handle_write_req(p0, c3)), (SendList{{c2, K::Invalidate}}));
}

TEST_F(ServerTest, HostsSyncManagers) {
  Message m = Message::make(K::LockReq, 5);
  m.src = c1;
  EXPECT_EQ(sends(s.handle(m)), (SendList{{c1, K::LockGrant}}));
  m.src = c2;
  EXPECT_TRUE(s.handle(m).sends.empty());
  Message r = Message::make(K::LockRelease, 5);
  r.src = c1;
  EXPECT_EQ(sends(s.handle(r)), (SendList{{c2, K::LockGrant}}));

  Message b = Message::barrier_enter(9, 2);
  b.src = c0;
  EXPECT_TRUE(s.handle(b).sends.empty());
  b.src = c3;
  EXPECT_EQ(sends(s.handle(b)), (SendList{{c0, K::BarrierRelease}, {c3, K::BarrierRelease}}));
}

// ---------------------------------------------------------------------------
// Compute node
// ---------------------------------------------------------------------------

Message from(NodeId src, Message m, std::uint64_t seq = 0) {
  m.src = src;
  m.seq = seq;
  return m;
}

class ComputeTest : public ::testing::Test {
 protected:
  GasConfig cfg = [] {
    GasConfig c = cluster_cfg(4, 1);
    c.cache_size = 2 * c.page_size;
    return c;
  }();
  ComputeNode n{cfg, 1};
  int visits = 0;

  Actions touch(std::uint64_t page, AccessMode mode, LocalTime now = LocalTime(0)) {
    return n.access(PageId{page}, mode, now, [this](std::span<std::byte>) { ++visits; });
  }
  Actions install(std::uint64_t page, K kind, LocalTime now = LocalTime(0)) {
    return n.handle(from(s0, Message::with_bytes(kind, page, Bytes(cfg.page_size))), now);
  }
  void own(std::uint64_t page, LocalTime now = LocalTime(0)) {
    touch(page, AccessMode::Write, now);
    install(page, K::WriteGrant, now);
  }
};

TEST_F(ComputeTest, ReadMissThenHit) {
  Actions a = touch(0, AccessMode::Read);
  EXPECT_EQ(sends(a), (SendList{{s0, K::ReadReq}}));
  EXPECT_FALSE(a.completed);
  EXPECT_TRUE(n.busy());
  a = install(0, K::PageData);
  EXPECT_TRUE(a.completed);
  EXPECT_EQ(visits, 1);

  a = touch(0, AccessMode::Read);
  EXPECT_TRUE(a.sends.empty());
  EXPECT_TRUE(a.completed);
  EXPECT_EQ(visits, 2);
  EXPECT_EQ(n.find(p0)->privilege, Privilege::Read);
}

TEST_F(ComputeTest, WriteMissGetsFreshDeadline) {
  Actions a = touch(0, AccessMode::Write, LocalTime(5.0));
  EXPECT_EQ(sends(a), (SendList{{s0, K::WriteReq}}));
  a = install(0, K::WriteGrant, LocalTime(1000.0));
  EXPECT_TRUE(a.completed);
  const CachedPage* p = n.find(p0);
  ASSERT_NE(p, nullptr);
  EXPECT_EQ(p->privilege, Privilege::Write);
  EXPECT_EQ(p->slice_deadline, LocalTime(1000.0) + cfg.slice_len);
}

TEST_F(ComputeTest, AccessOutOfRangeOrWhileBusy) {
  EXPECT_THROW(touch(cfg.num_pages(), AccessMode::Read), AddressError);
  touch(0, AccessMode::Read);
  EXPECT_THROW(touch(1, AccessMode::Read), ProtocolError);
}

TEST_F(ComputeTest, RedirectedReadAsksHolder) {
  touch(0, AccessMode::Read);
  Actions a = n.handle(from(s0, Message::with_node(K::Redirect, 0, c2)), LocalTime(0));
  EXPECT_EQ(sends(a), (SendList{{c2, K::CopyReq}}));
  a = n.handle(from(c2, Message::with_bytes(K::PageData, 0, Bytes(cfg.page_size))), LocalTime(0));
  EXPECT_TRUE(a.completed);
}

TEST_F(ComputeTest, NackedHolderRequestRetriesAtServer) {
  touch(0, AccessMode::Write);
  Actions a = n.handle(from(s0, Message::with_node(K::Redirect, 0, c2)), LocalTime(0));
  ASSERT_EQ(sends(a), (SendList{{c2, K::HandoffReq}}));
  std::uint64_t seq = a.sends[0].msg.seq;
  EXPECT_TRUE(n.handle(from(c2, Message::nack(0, seq + 100)), LocalTime(0)).sends.empty());
  EXPECT_EQ(sends(n.handle(from(c2, Message::nack(0, seq)), LocalTime(0))), (SendList{{s0, K::WriteReq}}));
}

TEST_F(ComputeTest, InvalidateDropsReadCopy) {
  touch(0, AccessMode::Read);
  install(0, K::PageData);
  Actions a = n.handle_invalidate(p0, s0);
  EXPECT_EQ(sends(a), (SendList{{s0, K::InvalidateAck}}));
  EXPECT_EQ(n.find(p0), nullptr);
  EXPECT_EQ(n.resident(), 0u);
}

TEST_F(ComputeTest, InvalidateOfAbsentPageAcks) {
  EXPECT_EQ(sends(n.handle_invalidate(PageId{3}, s0)), (SendList{{s0, K::InvalidateAck}}));
}

TEST_F(ComputeTest, InvalidateOfWriteCopyIsProtocolError) {
  own(0);
  EXPECT_THROW(n.handle_invalidate(p0, s0), ProtocolError);
}

TEST_F(ComputeTest, HandoffDeferredUntilDeadline) {
  own(0, LocalTime(0));
  LocalTime deadline = LocalTime(0) + cfg.slice_len;
  Actions a = n.handle_handoff_or_copy_req(p0, c2, K::HandoffReq, 4, LocalTime(1000.0));
  EXPECT_TRUE(a.sends.empty());
  ASSERT_EQ(a.timers.size(), 1u);
  EXPECT_EQ(a.timers[0].deadline, deadline);

  EXPECT_TRUE(n.on_slice_deadline(p0, deadline - LocalTime(1.0)).sends.empty());
  a = n.on_slice_deadline(p0, deadline);
  EXPECT_EQ(sends(a), (SendList{{c2, K::PrivilegeTransfer}, {s0, K::TransferNotice}}));
  EXPECT_EQ(a.sends[1].msg.node_arg(), c2);
  EXPECT_EQ(n.find(p0), nullptr);
}

TEST_F(ComputeTest, HandoffAfterDeadlineIsImmediate) {
  own(0, LocalTime(0));
  Actions a = n.handle_handoff_or_copy_req(p0, c2, K::HandoffReq, 0, LocalTime(0) + cfg.slice_len);
  EXPECT_EQ(sends(a), (SendList{{c2, K::PrivilegeTransfer}, {s0, K::TransferNotice}}));
}

TEST_F(ComputeTest, DeadlineWithNothingPendingKeepsPrivilege) {
  own(0, LocalTime(0));
  for (int k = 1; k <= 12; ++k) {
    EXPECT_TRUE(n.on_slice_deadline(p0, LocalTime(0) + k * cfg.slice_len).sends.empty());
  }
  EXPECT_EQ(n.find(p0)->privilege, Privilege::Write);
}

TEST_F(ComputeTest, CopyRequestsServedTogetherByDowngrade) {
  own(0, LocalTime(0));
  n.try_hit(p0, AccessMode::Write)[0] = std::byte{0x7E};
  EXPECT_TRUE(n.handle_handoff_or_copy_req(p0, c2, K::CopyReq, 1, LocalTime(10.0)).sends.empty());
  EXPECT_TRUE(n.handle_handoff_or_copy_req(p0, c3, K::CopyReq, 2, LocalTime(20.0)).sends.empty());
  Actions a = n.on_slice_deadline(p0, LocalTime(0) + cfg.slice_len);
  EXPECT_EQ(sends(a), (SendList{{s0, K::Downgrade}, {c2, K::PageData}, {c3, K::PageData}}));
  EXPECT_EQ(a.sends[1].msg.payload, a.sends[2].msg.payload);
  EXPECT_EQ(a.sends[1].msg.payload[0], std::byte{0x7E});
  const CachedPage* p = n.find(p0);
  EXPECT_EQ(p->privilege, Privilege::Read);
  EXPECT_TRUE(p->dirty);
}

TEST_F(ComputeTest, RequestForPageNotHeldIsNacked) {
  Actions a = n.handle_handoff_or_copy_req(p0, c2, K::CopyReq, 42, LocalTime(0));
  ASSERT_EQ(sends(a), (SendList{{c2, K::Nack}}));
  EXPECT_EQ(a.sends[0].msg.nacked_seq(), 42u);
}

TEST_F(ComputeTest, CleanVictimDroppedWithNotice) {
  for (std::uint64_t p : {0, 1}) {
    touch(p, AccessMode::Read);
    install(p, K::PageData);
  }
  touch(0, AccessMode::Read);  // page 1 is now least recently used
  Actions a = touch(2, AccessMode::Read);
  EXPECT_EQ(sends(a), (SendList{{s0, K::ReaderDrop}, {s0, K::ReadReq}}));
  EXPECT_EQ(a.sends[0].msg.page, 1u);
  install(2, K::PageData);
  EXPECT_EQ(n.resident_pages(), (std::vector<PageId>{PageId{0}, PageId{2}}));
}

TEST_F(ComputeTest, DirtyVictimWrittenBackBeforeRequest) {
  own(0);
  touch(1, AccessMode::Read);
  install(1, K::PageData);
  touch(1, AccessMode::Read);
  Actions a = touch(2, AccessMode::Read);
  EXPECT_EQ(sends(a), (SendList{{s0, K::Writeback}}));
  EXPECT_EQ(a.sends[0].msg.page, 0u);
  a = n.handle(from(s0, Message::make(K::WritebackAck, 0)), LocalTime(0));
  EXPECT_EQ(sends(a), (SendList{{s0, K::ReadReq}}));
}

TEST_F(ComputeTest, PinnedPagesAreNotEvicted) {
  own(0);
  own(1);
  n.handle_handoff_or_copy_req(p0, c2, K::HandoffReq, 0, LocalTime(1.0));
  n.handle_handoff_or_copy_req(PageId{1}, c3, K::HandoffReq, 0, LocalTime(1.0));
  Actions a = touch(2, AccessMode::Read);
  EXPECT_TRUE(a.sends.empty());
  a = n.on_slice_deadline(p0, LocalTime(0) + cfg.slice_len);
  EXPECT_EQ(sends(a), (SendList{{c2, K::PrivilegeTransfer}, {s0, K::TransferNotice}, {s0, K::ReadReq}}));
}

TEST_F(ComputeTest, UpgradeOfLatestCopyWritesBackFirst) {
  own(0);
  n.handle_handoff_or_copy_req(p0, c2, K::CopyReq, 0, LocalTime(0) + cfg.slice_len);
  ASSERT_TRUE(n.find(p0)->dirty);
  Actions a = touch(0, AccessMode::Write);
  EXPECT_EQ(sends(a), (SendList{{s0, K::Writeback}, {s0, K::WriteReq}}));
}

TEST_F(ComputeTest, FlushEmptiesCache) {
  own(0);
  touch(1, AccessMode::Read);
  install(1, K::PageData);
  Actions a = n.flush();
  EXPECT_FALSE(a.completed);
  EXPECT_EQ(n.resident(), 0u);
  a = n.handle(from(s0, Message::make(K::WritebackAck, 0)), LocalTime(0));
  EXPECT_TRUE(a.completed);
}

TEST_F(ComputeTest, LocksAndBarriers) {
  Actions a = n.lock_acquire(8);
  NodeId mgr = sync_manager_for(8, cfg.num_servers);
  EXPECT_EQ(sends(a), (SendList{{mgr, K::LockReq}}));
  EXPECT_TRUE(n.handle(from(mgr, Message::make(K::LockGrant, 8)), LocalTime(0)).completed);
  EXPECT_TRUE(n.held_locks().contains(8));
  EXPECT_THROW(n.lock_acquire(8), LockError);
  EXPECT_THROW(n.lock_release(9), LockError);
  a = n.lock_release(8);
  EXPECT_EQ(sends(a), (SendList{{mgr, K::LockRelease}}));
  EXPECT_TRUE(a.completed);

  a = n.barrier_enter(3, 4);
  EXPECT_EQ(a.sends.at(0).msg.barrier_expected(), 4u);
  EXPECT_TRUE(n.handle(from(mgr, Message::make(K::BarrierRelease, 3)), LocalTime(0)).completed);
}

// ---------------------------------------------------------------------------
// Scripted scenarios in the simulator
// ---------------------------------------------------------------------------

class ScenarioTest : public ::testing::TestWithParam<int> {};

TEST_P(ScenarioTest, ProducesExactMessageChain) {
  SimCluster sim(cluster_cfg(4, 1));
  Trace t = testing::scenario_trace(GetParam(), sim);
  EXPECT_TRUE(testing::scenario_matches(GetParam(), t)) << format_trace(t);
  EXPECT_TRUE(check_trace(t, CheckContext{}).ok());
}

INSTANTIATE_TEST_SUITE_P(Scenarios, ScenarioTest, ::testing::Values(1, 2, 3, 4));

TEST(Scenario, HandoffWaitsForHolderSlice) {
  GasConfig cfg = cluster_cfg(4, 1);
  SimCluster sim(cfg);
  sim.set_tracing(true);
  access(sim, 2, 0, AccessMode::Write, std::byte{0x5A});
  access(sim, 1, 0, AccessMode::Write, std::byte{0x33});
  auto t = sim.trace();
  auto grant = std::find_if(t.begin(), t.end(), [](auto& e) { return e.kind == K::WriteGrant; });
  auto xfer = std::find_if(t.begin(), t.end(), [](auto& e) { return e.kind == K::PrivilegeTransfer; });
  ASSERT_NE(grant, t.end());
  ASSERT_NE(xfer, t.end());
  EXPECT_EQ(xfer->sent_at, grant->time + cfg.slice_len);
  EXPECT_EQ(sim.image().read(0, 1)[0], std::byte{0x33});
}

TEST(Scenario, ReaderGetsHolderBytes) {
  SimCluster sim(cluster_cfg(4, 1));
  access(sim, 2, 0, AccessMode::Write, std::byte{0x5A});
  Bytes seen;
  sim.invoke(3, [&](ComputeNode& n, LocalTime now) {
    return n.access(PageId{0}, AccessMode::Read, now,
                    [&](std::span<std::byte> b) { seen.assign(b.begin(), b.end()); });
  });
  testing::drain(sim);
  ASSERT_EQ(seen.size(), 4096u);
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](std::byte b) { return b == std::byte{0x5A}; }));
  EXPECT_EQ(sim.server(0).view(PageId{0}).entry.status, PageStatus::on_compute(NodeId::compute(2)));
}

TEST(Scenario, TwoHandoffsChain) {
  SimCluster sim(cluster_cfg(4, 1));
  access(sim, 2, 0, AccessMode::Write, std::byte{1});
  sim.invoke(1, [](ComputeNode& n, LocalTime now) {
    return n.access(PageId{0}, AccessMode::Write, now, [](std::span<std::byte> b) { b[0] = std::byte{2}; });
  });
  sim.step();
  sim.invoke(3, [](ComputeNode& n, LocalTime now) {
    return n.access(PageId{0}, AccessMode::Write, now, [](std::span<std::byte> b) { b[1] = std::byte{3}; });
  });
  testing::drain(sim);
  std::vector<std::pair<NodeId, K>> redirects;
  for (const auto& e : sim.trace()) {
    if (e.kind == K::Redirect) redirects.emplace_back(e.dst, e.kind);
  }
  EXPECT_EQ(redirects.size(), 2u);
  EXPECT_EQ(sim.server(0).view(PageId{0}).entry.status, PageStatus::write_locked(NodeId::compute(3)));
  Bytes img = sim.image().read(0, 2);
  EXPECT_EQ(img[0], std::byte{2});
  EXPECT_EQ(img[1], std::byte{3});
  CheckContext ctx;
  ctx.num_computes = 4;
  EXPECT_TRUE(check_trace(sim.trace(), ctx).ok()) << check_trace(sim.trace(), ctx).text();
}

}  // namespace
}  // namespace dsm
