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
#include <unistd.h>

#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include "dsm/transport.hpp"
#include "support.hpp"

namespace dsm {
namespace {

using K = MessageKind;

std::uint32_t length_field(const Bytes& frame) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | std::to_integer<std::uint32_t>(frame[i]);
  return v;
}

TEST(Frame, InvalidateHasBareHeader) {
  Message m = Message::make(K::Invalidate, 5);
  m.src = NodeId::compute(1);
  m.seq = 7;
  Bytes f = encode_frame(m);
  EXPECT_EQ(length_field(f), 2u + 8u + 2u + 8u);
  EXPECT_EQ(f.size(), 4u + 20u);
  EXPECT_EQ(decode_frame(f), m);
}

TEST(Frame, PageDataLength) {
  Message m = Message::with_bytes(K::PageData, 3, testing::pattern(4096, 1));
  m.src = NodeId::server(0);
  Bytes f = encode_frame(m);
  EXPECT_EQ(length_field(f), 20u + 4096u);
  EXPECT_EQ(decode_frame(f), m);
}

TEST(Frame, LittleEndianLayout) {
  Message m = Message::make(K::ReadReq, 0x0102030405060708ull);
  m.src = NodeId::server(2);
  m.seq = 0x1122;
  Bytes f = encode_frame(m);
  auto at = [&](std::size_t i) { return std::to_integer<int>(f[i]); };
  EXPECT_EQ(at(4), 1);
  EXPECT_EQ(at(5), 0);
  EXPECT_EQ(at(6), 0x08);
  EXPECT_EQ(at(13), 0x01);
  EXPECT_EQ(at(14), 0x02);
  EXPECT_EQ(at(15), 0x80);
  EXPECT_EQ(at(16), 0x22);
  EXPECT_EQ(at(17), 0x11);
}

TEST(Frame, UnknownKindRejected) {
  Bytes f = encode_frame(Message::make(K::ReadReq, 0));
  f[4] = std::byte{0xFF};
  f[5] = std::byte{0xFF};
  EXPECT_THROW(decode_frame(f), FrameError);
  f[4] = std::byte{0};
  f[5] = std::byte{0};
  EXPECT_THROW(decode_frame(f), FrameError);
}

TEST(Frame, WrongFixedPayloadRejected) {
  Message m = Message::make(K::Redirect, 0);
  m.payload = Bytes(3);
  Bytes f = encode_frame(m);
  EXPECT_THROW(decode_frame(f), FrameError);
}

TEST(Frame, TrailingBytesRejected) {
  Bytes f = encode_frame(Message::make(K::ReadReq, 0));
  f.push_back(std::byte{0});
  EXPECT_THROW(decode_frame(f), FrameError);
}

TEST(Frame, RandomRoundTrips) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 2000; ++i) {
    Message m = testing::random_message(rng);
    EXPECT_EQ(decode_frame(encode_frame(m)), m);
  }
}

TEST(Frame, TruncatedNeverConsumed) {
  std::mt19937_64 rng(18);
  for (int i = 0; i < 500; ++i) {
    Bytes f = encode_frame(testing::random_message(rng, 512));
    std::size_t cut = rng() % f.size();
    std::span<const std::byte> part(f.data(), cut);
    std::size_t consumed = 12345;
    EXPECT_FALSE(try_decode_frame(part, consumed).has_value());
    EXPECT_EQ(consumed, 0u);
    EXPECT_THROW(decode_frame(part), FrameError);
  }
}

TEST(FrameReader, ReassemblesArbitraryChunks) {
  std::mt19937_64 rng(19);
  std::vector<Message> sent;
  Bytes stream;
  for (int i = 0; i < 200; ++i) {
    sent.push_back(testing::random_message(rng, 300));
    encode_frame_into(sent.back(), stream);
  }
  FrameReader r;
  std::vector<Message> got;
  for (std::size_t pos = 0; pos < stream.size();) {
    std::size_t n = std::min<std::size_t>(1 + rng() % 97, stream.size() - pos);
    r.feed(std::span<const std::byte>(stream.data() + pos, n));
    pos += n;
    while (auto m = r.next()) got.push_back(*m);
  }
  EXPECT_EQ(got, sent);
  EXPECT_EQ(r.buffered(), 0u);
}

TEST(FrameReader, OversizedLengthRejected) {
  FrameReader r;
  Bytes bad{std::byte{0xFF}, std::byte{0xFF}, std::byte{0xFF}, std::byte{0xFF}};
  r.feed(bad);
  EXPECT_THROW(r.next(), FrameError);
}

TEST(LatencyModel, Delays) {
  LatencyModel m;
  EXPECT_EQ(m.delay(4096), Duration(26'384));
  EXPECT_EQ(m.delay(0), 10us);
  EXPECT_EQ(m.delay(1), Duration(10'004));
  LatencyModel bad;
  bad.bandwidth = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.base_latency = Duration(-1);
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(SimNetwork, PerPairFifo) {
  SimNetwork net(1, 2);
  NodeId c0 = NodeId::compute(0), s0 = NodeId::server(0);
  Message big = Message::with_bytes(K::Writeback, 0, Bytes(4096));
  Message small = Message::make(K::ReaderDrop, 1);
  Duration t1 = net.deliver_at(c0, s0, big, Duration(0));
  Duration t2 = net.deliver_at(c0, s0, small, Duration(1));
  EXPECT_EQ(t1, Duration(26'384));
  EXPECT_EQ(t2, t1);
  EXPECT_EQ(net.deliver_at(NodeId::compute(1), s0, small, Duration(1)), Duration(10'001));
  EXPECT_THROW(net.deliver_at(c0, NodeId::server(1), small, Duration(0)), TransportError);
  EXPECT_THROW(net.deliver_at(c0, NodeId::compute(2), small, Duration(0)), TransportError);
}

TEST(Hosts, Parse) {
  std::istringstream in(
      "# mesh\n"
      "s0 127.0.0.1:7000\n"
      "c0  10.0.0.2:7100   # app\n"
      "\n");
  HostMap h = parse_hosts(in);
  ASSERT_EQ(h.size(), 2u);
  EXPECT_EQ(h.at(NodeId::server(0)), (Endpoint{"127.0.0.1", 7000}));
  EXPECT_EQ(h.at(NodeId::compute(0)), (Endpoint{"10.0.0.2", 7100}));

  std::istringstream dup("s0 a:1\ns0 b:2\n");
  EXPECT_THROW(parse_hosts(dup), ConfigError);
  std::istringstream bad("s0 nohost\n");
  EXPECT_THROW(parse_hosts(bad), ConfigError);
  EXPECT_THROW(load_hosts("/nonexistent/hosts"), ConfigError);
}

TEST(Hosts, EnvironmentOverridesPath) {
  ::unsetenv("DSM_HOSTS");
  EXPECT_EQ(hosts_path("hosts.txt"), "hosts.txt");
  ::setenv("DSM_HOSTS", "/etc/dsm.hosts", 1);
  EXPECT_EQ(hosts_path("hosts.txt"), "/etc/dsm.hosts");
  ::unsetenv("DSM_HOSTS");
}

std::uint16_t test_port(int k) {
  return static_cast<std::uint16_t>(30000 + (::getpid() % 2000) * 8 + k);
}

TEST(StreamTransport, FifoBetweenPeers) {
  HostMap hosts{{NodeId::server(0), {"127.0.0.1", test_port(0)}},
                {NodeId::compute(0), {"127.0.0.1", test_port(1)}}};
  StreamTransport a(NodeId::compute(0), hosts);
  StreamTransport b(NodeId::server(0), hosts);
  a.listen();
  b.listen();
  std::mt19937_64 rng(23);
  std::vector<Message> sent;
  for (int i = 0; i < 300; ++i) {
    sent.push_back(testing::random_message(rng, 9000));
    a.send(NodeId::server(0), sent.back());
  }
  for (const Message& want : sent) {
    auto got = b.receive(5s);
    ASSERT_TRUE(got.has_value());
    EXPECT_EQ(*got, want);
  }
  EXPECT_FALSE(b.receive(10ms).has_value());

  Message back = Message::make(K::WritebackAck, 4);
  back.src = NodeId::server(0);
  b.send(NodeId::compute(0), back);
  EXPECT_EQ(a.receive(5s), back);

  Message self = Message::make(K::LockReq, 1);
  a.send(NodeId::compute(0), self);
  EXPECT_EQ(a.receive(5s), self);

  EXPECT_THROW(a.send(NodeId::server(5), self), TransportError);
  a.shutdown();
  b.shutdown();
}

TEST(StreamTransport, UnreachablePeer) {
  HostMap hosts{{NodeId::compute(0), {"127.0.0.1", test_port(2)}},
                {NodeId::server(0), {"127.0.0.1", test_port(3)}}};
  StreamTransport a(NodeId::compute(0), hosts);
  a.connect_timeout = 200ms;
  a.listen();
  EXPECT_THROW(a.connect(NodeId::server(0)), ConnectError);
}

TEST(StreamTransport, PortInUse) {
  HostMap hosts{{NodeId::compute(0), {"127.0.0.1", test_port(4)}},
                {NodeId::compute(1), {"127.0.0.1", test_port(4)}}};
  StreamTransport a(NodeId::compute(0), hosts);
  StreamTransport b(NodeId::compute(1), hosts);
  a.listen();
  EXPECT_THROW(b.listen(), ConnectError);
}

}  // namespace
}  // namespace dsm
