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

#include "dsm/message.hpp"

#include <array>

namespace dsm {

namespace {

constexpr std::array<std::string_view, kMaxKindTag + 1> kNames = {
    "?",           "ReadReq",      "WriteReq",          "PageData",       "WriteGrant",
    "Redirect",    "Invalidate",   "InvalidateAck",     "CopyReq",        "HandoffReq",
    "PrivilegeTransfer", "TransferNotice", "Downgrade", "Writeback",      "WritebackAck",
    "ReaderDrop",  "Nack",         "BarrierEnter",      "BarrierRelease", "LockReq",
    "LockGrant",   "LockRelease",
};

}  // namespace

std::string_view kind_name(MessageKind kind) {
  auto tag = static_cast<std::uint16_t>(kind);
  return tag <= kMaxKindTag ? kNames[tag] : "?";
}

std::optional<MessageKind> kind_from_name(std::string_view name) {
  for (std::uint16_t t = kMinKindTag; t <= kMaxKindTag; ++t) {
    if (kNames[t] == name) return static_cast<MessageKind>(t);
  }
  return std::nullopt;
}

std::optional<MessageKind> kind_from_tag(std::uint16_t tag) {
  if (tag < kMinKindTag || tag > kMaxKindTag) return std::nullopt;
  return static_cast<MessageKind>(tag);
}

bool carries_page(MessageKind kind) {
  switch (kind) {
    case MessageKind::PageData:
    case MessageKind::WriteGrant:
    case MessageKind::PrivilegeTransfer:
    case MessageKind::Writeback:
      return true;
    default:
      return false;
  }
}

std::optional<std::size_t> fixed_payload_size(MessageKind kind) {
  if (carries_page(kind)) return std::nullopt;
  switch (kind) {
    case MessageKind::Redirect:
    case MessageKind::TransferNotice:
      return 2;
    case MessageKind::BarrierEnter:
      return 4;
    case MessageKind::Nack:
      return 8;
    default:
      return 0;
  }
}

Message Message::with_node(MessageKind kind, std::uint64_t page, NodeId arg) {
  Message m = make(kind, page);
  std::uint16_t w = arg.wire();
  m.payload = {std::byte(w & 0xFF), std::byte(w >> 8)};
  return m;
}

Message Message::with_bytes(MessageKind kind, std::uint64_t page, Bytes data) {
  Message m = make(kind, page);
  m.payload = std::move(data);
  return m;
}

Message Message::barrier_enter(std::uint64_t barrier_id, std::uint32_t expected) {
  Message m = make(MessageKind::BarrierEnter, barrier_id);
  m.payload.resize(4);
  for (int i = 0; i < 4; ++i) m.payload[i] = std::byte((expected >> (8 * i)) & 0xFF);
  return m;
}

Message Message::nack(std::uint64_t page, std::uint64_t request_seq) {
  Message m = make(MessageKind::Nack, page);
  m.payload.resize(8);
  for (int i = 0; i < 8; ++i) m.payload[i] = std::byte((request_seq >> (8 * i)) & 0xFF);
  return m;
}

NodeId Message::node_arg() const {
  if (payload.size() != 2) throw ProtocolError(std::string(kind_name(kind)) + " without node argument");
  auto w = static_cast<std::uint16_t>(std::to_integer<unsigned>(payload[0]) |
                                      (std::to_integer<unsigned>(payload[1]) << 8));
  return NodeId::from_wire(w);
}

std::uint32_t Message::barrier_expected() const {
  if (payload.size() != 4) throw ProtocolError("BarrierEnter without participant count");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::to_integer<std::uint32_t>(payload[i]) << (8 * i);
  return v;
}

std::uint64_t Message::nacked_seq() const {
  if (payload.size() != 8) throw ProtocolError("Nack without request seq");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::to_integer<std::uint64_t>(payload[i]) << (8 * i);
  return v;
}

}  // namespace dsm
