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

#ifndef DSM_MESSAGE_HPP_
#define DSM_MESSAGE_HPP_

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "dsm/core.hpp"

namespace dsm {

// Wire tags are part of the frame format; never renumber.
enum class MessageKind : std::uint16_t {
  ReadReq = 1,
  WriteReq = 2,
  PageData = 3,
  WriteGrant = 4,
  Redirect = 5,
  Invalidate = 6,
  InvalidateAck = 7,
  CopyReq = 8,
  HandoffReq = 9,
  PrivilegeTransfer = 10,
  TransferNotice = 11,
  Downgrade = 12,
  Writeback = 13,
  WritebackAck = 14,
  ReaderDrop = 15,
  Nack = 16,
  BarrierEnter = 17,
  BarrierRelease = 18,
  LockReq = 19,
  LockGrant = 20,
  LockRelease = 21,
};

inline constexpr std::uint16_t kMinKindTag = 1;
inline constexpr std::uint16_t kMaxKindTag = 21;

std::string_view kind_name(MessageKind kind);
std::optional<MessageKind> kind_from_name(std::string_view name);
std::optional<MessageKind> kind_from_tag(std::uint16_t tag);

/// Kinds whose payload is a full page image.
bool carries_page(MessageKind kind);

/// Fixed payload size for kinds that are not page-carrying; nullopt for
/// page-carrying kinds.
std::optional<std::size_t> fixed_payload_size(MessageKind kind);

/// A protocol datagram. `page` holds the lock or barrier id for sync kinds.
/// Node-valued arguments (redirect target, new writer), the barrier
/// participant count and the request seq echoed by Nack travel
/// little-endian in `payload`.
struct Message {
  MessageKind kind = MessageKind::ReadReq;
  std::uint64_t page = 0;
  NodeId src;
  std::uint64_t seq = 0;
  Bytes payload;

  static Message make(MessageKind kind, std::uint64_t page) { return Message{kind, page, {}, 0, {}}; }
  static Message with_node(MessageKind kind, std::uint64_t page, NodeId arg);
  static Message with_bytes(MessageKind kind, std::uint64_t page, Bytes data);
  static Message barrier_enter(std::uint64_t barrier_id, std::uint32_t expected);
  static Message nack(std::uint64_t page, std::uint64_t request_seq);

  /// Node argument of Redirect / TransferNotice.
  NodeId node_arg() const;
  std::uint32_t barrier_expected() const;
  std::uint64_t nacked_seq() const;

  friend bool operator==(const Message&, const Message&) = default;
};

struct Envelope {
  NodeId dst;
  Message msg;
};

}  // namespace dsm

#endif  // DSM_MESSAGE_HPP_
