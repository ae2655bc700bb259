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


#include <cstring>
#include <limits>
#include <string>

#include "dsm/transport.hpp"

namespace dsm {

namespace {

// Larger bodies are treated as corruption rather than allocated.
constexpr std::uint64_t kMaxBody = std::uint64_t{1} << 30;

template <typename T>
void put(Bytes& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::byte>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get(std::span<const std::byte> in, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= std::to_integer<std::uint64_t>(in[at + i]) << (8 * i);
  }
  return static_cast<T>(v);
}

Message decode_body(std::span<const std::byte> body) {
  if (body.size() < kFrameHeaderBytes) {
    throw FrameError("frame body of " + std::to_string(body.size()) + " bytes is shorter than the header");
  }
  auto tag = get<std::uint16_t>(body, 0);
  auto kind = kind_from_tag(tag);
  if (!kind) throw FrameError("unknown message kind tag " + std::to_string(tag));
  Message m;
  m.kind = *kind;
  m.page = get<std::uint64_t>(body, 2);
  m.src = NodeId::from_wire(get<std::uint16_t>(body, 10));
  m.seq = get<std::uint64_t>(body, 12);
  auto payload = body.subspan(kFrameHeaderBytes);
  if (auto want = fixed_payload_size(m.kind); want && payload.size() != *want) {
    throw FrameError(std::string(kind_name(m.kind)) + " with " + std::to_string(payload.size()) +
                     "-byte payload, expected " + std::to_string(*want));
  }
  m.payload.assign(payload.begin(), payload.end());
  return m;
}

}  // namespace

void encode_frame_into(const Message& msg, Bytes& out) {
  std::uint64_t body = kFrameHeaderBytes + msg.payload.size();
  if (body > std::numeric_limits<std::uint32_t>::max()) throw FrameError("message too large to frame");
  out.reserve(out.size() + kFrameLengthBytes + body);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(body));
  put<std::uint16_t>(out, static_cast<std::uint16_t>(msg.kind));
  put<std::uint64_t>(out, msg.page);
  put<std::uint16_t>(out, msg.src.wire());
  put<std::uint64_t>(out, msg.seq);
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
}

Bytes encode_frame(const Message& msg) {
  Bytes out;
  encode_frame_into(msg, out);
  return out;
}

std::optional<Message> try_decode_frame(std::span<const std::byte> buf, std::size_t& consumed) {
  consumed = 0;
  if (buf.size() < kFrameLengthBytes) return std::nullopt;
  std::uint64_t body = get<std::uint32_t>(buf, 0);
  if (body > kMaxBody) throw FrameError("frame length " + std::to_string(body) + " out of range");
  if (buf.size() - kFrameLengthBytes < body) return std::nullopt;
  Message m = decode_body(buf.subspan(kFrameLengthBytes, body));
  consumed = kFrameLengthBytes + body;
  return m;
}

Message decode_frame(std::span<const std::byte> frame) {
  std::size_t used = 0;
  auto m = try_decode_frame(frame, used);
  if (!m) throw FrameError("truncated frame (" + std::to_string(frame.size()) + " bytes)");
  if (used != frame.size()) {
    throw FrameError(std::to_string(frame.size() - used) + " trailing bytes after frame");
  }
  return *m;
}

void FrameReader::feed(std::span<const std::byte> bytes) {
  if (head_ > 0 && head_ == buf_.size()) {
    buf_.clear();
    head_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Message> FrameReader::next() {
  std::size_t used = 0;
  auto m = try_decode_frame(std::span<const std::byte>(buf_).subspan(head_), used);
  head_ += used;
  // Compact once the consumed prefix dominates.
  if (head_ > 4096 && head_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(head_));
    head_ = 0;
  }
  return m;
}

}  // namespace dsm
