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

#ifndef DSM_CORE_HPP_
#define DSM_CORE_HPP_

#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dsm/errors.hpp"

namespace dsm {

using Bytes = std::vector<std::byte>;

/// Global (virtual or wall) time since the start of a run.
using Duration = std::chrono::nanoseconds;

/// A reading of one node's local clock. Fractional so that skewed clocks
/// stay strictly increasing.
using LocalTime = std::chrono::duration<double, std::nano>;

using namespace std::chrono_literals;

enum class Role : std::uint8_t { Server, Compute };

struct NodeId {
  Role role = Role::Compute;
  std::uint16_t index = 0;

  static constexpr NodeId server(std::uint16_t i) { return {Role::Server, i}; }
  static constexpr NodeId compute(std::uint16_t i) { return {Role::Compute, i}; }

  constexpr bool is_server() const { return role == Role::Server; }
  constexpr bool is_compute() const { return role == Role::Compute; }

  /// 16-bit wire form: compute c -> c, server s -> 0x8000 | s.
  constexpr std::uint16_t wire() const {
    return is_server() ? static_cast<std::uint16_t>(0x8000u | index) : index;
  }
  static constexpr NodeId from_wire(std::uint16_t w) {
    return (w & 0x8000u) ? server(static_cast<std::uint16_t>(w & 0x7FFFu))
                         : compute(w);
  }

  /// "s0" / "c3".
  std::string str() const;
  static NodeId parse(std::string_view text);

  friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
};

std::ostream& operator<<(std::ostream& os, const NodeId& id);

struct PageId {
  std::uint64_t index = 0;
  friend constexpr auto operator<=>(const PageId&, const PageId&) = default;
};

/// Cluster geometry. Sizes are in bytes.
struct GasConfig {
  std::uint64_t gas_size = 16u << 20;
  std::uint64_t page_size = 4096;
  std::uint64_t cache_size = 16u << 20;
  std::uint32_t num_servers = 1;
  std::uint32_t num_computes = 1;
  Duration slice_len = 10ms;

  /// Throws ConfigError on any broken invariant.
  void validate() const;

  std::uint64_t num_pages() const { return gas_size / page_size; }
  std::uint64_t cache_frames() const { return cache_size / page_size; }
};

/// Applies `key = value` lines on top of `base`. Blank lines and `#`
/// comments are ignored. Sizes accept K/M/G suffixes, durations ns/us/ms/s.
GasConfig parse_config(std::istream& in, GasConfig base = {});
GasConfig load_config(const std::string& path, GasConfig base = {});

/// "4096", "4K", "16M", "1G".
std::uint64_t parse_size(std::string_view text);
/// "10ms", "250us", "1s", "1000" (ns).
Duration parse_duration(std::string_view text);
std::string format_size(std::uint64_t bytes);

PageId page_of(const GasConfig& cfg, std::uint64_t addr);
NodeId owner_of(PageId page, std::uint32_t num_servers);

struct PageRange {
  std::uint64_t addr = 0;
  std::uint64_t len = 0;
  friend bool operator==(const PageRange&, const PageRange&) = default;
};
PageRange page_range(const GasConfig& cfg, PageId page);

class PageStatus {
 public:
  enum class Tag : std::uint8_t { Current, CurrentOnCompute, WriteLocked };

  static PageStatus current() { return PageStatus(Tag::Current, {}); }
  static PageStatus on_compute(NodeId holder) {
    return PageStatus(Tag::CurrentOnCompute, holder);
  }
  static PageStatus write_locked(NodeId writer) {
    return PageStatus(Tag::WriteLocked, writer);
  }

  Tag tag() const { return tag_; }
  bool is_current() const { return tag_ == Tag::Current; }
  bool is_on_compute() const { return tag_ == Tag::CurrentOnCompute; }
  bool is_write_locked() const { return tag_ == Tag::WriteLocked; }

  /// Holder (CurrentOnCompute) or writer (WriteLocked). Meaningless for
  /// Current.
  NodeId node() const { return node_; }

  /// True when the status names `n` as holder or writer.
  bool names(NodeId n) const { return !is_current() && node_ == n; }

  std::string str() const;

  friend bool operator==(const PageStatus& a, const PageStatus& b) {
    return a.tag_ == b.tag_ && (a.tag_ == Tag::Current || a.node_ == b.node_);
  }

 private:
  PageStatus(Tag t, NodeId n) : tag_(t), node_(n) {}
  Tag tag_;
  NodeId node_;
};

struct PageDirectoryEntry {
  PageStatus status = PageStatus::current();
  std::set<NodeId> readers;
  /// Writers waiting for the page. The front entry is the one currently
  /// being granted (invalidations or a redirect are in flight for it).
  std::deque<NodeId> write_queue;
  Bytes server_copy;

  /// Throws ProtocolError naming the first violated invariant.
  void check_invariants() const;
};

}  // namespace dsm

template <>
struct std::hash<dsm::PageId> {
  std::size_t operator()(const dsm::PageId& p) const noexcept {
    return std::hash<std::uint64_t>{}(p.index);
  }
};

template <>
struct std::hash<dsm::NodeId> {
  std::size_t operator()(const dsm::NodeId& n) const noexcept {
    return std::hash<std::uint16_t>{}(n.wire());
  }
};

#endif  // DSM_CORE_HPP_
