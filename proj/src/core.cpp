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

#include "dsm/core.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dsm {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::uint64_t parse_u64(std::string_view digits, std::string_view whole) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
    throw ConfigError("malformed number '" + std::string(whole) + "'");
  }
  return v;
}

}  // namespace

std::string NodeId::str() const {
  return (is_server() ? "s" : "c") + std::to_string(index);
}

NodeId NodeId::parse(std::string_view text) {
  text = trim(text);
  if (text.size() < 2 || (text[0] != 's' && text[0] != 'c')) {
    throw ConfigError("malformed node id '" + std::string(text) + "'");
  }
  std::uint64_t i = parse_u64(text.substr(1), text);
  if (i > 0x7FFF) throw ConfigError("node index out of range: " + std::string(text));
  auto idx = static_cast<std::uint16_t>(i);
  return text[0] == 's' ? server(idx) : compute(idx);
}

std::ostream& operator<<(std::ostream& os, const NodeId& id) { return os << id.str(); }

void GasConfig::validate() const {
  auto pow2 = [](std::uint64_t v) { return v != 0 && std::has_single_bit(v); };
  if (!pow2(page_size)) throw ConfigError("page_size must be a power of two");
  if (!pow2(cache_size)) throw ConfigError("cache_size must be a power of two");
  if (gas_size == 0 || gas_size % page_size != 0) {
    throw ConfigError("page_size must divide gas_size");
  }
  if (cache_size < page_size || cache_size % page_size != 0) {
    throw ConfigError("cache_size must be a positive multiple of page_size");
  }
  if (num_servers < 1 || num_servers > 0x7FFF) throw ConfigError("num_servers out of range");
  if (num_computes < 1 || num_computes > 0x7FFF) throw ConfigError("num_computes out of range");
  if (slice_len <= Duration::zero()) throw ConfigError("slice_len must be positive");
}

std::uint64_t parse_size(std::string_view text) {
  text = trim(text);
  std::uint64_t mult = 1;
  if (!text.empty()) {
    switch (std::toupper(static_cast<unsigned char>(text.back()))) {
      case 'K': mult = 1ull << 10; break;
      case 'M': mult = 1ull << 20; break;
      case 'G': mult = 1ull << 30; break;
      default: break;
    }
  }
  std::string_view digits = mult == 1 ? text : text.substr(0, text.size() - 1);
  return parse_u64(digits, text) * mult;
}

Duration parse_duration(std::string_view text) {
  text = trim(text);
  struct Unit {
    std::string_view suffix;
    std::int64_t ns;
  };
  static constexpr Unit kUnits[] = {{"ns", 1}, {"us", 1'000}, {"ms", 1'000'000}, {"s", 1'000'000'000}};
  for (const auto& u : kUnits) {
    if (text.size() > u.suffix.size() && text.ends_with(u.suffix)) {
      auto digits = text.substr(0, text.size() - u.suffix.size());
      // "ms" also ends with "s"; make sure we did not split a longer suffix.
      if (!digits.empty() && std::isdigit(static_cast<unsigned char>(digits.back()))) {
        return Duration(static_cast<std::int64_t>(parse_u64(digits, text)) * u.ns);
      }
    }
  }
  return Duration(static_cast<std::int64_t>(parse_u64(text, text)));
}

std::string format_size(std::uint64_t bytes) {
  if (bytes >= (1ull << 30) && bytes % (1ull << 30) == 0) return std::to_string(bytes >> 30) + "G";
  if (bytes >= (1ull << 20) && bytes % (1ull << 20) == 0) return std::to_string(bytes >> 20) + "M";
  if (bytes >= (1ull << 10) && bytes % (1ull << 10) == 0) return std::to_string(bytes >> 10) + "K";
  return std::to_string(bytes);
}

GasConfig parse_config(std::istream& in, GasConfig cfg) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view l = line;
    if (auto hash = l.find('#'); hash != std::string_view::npos) l = l.substr(0, hash);
    l = trim(l);
    if (l.empty()) continue;
    auto eq = l.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    auto key = trim(l.substr(0, eq));
    auto value = trim(l.substr(eq + 1));
    if (key == "gas_size") {
      cfg.gas_size = parse_size(value);
    } else if (key == "page_size") {
      cfg.page_size = parse_size(value);
    } else if (key == "cache_size") {
      cfg.cache_size = parse_size(value);
    } else if (key == "num_servers") {
      cfg.num_servers = static_cast<std::uint32_t>(parse_u64(value, value));
    } else if (key == "num_computes") {
      cfg.num_computes = static_cast<std::uint32_t>(parse_u64(value, value));
    } else if (key == "slice_len") {
      cfg.slice_len = parse_duration(value);
    } else {
      throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" +
                        std::string(key) + "'");
    }
  }
  return cfg;
}

GasConfig load_config(const std::string& path, GasConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, base);
}

PageId page_of(const GasConfig& cfg, std::uint64_t addr) {
  if (addr >= cfg.gas_size) {
    throw AddressError("address " + std::to_string(addr) + " outside GAS of " +
                       std::to_string(cfg.gas_size) + " bytes");
  }
  return PageId{addr / cfg.page_size};
}

NodeId owner_of(PageId page, std::uint32_t num_servers) {
  return NodeId::server(static_cast<std::uint16_t>(page.index % num_servers));
}

PageRange page_range(const GasConfig& cfg, PageId page) {
  return {page.index * cfg.page_size, cfg.page_size};
}

std::string PageStatus::str() const {
  switch (tag_) {
    case Tag::Current: return "Current";
    case Tag::CurrentOnCompute: return "CurrentOnCompute(" + node_.str() + ")";
    case Tag::WriteLocked: return "WriteLocked(" + node_.str() + ")";
  }
  return "?";
}

void PageDirectoryEntry::check_invariants() const {
  if (!status.is_current() && !status.node().is_compute()) {
    throw ProtocolError("page status names a server node");
  }
  if (status.is_write_locked()) {
    NodeId w = status.node();
    if (readers.contains(w)) throw ProtocolError("writer " + w.str() + " is in the reader set");
    if (std::find(write_queue.begin(), write_queue.end(), w) != write_queue.end()) {
      throw ProtocolError("writer " + w.str() + " is in its own write queue");
    }
  }
  if (status.is_on_compute() && !readers.contains(status.node())) {
    throw ProtocolError("holder " + status.node().str() + " missing from reader set");
  }
  std::set<NodeId> seen;
  for (NodeId n : write_queue) {
    if (!seen.insert(n).second) throw ProtocolError("duplicate " + n.str() + " in write queue");
  }
}

}  // namespace dsm
