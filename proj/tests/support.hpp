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


#ifndef DSM_TESTS_SUPPORT_HPP_
#define DSM_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dsm/message.hpp"
#include "dsm/sim.hpp"

namespace dsm::testing {

inline std::string fixture(const std::string& name) { return std::string(DSM_FIXTURE_DIR) + "/" + name; }

inline GasConfig cluster_cfg(std::uint32_t computes, std::uint32_t servers,
                             std::uint64_t gas = 1u << 20, std::uint64_t page = 4096) {
  GasConfig c;
  c.gas_size = gas;
  c.page_size = page;
  c.cache_size = gas;
  c.num_computes = computes;
  c.num_servers = servers;
  return c;
}

inline Bytes pattern(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Bytes b(n);
  for (auto& x : b) x = static_cast<std::byte>(rng());
  return b;
}

/// Well-formed message of a uniformly chosen kind. Page-carrying kinds get
/// a payload of up to `max_page` bytes.
inline Message random_message(std::mt19937_64& rng, std::size_t max_page = 8192) {
  Message m;
  m.kind = *kind_from_tag(static_cast<std::uint16_t>(kMinKindTag + rng() % (kMaxKindTag - kMinKindTag + 1)));
  m.page = rng();
  m.src = NodeId::from_wire(static_cast<std::uint16_t>(rng()));
  m.seq = rng();
  std::size_t len = fixed_payload_size(m.kind).value_or(rng() % (max_page + 1));
  m.payload = pattern(len, rng());
  return m;
}

inline std::vector<MessageKind> kinds(const Trace& t) {
  std::vector<MessageKind> out;
  for (const auto& e : t) out.push_back(e.kind);
  return out;
}

inline void drain(SimCluster& sim) {
  while (sim.step()) {
  }
}

/// Starts an access on compute `c` and runs the cluster until the queue is
/// empty. A Write fills the page with `value`.
inline void access(SimCluster& sim, std::uint16_t c, std::uint64_t page, AccessMode mode,
                   std::byte value = std::byte{0}) {
  sim.invoke(c, [=](ComputeNode& n, LocalTime now) {
    return n.access(PageId{page}, mode, now, [=](std::span<std::byte> b) {
      if (mode == AccessMode::Write) std::fill(b.begin(), b.end(), value);
    });
  });
  drain(sim);
}

/// One scripted run per access scenario: the setup runs untraced, the
/// returned trace covers only the scenario's own request. Four computes,
/// one server, page 0.
inline Trace scenario_trace(int scenario, SimCluster& sim) {
  sim.set_tracing(false);
  switch (scenario) {
    case 1:
      break;
    case 2:
      // c2 writes, then c3's read downgrades it to latest-copy holder.
      access(sim, 2, 0, AccessMode::Write, std::byte{0x5A});
      access(sim, 3, 0, AccessMode::Read);
      break;
    case 3:
      access(sim, 2, 0, AccessMode::Read);
      access(sim, 3, 0, AccessMode::Read);
      break;
    case 4:
      access(sim, 2, 0, AccessMode::Write, std::byte{0x5A});
      break;
    default:
      throw ConfigError("no scenario " + std::to_string(scenario));
  }
  sim.set_tracing(true);
  access(sim, 1, 0, scenario <= 2 ? AccessMode::Read : AccessMode::Write, std::byte{0x33});
  return sim.take_trace();
}

inline std::vector<MessageKind> scenario_expected(int scenario) {
  using K = MessageKind;
  switch (scenario) {
    case 1: return {K::ReadReq, K::PageData};
    case 2: return {K::ReadReq, K::Redirect, K::CopyReq, K::PageData};
    case 3: return {K::WriteReq, K::Invalidate, K::Invalidate, K::InvalidateAck, K::InvalidateAck, K::WriteGrant};
    case 4: return {K::WriteReq, K::Redirect, K::HandoffReq, K::PrivilegeTransfer, K::TransferNotice};
    default: return {};
  }
}

/// Exact match, except that scenario 4's closing PrivilegeTransfer and
/// TransferNotice leave the holder together and may land in either order.
inline bool scenario_matches(int scenario, const Trace& t) {
  auto got = kinds(t);
  auto want = scenario_expected(scenario);
  if (scenario == 4 && got.size() == want.size()) {
    std::sort(got.end() - 2, got.end());
    std::sort(want.end() - 2, want.end());
  }
  return got == want;
}

}  // namespace dsm::testing

#endif  // DSM_TESTS_SUPPORT_HPP_
