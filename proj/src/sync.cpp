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

#include "dsm/sync.hpp"

#include <algorithm>
#include <string>

namespace dsm {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

NodeId sync_manager_for(SyncId id, std::uint32_t num_servers) {
  return NodeId::server(static_cast<std::uint16_t>(splitmix64(id) % num_servers));
}

std::vector<NodeId> BarrierManager::enter(SyncId id, std::uint32_t expected, NodeId node) {
  if (expected == 0) throw ProtocolError("barrier " + std::to_string(id) + " expects zero nodes");
  auto [it, fresh] = barriers_.try_emplace(id);
  BarrierState& b = it->second;
  if (fresh) {
    b.barrier_id = id;
    b.expected = expected;
  } else if (b.expected != expected) {
    throw ProtocolError("barrier " + std::to_string(id) + ": expected " +
                        std::to_string(expected) + " but earlier callers said " +
                        std::to_string(b.expected));
  }
  if (!b.arrived.insert(node).second) {
    throw ProtocolError(node.str() + " entered barrier " + std::to_string(id) + " twice");
  }
  if (b.arrived.size() < b.expected) return {};
  std::vector<NodeId> released(b.arrived.begin(), b.arrived.end());
  b.arrived.clear();
  ++b.epoch;
  return released;
}

const BarrierState* BarrierManager::find(SyncId id) const {
  auto it = barriers_.find(id);
  return it == barriers_.end() ? nullptr : &it->second;
}

std::optional<NodeId> MutexManager::acquire(SyncId id, NodeId node) {
  auto [it, fresh] = locks_.try_emplace(id);
  MutexState& m = it->second;
  m.lock_id = id;
  if (m.holder == node) {
    throw LockError(node.str() + " already holds lock " + std::to_string(id));
  }
  if (std::find(m.wait_queue.begin(), m.wait_queue.end(), node) != m.wait_queue.end()) {
    throw LockError(node.str() + " is already waiting for lock " + std::to_string(id));
  }
  if (!m.holder) {
    m.holder = node;
    return node;
  }
  m.wait_queue.push_back(node);
  return std::nullopt;
}

std::optional<NodeId> MutexManager::release(SyncId id, NodeId node) {
  auto it = locks_.find(id);
  if (it == locks_.end() || it->second.holder != node) {
    throw LockError(node.str() + " released lock " + std::to_string(id) + " it does not hold");
  }
  MutexState& m = it->second;
  m.holder.reset();
  if (m.wait_queue.empty()) return std::nullopt;
  m.holder = m.wait_queue.front();
  m.wait_queue.pop_front();
  return m.holder;
}

const MutexState* MutexManager::find(SyncId id) const {
  auto it = locks_.find(id);
  return it == locks_.end() ? nullptr : &it->second;
}

}  // namespace dsm
