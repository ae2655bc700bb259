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

#ifndef DSM_SYNC_HPP_
#define DSM_SYNC_HPP_

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "dsm/core.hpp"

namespace dsm {

using SyncId = std::uint64_t;

/// Server hosting the barrier/mutex manager for `id` (splitmix64 mod
/// num_servers, so every implementation agrees on placement).
NodeId sync_manager_for(SyncId id, std::uint32_t num_servers);

struct BarrierState {
  SyncId barrier_id = 0;
  std::uint32_t expected = 0;
  std::set<NodeId> arrived;
  std::uint64_t epoch = 0;
};

class BarrierManager {
 public:
  /// Records an arrival. Returns the full participant set when this arrival
  /// completes the epoch (the caller broadcasts BarrierRelease), otherwise
  /// an empty vector. Mismatched `expected` throws ProtocolError.
  std::vector<NodeId> enter(SyncId id, std::uint32_t expected, NodeId node);

  const BarrierState* find(SyncId id) const;

 private:
  std::map<SyncId, BarrierState> barriers_;
};

struct MutexState {
  SyncId lock_id = 0;
  std::optional<NodeId> holder;
  std::deque<NodeId> wait_queue;
};

class MutexManager {
 public:
  /// Returns `node` if it is granted immediately, nullopt if queued.
  /// Reentrant or duplicate acquire throws LockError.
  std::optional<NodeId> acquire(SyncId id, NodeId node);

  /// Returns the next holder if one was waiting. Release by a non-holder
  /// throws LockError.
  std::optional<NodeId> release(SyncId id, NodeId node);

  const MutexState* find(SyncId id) const;

 private:
  std::map<SyncId, MutexState> locks_;
};

}  // namespace dsm

#endif  // DSM_SYNC_HPP_
