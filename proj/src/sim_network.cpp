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


#include <cmath>
#include <string>

#include "dsm/transport.hpp"

namespace dsm {

void LatencyModel::validate() const {
  if (base_latency < Duration::zero()) throw ConfigError("base latency must be non-negative");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw ConfigError("bandwidth must be positive");
}

Duration LatencyModel::delay(std::size_t payload_bytes) const {
  double ns = static_cast<double>(payload_bytes) * 1000.0 / bandwidth;
  return base_latency + Duration(static_cast<std::int64_t>(std::ceil(ns)));
}

SimNetwork::SimNetwork(std::uint32_t num_servers, std::uint32_t num_computes, LatencyModel model)
    : num_servers_(num_servers), num_computes_(num_computes), model_(model) {
  model_.validate();
}

bool SimNetwork::knows(NodeId n) const {
  return n.index < (n.is_server() ? num_servers_ : num_computes_);
}

Duration SimNetwork::deliver_at(NodeId src, NodeId dst, const Message& msg, Duration now) {
  if (!knows(dst)) throw TransportError("unknown destination " + dst.str());
  if (!knows(src)) throw TransportError("unknown source " + src.str());
  Duration t = now + model_.delay(msg.payload.size());
  auto [it, fresh] = last_delivery_.try_emplace({src, dst}, t);
  if (!fresh) {
    if (t < it->second) t = it->second;
    it->second = t;
  }
  return t;
}

}  // namespace dsm
