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


// Runs one memory server of a stream-backend cluster.
//
//   dsm_node --id s0 --hosts cluster.hosts --config gas.conf

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "dsm/node_api.hpp"

namespace {
std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slicedsm memory server"};
  std::string id, hosts_file = "dsm.hosts", config_file;
  app.add_option("--id", id, "server id, e.g. s0")->required();
  app.add_option("--hosts", hosts_file, "hosts file ($DSM_HOSTS overrides)");
  app.add_option("--config", config_file, "key=value GAS config");
  CLI11_PARSE(app, argc, argv);

  try {
    dsm::GasConfig cfg = config_file.empty() ? dsm::GasConfig{} : dsm::load_config(config_file);
    cfg.validate();
    dsm::NodeId self = dsm::NodeId::parse(id);
    if (!self.is_server()) throw dsm::ConfigError("--id must name a server (sN)");
    auto hosts = dsm::load_hosts(dsm::hosts_path(hosts_file));
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    dsm::serve_stream(cfg, self.index, hosts, g_stop);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "dsm_node: " << e.what() << "\n";
    return 2;
  }
}
