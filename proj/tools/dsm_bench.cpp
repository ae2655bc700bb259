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


// First-byte latency and full-sweep bandwidth over a page-size x
// cache-size grid. With --backend stream every cell gets freshly forked
// memory-server processes on the endpoints from the hosts file.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dsm/bench.hpp"

namespace {

std::vector<std::uint64_t> parse_sizes(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  for (std::string tok; std::getline(ss, tok, ',');) {
    if (!tok.empty()) out.push_back(dsm::parse_size(tok));
  }
  return out;
}

std::vector<pid_t> g_children;

void reap_servers() {
  for (pid_t pid : g_children) ::kill(pid, SIGTERM);
  for (pid_t pid : g_children) ::waitpid(pid, nullptr, 0);
  g_children.clear();
}

dsm::HostMap local_hosts(std::uint32_t servers, std::uint16_t base_port) {
  dsm::HostMap hosts;
  for (std::uint32_t s = 0; s < servers; ++s) {
    hosts[dsm::NodeId::server(static_cast<std::uint16_t>(s))] = {"127.0.0.1",
                                                                 static_cast<std::uint16_t>(base_port + 1 + s)};
  }
  hosts[dsm::NodeId::compute(0)] = {"127.0.0.1", base_port};
  return hosts;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slicedsm benchmark"};
  dsm::BenchGrid grid;
  std::string gas = "16M", pages = "4K,16K,64K,256K,512K,1M", caches, slice = "10ms";
  std::string backend = "sim", hosts_file, out_path, config_file;
  bool check = false;
  std::uint16_t base_port = 47100;

  app.add_option("--config", config_file, "key=value GAS config (defaults for the flags below)");
  app.add_option("--gas-size", gas);
  app.add_option("--page-sizes", pages, "comma list, e.g. 4K,64K,1M");
  app.add_option("--cache-sizes", caches, "comma list; default GAS/8,GAS/4,GAS/2,GAS");
  app.add_option("--servers", grid.num_servers);
  app.add_option("--computes", grid.num_computes);
  app.add_option("--slice", slice);
  app.add_option("--seed", grid.seed);
  app.add_option("--backend", backend)->check(CLI::IsMember({"sim", "stream"}));
  app.add_option("--hosts", hosts_file, "hosts file (stream backend; $DSM_HOSTS overrides)");
  app.add_option("--base-port", base_port, "stream backend without a hosts file");
  app.add_option("--out", out_path, "CSV output (default stdout)");
  app.add_flag("--check", check, "run the trend checks; nonzero exit on failure");
  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_file.empty()) {
      dsm::GasConfig cfg = dsm::load_config(config_file);
      grid.gas_size = cfg.gas_size;
      grid.num_servers = cfg.num_servers;
      grid.num_computes = cfg.num_computes;
      grid.slice_len = cfg.slice_len;
    }
    if (config_file.empty() || app.count("--gas-size")) grid.gas_size = dsm::parse_size(gas);
    if (config_file.empty() || app.count("--slice")) grid.slice_len = dsm::parse_duration(slice);
    grid.page_sizes = parse_sizes(pages);
    grid.cache_sizes = parse_sizes(caches);

    if (backend == "stream") {
      grid.backend = dsm::BackendKind::Stream;
      std::string path = dsm::hosts_path(hosts_file);
      dsm::HostMap hosts = path.empty() ? local_hosts(grid.num_servers, base_port) : dsm::load_hosts(path);
      grid.make_session = [hosts](const dsm::GasConfig& cfg) {
        reap_servers();
        for (std::uint32_t s = 0; s < cfg.num_servers; ++s) {
          pid_t pid = ::fork();
          if (pid < 0) throw dsm::ConnectError("fork failed");
          if (pid == 0) {
            std::atomic<bool> stop{false};
            try {
              dsm::serve_stream(cfg, static_cast<std::uint16_t>(s), hosts, stop);
            } catch (const std::exception& e) {
              std::fprintf(stderr, "server s%u: %s\n", s, e.what());
              ::_exit(1);
            }
            ::_exit(0);
          }
          g_children.push_back(pid);
        }
        auto backend = std::make_unique<dsm::StreamBackend>(cfg, 0, hosts);
        return std::make_unique<dsm::Session>(std::move(backend), dsm::SessionOptions{cfg.gas_size});
      };
    }

    auto samples = dsm::run_latency_sweep(grid);
    auto bw = dsm::run_bandwidth_sweep(grid);
    samples.insert(samples.end(), bw.begin(), bw.end());
    reap_servers();

    if (out_path.empty()) {
      dsm::write_csv(std::cout, samples);
    } else {
      dsm::emit_csv(samples, out_path);
    }

    if (check) {
      auto report = grid.backend == dsm::BackendKind::Sim
                        ? dsm::assert_trends(samples, dsm::compare_cached_reads(grid), grid.gas_size)
                        : dsm::assert_trends(samples, dsm::local_copy_bandwidth(grid.gas_size), grid.gas_size);
      std::cerr << report.text();
      if (grid.backend == dsm::BackendKind::Stream) {
        std::cerr << "stream backend samples are exempt from the trend checks\n";
      }
      return report.ok() ? 0 : 1;
    }
    return 0;
  } catch (const std::exception& e) {
    reap_servers();
    std::cerr << "dsm_bench: " << e.what() << "\n";
    return 2;
  }
}
