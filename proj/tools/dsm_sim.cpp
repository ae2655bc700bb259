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


// Simulated-cluster driver: runs generated workloads, checks traces.
//
//   dsm_sim run --profile lock-protected --seeds 0-99 [--trace out.tsv]
//   dsm_sim check trace.tsv --slice 10ms --computes 4

#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dsm/sim.hpp"

namespace {

std::pair<std::uint64_t, std::uint64_t> parse_seeds(const std::string& s) {
  auto dash = s.find('-');
  if (dash == std::string::npos) {
    auto v = std::stoull(s);
    return {v, v};
  }
  return {std::stoull(s.substr(0, dash)), std::stoull(s.substr(dash + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slicedsm simulator"};
  app.require_subcommand(1);

  dsm::GasConfig cfg;
  cfg.num_computes = 4;
  cfg.num_servers = 2;
  std::string gas = "16M", page = "4K", cache = "32K", slice = "10ms", config_file;
  std::string profile = "lock-protected", seeds = "0", trace_out;
  std::uint32_t ops = 24;
  bool verify = true;

  auto* run = app.add_subcommand("run", "run generated workloads");
  run->add_option("--config", config_file, "key=value config file");
  run->add_option("--gas-size", gas);
  run->add_option("--page-size", page);
  run->add_option("--cache-size", cache);
  run->add_option("--servers", cfg.num_servers);
  run->add_option("--computes", cfg.num_computes);
  run->add_option("--slice", slice);
  run->add_option("--profile", profile, "read-heavy | write-contended | lock-protected");
  run->add_option("--seeds", seeds, "N or A-B");
  run->add_option("--ops", ops, "data ops per node");
  run->add_option("--trace", trace_out, "write the (last) trace here");
  run->add_flag("!--no-verify", verify, "skip trace checks and oracle comparison");

  std::string trace_in;
  std::string check_slice = "10ms";
  std::uint32_t check_computes = 1;
  auto* check = app.add_subcommand("check", "check a trace file");
  check->add_option("trace", trace_in)->required();
  check->add_option("--slice", check_slice);
  check->add_option("--computes", check_computes, "barrier participants");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*check) {
      dsm::CheckContext ctx;
      ctx.slice_len = dsm::parse_duration(check_slice);
      ctx.num_computes = check_computes;
      auto rep = dsm::check_trace(dsm::load_trace(trace_in), ctx);
      std::cout << rep.machine();
      std::cerr << rep.text();
      return rep.ok() ? 0 : 1;
    }

    if (!config_file.empty()) cfg = dsm::load_config(config_file, cfg);
    if (run->count("--gas-size")) cfg.gas_size = dsm::parse_size(gas);
    if (run->count("--page-size")) cfg.page_size = dsm::parse_size(page);
    if (run->count("--cache-size") || config_file.empty()) cfg.cache_size = dsm::parse_size(cache);
    if (run->count("--slice")) cfg.slice_len = dsm::parse_duration(slice);
    cfg.validate();

    dsm::WorkloadParams params;
    params.profile = dsm::parse_profile(profile);
    params.num_computes = cfg.num_computes;
    params.gas_size = cfg.gas_size;
    params.page_size = cfg.page_size;
    params.ops_per_node = ops;

    dsm::CheckContext ctx;
    ctx.slice_len = cfg.slice_len;
    ctx.num_computes = cfg.num_computes;

    auto [lo, hi] = parse_seeds(seeds);
    int failures = 0;
    for (std::uint64_t seed = lo; seed <= hi; ++seed) {
      auto w = dsm::gen_workload(seed, params);
      auto r = dsm::run(cfg, w, seed);
      std::string verdict = "ok";
      if (verify) {
        auto rep = dsm::check_trace(r.trace, ctx);
        if (!rep.ok()) verdict = "trace: " + rep.text();
        if (rep.ok() && params.profile == dsm::Profile::LockProtected) {
          auto o = dsm::serial_oracle(cfg, w, r.trace);
          if (auto d = o.image.first_difference(r.image)) {
            verdict = "image differs from oracle at " + std::to_string(*d);
          } else if (o.reads != r.reads) {
            verdict = "reads differ from oracle";
          }
        }
      }
      if (verdict != "ok") ++failures;
      std::printf("seed %llu events %llu end %.3fms hash %016llx %s\n", static_cast<unsigned long long>(seed),
                  static_cast<unsigned long long>(r.events), r.end_time.count() / 1e6,
                  static_cast<unsigned long long>(dsm::trace_hash(r.trace)), verdict.c_str());
      if (!trace_out.empty() && seed == hi) {
        std::ofstream out(trace_out);
        dsm::write_trace(out, r.trace);
      }
    }
    return failures ? 1 : 0;
  } catch (const std::exception& e) {
    std::cerr << "dsm_sim: " << e.what() << "\n";
    return 2;
  }
}
