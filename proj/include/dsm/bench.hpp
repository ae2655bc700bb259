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


#ifndef DSM_BENCH_HPP_
#define DSM_BENCH_HPP_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "dsm/node_api.hpp"

namespace dsm {

enum class BenchOp : std::uint8_t { ReadLatency, WriteLatency, ReadBW, WriteBW };
std::string_view bench_op_name(BenchOp op);
std::string_view backend_name(BackendKind b);

/// Latency in microseconds, bandwidth in bytes per second.
struct BenchSample {
  BenchOp op = BenchOp::ReadLatency;
  std::uint64_t page_size = 0;
  std::uint64_t cache_size = 0;
  BackendKind backend = BackendKind::Sim;
  double value = 0.0;
};

using SessionFactory = std::function<std::unique_ptr<Session>(const GasConfig&)>;

struct BenchGrid {
  std::uint64_t gas_size = 16u << 20;
  std::vector<std::uint64_t> page_sizes{4u << 10, 16u << 10, 64u << 10, 256u << 10, 512u << 10, 1u << 20};
  /// Empty means {GAS/8, GAS/4, GAS/2, GAS}.
  std::vector<std::uint64_t> cache_sizes;
  std::uint32_t num_servers = 1;
  std::uint32_t num_computes = 1;
  Duration slice_len = 10ms;
  std::uint64_t seed = 0;
  LatencyModel latency;
  int latency_reps = 9;
  int read_passes = 5;
  BackendKind backend = BackendKind::Sim;
  /// Required for the stream backend; the sim backend builds its own.
  SessionFactory make_session;

  std::vector<std::uint64_t> effective_cache_sizes() const;
  GasConfig cell(std::uint64_t page_size, std::uint64_t cache_size) const;
};

/// Per cell, the median of `latency_reps` first-byte accesses to a page
/// the cache does not hold and the server has Current.
std::vector<BenchSample> run_latency_sweep(const BenchGrid& grid);

/// Per cell, one full-GAS write pass, then the best of `read_passes` full
/// reads. Sim-backend elapsed time is virtual time plus the wall time
/// spent outside event processing.
std::vector<BenchSample> run_bandwidth_sweep(const BenchGrid& grid);

/// Best of `passes` plain memcpy of `bytes`, in bytes per second.
double local_copy_bandwidth(std::uint64_t bytes, int passes = 5);

/// Bandwidths are per-side medians; `ratio` is the median of the per-round
/// read/local ratios.
struct CachedReadCompare {
  std::uint64_t page_size = 0;
  double read_bw = 0.0;
  double local_bw = 0.0;
  double ratio = 0.0;
};

/// Per page size with cache = GAS: after one fill pass, `rounds` rounds of
/// one GAS-sized memcpy immediately followed by one full read. Throws
/// ProtocolError if a read pass leaves the cache.
std::vector<CachedReadCompare> compare_cached_reads(const BenchGrid& grid, int rounds = 15);

void write_csv(std::ostream& os, const std::vector<BenchSample>& samples);
/// Refuses empty input (ConfigError); unwritable path throws IoError.
void emit_csv(const std::vector<BenchSample>& samples, const std::string& path);
std::vector<BenchSample> parse_csv(std::istream& in);

struct TrendCheck {
  std::string name;
  bool pass = true;
  std::string detail;
};

struct TrendReport {
  std::vector<TrendCheck> checks;
  bool ok() const;
  std::string text() const;
};

/// (a) latency max/min across cache sizes <= 1.05 per page size;
/// (b) latency non-decreasing in page size; (c) ReadBW at cache = GAS is
/// at least 0.9x `local_copy_bw`; (d) every value positive and finite.
/// Stream-backend samples are ignored.
TrendReport assert_trends(const std::vector<BenchSample>& samples, double local_copy_bw, std::uint64_t gas_size);
/// As above, with (c) judged on interleaved pairs from compare_cached_reads.
TrendReport assert_trends(const std::vector<BenchSample>& samples, const std::vector<CachedReadCompare>& cached,
                          std::uint64_t gas_size);

}  // namespace dsm

#endif  // DSM_BENCH_HPP_
