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


#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "dsm/bench.hpp"

namespace dsm {

namespace {

using Clock = std::chrono::steady_clock;

/// Elapsed time of one measured call. On the sim backend this is virtual
/// time plus whatever wall time was spent outside event processing.
class Stopwatch {
 public:
  explicit Stopwatch(Session& s) : sim_(dynamic_cast<SimBackend*>(&s.backend())) {}

  void start() {
    if (sim_) {
      v0_ = sim_->cluster().now();
      sim0_ = sim_->sim_wall();
    }
    t0_ = Clock::now();
  }

  Duration virtual_elapsed() const { return sim_ ? sim_->cluster().now() - v0_ : Duration{0}; }

  double seconds() const {
    auto wall = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0_);
    if (!sim_) return static_cast<double>(wall.count()) * 1e-9;
    auto outside = wall - (sim_->sim_wall() - sim0_);
    auto virt = sim_->cluster().now() - v0_;
    return static_cast<double>((virt + outside).count()) * 1e-9;
  }

 private:
  SimBackend* sim_;
  Duration v0_{0};
  std::chrono::nanoseconds sim0_{0};
  Clock::time_point t0_;
};

std::unique_ptr<Session> open_session(const BenchGrid& grid, const GasConfig& cfg) {
  if (grid.make_session) return grid.make_session(cfg);
  if (grid.backend != BackendKind::Sim) throw ConfigError("stream benchmark needs a session factory");
  auto cluster = std::make_shared<SimCluster>(cfg, ClockSkew{}, grid.latency);
  cluster->set_tracing(false);
  return std::make_unique<Session>(std::make_unique<SimBackend>(std::move(cluster), 0),
                                   SessionOptions{cfg.gas_size});
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

std::string_view bench_op_name(BenchOp op) {
  switch (op) {
    case BenchOp::ReadLatency: return "ReadLatency";
    case BenchOp::WriteLatency: return "WriteLatency";
    case BenchOp::ReadBW: return "ReadBW";
    case BenchOp::WriteBW: return "WriteBW";
  }
  return "?";
}

std::string_view backend_name(BackendKind b) { return b == BackendKind::Sim ? "sim" : "stream"; }

std::vector<std::uint64_t> BenchGrid::effective_cache_sizes() const {
  if (!cache_sizes.empty()) return cache_sizes;
  return {gas_size / 8, gas_size / 4, gas_size / 2, gas_size};
}

GasConfig BenchGrid::cell(std::uint64_t page_size, std::uint64_t cache_size) const {
  GasConfig cfg;
  cfg.gas_size = gas_size;
  cfg.page_size = page_size;
  cfg.cache_size = cache_size;
  cfg.num_servers = num_servers;
  cfg.num_computes = num_computes;
  cfg.slice_len = slice_len;
  cfg.validate();
  return cfg;
}

std::vector<BenchSample> run_latency_sweep(const BenchGrid& grid) {
  std::vector<BenchSample> out;
  if (grid.latency_reps < 1) throw ConfigError("latency_reps must be positive");
  for (std::uint64_t ps : grid.page_sizes) {
    for (std::uint64_t cs : grid.effective_cache_sizes()) {
      GasConfig cfg = grid.cell(ps, cs);
      auto session = open_session(grid, cfg);
      std::mt19937_64 rng(grid.seed);
      Stopwatch sw(*session);
      for (BenchOp op : {BenchOp::ReadLatency, BenchOp::WriteLatency}) {
        std::vector<double> us;
        std::byte one{1};
        for (int rep = 0; rep < grid.latency_reps; ++rep) {
          // Flushing leaves every page Current at its server with no readers.
          session->flush();
          std::uint64_t addr = (rng() % cfg.num_pages()) * ps;
          sw.start();
          if (op == BenchOp::ReadLatency) {
            session->read_into(addr, std::span<std::byte>(&one, 1));
          } else {
            session->write(addr, std::span<const std::byte>(&one, 1));
          }
          us.push_back(sw.seconds() * 1e6);
        }
        out.push_back({op, ps, cs, grid.backend, median(us)});
      }
    }
  }
  return out;
}

std::vector<BenchSample> run_bandwidth_sweep(const BenchGrid& grid) {
  std::vector<BenchSample> out;
  if (grid.read_passes < 1) throw ConfigError("read_passes must be positive");
  Bytes buf(grid.gas_size, std::byte{1});
  for (std::uint64_t ps : grid.page_sizes) {
    for (std::uint64_t cs : grid.effective_cache_sizes()) {
      GasConfig cfg = grid.cell(ps, cs);
      auto session = open_session(grid, cfg);
      Stopwatch sw(*session);
      double gas = static_cast<double>(grid.gas_size);

      sw.start();
      session->fill(0, grid.gas_size, std::byte{0});
      double write_bw = gas / sw.seconds();

      double read_bw = 0.0;
      for (int pass = 0; pass < grid.read_passes; ++pass) {
        sw.start();
        session->read_into(0, buf);
        read_bw = std::max(read_bw, gas / sw.seconds());
      }
      out.push_back({BenchOp::ReadBW, ps, cs, grid.backend, read_bw});
      out.push_back({BenchOp::WriteBW, ps, cs, grid.backend, write_bw});
    }
  }
  return out;
}

double local_copy_bandwidth(std::uint64_t bytes, int passes) {
  Bytes src(bytes, std::byte{1});
  Bytes dst(bytes, std::byte{0});
  double best = 0.0;
  for (int i = 0; i < passes; ++i) {
    auto t0 = Clock::now();
    std::memcpy(dst.data(), src.data(), bytes);
    std::chrono::duration<double> dt = Clock::now() - t0;
    // Keep the copy observable.
    src[i % bytes] = dst[(i + 1) % bytes];
    best = std::max(best, static_cast<double>(bytes) / dt.count());
  }
  return best;
}

std::vector<CachedReadCompare> compare_cached_reads(const BenchGrid& grid, int rounds) {
  if (rounds < 1) throw ConfigError("rounds must be positive");
  std::vector<CachedReadCompare> out;
  Bytes src(grid.gas_size, std::byte{1});
  Bytes dst(grid.gas_size, std::byte{0});
  Bytes buf(grid.gas_size, std::byte{0});
  const double gas = static_cast<double>(grid.gas_size);
  for (std::uint64_t ps : grid.page_sizes) {
    auto session = open_session(grid, grid.cell(ps, grid.gas_size));
    session->fill(0, grid.gas_size, std::byte{2});
    Stopwatch sw(*session);
    std::vector<double> local, read, ratio;
    for (int i = 0; i < rounds; ++i) {
      auto t0 = Clock::now();
      std::memcpy(dst.data(), src.data(), grid.gas_size);
      std::chrono::duration<double> dt = Clock::now() - t0;
      src[i % grid.gas_size] = dst[(i + 1) % grid.gas_size];

      sw.start();
      session->read_into(0, buf);
      double secs = sw.seconds();
      if (sw.virtual_elapsed() != Duration{0}) throw ProtocolError("cached read pass went remote");
      local.push_back(gas / dt.count());
      read.push_back(gas / secs);
      ratio.push_back(dt.count() / secs);
    }
    out.push_back({ps, median(read), median(local), median(ratio)});
  }
  return out;
}

void write_csv(std::ostream& os, const std::vector<BenchSample>& samples) {
  os << "op,page_size,cache_size,backend,value\n";
  os << std::setprecision(10);
  for (const BenchSample& s : samples) {
    os << bench_op_name(s.op) << ',' << s.page_size << ',' << s.cache_size << ',' << backend_name(s.backend)
       << ',' << s.value << '\n';
  }
}

void emit_csv(const std::vector<BenchSample>& samples, const std::string& path) {
  if (samples.empty()) throw ConfigError("no samples to write");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  write_csv(out, samples);
  out.flush();
  if (!out) throw IoError("write to " + path + " failed");
}

std::vector<BenchSample> parse_csv(std::istream& in) {
  std::vector<BenchSample> out;
  std::string line;
  if (!std::getline(in, line) || line != "op,page_size,cache_size,backend,value") {
    throw ConfigError("missing CSV header");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string tok; std::getline(ss, tok, ',');) f.push_back(tok);
    if (f.size() != 5) throw ConfigError("bad CSV row '" + line + "'");
    BenchSample s;
    bool found = false;
    for (BenchOp op : {BenchOp::ReadLatency, BenchOp::WriteLatency, BenchOp::ReadBW, BenchOp::WriteBW}) {
      if (bench_op_name(op) == f[0]) {
        s.op = op;
        found = true;
      }
    }
    if (!found) throw ConfigError("unknown op '" + f[0] + "'");
    s.page_size = std::stoull(f[1]);
    s.cache_size = std::stoull(f[2]);
    if (f[3] == "sim") {
      s.backend = BackendKind::Sim;
    } else if (f[3] == "stream") {
      s.backend = BackendKind::Stream;
    } else {
      throw ConfigError("unknown backend '" + f[3] + "'");
    }
    s.value = std::stod(f[4]);
    out.push_back(s);
  }
  return out;
}

bool TrendReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const TrendCheck& c) { return c.pass; });
}

std::string TrendReport::text() const {
  std::string out;
  for (const TrendCheck& c : checks) {
    out += (c.pass ? "PASS " : "FAIL ") + c.name;
    if (!c.detail.empty()) out += ": " + c.detail;
    out += "\n";
  }
  return out;
}

TrendReport assert_trends(const std::vector<BenchSample>& samples, double local_copy_bw, std::uint64_t gas_size) {
  // op -> page -> cache -> value
  std::map<BenchOp, std::map<std::uint64_t, std::map<std::uint64_t, double>>> v;
  TrendCheck finite{"(d) values positive and finite", true, ""};
  for (const BenchSample& s : samples) {
    if (s.backend != BackendKind::Sim) continue;
    v[s.op][s.page_size][s.cache_size] = s.value;
    if (!(s.value > 0.0) || !std::isfinite(s.value)) {
      finite.pass = false;
      finite.detail = std::string(bench_op_name(s.op)) + " page " + format_size(s.page_size) + " cache " +
                      format_size(s.cache_size) + " = " + std::to_string(s.value);
    }
  }

  auto fmt = [](double x) {
    std::ostringstream os;
    os << std::setprecision(6) << x;
    return os.str();
  };

  TrendCheck invariance{"(a) latency cache-invariant within 1.05", true, ""};
  TrendCheck monotone{"(b) latency non-decreasing in page size", true, ""};
  double worst = 1.0;
  for (BenchOp op : {BenchOp::ReadLatency, BenchOp::WriteLatency}) {
    for (const auto& [ps, by_cache] : v[op]) {
      double lo = INFINITY, hi = 0.0;
      for (const auto& [cs, x] : by_cache) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
      double ratio = hi / lo;
      worst = std::max(worst, ratio);
      if (!(ratio <= 1.05)) {
        invariance.pass = false;
        invariance.detail = std::string(bench_op_name(op)) + " page " + format_size(ps) + " ratio " + fmt(ratio);
      }
    }
    std::map<std::uint64_t, std::map<std::uint64_t, double>> by_cache_page;
    for (const auto& [ps, by_cache] : v[op]) {
      for (const auto& [cs, x] : by_cache) by_cache_page[cs][ps] = x;
    }
    for (const auto& [cs, by_page] : by_cache_page) {
      double prev = 0.0;
      std::uint64_t prev_ps = 0;
      for (const auto& [ps, x] : by_page) {
        if (x < prev) {
          monotone.pass = false;
          monotone.detail = std::string(bench_op_name(op)) + " cache " + format_size(cs) + ": page " +
                            format_size(ps) + " " + fmt(x) + "us < page " + format_size(prev_ps) + " " +
                            fmt(prev) + "us";
        }
        prev = x;
        prev_ps = ps;
      }
    }
  }
  if (invariance.pass) invariance.detail = "worst ratio " + fmt(worst);

  TrendCheck cached{"(c) cache=GAS read bandwidth >= 0.9x local copy", true, ""};
  double worst_frac = INFINITY;
  bool any = false;
  for (const auto& [ps, by_cache] : v[BenchOp::ReadBW]) {
    auto it = by_cache.find(gas_size);
    if (it == by_cache.end()) continue;
    any = true;
    double frac = it->second / local_copy_bw;
    worst_frac = std::min(worst_frac, frac);
    if (!(frac >= 0.9)) {
      cached.pass = false;
      cached.detail = "page " + format_size(ps) + " reaches " + fmt(frac) + "x";
    }
  }
  if (!any) {
    cached.pass = false;
    cached.detail = "no ReadBW sample with cache = GAS";
  } else if (cached.pass) {
    cached.detail = "worst " + fmt(worst_frac) + "x of " + fmt(local_copy_bw / 1e9) + " GB/s";
  }

  TrendReport r;
  r.checks = {invariance, monotone, cached, finite};
  return r;
}

TrendReport assert_trends(const std::vector<BenchSample>& samples, const std::vector<CachedReadCompare>& cached,
                          std::uint64_t gas_size) {
  TrendReport r = assert_trends(samples, 1.0, gas_size);
  TrendCheck& c = r.checks[2];
  c = TrendCheck{c.name, !cached.empty(), cached.empty() ? "no paired measurement" : ""};
  double worst = INFINITY;
  for (const CachedReadCompare& x : cached) {
    worst = std::min(worst, x.ratio);
    if (!(x.ratio >= 0.9)) {
      c.pass = false;
      c.detail = "page " + format_size(x.page_size) + " reaches " + std::to_string(x.ratio) + "x";
    }
  }
  if (c.pass) c.detail = "worst " + std::to_string(worst) + "x of interleaved local copy";
  return r;
}

}  // namespace dsm
