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
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "dsm/sim.hpp"

namespace dsm {

namespace {

constexpr Duration kForever = Duration::max();

bool is_release(MessageKind k) {
  return k == MessageKind::PrivilegeTransfer || k == MessageKind::Downgrade ||
         k == MessageKind::Writeback;
}

bool is_acquire(MessageKind k) {
  return k == MessageKind::WriteGrant || k == MessageKind::PrivilegeTransfer;
}

std::int64_t parse_int(const std::string& field, int lineno) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(field, &used);
    if (used != field.size()) throw std::invalid_argument(field);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("trace line " + std::to_string(lineno) + ": bad number '" + field + "'");
  }
}

}  // namespace

void write_trace(std::ostream& os, const Trace& trace) {
  for (const TraceEvent& e : trace) {
    os << e.time.count() << '\t' << e.src.str() << '\t' << e.dst.str() << '\t' << kind_name(e.kind)
       << '\t' << e.page << '\t' << e.seq << '\t' << e.sent_at.count() << '\n';
  }
}

std::string format_trace(const Trace& trace) {
  std::ostringstream os;
  write_trace(os, trace);
  return os.str();
}

Trace parse_trace(std::istream& in) {
  Trace out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::vector<std::string> f;
    for (std::string tok; ss >> tok;) f.push_back(tok);
    if (f.empty()) continue;
    if (f.size() != 6 && f.size() != 7) {
      throw ConfigError("trace line " + std::to_string(lineno) + ": want 6 or 7 fields");
    }
    TraceEvent e;
    e.time = Duration(parse_int(f[0], lineno));
    e.src = NodeId::parse(f[1]);
    e.dst = NodeId::parse(f[2]);
    auto kind = kind_from_name(f[3]);
    if (!kind) throw ConfigError("trace line " + std::to_string(lineno) + ": unknown kind " + f[3]);
    e.kind = *kind;
    e.page = static_cast<std::uint64_t>(parse_int(f[4], lineno));
    e.seq = static_cast<std::uint64_t>(parse_int(f[5], lineno));
    e.sent_at = f.size() == 7 ? Duration(parse_int(f[6], lineno)) : e.time;
    out.push_back(e);
  }
  return out;
}

Trace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace " + path);
  return parse_trace(in);
}

std::uint64_t trace_hash(const Trace& trace) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : format_trace(trace)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------

std::vector<Tenure> tenures(const Trace& trace) {
  // Candidate ends per (holder, page), in send order.
  std::map<std::pair<NodeId, std::uint64_t>, std::vector<std::size_t>> ends;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceEvent& e = trace[i];
    if (e.src.is_compute() && is_release(e.kind)) ends[{e.src, e.page}].push_back(i);
  }
  for (auto& [_, v] : ends) {
    std::stable_sort(v.begin(), v.end(),
                     [&](std::size_t a, std::size_t b) { return trace[a].sent_at < trace[b].sent_at; });
  }
  std::vector<Tenure> out;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const TraceEvent& e = trace[i];
    if (!is_acquire(e.kind) || !e.dst.is_compute()) continue;
    Tenure t;
    t.holder = e.dst;
    t.page = e.page;
    t.start_index = i;
    t.start = e.time;
    auto it = ends.find({e.dst, e.page});
    if (it != ends.end()) {
      for (std::size_t j : it->second) {
        if (trace[j].sent_at >= e.time) {
          t.end_index = j;
          t.end = trace[j].sent_at;
          t.end_kind = trace[j].kind;
          break;
        }
      }
    }
    out.push_back(t);
  }
  return out;
}

std::string_view violation_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::SingleWriter: return "single-writer";
    case ViolationKind::GrantSafety: return "grant-safety";
    case ViolationKind::Slice: return "slice";
    case ViolationKind::SpontaneousRelinquish: return "spontaneous-relinquish";
    case ViolationKind::Fifo: return "fifo";
    case ViolationKind::MutualExclusion: return "mutual-exclusion";
    case ViolationKind::Barrier: return "barrier";
  }
  return "?";
}

bool CheckReport::has(ViolationKind k) const {
  return std::any_of(violations.begin(), violations.end(), [k](const Violation& v) { return v.kind == k; });
}

std::string CheckReport::machine() const {
  std::string out;
  for (const Violation& v : violations) {
    out += "VIOLATION " + std::string(violation_name(v.kind)) + " " + std::to_string(v.event_index) + "\n";
  }
  return out;
}

std::string CheckReport::text() const {
  if (violations.empty()) return "trace ok\n";
  std::string out;
  for (const Violation& v : violations) {
    out += std::string(violation_name(v.kind)) + " at event " + std::to_string(v.event_index) + ": " +
           v.detail + "\n";
  }
  return out;
}

namespace {

struct Checker {
  const Trace& trace;
  const CheckContext& ctx;
  std::vector<Tenure> tens;
  CheckReport report;

  void flag(ViolationKind k, std::size_t idx, std::string detail) {
    if (report.has(k)) return;
    report.violations.push_back({k, idx, std::move(detail)});
  }

  std::string ev(std::size_t i) const {
    const TraceEvent& e = trace[i];
    return std::string(kind_name(e.kind)) + " " + e.src.str() + "->" + e.dst.str() + " page " +
           std::to_string(e.page);
  }

  void single_writer() {
    std::map<std::uint64_t, std::vector<const Tenure*>> by_page;
    for (const Tenure& t : tens) by_page[t.page].push_back(&t);
    for (auto& [page, ts] : by_page) {
      Duration open_until = Duration::min();
      const Tenure* prev = nullptr;
      for (const Tenure* t : ts) {
        if (prev && t->start < open_until) {
          flag(ViolationKind::SingleWriter, t->start_index,
               ev(t->start_index) + " while " + prev->holder.str() + " still holds write privilege");
          return;
        }
        Duration end = t->end_index ? t->end : kForever;
        if (!prev || end > open_until) {
          open_until = end;
          prev = t;
        }
      }
    }
  }

  void grant_safety() {
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const TraceEvent& inv = trace[i];
      if (inv.kind != MessageKind::Invalidate) continue;
      Duration ack_at = kForever;
      for (std::size_t j = i + 1; j < trace.size(); ++j) {
        const TraceEvent& a = trace[j];
        if (a.kind == MessageKind::InvalidateAck && a.page == inv.page && a.src == inv.dst &&
            a.dst == inv.src) {
          ack_at = a.time;
          break;
        }
      }
      for (std::size_t j = 0; j < trace.size(); ++j) {
        const TraceEvent& g = trace[j];
        if (is_acquire(g.kind) && g.page == inv.page && g.sent_at >= inv.sent_at && g.sent_at < ack_at) {
          flag(ViolationKind::GrantSafety, j, ev(j) + " sent while " + ev(i) + " is unacknowledged");
          return;
        }
      }
    }
  }

  void slice_and_relinquish() {
    for (const Tenure& t : tens) {
      if (!t.end_index || t.end_kind == MessageKind::Writeback) continue;
      NodeClock clk = ctx.skew.of(t.holder);
      if (!(clk.local(t.end) >= clk.local(t.start) + ctx.slice_len)) {
        flag(ViolationKind::Slice, *t.end_index,
             ev(*t.end_index) + " only " +
                 std::to_string((clk.local(t.end) - clk.local(t.start)).count()) +
                 " ns (local) after the grant");
      }
      bool asked = false;
      for (std::size_t j = t.start_index; j < trace.size() && trace[j].time <= t.end; ++j) {
        const TraceEvent& r = trace[j];
        if ((r.kind == MessageKind::HandoffReq || r.kind == MessageKind::CopyReq) && r.dst == t.holder &&
            r.page == t.page) {
          asked = true;
          break;
        }
      }
      if (!asked) {
        flag(ViolationKind::SpontaneousRelinquish, *t.end_index,
             ev(*t.end_index) + " with no HandoffReq or CopyReq pending");
      }
    }
  }

  void fifo() {
    struct Req {
      bool open = false;
      Duration satisfied_at = Duration::min();
    };
    std::map<std::uint64_t, std::deque<NodeId>> waiting;
    std::map<std::pair<NodeId, std::uint64_t>, Req> reqs;
    std::map<std::size_t, const Tenure*> starts;
    for (const Tenure& t : tens) starts[t.start_index] = &t;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const TraceEvent& e = trace[i];
      if (e.kind == MessageKind::WriteReq && e.dst.is_server()) {
        // A node re-sends its request after a bounced HandoffReq; any
        // WriteReq sent before its pending one was satisfied is such a retry.
        Req& r = reqs[{e.src, e.page}];
        if (r.open || e.sent_at < r.satisfied_at) continue;
        r.open = true;
        waiting[e.page].push_back(e.src);
      } else if (auto it = starts.find(i); it != starts.end()) {
        auto& q = waiting[e.page];
        if (q.empty() || q.front() != e.dst) {
          flag(ViolationKind::Fifo, i,
               ev(i) + " but " + (q.empty() ? std::string("no writer is waiting") : q.front().str() + " asked first"));
          return;
        }
        q.pop_front();
        Req& r = reqs[{e.dst, e.page}];
        r.open = false;
        r.satisfied_at = e.time;
      }
    }
  }

  void mutual_exclusion() {
    struct Hold {
      NodeId node;
      std::size_t start_index;
      Duration start;
      Duration end;
    };
    std::map<std::uint64_t, std::vector<Hold>> holds;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const TraceEvent& e = trace[i];
      if (e.kind != MessageKind::LockGrant) continue;
      Duration end = kForever;
      Duration best = kForever;
      for (const TraceEvent& r : trace) {
        if (r.kind == MessageKind::LockRelease && r.src == e.dst && r.page == e.page && r.sent_at >= e.time &&
            r.sent_at < best) {
          best = r.sent_at;
        }
      }
      end = best;
      holds[e.page].push_back({e.dst, i, e.time, end});
    }
    for (auto& [id, hs] : holds) {
      Duration open_until = Duration::min();
      NodeId holder;
      for (const Hold& h : hs) {
        if (h.start < open_until) {
          flag(ViolationKind::MutualExclusion, h.start_index,
               ev(h.start_index) + " while " + holder.str() + " holds lock " + std::to_string(id));
          return;
        }
        if (h.end > open_until) {
          open_until = h.end;
          holder = h.node;
        }
      }
    }
  }

  void barrier() {
    struct Point {
      Duration time;
      int order;  // arrivals before releases at equal times
      std::size_t index;
    };
    std::map<std::uint64_t, std::vector<Point>> pts;
    for (std::size_t i = 0; i < trace.size(); ++i) {
      const TraceEvent& e = trace[i];
      if (e.kind == MessageKind::BarrierEnter) pts[e.page].push_back({e.time, 0, i});
      if (e.kind == MessageKind::BarrierRelease) pts[e.page].push_back({e.sent_at, 1, i});
    }
    std::uint64_t p = std::max<std::uint32_t>(ctx.num_computes, 1);
    for (auto& [id, v] : pts) {
      std::stable_sort(v.begin(), v.end(), [](const Point& a, const Point& b) {
        return a.time != b.time ? a.time < b.time : a.order < b.order;
      });
      std::uint64_t arrivals = 0, releases = 0;
      for (const Point& pt : v) {
        if (pt.order == 0) {
          ++arrivals;
          continue;
        }
        std::uint64_t needed = (releases / p + 1) * p;
        if (arrivals < needed) {
          flag(ViolationKind::Barrier, pt.index,
               ev(pt.index) + " after only " + std::to_string(arrivals - (releases / p) * p) + " of " +
                   std::to_string(p) + " arrivals");
          return;
        }
        ++releases;
      }
    }
  }
};

}  // namespace

CheckReport check_trace(const Trace& trace, const CheckContext& ctx) {
  Checker c{trace, ctx, tenures(trace), {}};
  c.single_writer();
  c.grant_safety();
  c.slice_and_relinquish();
  c.fifo();
  c.mutual_exclusion();
  c.barrier();
  std::sort(c.report.violations.begin(), c.report.violations.end(),
            [](const Violation& a, const Violation& b) { return a.event_index < b.event_index; });
  return c.report;
}

}  // namespace dsm
