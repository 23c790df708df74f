#pragma once

// Reference models used only by tests. Each is written without reusing the
// library's algorithms so agreement is meaningful.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// ---------------------------------------------------------------------------
// Fluid processor sharing on one VM. Between consecutive arrival/finish
// instants every active task progresses at pes * mips * min(1, P / sum pes).

struct FluidJob {
  double arrival = 0.0;
  double length = 0.0;  // MI
  int pes = 1;
};

inline std::vector<double> fluid_finish_times(const std::vector<FluidJob>& jobs, double mips, int vm_pes) {
  const std::size_t n = jobs.size();
  std::vector<long double> remaining(n);
  std::vector<double> finish(n, std::numeric_limits<double>::quiet_NaN());
  std::vector<bool> arrived(n, false), done(n, false);
  for (std::size_t i = 0; i < n; ++i) remaining[i] = jobs[i].length;
  long double t = 0.0L;
  std::size_t finished = 0;
  while (finished < n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!arrived[i] && jobs[i].arrival <= t) arrived[i] = true;
    }
    int demand = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (arrived[i] && !done[i]) demand += jobs[i].pes;
    }
    long double next_arrival = std::numeric_limits<long double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!arrived[i]) next_arrival = std::min<long double>(next_arrival, jobs[i].arrival);
    }
    if (demand == 0) {
      t = next_arrival;
      continue;
    }
    const long double factor = std::min<long double>(1.0L, static_cast<long double>(vm_pes) / demand);
    long double step = next_arrival - t;
    for (std::size_t i = 0; i < n; ++i) {
      if (!arrived[i] || done[i]) continue;
      step = std::min(step, remaining[i] / (jobs[i].pes * mips * factor));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!arrived[i] || done[i]) continue;
      remaining[i] -= jobs[i].pes * mips * factor * step;
    }
    t += step;
    for (std::size_t i = 0; i < n; ++i) {
      if (arrived[i] && !done[i] && remaining[i] <= 1e-12L * jobs[i].length) {
        done[i] = true;
        finish[i] = static_cast<double>(t);
        ++finished;
      }
    }
  }
  return finish;
}

// Whole-PE FCFS: a job starts when it reaches the head of the queue and enough
// PEs are free, then runs at pes * mips.
inline std::vector<double> space_shared_finish_times(const std::vector<FluidJob>& jobs, double mips, int vm_pes) {
  std::vector<double> finish(jobs.size());
  std::vector<std::pair<double, int>> running;  // (finish, pes)
  double clock = 0.0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    clock = std::max(clock, jobs[i].arrival);
    auto used = [&] {
      int u = 0;
      for (auto& r : running) {
        if (r.first > clock) u += r.second;
      }
      return u;
    };
    while (vm_pes - used() < jobs[i].pes) {
      double next = std::numeric_limits<double>::infinity();
      for (auto& r : running) {
        if (r.first > clock) next = std::min(next, r.first);
      }
      clock = next;
    }
    finish[i] = clock + jobs[i].length / (jobs[i].pes * mips);
    running.emplace_back(finish[i], jobs[i].pes);
  }
  return finish;
}

// ---------------------------------------------------------------------------
// Graph distances and next hops.

using Graph = std::map<int, std::set<int>>;

inline std::map<std::pair<int, int>, int> floyd_warshall(const Graph& g) {
  const int inf = std::numeric_limits<int>::max() / 4;
  std::map<std::pair<int, int>, int> d;
  for (auto& [a, _] : g) {
    for (auto& [b, __] : g) d[{a, b}] = a == b ? 0 : inf;
  }
  for (auto& [a, ns] : g) {
    for (int b : ns) d[{a, b}] = 1;
  }
  for (auto& [k, _] : g) {
    for (auto& [i, __] : g) {
      for (auto& [j, ___] : g) {
        d[{i, j}] = std::min(d[{i, j}], d[{i, k}] + d[{k, j}]);
      }
    }
  }
  return d;
}

// Smallest neighbour that lies on some shortest path.
inline std::map<std::pair<int, int>, int> expected_next_hops(const Graph& g) {
  auto d = floyd_warshall(g);
  std::map<std::pair<int, int>, int> out;
  for (auto& [s, ns] : g) {
    for (auto& [t, _] : g) {
      if (s == t) continue;
      for (int n : ns) {
        if (d[{n, t}] == d[{s, t}] - 1) {
          out[{s, t}] = n;
          break;
        }
      }
    }
  }
  return out;
}

// Every simple path from s to t, by depth-first enumeration.
inline std::vector<std::vector<int>> all_simple_paths(const Graph& g, int s, int t) {
  std::vector<std::vector<int>> out;
  std::vector<int> path{s};
  std::set<int> seen{s};
  std::function<void(int)> walk = [&](int at) {
    if (at == t) {
      out.push_back(path);
      return;
    }
    for (int n : g.at(at)) {
      if (seen.count(n)) continue;
      seen.insert(n);
      path.push_back(n);
      walk(n);
      path.pop_back();
      seen.erase(n);
    }
  };
  walk(s);
  return out;
}

inline Graph random_connected_graph(std::mt19937_64& rng, int n, double extra_edge_p) {
  Graph g;
  for (int i = 0; i < n; ++i) g[i];
  for (int i = 1; i < n; ++i) {
    int j = std::uniform_int_distribution<int>(0, i - 1)(rng);
    g[i].insert(j);
    g[j].insert(i);
  }
  std::bernoulli_distribution extra(extra_edge_p);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (extra(rng)) {
        g[i].insert(j);
        g[j].insert(i);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Single FCFS server (Lindley recursion). Jobs are served in arrival order,
// ties in submission order.

struct LinkJob {
  double arrival = 0.0;
  double size = 0.0;
};

struct LinkOutcome {
  double start = 0.0;
  double end = 0.0;
  double delivered = 0.0;
};

inline std::vector<LinkOutcome> fcfs_link(const std::vector<LinkJob>& jobs, double bandwidth, double latency) {
  std::vector<std::size_t> order(jobs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return jobs[a].arrival < jobs[b].arrival; });
  std::vector<LinkOutcome> out(jobs.size());
  double free_at = -std::numeric_limits<double>::infinity();
  for (auto i : order) {
    double start = std::max(free_at, jobs[i].arrival);
    double end = start + jobs[i].size / bandwidth;
    out[i] = {start, end, end + latency};
    free_at = end;
  }
  return out;
}

// Flooding with duplicate suppression on a path graph 0-1-...-(n-1): every
// device forwards a first-seen packet on each link except the one it came in
// on; the destination consumes it. Each link direction is an FCFS server.
struct FloodPacket {
  double sent = 0.0;
  int origin = 0;
  int destination = 0;
  double size = 0.0;
};

inline std::vector<double> flood_on_path(const std::vector<FloodPacket>& packets, int n, double bandwidth,
                                         double latency) {
  struct Pending {
    double time;
    std::uint64_t order;
    std::size_t packet;
    int at;
    int from;
  };
  std::vector<double> delivered(packets.size(), std::numeric_limits<double>::quiet_NaN());
  std::map<std::pair<int, int>, double> link_free;
  std::vector<Pending> agenda;
  std::uint64_t counter = 0;
  for (std::size_t i = 0; i < packets.size(); ++i) agenda.push_back({packets[i].sent, counter++, i, packets[i].origin, -1});
  std::vector<std::set<int>> seen(packets.size());
  while (!agenda.empty()) {
    auto it = std::min_element(agenda.begin(), agenda.end(), [](const Pending& a, const Pending& b) {
      return a.time != b.time ? a.time < b.time : a.order < b.order;
    });
    Pending p = *it;
    agenda.erase(it);
    if (!seen[p.packet].insert(p.at).second) continue;
    const auto& pk = packets[p.packet];
    if (p.at == pk.destination) {
      delivered[p.packet] = p.time;
      continue;
    }
    for (int next : {p.at - 1, p.at + 1}) {
      if (next < 0 || next >= n || next == p.from) continue;
      double& free = link_free[{p.at, next}];
      double start = std::max(free, p.time);
      free = start + pk.size / bandwidth;
      agenda.push_back({free + latency, counter++, p.packet, next, p.at});
    }
  }
  return delivered;
}

// ---------------------------------------------------------------------------
// Random DAGs: edge i -> j (i < j) with probability p, one file per edge.

struct Dag {
  int n = 0;
  std::vector<double> runtime;                    // MI
  std::vector<std::pair<int, int>> edges;         // parent, child
  std::map<std::pair<int, int>, double> file_mb;  // per edge
};

inline Dag random_dag(std::mt19937_64& rng, int max_tasks, double edge_p, double max_file_mb = 0.0) {
  Dag d;
  d.n = std::uniform_int_distribution<int>(1, max_tasks)(rng);
  std::uniform_real_distribution<double> runtime(100.0, 5000.0);
  std::uniform_real_distribution<double> size(0.0, max_file_mb);
  std::bernoulli_distribution edge(edge_p);
  for (int i = 0; i < d.n; ++i) d.runtime.push_back(std::round(runtime(rng)));
  for (int i = 0; i < d.n; ++i) {
    for (int j = i + 1; j < d.n; ++j) {
      if (edge(rng)) {
        d.edges.emplace_back(i, j);
        d.file_mb[{i, j}] = max_file_mb > 0.0 ? size(rng) : 0.0;
      }
    }
  }
  return d;
}

// Longest runtime-weighted path, at `mips` per task.
inline double critical_path(const Dag& d, double mips) {
  std::map<int, std::vector<int>> parents;
  for (auto [p, c] : d.edges) parents[c].push_back(p);
  std::map<int, double> memo;
  std::function<double(int)> finish = [&](int t) {
    if (auto it = memo.find(t); it != memo.end()) return it->second;
    double ready = 0.0;
    for (int p : parents[t]) ready = std::max(ready, finish(p));
    return memo[t] = ready + d.runtime[t] / mips;
  };
  double best = 0.0;
  for (int t = 0; t < d.n; ++t) best = std::max(best, finish(t));
  return best;
}

// Total work on one processor of `mips`.
inline double serialized_workload(const Dag& d, double mips) {
  double sum = 0.0;
  for (double r : d.runtime) sum += r;
  return sum / mips;
}

// Reference topological executor: repeatedly completes every task whose
// parents are all complete. Returns the rounds.
inline std::vector<std::set<int>> topological_rounds(const Dag& d) {
  std::map<int, std::set<int>> parents;
  for (auto [p, c] : d.edges) parents[c].insert(p);
  std::set<int> done;
  std::vector<std::set<int>> rounds;
  while (static_cast<int>(done.size()) < d.n) {
    std::set<int> round;
    for (int t = 0; t < d.n; ++t) {
      if (done.count(t)) continue;
      if (std::includes(done.begin(), done.end(), parents[t].begin(), parents[t].end())) round.insert(t);
    }
    if (round.empty()) break;
    done.insert(round.begin(), round.end());
    rounds.push_back(round);
  }
  return rounds;
}

inline bool close(double a, double b, double rel = 1e-9) {
  return std::fabs(a - b) <= rel * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace oracle
