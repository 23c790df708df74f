#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "widesim/network.hpp"

using namespace widesim;

namespace {

Topology path_topology(int n, double bw = 1000.0, double lat = 0.0) {
  std::vector<DeviceId> devices;
  std::vector<LinkSpec> links;
  for (int i = 0; i < n; ++i) {
    devices.push_back(i);
    if (i > 0) links.push_back({i - 1, i, bw, lat});
  }
  return Topology(devices, links);
}

Topology from_graph(const oracle::Graph& g) {
  std::vector<DeviceId> devices;
  std::vector<LinkSpec> links;
  for (auto& [a, ns] : g) {
    devices.push_back(a);
    for (int b : ns) {
      if (a < b) links.push_back({a, b, 1000.0, 0.0});
    }
  }
  return Topology(devices, links);
}

struct Harness {
  Simulation sim;
  Network net;
  std::map<std::uint64_t, SimTime> delivered;
  std::vector<std::uint64_t> order;
  LambdaEntity sink{"sink", [this](Simulation& s, const SimEvent& ev) {
                      const auto& d = std::any_cast<const Delivery&>(ev.payload);
                      delivered[d.packet.id] = s.now();
                      order.push_back(d.packet.id);
                    }};
  EntityId sink_id;

  explicit Harness(Topology topo) : net(topo, build_routing_tables(topo)) {
    net.attach(sim);
    sink_id = sim.register_entity(sink);
  }

  std::uint64_t send(DeviceId from, DeviceId to, double mb, SimTime at) {
    Packet p;
    p.size_mb = mb;
    p.origin = from;
    p.final_destination = to;
    p.deliver_to = sink_id;
    return net.send(sim, std::move(p), at);
  }
};

}  // namespace

TEST(Routing, ChainEndToEnd) {
  auto topo = path_topology(8);
  auto rt = build_routing_tables(topo);
  EXPECT_EQ(rt.next_hop(0, 7), 1);
  EXPECT_EQ(rt.path(0, 7), (std::vector<DeviceId>{1, 2, 3, 4, 5, 6, 7}));
  EXPECT_EQ(rt.next_hop(7, 0), 6);
  EXPECT_EQ(rt.size(), 8u * 7u);
}

TEST(Routing, TwoNodes) {
  Topology topo({0, 1}, {{0, 1, 1000.0, 0.0}});
  auto rt = build_routing_tables(topo);
  EXPECT_EQ(rt.next_hop(0, 1), 1);
  EXPECT_EQ(rt.next_hop(1, 0), 0);
}

TEST(Routing, FourCycleTieGoesToSmallestNeighbor) {
  // a=0, b=1, c=2, d=3 in the cycle a-b-c-d-a.
  Topology topo({0, 1, 2, 3}, {{0, 1, 1000, 0}, {1, 2, 1000, 0}, {2, 3, 1000, 0}, {3, 0, 1000, 0}});
  auto rt = build_routing_tables(topo);
  EXPECT_EQ(rt.next_hop(0, 2), 1);
  EXPECT_EQ(rt.next_hop(1, 3), 0);
}

TEST(Routing, DisconnectedGraphFails) {
  Topology topo({0, 1, 2}, {{0, 1, 1000, 0}});
  try {
    build_routing_tables(topo);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DisconnectedTopology);
  }
}

TEST(Routing, OverrideReplacesEntry) {
  Topology topo({0, 1, 2, 3}, {{0, 1, 1000, 0}, {1, 2, 1000, 0}, {2, 3, 1000, 0}, {3, 0, 1000, 0}});
  std::vector<RouteEntry> ov{{0, 2, 3}};
  auto rt = build_routing_tables(topo, ov);
  EXPECT_EQ(rt.path(0, 2), (std::vector<DeviceId>{3, 2}));
}

TEST(Routing, OverrideToNonNeighborFails) {
  auto topo = path_topology(4);
  std::vector<RouteEntry> ov{{0, 3, 2}};
  EXPECT_THROW(build_routing_tables(topo, ov), Error);
}

TEST(Routing, OverrideLoopFails) {
  auto topo = path_topology(3);
  std::vector<RouteEntry> ov{{1, 2, 0}};
  try {
    build_routing_tables(topo, ov);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ValidationError);
  }
}

TEST(Topology, RejectsSelfLoopAndDuplicates) {
  EXPECT_THROW(Topology({0}, {{0, 0, 1000, 0}}), Error);
  EXPECT_THROW(Topology({0, 1}, {{0, 1, 1000, 0}, {1, 0, 1000, 0}}), Error);
  EXPECT_THROW(Topology({0, 0}, {}), Error);
  EXPECT_THROW(Topology({0, 1}, {{0, 1, 0.0, 0}}), Error);
  EXPECT_THROW(Topology({0, 1}, {{0, 5, 1000, 0}}), Error);
}

TEST(Delivery, SingleHopTiming) {
  Harness h(Topology({0, 1}, {{0, 1, 1000.0, 0.0}}));
  auto p = h.send(0, 1, 100.0, 0.0);
  h.sim.run();
  EXPECT_DOUBLE_EQ(h.delivered.at(p), 0.1);
}

TEST(Delivery, SimultaneousPacketsQueue) {
  Harness h(Topology({0, 1}, {{0, 1, 1000.0, 0.0}}));
  auto p1 = h.send(0, 1, 100.0, 0.0);
  auto p2 = h.send(0, 1, 100.0, 0.0);
  h.sim.run();
  EXPECT_DOUBLE_EQ(h.delivered.at(p1), 0.1);
  EXPECT_DOUBLE_EQ(h.delivered.at(p2), 0.2);
}

TEST(Delivery, TwoHopsWithLatency) {
  Harness h(path_topology(3, 1000.0, 0.05));
  auto p = h.send(0, 2, 100.0, 0.0);
  h.sim.run();
  EXPECT_NEAR(h.delivered.at(p), 0.3, 1e-12);
}

TEST(Delivery, OppositeDirectionsDoNotQueue) {
  Harness h(Topology({0, 1}, {{0, 1, 1000.0, 0.0}}));
  auto p1 = h.send(0, 1, 100.0, 0.0);
  auto p2 = h.send(1, 0, 100.0, 0.0);
  h.sim.run();
  EXPECT_DOUBLE_EQ(h.delivered.at(p1), 0.1);
  EXPECT_DOUBLE_EQ(h.delivered.at(p2), 0.1);
}

TEST(Delivery, SameDeviceIsImmediateAndOrdered) {
  Harness h(Topology({0, 1}, {{0, 1, 1000.0, 0.0}}));
  auto a = h.send(0, 0, 1000.0, 2.0);
  auto b = h.send(0, 0, 0.0, 2.0);
  h.sim.run();
  EXPECT_EQ(h.delivered.at(a), 2.0);
  EXPECT_EQ(h.delivered.at(b), 2.0);
  EXPECT_EQ(h.order, (std::vector<std::uint64_t>{a, b}));
}

TEST(Delivery, UnknownEndpointFails) {
  Harness h(Topology({0, 1}, {{0, 1, 1000.0, 0.0}}));
  EXPECT_THROW(h.send(0, 9, 1.0, 0.0), Error);
}

TEST(Delivery, EstimateMatchesIdleTransfer) {
  Harness h(path_topology(5, 250.0, 0.01));
  auto p = h.send(4, 0, 40.0, 1.0);
  h.sim.run();
  EXPECT_NEAR(h.delivered.at(p) - 1.0, h.net.estimate_transfer(4, 0, 40.0), 1e-12);
  EXPECT_TRUE(h.net.idle());
}

TEST(RoutingProperties, MinimumHopsOnRandomGraphs) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    int n = std::uniform_int_distribution<int>(2, 12)(rng);
    auto g = oracle::random_connected_graph(rng, n, 0.2);
    auto rt = build_routing_tables(from_graph(g));
    auto dist = oracle::floyd_warshall(g);
    auto expect = oracle::expected_next_hops(g);
    for (auto& [key, hop] : expect) {
      auto [s, t] = key;
      EXPECT_EQ(rt.next_hop(s, t), hop);
      auto path = rt.path(s, t);
      EXPECT_EQ(static_cast<int>(path.size()), dist.at(key));
      int at = s;
      for (int step : path) {
        EXPECT_TRUE(g.at(at).count(step)) << at << "->" << step;
        at = step;
      }
    }
  }
}

TEST(RoutingProperties, TieBreakMatchesBruteForce) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    int n = std::uniform_int_distribution<int>(2, 8)(rng);
    auto g = oracle::random_connected_graph(rng, n, 0.35);
    auto rt = build_routing_tables(from_graph(g));
    for (int s = 0; s < n; ++s) {
      for (int t = 0; t < n; ++t) {
        if (s == t) continue;
        auto paths = oracle::all_simple_paths(g, s, t);
        std::size_t best = SIZE_MAX;
        for (auto& p : paths) best = std::min(best, p.size());
        int smallest = INT_MAX;
        for (auto& p : paths) {
          if (p.size() == best) smallest = std::min(smallest, p[1]);
        }
        EXPECT_EQ(rt.next_hop(s, t), smallest);
      }
    }
  }
}

TEST(NetworkProperties, SingleLinkFcfs) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    double bw = std::uniform_real_distribution<double>(10, 2000)(rng);
    double lat = std::uniform_real_distribution<double>(0, 0.2)(rng);
    Harness h(Topology({0, 1}, {{0, 1, bw, lat}}));
    std::vector<oracle::LinkJob> jobs;
    std::vector<std::uint64_t> ids;
    int k = std::uniform_int_distribution<int>(1, 12)(rng);
    for (int i = 0; i < k; ++i) {
      double at = std::floor(std::uniform_real_distribution<double>(0, 4)(rng) * 4) / 4;
      double mb = std::uniform_real_distribution<double>(0, 500)(rng);
      jobs.push_back({at, mb});
      ids.push_back(h.send(0, 1, mb, at));
    }
    h.sim.run();
    auto expect = oracle::fcfs_link(jobs, bw, lat);
    for (int i = 0; i < k; ++i) {
      EXPECT_NEAR(h.delivered.at(ids[i]), expect[i].delivered, 1e-9);
    }
    double busy = 0.0;
    for (auto& j : jobs) busy += j.size / bw;
    EXPECT_NEAR(h.net.link_stats()[0].busy_time, busy, 1e-9);
    EXPECT_EQ(h.net.link_stats()[0].packets, static_cast<std::size_t>(k));
  }
}

TEST(NetworkProperties, MatchesFloodingOnPathFromOneEnd) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 40; ++trial) {
    int n = std::uniform_int_distribution<int>(2, 7)(rng);
    double bw = std::uniform_real_distribution<double>(50, 1000)(rng);
    double lat = std::uniform_real_distribution<double>(0, 0.05)(rng);
    Harness h(path_topology(n, bw, lat));
    std::vector<oracle::FloodPacket> packets;
    std::vector<std::uint64_t> ids;
    int k = std::uniform_int_distribution<int>(1, 8)(rng);
    for (int i = 0; i < k; ++i) {
      double at = std::floor(std::uniform_real_distribution<double>(0, 2)(rng) * 2) / 2;
      int dest = std::uniform_int_distribution<int>(1, n - 1)(rng);
      double mb = std::uniform_real_distribution<double>(1, 100)(rng);
      packets.push_back({at, 0, dest, mb});
      ids.push_back(h.send(0, dest, mb, at));
    }
    h.sim.run();
    auto expect = oracle::flood_on_path(packets, n, bw, lat);
    for (int i = 0; i < k; ++i) EXPECT_NEAR(h.delivered.at(ids[i]), expect[i], 1e-9);
  }
}

TEST(NetworkProperties, HopRecordsAreCausal) {
  std::mt19937_64 rng(3);
  Harness h(path_topology(6, 300.0, 0.02));
  for (int i = 0; i < 30; ++i) {
    int a = std::uniform_int_distribution<int>(0, 5)(rng);
    int b = std::uniform_int_distribution<int>(0, 5)(rng);
    h.send(a, b, std::uniform_real_distribution<double>(0, 50)(rng), i * 0.05);
  }
  h.sim.run();
  EXPECT_EQ(h.delivered.size(), 30u);
  std::map<std::pair<DeviceId, DeviceId>, std::vector<const HopRecord*>> per_direction;
  for (const auto& r : h.net.hops()) {
    EXPECT_LE(r.enqueued, r.service_start);
    EXPECT_LE(r.service_start, r.service_end);
    EXPECT_NEAR(r.arrival, r.service_end + 0.02, 1e-12);
    per_direction[{r.from, r.to}].push_back(&r);
  }
  for (auto& [_, recs] : per_direction) {
    std::sort(recs.begin(), recs.end(), [](auto* x, auto* y) { return x->service_start < y->service_start; });
    for (std::size_t i = 1; i < recs.size(); ++i) EXPECT_LE(recs[i - 1]->service_end, recs[i]->service_start + 1e-12);
  }
  EXPECT_TRUE(h.net.idle());
}
