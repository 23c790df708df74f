#pragma once

#include <algorithm>
#include <any>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "widesim/des.hpp"
#include "widesim/error.hpp"
#include "widesim/trace.hpp"

namespace widesim {

using DeviceId = int;

inline constexpr double kDefaultLinkBandwidth = 1024.0;  // MB/s

struct LinkSpec {
  DeviceId a = 0;
  DeviceId b = 0;
  double bandwidth_mbps = kDefaultLinkBandwidth;
  double latency_s = 0.0;
  friend bool operator==(const LinkSpec&, const LinkSpec&) = default;
};

struct RouteEntry {
  DeviceId source = 0;
  DeviceId destination = 0;
  DeviceId next_hop = 0;
  friend bool operator==(const RouteEntry&, const RouteEntry&) = default;
};

// Undirected device graph. Every link is full duplex.
class Topology {
 public:
  Topology() = default;

  Topology(std::vector<DeviceId> devices, std::vector<LinkSpec> links)
      : devices_(std::move(devices)), links_(std::move(links)) {
    std::sort(devices_.begin(), devices_.end());
    if (std::adjacent_find(devices_.begin(), devices_.end()) != devices_.end()) {
      throw Error(Errc::DuplicateId, "network", "duplicate device id");
    }
    for (std::size_t i = 0; i < links_.size(); ++i) {
      const auto& l = links_[i];
      if (!has_device(l.a) || !has_device(l.b)) {
        throw Error(Errc::DanglingReference, "network",
                    "link " + std::to_string(l.a) + "-" + std::to_string(l.b) + " names an unknown device");
      }
      if (l.a == l.b) throw Error(Errc::ValidationError, "network", "self-loop on device " + std::to_string(l.a));
      if (!(l.bandwidth_mbps > 0.0)) {
        throw Error(Errc::ValidationError, "network",
                    "link " + std::to_string(l.a) + "-" + std::to_string(l.b) + " needs bandwidth > 0");
      }
      if (!(l.latency_s >= 0.0)) {
        throw Error(Errc::ValidationError, "network",
                    "link " + std::to_string(l.a) + "-" + std::to_string(l.b) + " needs latency >= 0");
      }
      auto key = std::minmax(l.a, l.b);
      if (!index_.emplace(key, i).second) {
        throw Error(Errc::DuplicateId, "network",
                    "duplicate link " + std::to_string(l.a) + "-" + std::to_string(l.b));
      }
      adjacency_[l.a].insert(l.b);
      adjacency_[l.b].insert(l.a);
    }
  }

  const std::vector<DeviceId>& devices() const noexcept { return devices_; }
  const std::vector<LinkSpec>& links() const noexcept { return links_; }

  bool has_device(DeviceId d) const { return std::binary_search(devices_.begin(), devices_.end(), d); }

  // Sorted ascending.
  std::vector<DeviceId> neighbors(DeviceId d) const {
    auto it = adjacency_.find(d);
    if (it == adjacency_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  std::optional<std::size_t> link_index(DeviceId a, DeviceId b) const {
    auto it = index_.find(std::minmax(a, b));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const LinkSpec& link(DeviceId a, DeviceId b) const {
    auto idx = link_index(a, b);
    if (!idx) throw Error(Errc::NoRoute, "network", "no link " + std::to_string(a) + "-" + std::to_string(b));
    return links_[*idx];
  }

 private:
  std::vector<DeviceId> devices_;
  std::vector<LinkSpec> links_;
  std::map<std::pair<DeviceId, DeviceId>, std::size_t> index_;
  std::map<DeviceId, std::set<DeviceId>> adjacency_;
};

// (source, destination) -> next hop.
class RoutingTable {
 public:
  void set(DeviceId source, DeviceId destination, DeviceId next_hop) {
    next_[{source, destination}] = next_hop;
  }

  bool contains(DeviceId source, DeviceId destination) const { return next_.count({source, destination}) > 0; }

  DeviceId next_hop(DeviceId source, DeviceId destination) const {
    auto it = next_.find({source, destination});
    if (it == next_.end()) {
      throw Error(Errc::NoRoute, "network",
                  "no route " + std::to_string(source) + " -> " + std::to_string(destination));
    }
    return it->second;
  }

  // Devices visited after `source`, ending with `destination`.
  std::vector<DeviceId> path(DeviceId source, DeviceId destination) const {
    std::vector<DeviceId> hops;
    DeviceId at = source;
    while (at != destination) {
      at = next_hop(at, destination);
      if (std::find(hops.begin(), hops.end(), at) != hops.end() || at == source) {
        throw Error(Errc::ValidationError, "network",
                    "routing loop on " + std::to_string(source) + " -> " + std::to_string(destination));
      }
      hops.push_back(at);
    }
    return hops;
  }

  std::vector<RouteEntry> entries() const {
    std::vector<RouteEntry> out;
    out.reserve(next_.size());
    for (const auto& [key, hop] : next_) out.push_back({key.first, key.second, hop});
    return out;
  }

  std::size_t size() const noexcept { return next_.size(); }

 private:
  std::map<std::pair<DeviceId, DeviceId>, DeviceId> next_;
};

// All-pairs minimum-hop routes, ties broken by the smallest next-hop id.
// Overrides replace individual entries and are re-checked for soundness.
inline RoutingTable build_routing_tables(const Topology& topo, std::span<const RouteEntry> overrides = {}) {
  const auto& devices = topo.devices();
  RoutingTable table;
  std::map<DeviceId, std::vector<DeviceId>> neighbors;
  for (DeviceId d : devices) neighbors[d] = topo.neighbors(d);

  for (DeviceId dest : devices) {
    // Hop distance of every device to `dest`.
    std::map<DeviceId, int> dist;
    std::deque<DeviceId> frontier{dest};
    dist[dest] = 0;
    while (!frontier.empty()) {
      DeviceId u = frontier.front();
      frontier.pop_front();
      for (DeviceId v : neighbors[u]) {
        if (dist.emplace(v, dist[u] + 1).second) frontier.push_back(v);
      }
    }
    for (DeviceId src : devices) {
      if (src == dest) continue;
      auto it = dist.find(src);
      if (it == dist.end()) {
        throw Error(Errc::DisconnectedTopology, "network",
                    "device " + std::to_string(dest) + " unreachable from " + std::to_string(src));
      }
      for (DeviceId n : neighbors[src]) {  // ascending, so the first match is the smallest id
        auto nd = dist.find(n);
        if (nd != dist.end() && nd->second == it->second - 1) {
          table.set(src, dest, n);
          break;
        }
      }
    }
  }

  for (const auto& r : overrides) {
    if (!topo.has_device(r.source) || !topo.has_device(r.destination) || !topo.has_device(r.next_hop)) {
      throw Error(Errc::DanglingReference, "network", "route override names an unknown device");
    }
    if (!topo.link_index(r.source, r.next_hop)) {
      throw Error(Errc::ValidationError, "network",
                  "route override next hop " + std::to_string(r.next_hop) + " is not a neighbor of " +
                      std::to_string(r.source));
    }
    table.set(r.source, r.destination, r.next_hop);
  }
  if (!overrides.empty()) {
    for (DeviceId s : devices) {
      for (DeviceId d : devices) {
        if (s != d) table.path(s, d);
      }
    }
  }
  return table;
}

enum NetworkTag : EventTag {
  kNetInject = 100,
  kNetHopArrival,
  kNetServiceDone,
};

struct Packet {
  std::uint64_t id = 0;  // assigned by Network::send
  double size_mb = 0.0;
  DeviceId origin = 0;
  DeviceId final_destination = 0;
  EntityId deliver_to;
  EventTag deliver_tag = 0;
  std::string label;
  std::any payload;
};

// Payload of the event delivered to Packet::deliver_to.
struct Delivery {
  Packet packet;
  SimTime sent_at = 0.0;
};

struct HopRecord {
  std::uint64_t packet = 0;
  DeviceId from = 0;
  DeviceId to = 0;
  SimTime enqueued = 0.0;
  SimTime service_start = 0.0;
  SimTime service_end = 0.0;
  SimTime arrival = 0.0;
};

struct LinkDirectionStats {
  DeviceId from = 0;
  DeviceId to = 0;
  double busy_time = 0.0;
  std::size_t packets = 0;
};

// Store-and-forward packet network. Each link direction serves one packet
// at a time; waiting packets form an FCFS queue.
class Network : public Entity {
 public:
  Network(Topology topology, RoutingTable routes, TraceSink* trace = nullptr)
      : topology_(std::move(topology)), routes_(std::move(routes)), trace_(trace) {
    for (const auto& l : topology_.links()) {
      for (auto [from, to] : {std::pair{l.a, l.b}, std::pair{l.b, l.a}}) {
        direction_index_[{from, to}] = directions_.size();
        Direction dir;
        dir.from = from;
        dir.to = to;
        dir.bandwidth = l.bandwidth_mbps;
        dir.latency = l.latency_s;
        directions_.push_back(std::move(dir));
      }
    }
  }

  EntityId attach(Simulation& sim) {
    id_ = sim.register_entity(*this);
    return id_;
  }
  EntityId id() const noexcept { return id_; }

  std::string_view name() const override { return "network"; }

  // Injects `packet` at its origin at time `at`. Returns the packet id.
  std::uint64_t send(Simulation& sim, Packet packet, SimTime at) {
    if (!topology_.has_device(packet.origin) || !topology_.has_device(packet.final_destination)) {
      throw Error(Errc::NoRoute, "network",
                  "unknown endpoint in " + std::to_string(packet.origin) + " -> " +
                      std::to_string(packet.final_destination));
    }
    if (packet.origin != packet.final_destination && !routes_.contains(packet.origin, packet.final_destination)) {
      throw Error(Errc::NoRoute, "network",
                  "no route " + std::to_string(packet.origin) + " -> " + std::to_string(packet.final_destination));
    }
    if (!(packet.size_mb >= 0.0)) throw Error(Errc::ValidationError, "network", "packet size must be >= 0");
    packet.id = next_packet_++;
    const std::uint64_t pid = packet.id;
    in_flight_.emplace(pid, InFlight{std::move(packet), at});
    sim.schedule(at, id_, id_, kNetInject, pid);
    return pid;
  }

  void process(Simulation& sim, const SimEvent& ev) override {
    switch (ev.tag) {
      case kNetInject: {
        auto pid = std::any_cast<std::uint64_t>(ev.payload);
        arrive(sim, pid, in_flight_.at(pid).packet.origin);
        break;
      }
      case kNetHopArrival: {
        auto [pid, device] = std::any_cast<std::pair<std::uint64_t, DeviceId>>(ev.payload);
        hops_[open_hop_.at(pid)].arrival = sim.now();
        open_hop_.erase(pid);
        arrive(sim, pid, device);
        break;
      }
      case kNetServiceDone: {
        auto di = std::any_cast<std::size_t>(ev.payload);
        auto& dir = directions_[di];
        dir.busy = false;
        if (trace_) {
          trace_->emit(sim.now(), "network", "link_tx_end", link_name(dir), Detail().add("pkt", dir.serving).str());
        }
        if (!dir.queue.empty()) start_service(sim, di);
        break;
      }
      default:
        break;
    }
  }

  // Routed transfer time on idle links (no queueing).
  SimTime estimate_transfer(DeviceId from, DeviceId to, double size_mb) const {
    SimTime total = 0.0;
    DeviceId at = from;
    for (DeviceId next : routes_.path(from, to)) {
      const auto& dir = directions_[direction_index_.at({at, next})];
      total += size_mb / dir.bandwidth + dir.latency;
      at = next;
    }
    return total;
  }

  const Topology& topology() const noexcept { return topology_; }
  const RoutingTable& routes() const noexcept { return routes_; }
  const std::vector<HopRecord>& hops() const noexcept { return hops_; }

  std::vector<LinkDirectionStats> link_stats() const {
    std::vector<LinkDirectionStats> out;
    for (const auto& d : directions_) out.push_back({d.from, d.to, d.busy_time, d.packets});
    return out;
  }

  bool idle() const {
    return std::all_of(directions_.begin(), directions_.end(),
                       [](const Direction& d) { return !d.busy && d.queue.empty(); });
  }

 private:
  struct Direction {
    DeviceId from = 0;
    DeviceId to = 0;
    double bandwidth = 1.0;
    double latency = 0.0;
    bool busy = false;
    std::uint64_t serving = 0;
    std::deque<std::pair<std::uint64_t, std::size_t>> queue;  // (packet, hop record)
    double busy_time = 0.0;
    std::size_t packets = 0;
  };

  struct InFlight {
    Packet packet;
    SimTime sent_at;
  };

  static std::string link_name(const Direction& d) { return std::to_string(d.from) + "->" + std::to_string(d.to); }

  void arrive(Simulation& sim, std::uint64_t pid, DeviceId device) {
    auto& flight = in_flight_.at(pid);
    if (device == flight.packet.final_destination) {
      if (trace_) {
        trace_->emit(sim.now(), "network", "deliver", std::to_string(pid),
                     Detail()
                         .add("from", flight.packet.origin)
                         .add("to", flight.packet.final_destination)
                         .add("size", flight.packet.size_mb)
                         .add("label", flight.packet.label)
                         .str());
      }
      Delivery delivery{std::move(flight.packet), flight.sent_at};
      in_flight_.erase(pid);
      const EntityId to = delivery.packet.deliver_to;
      const EventTag tag = delivery.packet.deliver_tag;
      sim.schedule(sim.now(), id_, to, tag, std::move(delivery));
      return;
    }
    DeviceId next = routes_.next_hop(device, flight.packet.final_destination);
    std::size_t di = direction_index_.at({device, next});
    hops_.push_back({pid, device, next, sim.now(), 0.0, 0.0, 0.0});
    directions_[di].queue.emplace_back(pid, hops_.size() - 1);
    if (!directions_[di].busy) start_service(sim, di);
  }

  void start_service(Simulation& sim, std::size_t di) {
    auto& dir = directions_[di];
    auto [pid, hop] = dir.queue.front();
    dir.queue.pop_front();
    const double size = in_flight_.at(pid).packet.size_mb;
    const SimTime serialization = size / dir.bandwidth;
    dir.busy = true;
    dir.serving = pid;
    dir.busy_time += serialization;
    ++dir.packets;
    hops_[hop].service_start = sim.now();
    hops_[hop].service_end = sim.now() + serialization;
    open_hop_[pid] = hop;
    if (trace_) {
      trace_->emit(sim.now(), "network", "link_tx_start", link_name(dir),
                   Detail().add("pkt", pid).add("size", size).str());
    }
    sim.schedule(sim.now() + serialization, id_, id_, kNetServiceDone, di);
    sim.schedule(sim.now() + serialization + dir.latency, id_, id_, kNetHopArrival, std::pair{pid, dir.to});
  }

  Topology topology_;
  RoutingTable routes_;
  TraceSink* trace_;
  EntityId id_;
  std::vector<Direction> directions_;
  std::map<std::pair<DeviceId, DeviceId>, std::size_t> direction_index_;
  std::unordered_map<std::uint64_t, InFlight> in_flight_;
  std::unordered_map<std::uint64_t, std::size_t> open_hop_;
  std::vector<HopRecord> hops_;
  std::uint64_t next_packet_ = 0;
};

}  // namespace widesim
