#pragma once

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "widesim/compute.hpp"
#include "widesim/error.hpp"
#include "widesim/network.hpp"
#include "widesim/orchestration.hpp"
#include "widesim/policy.hpp"
#include "widesim/report.hpp"
#include "widesim/workflow.hpp"

namespace widesim {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

template <class T>
struct Parsed {
  T value;
  std::vector<std::string> warnings;
};

struct PolicySpec {
  std::string name;
  json params = json::object();
  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::optional<SimTime> horizon;
  DeadlinePolicy deadline_policy = DeadlinePolicy::Continue;
  PolicySpec scheduler{"round_robin"};
  PolicySpec provisioner{"static"};
  double control_message_mb = 0.0;
  double vm_boot_delay_s = 0.0;
  bool strict_parsing = true;
  std::optional<DeviceId> broker_device;
  std::optional<DeviceId> data_origin_device;
  std::optional<double> schedule_interval_s;
  OrphanPolicy orphan_inputs = OrphanPolicy::Warn;
  std::string vm_allocation_policy = "simple";

  SimulationOptions options() const {
    SimulationOptions o;
    o.seed = seed;
    o.horizon = horizon;
    o.deadline_policy = deadline_policy;
    o.control_message_mb = control_message_mb;
    o.vm_boot_delay_s = vm_boot_delay_s;
    o.broker_device = broker_device;
    o.data_origin_device = data_origin_device;
    o.schedule_interval_s = schedule_interval_s;
    return o;
  }
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

[[noreturn]] inline void schema_error(const std::string& path, const std::string& what) {
  throw Error(Errc::SchemaError, "io", path + ": " + what);
}

inline json parse_json_text(std::string_view text, std::string_view document) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw Error(Errc::SchemaError, "io", std::string(document) + ": malformed JSON: " + e.what());
  }
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a number");
  double v = j.get<double>();
  if (!std::isfinite(v)) schema_error(path, "expected a finite number");
  return v;
}

inline long long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema_error(path, "expected an integer");
  return j.get<long long>();
}

inline int as_int(const json& j, const std::string& path) {
  long long v = as_integer(j, path);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) schema_error(path, "integer out of range");
  return static_cast<int>(v);
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) schema_error(path, "expected a string");
  return j.get<std::string>();
}

inline const json& as_array(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array");
  return j;
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) schema_error(path, "expected a boolean");
  return j.get<bool>();
}

inline std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Field access on one JSON object. Fields never read are reported by finish().
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path, bool strict, std::vector<std::string>& warnings)
      : j_(&j), path_(std::move(path)), strict_(strict), warnings_(&warnings) {
    if (!j.is_object()) schema_error(path_, "expected an object");
  }

  const std::string& path() const noexcept { return path_; }
  std::string at(std::string_view key) const { return path_ + "." + std::string(key); }

  const json* get(std::string_view key) {
    used_.insert(std::string(key));
    auto it = j_->find(key);
    return it == j_->end() ? nullptr : &*it;
  }
  const json& require(std::string_view key) {
    const json* v = get(key);
    if (!v) schema_error(at(key), "missing required field");
    return *v;
  }

  double number(std::string_view key) { return as_number(require(key), at(key)); }
  std::optional<double> opt_number(std::string_view key) {
    const json* v = get(key);
    return v ? std::optional<double>(as_number(*v, at(key))) : std::nullopt;
  }
  int integer(std::string_view key) { return as_int(require(key), at(key)); }
  std::optional<int> opt_integer(std::string_view key) {
    const json* v = get(key);
    return v ? std::optional<int>(as_int(*v, at(key))) : std::nullopt;
  }
  std::string string(std::string_view key) { return as_string(require(key), at(key)); }

  double non_negative(std::string_view key, std::optional<double> fallback = std::nullopt) {
    auto v = fallback ? std::optional<double>(opt_number(key).value_or(*fallback)) : std::optional<double>(number(key));
    if (!(*v >= 0.0)) schema_error(at(key), "must be >= 0");
    return *v;
  }
  double positive(std::string_view key) {
    double v = number(key);
    if (!(v > 0.0)) schema_error(at(key), "must be > 0");
    return v;
  }

  void finish() {
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (used_.count(it.key())) continue;
      if (strict_) schema_error(at(it.key()), "unknown field");
      warnings_->push_back(at(it.key()) + ": unknown field ignored");
    }
  }

 private:
  const json* j_;
  std::string path_;
  bool strict_;
  std::vector<std::string>* warnings_;
  std::set<std::string> used_;
};

inline std::vector<DataFile> parse_files(const json& j, const std::string& path, bool strict,
                                         std::vector<std::string>& warnings) {
  std::vector<DataFile> out;
  as_array(j, path);
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], index_path(path, i), strict, warnings);
    DataFile f;
    f.name = r.string("name");
    f.size = r.non_negative("size");
    r.finish();
    out.push_back(std::move(f));
  }
  return out;
}

inline Selectivity parse_selectivity(const json& j, const std::string& path, bool strict,
                                     std::vector<std::string>& warnings) {
  if (j.is_string()) {
    if (j.get<std::string>() != "all") schema_error(path, "expected \"all\" or {\"fractional\": p}");
    return {};
  }
  ObjectReader r(j, path, strict, warnings);
  Selectivity s{Selectivity::Kind::Fractional, r.number("fractional")};
  if (!(s.probability >= 0.0 && s.probability <= 1.0)) schema_error(r.at("fractional"), "must lie in [0, 1]");
  r.finish();
  return s;
}

inline ExecutionModel parse_execution(const json& j, const std::string& path, bool strict,
                                      std::vector<std::string>& warnings) {
  if (j.is_string()) {
    if (j.get<std::string>() != "single-shot") schema_error(path, "expected \"single-shot\" or {\"periodic\": {...}}");
    return {};
  }
  ObjectReader outer(j, path, strict, warnings);
  ObjectReader r(outer.require("periodic"), outer.at("periodic"), strict, warnings);
  ExecutionModel m;
  m.kind = ExecutionModel::Kind::Periodic;
  m.interval = r.positive("interval");
  m.repetitions = r.opt_integer("repetitions");
  if (m.repetitions && *m.repetitions < 0) schema_error(r.at("repetitions"), "must be >= 0");
  r.finish();
  outer.finish();
  return m;
}

inline Task parse_task(const json& j, const std::string& path, bool strict, std::vector<std::string>& warnings) {
  ObjectReader r(j, path, strict, warnings);
  Task t;
  t.id = r.integer("id");
  t.runtime = r.positive("runtime");
  t.inputs = parse_files(r.require("input_files"), r.at("input_files"), strict, warnings);
  t.outputs = parse_files(r.require("output_files"), r.at("output_files"), strict, warnings);
  if (auto pes = r.opt_integer("pes")) {
    if (*pes < 1) schema_error(r.at("pes"), "must be >= 1");
    t.pes = *pes;
  }
  if (const json* parents = r.get("parents")) {
    as_array(*parents, r.at("parents"));
    std::vector<int> ps;
    for (std::size_t i = 0; i < parents->size(); ++i) ps.push_back(as_int((*parents)[i], index_path(r.at("parents"), i)));
    t.declared_parents = std::move(ps);
  }
  t.entry_time = r.non_negative("entry_time", 0.0);
  if (r.get("deadline")) t.deadline = r.non_negative("deadline");
  if (const json* s = r.get("selectivity")) t.selectivity = parse_selectivity(*s, r.at("selectivity"), strict, warnings);
  if (const json* e = r.get("execution")) t.execution = parse_execution(*e, r.at("execution"), strict, warnings);
  r.finish();
  return t;
}

inline std::vector<std::string> parse_string_list(const json& j, const std::string& path) {
  as_array(j, path);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], index_path(path, i)));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Workflows.json

inline Parsed<Application> parse_workflows(std::string_view text, bool strict = true,
                                           OrphanPolicy orphans = OrphanPolicy::Warn) {
  Parsed<Application> out;
  auto& warnings = out.warnings;
  json doc = detail::parse_json_text(text, "Workflows.json");
  detail::ObjectReader root(doc, "$", strict, warnings);
  const json& wfs = detail::as_array(root.require("workflows"), root.at("workflows"));
  for (std::size_t i = 0; i < wfs.size(); ++i) {
    detail::ObjectReader r(wfs[i], detail::index_path(root.at("workflows"), i), strict, warnings);
    Workflow wf;
    wf.workflow_id = r.string("workflow_id");
    if (r.get("deadline")) wf.deadline = r.non_negative("deadline");
    if (r.get("budget")) wf.budget = r.non_negative("budget");
    const json& tasks = detail::as_array(r.require("tasks"), r.at("tasks"));
    for (std::size_t k = 0; k < tasks.size(); ++k) {
      wf.tasks.push_back(detail::parse_task(tasks[k], detail::index_path(r.at("tasks"), k), strict, warnings));
    }
    r.finish();
    out.value.workflows.push_back(std::move(wf));
  }
  if (const json* ens = root.get("ensembles")) {
    detail::as_array(*ens, root.at("ensembles"));
    for (std::size_t i = 0; i < ens->size(); ++i) {
      detail::ObjectReader r((*ens)[i], detail::index_path(root.at("ensembles"), i), strict, warnings);
      Ensemble e;
      e.ensemble_id = r.string("ensemble_id");
      e.workflow_ids = detail::parse_string_list(r.require("workflow_ids"), r.at("workflow_ids"));
      if (r.get("deadline")) e.deadline = r.non_negative("deadline");
      if (r.get("budget")) e.budget = r.non_negative("budget");
      r.finish();
      out.value.ensembles.push_back(std::move(e));
    }
  }
  root.finish();
  auto more = link_and_validate(out.value, orphans);
  warnings.insert(warnings.end(), more.begin(), more.end());
  return out;
}

inline ordered_json workflows_to_json(const Application& app) {
  ordered_json root;
  ordered_json wfs = ordered_json::array();
  auto files = [](const std::vector<DataFile>& fs) {
    ordered_json a = ordered_json::array();
    for (const auto& f : fs) a.push_back({{"name", f.name}, {"size", f.size}});
    return a;
  };
  for (const auto& wf : app.workflows) {
    ordered_json w;
    w["workflow_id"] = wf.workflow_id;
    if (wf.deadline) w["deadline"] = *wf.deadline;
    if (wf.budget) w["budget"] = *wf.budget;
    ordered_json tasks = ordered_json::array();
    for (const auto& t : wf.tasks) {
      ordered_json o;
      o["id"] = t.id;
      o["runtime"] = t.runtime;
      o["input_files"] = files(t.inputs);
      o["output_files"] = files(t.outputs);
      if (t.pes != 1) o["pes"] = t.pes;
      if (t.declared_parents) o["parents"] = *t.declared_parents;
      if (t.entry_time != 0.0) o["entry_time"] = t.entry_time;
      if (t.deadline) o["deadline"] = *t.deadline;
      if (t.selectivity.kind == Selectivity::Kind::Fractional) {
        o["selectivity"] = {{"fractional", t.selectivity.probability}};
      }
      if (t.execution.kind == ExecutionModel::Kind::Periodic) {
        ordered_json p;
        p["interval"] = t.execution.interval;
        if (t.execution.repetitions) p["repetitions"] = *t.execution.repetitions;
        o["execution"] = {{"periodic", p}};
      }
      tasks.push_back(std::move(o));
    }
    w["tasks"] = std::move(tasks);
    wfs.push_back(std::move(w));
  }
  root["workflows"] = std::move(wfs);
  if (!app.ensembles.empty()) {
    ordered_json ens = ordered_json::array();
    for (const auto& e : app.ensembles) {
      ordered_json o;
      o["ensemble_id"] = e.ensemble_id;
      o["workflow_ids"] = e.workflow_ids;
      if (e.deadline) o["deadline"] = *e.deadline;
      if (e.budget) o["budget"] = *e.budget;
      ens.push_back(std::move(o));
    }
    root["ensembles"] = std::move(ens);
  }
  return root;
}

inline std::string serialize_workflows(const Application& app) { return workflows_to_json(app).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Topology.json

namespace detail {

inline SchedulerKind parse_scheduler_kind(const json& j, const std::string& path) {
  std::string s = as_string(j, path);
  if (s == "time-shared" || s == scheduler_class_name(SchedulerKind::TimeShared)) return SchedulerKind::TimeShared;
  if (s == "space-shared" || s == scheduler_class_name(SchedulerKind::SpaceShared)) return SchedulerKind::SpaceShared;
  schema_error(path, "unknown cloudlet scheduler \"" + s + "\"");
}

inline VmSpec parse_vm(const json& j, const std::string& path, bool strict, std::vector<std::string>& warnings) {
  ObjectReader r(j, path, strict, warnings);
  VmSpec vm;
  vm.id = r.integer("id");
  vm.mips = r.positive("mips");
  vm.pes = r.integer("pes");
  if (vm.pes < 1) schema_error(r.at("pes"), "must be >= 1");
  vm.ram = r.non_negative("ram");
  vm.bw = r.non_negative("bw");
  vm.size = r.non_negative("size");
  vm.device = r.opt_integer("device_id");
  vm.host = r.opt_integer("host_id");
  if (const json* s = r.get("cloudlet_scheduler")) vm.scheduler = parse_scheduler_kind(*s, r.at("cloudlet_scheduler"));
  r.finish();
  return vm;
}

inline ordered_json vm_to_json(const VmSpec& vm) {
  ordered_json o;
  o["id"] = vm.id;
  o["mips"] = vm.mips;
  o["pes"] = vm.pes;
  o["ram"] = vm.ram;
  o["bw"] = vm.bw;
  o["size"] = vm.size;
  if (vm.device) o["device_id"] = *vm.device;
  if (vm.host) o["host_id"] = *vm.host;
  o["cloudlet_scheduler"] = scheduler_kind_name(vm.scheduler);
  return o;
}

struct NeighborListing {
  std::optional<double> bandwidth;
  std::optional<double> latency;
  std::string path;
};

}  // namespace detail

inline Parsed<Infrastructure> parse_topology(std::string_view text, bool strict = true) {
  Parsed<Infrastructure> out;
  auto& warnings = out.warnings;
  auto& infra = out.value;
  json doc = detail::parse_json_text(text, "Topology.json");
  detail::ObjectReader root(doc, "$", strict, warnings);

  const json& devs = detail::as_array(root.require("fog_devices"), root.at("fog_devices"));
  std::set<DeviceId> ids;
  for (std::size_t i = 0; i < devs.size(); ++i) {
    const json& d = devs[i];
    if (!d.is_object() || !d.contains("id")) continue;
    DeviceId id = detail::as_int(d["id"], detail::index_path(root.at("fog_devices"), i) + ".id");
    if (!ids.insert(id).second) throw Error(Errc::DuplicateId, "io", "duplicate fog device id " + std::to_string(id));
  }

  // Each listing a->b, in document order.
  std::vector<std::pair<std::pair<DeviceId, DeviceId>, detail::NeighborListing>> listings;
  std::map<std::pair<DeviceId, DeviceId>, std::size_t> listing_index;
  for (std::size_t i = 0; i < devs.size(); ++i) {
    detail::ObjectReader r(devs[i], detail::index_path(root.at("fog_devices"), i), strict, warnings);
    DeviceSpec dev;
    dev.id = r.integer("id");
    const json& nbrs = detail::as_array(r.require("neighbors"), r.at("neighbors"));
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      std::string npath = detail::index_path(r.at("neighbors"), k);
      detail::NeighborListing listing{std::nullopt, std::nullopt, npath};
      DeviceId other;
      if (nbrs[k].is_number_integer()) {
        other = detail::as_int(nbrs[k], npath);
      } else {
        detail::ObjectReader n(nbrs[k], npath, strict, warnings);
        other = n.integer("id");
        listing.bandwidth = n.opt_number("bandwidth_mbps");
        if (listing.bandwidth && !(*listing.bandwidth > 0.0)) detail::schema_error(n.at("bandwidth_mbps"), "must be > 0");
        listing.latency = n.opt_number("latency_s");
        if (listing.latency && !(*listing.latency >= 0.0)) detail::schema_error(n.at("latency_s"), "must be >= 0");
        n.finish();
      }
      if (!ids.count(other)) detail::schema_error(npath, "unknown neighbor id " + std::to_string(other));
      if (other == dev.id) detail::schema_error(npath, "device lists itself as a neighbor");
      if (!listing_index.emplace(std::pair{dev.id, other}, listings.size()).second) {
        throw Error(Errc::DuplicateId, "io", npath + ": neighbor " + std::to_string(other) + " listed twice");
      }
      listings.push_back({{dev.id, other}, listing});
    }
    const json& hosts = detail::as_array(r.require("hosts"), r.at("hosts"));
    std::set<HostId> host_ids;
    for (std::size_t k = 0; k < hosts.size(); ++k) {
      detail::ObjectReader h(hosts[k], detail::index_path(r.at("hosts"), k), strict, warnings);
      HostSpec host;
      host.id = h.integer("id");
      if (!host_ids.insert(host.id).second) {
        throw Error(Errc::DuplicateId, "io", h.path() + ": duplicate host id " + std::to_string(host.id));
      }
      host.ram = h.non_negative("ram");
      host.bw = h.non_negative("bw");
      host.storage = h.non_negative("storage");
      const json& pes = detail::as_array(h.require("pes"), h.at("pes"));
      for (std::size_t p = 0; p < pes.size(); ++p) {
        std::string ppath = detail::index_path(h.at("pes"), p);
        PeSpec pe;
        if (pes[p].is_number()) {
          pe.mips = detail::as_number(pes[p], ppath);
        } else {
          detail::ObjectReader pr(pes[p], ppath, strict, warnings);
          pe.mips = pr.number("mips");
          pe.id = pr.opt_integer("id");
          pr.finish();
        }
        if (!(pe.mips > 0.0)) detail::schema_error(ppath, "mips must be > 0");
        host.pes.push_back(pe);
      }
      h.finish();
      dev.hosts.push_back(std::move(host));
    }
    r.finish();
    infra.devices.push_back(std::move(dev));
  }

  for (const auto& [key, listing] : listings) {
    auto [a, b] = key;
    auto back = listing_index.find({b, a});
    if (back == listing_index.end()) {
      throw Error(Errc::AsymmetricNeighbor, "io",
                  listing.path + ": device " + std::to_string(a) + " lists " + std::to_string(b) + " but not vice versa");
    }
    if (listing_index.at(key) > back->second) continue;  // collapsed into the earlier listing
    const auto& other = listings[back->second].second;
    auto merge = [&](std::optional<double> x, std::optional<double> y, const char* what, double fallback) {
      if (x && y && *x != *y) {
        throw Error(Errc::AsymmetricNeighbor, "io",
                    listing.path + ": " + what + " of link " + std::to_string(a) + "-" + std::to_string(b) +
                        " differs between its two listings");
      }
      return x ? *x : y ? *y : fallback;
    };
    infra.links.push_back({a, b, merge(listing.bandwidth, other.bandwidth, "bandwidth_mbps", kDefaultLinkBandwidth),
                           merge(listing.latency, other.latency, "latency_s", 0.0)});
  }

  if (const json* vms = root.get("vms")) {
    detail::as_array(*vms, root.at("vms"));
    std::set<VmId> vm_ids;
    for (std::size_t i = 0; i < vms->size(); ++i) {
      std::string vpath = detail::index_path(root.at("vms"), i);
      VmSpec vm = detail::parse_vm((*vms)[i], vpath, strict, warnings);
      if (!vm_ids.insert(vm.id).second) throw Error(Errc::DuplicateId, "io", vpath + ": duplicate vm id " + std::to_string(vm.id));
      if (vm.device && !ids.count(*vm.device)) detail::schema_error(vpath + ".device_id", "unknown device");
      if (vm.host && !vm.device) detail::schema_error(vpath + ".host_id", "host_id requires device_id");
      if (vm.host) {
        const auto& dev = *std::find_if(infra.devices.begin(), infra.devices.end(),
                                        [&](const DeviceSpec& d) { return d.id == *vm.device; });
        if (std::none_of(dev.hosts.begin(), dev.hosts.end(), [&](const HostSpec& h) { return h.id == *vm.host; })) {
          detail::schema_error(vpath + ".host_id", "unknown host on device " + std::to_string(*vm.device));
        }
      }
      infra.vms.push_back(std::move(vm));
    }
  } else {
    detail::schema_error(root.at("vms"), "missing required field");
  }

  if (const json* routes = root.get("routes")) {
    detail::as_array(*routes, root.at("routes"));
    for (std::size_t i = 0; i < routes->size(); ++i) {
      detail::ObjectReader r((*routes)[i], detail::index_path(root.at("routes"), i), strict, warnings);
      RouteEntry e{r.integer("source"), r.integer("destination"), r.integer("next_hop")};
      for (auto [key, v] : {std::pair{"source", e.source}, std::pair{"destination", e.destination},
                            std::pair{"next_hop", e.next_hop}}) {
        if (!ids.count(v)) detail::schema_error(r.at(key), "unknown device " + std::to_string(v));
      }
      r.finish();
      infra.routes.push_back(e);
    }
  }
  root.finish();
  return out;
}

inline ordered_json topology_to_json(const Infrastructure& infra) {
  ordered_json root;
  ordered_json devs = ordered_json::array();
  for (const auto& d : infra.devices) {
    ordered_json o;
    o["id"] = d.id;
    ordered_json nbrs = ordered_json::array();
    for (const auto& l : infra.links) {
      if (l.a != d.id && l.b != d.id) continue;
      ordered_json n;
      n["id"] = l.a == d.id ? l.b : l.a;
      n["bandwidth_mbps"] = l.bandwidth_mbps;
      n["latency_s"] = l.latency_s;
      nbrs.push_back(std::move(n));
    }
    o["neighbors"] = std::move(nbrs);
    ordered_json hosts = ordered_json::array();
    for (const auto& h : d.hosts) {
      ordered_json ho;
      ho["id"] = h.id;
      ho["ram"] = h.ram;
      ho["bw"] = h.bw;
      ho["storage"] = h.storage;
      ordered_json pes = ordered_json::array();
      for (const auto& pe : h.pes) {
        ordered_json p;
        if (pe.id) p["id"] = *pe.id;
        p["mips"] = pe.mips;
        pes.push_back(std::move(p));
      }
      ho["pes"] = std::move(pes);
      hosts.push_back(std::move(ho));
    }
    o["hosts"] = std::move(hosts);
    devs.push_back(std::move(o));
  }
  root["fog_devices"] = std::move(devs);
  ordered_json vms = ordered_json::array();
  for (const auto& vm : infra.vms) vms.push_back(detail::vm_to_json(vm));
  root["vms"] = std::move(vms);
  if (!infra.routes.empty()) {
    ordered_json routes = ordered_json::array();
    for (const auto& r : infra.routes) {
      routes.push_back({{"source", r.source}, {"destination", r.destination}, {"next_hop", r.next_hop}});
    }
    root["routes"] = std::move(routes);
  }
  return root;
}

inline std::string serialize_topology(const Infrastructure& infra) { return topology_to_json(infra).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Config.json

namespace detail {

inline PolicySpec parse_policy_spec(const json& j, const std::string& path, bool strict,
                                    std::vector<std::string>& warnings) {
  ObjectReader r(j, path, strict, warnings);
  PolicySpec p;
  p.name = r.string("name");
  if (const json* params = r.get("params")) {
    if (!params->is_object()) schema_error(r.at("params"), "expected an object");
    p.params = *params;
  }
  r.finish();
  return p;
}

inline std::optional<DeadlinePolicy> deadline_policy_from(std::string_view s) {
  if (s == "kill") return DeadlinePolicy::Kill;
  if (s == "continue") return DeadlinePolicy::Continue;
  if (s == "drop-descendants") return DeadlinePolicy::DropDescendants;
  return std::nullopt;
}

inline std::string_view orphan_policy_name(OrphanPolicy p) {
  switch (p) {
    case OrphanPolicy::Allow: return "allow";
    case OrphanPolicy::Warn: return "warn";
    case OrphanPolicy::Error: return "error";
  }
  return "warn";
}

}  // namespace detail

inline Parsed<RunConfig> parse_config(std::string_view text) {
  Parsed<RunConfig> out;
  auto& c = out.value;
  json doc = detail::parse_json_text(text, "Config.json");
  if (!doc.is_object()) detail::schema_error("$", "expected an object");
  if (doc.contains("strict_parsing")) c.strict_parsing = detail::as_bool(doc["strict_parsing"], "$.strict_parsing");
  const bool strict = c.strict_parsing;
  detail::ObjectReader r(doc, "$", strict, out.warnings);
  r.get("strict_parsing");
  if (const json* seed = r.get("seed")) {
    if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<long long>() >= 0)) {
      detail::schema_error(r.at("seed"), "expected a non-negative integer");
    }
    c.seed = seed->get<std::uint64_t>();
  }
  if (r.get("horizon")) c.horizon = r.non_negative("horizon");
  if (const json* p = r.get("deadline_policy")) {
    auto v = detail::deadline_policy_from(detail::as_string(*p, r.at("deadline_policy")));
    if (!v) detail::schema_error(r.at("deadline_policy"), "expected kill, continue or drop-descendants");
    c.deadline_policy = *v;
  }
  if (const json* s = r.get("scheduler")) c.scheduler = detail::parse_policy_spec(*s, r.at("scheduler"), strict, out.warnings);
  if (const json* s = r.get("provisioner")) {
    c.provisioner = detail::parse_policy_spec(*s, r.at("provisioner"), strict, out.warnings);
  }
  c.control_message_mb = r.non_negative("control_message_mb", 0.0);
  c.vm_boot_delay_s = r.non_negative("vm_boot_delay_s", 0.0);
  c.broker_device = r.opt_integer("broker_device");
  c.data_origin_device = r.opt_integer("data_origin_device");
  if (r.get("schedule_interval_s")) c.schedule_interval_s = r.positive("schedule_interval_s");
  if (const json* o = r.get("orphan_inputs")) {
    std::string v = detail::as_string(*o, r.at("orphan_inputs"));
    if (v == "allow") {
      c.orphan_inputs = OrphanPolicy::Allow;
    } else if (v == "warn") {
      c.orphan_inputs = OrphanPolicy::Warn;
    } else if (v == "error") {
      c.orphan_inputs = OrphanPolicy::Error;
    } else {
      detail::schema_error(r.at("orphan_inputs"), "expected allow, warn or error");
    }
  }
  if (const json* v = r.get("vm_allocation_policy")) {
    c.vm_allocation_policy = detail::as_string(*v, r.at("vm_allocation_policy"));
    if (c.vm_allocation_policy != "simple") detail::schema_error(r.at("vm_allocation_policy"), "only \"simple\" is supported");
  }
  r.finish();
  return out;
}

inline ordered_json config_to_json(const RunConfig& c) {
  ordered_json o;
  o["seed"] = c.seed;
  if (c.horizon) o["horizon"] = *c.horizon;
  o["deadline_policy"] = deadline_policy_name(c.deadline_policy);
  o["scheduler"] = {{"name", c.scheduler.name}, {"params", ordered_json::parse(c.scheduler.params.dump())}};
  o["provisioner"] = {{"name", c.provisioner.name}, {"params", ordered_json::parse(c.provisioner.params.dump())}};
  o["control_message_mb"] = c.control_message_mb;
  o["vm_boot_delay_s"] = c.vm_boot_delay_s;
  o["strict_parsing"] = c.strict_parsing;
  if (c.broker_device) o["broker_device"] = *c.broker_device;
  if (c.data_origin_device) o["data_origin_device"] = *c.data_origin_device;
  if (c.schedule_interval_s) o["schedule_interval_s"] = *c.schedule_interval_s;
  o["orphan_inputs"] = detail::orphan_policy_name(c.orphan_inputs);
  o["vm_allocation_policy"] = c.vm_allocation_policy;
  return o;
}

inline std::string serialize_config(const RunConfig& c) { return config_to_json(c).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Policy construction

inline std::unique_ptr<SchedulingPolicy> make_scheduling_policy(const PolicySpec& spec, bool strict = true) {
  std::vector<std::string> warnings;
  const std::string path = "$.scheduler.params";
  detail::ObjectReader r(spec.params, path, strict, warnings);
  Affinity affinity;
  if (const json* a = r.get("affinity")) {
    detail::ObjectReader ar(*a, r.at("affinity"), strict, warnings);
    if (const json* wv = ar.get("workflow_vms")) {
      if (!wv->is_object()) detail::schema_error(ar.at("workflow_vms"), "expected an object");
      for (auto it = wv->begin(); it != wv->end(); ++it) {
        std::string p = ar.at("workflow_vms") + "." + it.key();
        detail::as_array(*it, p);
        auto& list = affinity.workflow_vms[it.key()];
        for (std::size_t i = 0; i < it->size(); ++i) list.push_back(detail::as_int((*it)[i], detail::index_path(p, i)));
      }
    }
    if (const json* tv = ar.get("task_vm")) {
      if (!tv->is_object()) detail::schema_error(ar.at("task_vm"), "expected an object");
      for (auto it = tv->begin(); it != tv->end(); ++it) {
        affinity.task_vm[it.key()] = detail::as_int(*it, ar.at("task_vm") + "." + it.key());
      }
    }
    ar.finish();
  }
  r.finish();
  if (spec.name == "round_robin") return std::make_unique<RoundRobinPolicy>(std::move(affinity));
  if (spec.name == "earliest_finish") return std::make_unique<EarliestFinishPolicy>(std::move(affinity));
  if (spec.name == "min_min") return std::make_unique<MinMinPolicy>(std::move(affinity));
  throw Error(Errc::SchemaError, "io", "$.scheduler.name: unknown scheduling policy \"" + spec.name + "\"");
}

inline std::unique_ptr<ProvisioningPolicy> make_provisioning_policy(const PolicySpec& spec, bool strict = true) {
  std::vector<std::string> warnings;
  detail::ObjectReader r(spec.params, "$.provisioner.params", strict, warnings);
  if (spec.name == "static") {
    r.finish();
    return std::make_unique<StaticProvisioning>();
  }
  if (spec.name == "elastic") {
    VmSpec templ = detail::parse_vm(r.require("template"), r.at("template"), strict, warnings);
    int max_dynamic = r.integer("max_vms");
    if (max_dynamic < 0) detail::schema_error(r.at("max_vms"), "must be >= 0");
    auto device = r.opt_integer("device_id");
    r.finish();
    return std::make_unique<ElasticProvisioning>(templ, static_cast<std::size_t>(max_dynamic), device);
  }
  throw Error(Errc::SchemaError, "io", "$.provisioner.name: unknown provisioning policy \"" + spec.name + "\"");
}

// ---------------------------------------------------------------------------
// DAX import

// Converts a DAX workflow: job runtimes (seconds) become MI at `ref_mips`,
// file sizes (bytes) become MB, and child/parent elements become declared
// parents alongside the file-derived ones.
inline Parsed<Application> import_dax(std::string_view xml, double ref_mips = 1000.0, std::string workflow_id = "") {
  namespace pt = boost::property_tree;
  if (!(ref_mips > 0.0)) throw Error(Errc::ValidationError, "io", "reference MIPS must be > 0");
  pt::ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    pt::read_xml(in, tree);
  } catch (const pt::xml_parser_error& e) {
    throw Error(Errc::SchemaError, "io", std::string("DAX: malformed XML: ") + e.what());
  }
  auto root = tree.get_child_optional("adag");
  if (!root) throw Error(Errc::SchemaError, "io", "DAX: missing <adag> root element");

  Parsed<Application> out;
  Workflow wf;
  wf.workflow_id = !workflow_id.empty() ? workflow_id : root->get<std::string>("<xmlattr>.name", "dax");
  std::map<std::string, int> job_index;
  std::map<int, std::set<int>> declared;
  bool has_control_edges = false;

  auto number_attr = [](const pt::ptree& node, const std::string& attr, const std::string& where) {
    auto raw = node.get_optional<std::string>("<xmlattr>." + attr);
    if (!raw) return std::optional<double>();
    try {
      std::size_t used = 0;
      double v = std::stod(*raw, &used);
      if (used != raw->size() || !std::isfinite(v)) throw std::invalid_argument(*raw);
      return std::optional<double>(v);
    } catch (const std::exception&) {
      throw Error(Errc::SchemaError, "io", where + ": attribute " + attr + " is not a number");
    }
  };

  for (const auto& [tag, node] : *root) {
    if (tag != "job") continue;
    auto id = node.get_optional<std::string>("<xmlattr>.id");
    if (!id) throw Error(Errc::SchemaError, "io", "DAX: job without id");
    const std::string where = "DAX job " + *id;
    if (job_index.count(*id)) throw Error(Errc::DuplicateId, "io", where + ": duplicate job id");
    auto runtime = number_attr(node, "runtime", where);
    if (!runtime) throw Error(Errc::SchemaError, "io", where + ": missing runtime");
    if (!(*runtime > 0.0)) throw Error(Errc::SchemaError, "io", where + ": runtime must be > 0");
    Task t;
    t.id = static_cast<int>(wf.tasks.size());
    t.runtime = *runtime * ref_mips;
    for (const auto& [utag, use] : node) {
      if (utag != "uses") continue;
      auto name = use.get_optional<std::string>("<xmlattr>.file");
      if (!name) name = use.get_optional<std::string>("<xmlattr>.name");
      if (!name) throw Error(Errc::SchemaError, "io", where + ": <uses> without a file name");
      auto link = use.get<std::string>("<xmlattr>.link", "");
      double size = number_attr(use, "size", where).value_or(0.0);
      if (!(size >= 0.0)) throw Error(Errc::SchemaError, "io", where + ": negative size for " + *name);
      DataFile f{*name, size / 1e6};
      if (link == "input") {
        t.inputs.push_back(std::move(f));
      } else if (link == "output") {
        t.outputs.push_back(std::move(f));
      } else {
        throw Error(Errc::SchemaError, "io", where + ": <uses> link must be input or output");
      }
    }
    job_index[*id] = t.id;
    wf.tasks.push_back(std::move(t));
  }

  for (const auto& [tag, node] : *root) {
    if (tag != "child") continue;
    has_control_edges = true;
    auto ref = node.get<std::string>("<xmlattr>.ref", "");
    auto child = job_index.find(ref);
    if (child == job_index.end()) throw Error(Errc::DanglingReference, "io", "DAX: <child> names unknown job " + ref);
    for (const auto& [ptag, pnode] : node) {
      if (ptag != "parent") continue;
      auto pref = pnode.get<std::string>("<xmlattr>.ref", "");
      auto parent = job_index.find(pref);
      if (parent == job_index.end()) throw Error(Errc::DanglingReference, "io", "DAX: <parent> names unknown job " + pref);
      declared[child->second].insert(parent->second);
    }
  }

  if (has_control_edges) {
    std::map<std::string, int> producer;
    for (const auto& t : wf.tasks) {
      for (const auto& f : t.outputs) producer.emplace(f.name, t.id);
    }
    for (auto& t : wf.tasks) {
      std::set<int> parents = declared[t.id];
      for (const auto& f : t.inputs) {
        if (auto it = producer.find(f.name); it != producer.end() && it->second != t.id) parents.insert(it->second);
      }
      t.declared_parents = std::vector<int>(parents.begin(), parents.end());
    }
  }

  if (wf.tasks.empty()) out.warnings.push_back("DAX contains no jobs; workflow " + wf.workflow_id + " is empty");
  out.value.workflows.push_back(std::move(wf));
  auto more = link_and_validate(out.value, OrphanPolicy::Allow);
  out.warnings.insert(out.warnings.end(), more.begin(), more.end());
  return out;
}

// ---------------------------------------------------------------------------
// Scenario bundles

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "io", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "io", "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::IoError, "io", "failed writing " + path.string());
}

struct ScenarioBundle {
  Application app;
  Infrastructure infra;
  RunConfig config;
  std::vector<std::string> warnings;
};

// Resolves references that span documents.
inline void check_bundle(const ScenarioBundle& b) {
  std::set<DeviceId> devices;
  for (const auto& d : b.infra.devices) devices.insert(d.id);
  std::set<VmId> vms;
  for (const auto& vm : b.infra.vms) vms.insert(vm.id);
  for (auto [name, dev] : {std::pair{"broker_device", b.config.broker_device},
                           std::pair{"data_origin_device", b.config.data_origin_device}}) {
    if (dev && !devices.count(*dev)) {
      throw Error(Errc::DanglingReference, "io", std::string("$.") + name + ": unknown device " + std::to_string(*dev));
    }
  }
  const json& params = b.config.scheduler.params;
  if (params.contains("affinity") && params["affinity"].is_object()) {
    const json& a = params["affinity"];
    auto check_vm = [&](const json& v, const std::string& where) {
      if (v.is_number_integer() && !vms.count(v.get<int>())) {
        throw Error(Errc::DanglingReference, "io", where + ": unknown vm " + std::to_string(v.get<int>()));
      }
    };
    if (a.contains("workflow_vms") && a["workflow_vms"].is_object()) {
      for (auto it = a["workflow_vms"].begin(); it != a["workflow_vms"].end(); ++it) {
        if (!b.app.find_workflow(it.key())) {
          throw Error(Errc::UnknownWorkflow, "io", "$.scheduler.params.affinity.workflow_vms: unknown workflow " + it.key());
        }
        if (it->is_array()) {
          for (const auto& v : *it) check_vm(v, "$.scheduler.params.affinity.workflow_vms." + it.key());
        }
      }
    }
    if (a.contains("task_vm") && a["task_vm"].is_object()) {
      for (auto it = a["task_vm"].begin(); it != a["task_vm"].end(); ++it) check_vm(*it, "$.scheduler.params.affinity.task_vm." + it.key());
    }
  }
}

inline ScenarioBundle make_bundle(std::string_view topology_text, std::string_view workflows_text,
                                  std::string_view config_text) {
  ScenarioBundle b;
  auto cfg = parse_config(config_text);
  b.config = std::move(cfg.value);
  b.warnings = std::move(cfg.warnings);
  auto topo = parse_topology(topology_text, b.config.strict_parsing);
  b.infra = std::move(topo.value);
  b.warnings.insert(b.warnings.end(), topo.warnings.begin(), topo.warnings.end());
  auto wfs = parse_workflows(workflows_text, b.config.strict_parsing, b.config.orphan_inputs);
  b.app = std::move(wfs.value);
  b.warnings.insert(b.warnings.end(), wfs.warnings.begin(), wfs.warnings.end());
  // Policy parameters are checked here so a bad config fails before any run.
  make_scheduling_policy(b.config.scheduler, b.config.strict_parsing);
  make_provisioning_policy(b.config.provisioner, b.config.strict_parsing);
  check_bundle(b);
  return b;
}

inline ScenarioBundle load_bundle(const std::filesystem::path& topology, const std::filesystem::path& workflows,
                                  const std::filesystem::path& config) {
  return make_bundle(read_text_file(topology), read_text_file(workflows), read_text_file(config));
}

inline std::unique_ptr<Simulator> make_simulator(const ScenarioBundle& b) {
  return std::make_unique<Simulator>(b.app, b.infra, b.config.options(),
                                     make_scheduling_policy(b.config.scheduler, b.config.strict_parsing),
                                     make_provisioning_policy(b.config.provisioner, b.config.strict_parsing));
}

struct RunResult {
  RunReport report;
  std::string trace_text;
  SimTime end_time = 0.0;
};

inline RunResult run_scenario(const ScenarioBundle& b) {
  auto sim = make_simulator(b);
  RunResult r;
  r.end_time = sim->run();
  r.trace_text = sim->trace().text();
  r.report = build_report(sim->trace().records(), sim->application(), r.end_time);
  return r;
}

}  // namespace widesim
