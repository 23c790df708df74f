#pragma once

// Builders shared by the test suites and the acceptance runner.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "widesim/widesim.hpp"

namespace support {

using namespace widesim;

inline HostSpec host(HostId id, int pes = 1, double mips = 1000.0, double ram = 1 << 20, double bw = 1e9,
                     double storage = 1e12) {
  HostSpec h;
  h.id = id;
  h.pes.assign(static_cast<std::size_t>(pes), PeSpec{mips, std::nullopt});
  h.ram = ram;
  h.bw = bw;
  h.storage = storage;
  return h;
}

inline VmSpec vm(VmId id, std::optional<DeviceId> device = 0, double mips = 1000.0, int pes = 1,
                 SchedulerKind kind = SchedulerKind::TimeShared) {
  VmSpec v;
  v.id = id;
  v.mips = mips;
  v.pes = pes;
  v.ram = 512;
  v.bw = 1000;
  v.size = 10000;
  v.device = device;
  v.scheduler = kind;
  return v;
}

inline DataFile file(std::string name, double size = 0.0) { return {std::move(name), size}; }

inline Task task(int id, double runtime, std::vector<DataFile> inputs = {}, std::vector<DataFile> outputs = {}) {
  Task t;
  t.id = id;
  t.runtime = runtime;
  t.inputs = std::move(inputs);
  t.outputs = std::move(outputs);
  return t;
}

inline Workflow workflow(std::string id, std::vector<Task> tasks) {
  Workflow w;
  w.workflow_id = std::move(id);
  w.tasks = std::move(tasks);
  return w;
}

// One device with a dedicated host per VM; every VM has `vm_pes` PEs.
inline Infrastructure single_device(int vms, int vm_pes = 1, SchedulerKind kind = SchedulerKind::TimeShared) {
  Infrastructure infra;
  DeviceSpec d;
  d.id = 0;
  for (int h = 0; h < vms; ++h) d.hosts.push_back(host(h, vm_pes));
  infra.devices.push_back(d);
  for (int i = 0; i < vms; ++i) infra.vms.push_back(vm(i, 0, 1000.0, vm_pes, kind));
  return infra;
}

// Path graph 0-1-...-(n-1), one host and one pinned VM per device.
inline Infrastructure chain(int n, double bandwidth = 1000.0, double latency = 0.0) {
  Infrastructure infra;
  for (int i = 0; i < n; ++i) {
    DeviceSpec d;
    d.id = i;
    d.hosts.push_back(host(0));
    infra.devices.push_back(d);
    infra.vms.push_back(vm(i, i));
    if (i > 0) infra.links.push_back({i - 1, i, bandwidth, latency});
  }
  return infra;
}

// Workflow from an oracle DAG; edge (p, c) carries file "f<p>_<c>".
inline Workflow dag_workflow(const std::string& id, const oracle::Dag& d) {
  Workflow w;
  w.workflow_id = id;
  for (int i = 0; i < d.n; ++i) w.tasks.push_back(task(i, d.runtime[static_cast<std::size_t>(i)]));
  for (auto [p, c] : d.edges) {
    DataFile f{"f" + std::to_string(p) + "_" + std::to_string(c), d.file_mb.at({p, c})};
    w.tasks[static_cast<std::size_t>(p)].outputs.push_back(f);
    w.tasks[static_cast<std::size_t>(c)].inputs.push_back(f);
  }
  return w;
}

inline Application app_of(std::vector<Workflow> wfs, std::vector<Ensemble> ensembles = {}) {
  Application app;
  app.workflows = std::move(wfs);
  app.ensembles = std::move(ensembles);
  link_and_validate(app, OrphanPolicy::Allow);
  return app;
}

struct Outcome {
  std::map<TaskRef, TaskRecord> records;
  std::vector<TraceRecord> trace;
  std::string trace_text;
  RunReport report;
  SimTime end = 0.0;
};

inline Outcome simulate(const Application& app, const Infrastructure& infra, SimulationOptions options = {},
                        std::unique_ptr<SchedulingPolicy> scheduler = nullptr,
                        std::unique_ptr<ProvisioningPolicy> provisioner = nullptr) {
  Simulator sim(app, infra, options, std::move(scheduler), std::move(provisioner));
  Outcome o;
  o.end = sim.run();
  o.records = sim.records().all();
  o.trace = sim.trace().records();
  o.trace_text = sim.trace().text();
  o.report = build_report(o.trace, sim.application(), o.end);
  return o;
}

inline std::unique_ptr<SchedulingPolicy> pinned(std::map<std::string, VmId> task_vm) {
  Affinity a;
  a.task_vm = std::move(task_vm);
  return std::make_unique<RoundRobinPolicy>(std::move(a));
}

inline std::optional<double> makespan(const Outcome& o, const std::string& wf) {
  for (const auto& w : o.report.workflows) {
    if (w.workflow_id == wf) return w.makespan;
  }
  return std::nullopt;
}

}  // namespace support
