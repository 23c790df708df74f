#pragma once

#include <algorithm>
#include <any>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "widesim/compute.hpp"
#include "widesim/des.hpp"
#include "widesim/error.hpp"
#include "widesim/network.hpp"
#include "widesim/policy.hpp"
#include "widesim/trace.hpp"
#include "widesim/workflow.hpp"

namespace widesim {

// ---------------------------------------------------------------------------
// Infrastructure and run options

struct DeviceSpec {
  DeviceId id = 0;
  std::vector<HostSpec> hosts;
  friend bool operator==(const DeviceSpec&, const DeviceSpec&) = default;
};

// Everything Topology.json describes.
struct Infrastructure {
  std::vector<DeviceSpec> devices;
  std::vector<LinkSpec> links;
  std::vector<VmSpec> vms;
  std::vector<RouteEntry> routes;

  Topology topology() const {
    std::vector<DeviceId> ids;
    for (const auto& d : devices) ids.push_back(d.id);
    return Topology(std::move(ids), links);
  }
  friend bool operator==(const Infrastructure&, const Infrastructure&) = default;
};

enum class DeadlinePolicy { Kill, Continue, DropDescendants };

inline std::string_view deadline_policy_name(DeadlinePolicy p) {
  switch (p) {
    case DeadlinePolicy::Kill: return "kill";
    case DeadlinePolicy::Continue: return "continue";
    case DeadlinePolicy::DropDescendants: return "drop-descendants";
  }
  return "continue";
}

struct SimulationOptions {
  std::uint64_t seed = 0;
  std::optional<SimTime> horizon;
  DeadlinePolicy deadline_policy = DeadlinePolicy::Continue;
  double control_message_mb = 0.0;
  double vm_boot_delay_s = 0.0;
  std::optional<DeviceId> broker_device;       // default: smallest device id
  std::optional<DeviceId> data_origin_device;  // default: source files are local
  std::optional<double> schedule_interval_s;   // optional periodic scheduling timer
};

// ---------------------------------------------------------------------------
// Task lifecycle records

enum class TaskStatus { Pending, Ready, Scheduled, Transferring, Executing, Completed, DeadlineMissed, Killed };

inline std::string_view task_status_name(TaskStatus s) {
  switch (s) {
    case TaskStatus::Pending: return "pending";
    case TaskStatus::Ready: return "ready";
    case TaskStatus::Scheduled: return "scheduled";
    case TaskStatus::Transferring: return "transferring";
    case TaskStatus::Executing: return "executing";
    case TaskStatus::Completed: return "completed";
    case TaskStatus::DeadlineMissed: return "deadline-missed";
    case TaskStatus::Killed: return "killed";
  }
  return "pending";
}

inline bool is_terminal(TaskStatus s) { return s == TaskStatus::DeadlineMissed || s == TaskStatus::Killed; }

struct TransferSpan {
  std::string file;
  DeviceId from = 0;
  DeviceId to = 0;
  SimTime start = 0.0;
  std::optional<SimTime> end;
  friend bool operator==(const TransferSpan&, const TransferSpan&) = default;
};

struct TaskRecord {
  TaskRef ref;
  std::optional<SimTime> release_time;
  std::optional<SimTime> ready_time;
  std::optional<SimTime> schedule_time;
  std::optional<VmId> assigned_vm;
  std::vector<TransferSpan> transfers;
  std::optional<SimTime> exec_start;
  std::optional<SimTime> exec_end;
  std::optional<SimTime> completed_at;
  std::optional<SimTime> terminated_at;
  TaskStatus status = TaskStatus::Pending;
  std::vector<TaskStatus> path{TaskStatus::Pending};
  bool deadline_flagged = false;
  bool missing_input = false;
  std::string reason;
  int executions = 0;
  friend bool operator==(const TaskRecord&, const TaskRecord&) = default;
};

// Lifecycle bookkeeping shared by the broker and the devices. Every mutation
// is mirrored as a trace record.
class RecordBook {
 public:
  RecordBook(TraceSink& trace, const Application& app) : trace_(&trace) {
    for (const auto& wf : app.workflows) {
      for (const auto& t : wf.tasks) {
        TaskRef ref{wf.workflow_id, t.id};
        records_[ref].ref = ref;
      }
    }
  }

  TaskRecord& at(const TaskRef& ref) {
    auto it = records_.find(ref);
    if (it == records_.end()) throw Error(Errc::UnknownWorkflow, "orchestration", "unknown task " + ref.str());
    return it->second;
  }
  const TaskRecord& at(const TaskRef& ref) const { return const_cast<RecordBook*>(this)->at(ref); }
  const std::map<TaskRef, TaskRecord>& all() const noexcept { return records_; }
  bool terminal(const TaskRef& ref) const { return is_terminal(at(ref).status); }

  void released(const TaskRef& ref, SimTime t) {
    auto& r = at(ref);
    if (!r.release_time) r.release_time = t;
    trace_->emit(t, "task_manager", "release", ref.str());
  }

  void ready(const TaskRef& ref, SimTime t, std::string_view entity = "engine") {
    auto& r = at(ref);
    if (!r.ready_time) r.ready_time = t;
    set_status(r, TaskStatus::Ready);
    trace_->emit(t, std::string(entity), entity == "engine" ? "ready" : "reactivated", ref.str());
  }

  void scheduled(const TaskRef& ref, SimTime t, VmId vm, int execution) {
    auto& r = at(ref);
    r.schedule_time = t;
    r.assigned_vm = vm;
    set_status(r, TaskStatus::Scheduled);
    trace_->emit(t, "broker", "scheduled", ref.str(), Detail().add("vm", vm).add("exec", execution).str());
  }

  void transferring(const TaskRef& ref, SimTime t, int files) {
    set_status(at(ref), TaskStatus::Transferring);
    trace_->emit(t, "broker", "transferring", ref.str(), Detail().add("files", files).str());
  }

  void transfer_start(const TaskRef& ref, SimTime t, const DataFile& file, DeviceId from, DeviceId to) {
    at(ref).transfers.push_back({file.name, from, to, t, std::nullopt});
    trace_->emit(t, "broker", "transfer_start", ref.str(),
                 Detail().add("file", file.name).add("from", from).add("to", to).add("size", file.size).str());
  }

  void transfer_end(const TaskRef& ref, SimTime t, const std::string& file, DeviceId device) {
    for (auto& span : at(ref).transfers) {
      if (span.file == file && !span.end) {
        span.end = t;
        break;
      }
    }
    trace_->emit(t, device_name(device), "transfer_end", ref.str(), Detail().add("file", file).str());
  }

  void exec_started(const TaskRef& ref, SimTime t, VmId vm, DeviceId device) {
    auto& r = at(ref);
    r.exec_start = t;
    r.exec_end.reset();
    set_status(r, TaskStatus::Executing);
    trace_->emit(t, device_name(device), "exec_start", ref.str(), Detail().add("vm", vm).str());
  }

  void exec_finished(const TaskRef& ref, SimTime t, VmId vm, DeviceId device) {
    at(ref).exec_end = t;
    trace_->emit(t, device_name(device), "exec_end", ref.str(), Detail().add("vm", vm).str());
  }

  void completed(const TaskRef& ref, SimTime t, std::size_t emitted) {
    auto& r = at(ref);
    r.completed_at = t;
    ++r.executions;
    set_status(r, TaskStatus::Completed);
    trace_->emit(t, "broker", "completed", ref.str(),
                 Detail().add("exec", r.executions).add("emitted", static_cast<std::uint64_t>(emitted)).str());
  }

  void flag_deadline(const TaskRef& ref, SimTime t) {
    at(ref).deadline_flagged = true;
    trace_->emit(t, "broker", "deadline_flag", ref.str());
  }

  void mark_missing_input(const TaskRef& ref, SimTime t, const std::string& file) {
    auto& r = at(ref);
    if (r.missing_input) return;
    r.missing_input = true;
    trace_->emit(t, "broker", "missing_input", ref.str(), Detail().add("file", file).str());
  }

  void terminate(const TaskRef& ref, SimTime t, TaskStatus status, const std::string& reason) {
    auto& r = at(ref);
    r.terminated_at = t;
    r.reason = reason;
    set_status(r, status);
    trace_->emit(t, "broker", status == TaskStatus::DeadlineMissed ? "deadline_missed" : "killed", ref.str(),
                 Detail().add("reason", reason).str());
  }

  static std::string device_name(DeviceId d) { return "device:" + std::to_string(d); }

 private:
  static void set_status(TaskRecord& r, TaskStatus s) {
    r.status = s;
    r.path.push_back(s);
  }

  TraceSink* trace_;
  std::map<TaskRef, TaskRecord> records_;
};

// ---------------------------------------------------------------------------
// Messages

enum OrchestrationTag : EventTag {
  kTmRelease = 200,
  kEngineRelease = 210,
  kEngineCompleted,
  kBrokerReady = 220,
  kBrokerCycle,
  kBrokerControl,
  kBrokerDeadline,
  kBrokerReactivate,
  kBrokerTimer,
  kDeviceControl = 230,
  kDeviceFile,
  kDeviceVmCheck,
  kDeviceVmBoot,
};

struct DispatchMsg {
  TaskRef task;
  int execution = 0;
  VmId vm = 0;
  double length = 0.0;
  int pes = 1;
  int expected_files = 0;
};
struct KillMsg {
  TaskRef task;
  int execution = 0;
};
struct CreateVmMsg {
  VmSpec vm;
};
struct DestroyVmMsg {
  VmId vm = 0;
  bool force = false;
};
struct DoneMsg {
  TaskRef task;
  int execution = 0;
  VmId vm = 0;
};
struct AbortedMsg {  // execution lost on the device side
  TaskRef task;
  int execution = 0;
  VmId vm = 0;
  std::string reason;
};
struct VmReadyMsg {
  VmId vm = 0;
  DeviceId device = 0;
};
struct VmGoneMsg {
  VmId vm = 0;
};
struct VmFailedMsg {
  VmId vm = 0;
  bool on_create = true;
  std::string reason;
};
using ControlMsg =
    std::variant<DispatchMsg, KillMsg, CreateVmMsg, DestroyVmMsg, DoneMsg, AbortedMsg, VmReadyMsg, VmGoneMsg, VmFailedMsg>;

struct FileMsg {
  TaskRef consumer;
  int execution = 0;
  DataFile file;
  bool redelivery = false;
};

class FogDevice;

// State shared by the entities of one simulation instance.
struct World {
  Simulation sim;
  TraceSink trace;
  Application app;
  SimulationOptions options;
  std::unique_ptr<Network> network;
  std::unique_ptr<RecordBook> book;
  EntityId task_manager;
  EntityId engine;
  EntityId broker;
  DeviceId broker_device = 0;
  std::map<DeviceId, FogDevice*> devices;
  std::map<DeviceId, EntityId> device_entities;

  const Task& task(const TaskRef& ref) const {
    const Workflow* wf = app.find_workflow(ref.workflow);
    if (!wf) throw Error(Errc::UnknownWorkflow, "orchestration", "unknown workflow " + ref.workflow);
    return wf->task(ref.task);
  }

  void send_control(DeviceId from, DeviceId to, EntityId deliver_to, EventTag tag, ControlMsg msg,
                    std::string label) {
    Packet p;
    p.size_mb = options.control_message_mb;
    p.origin = from;
    p.final_destination = to;
    p.deliver_to = deliver_to;
    p.deliver_tag = tag;
    p.label = std::move(label);
    p.payload = std::move(msg);
    network->send(sim, std::move(p), sim.now());
  }
};

// ---------------------------------------------------------------------------
// FogDevice: hosts, VMs and task execution on one network node.

class FogDevice : public Entity {
 public:
  FogDevice(World& world, DeviceId id, std::vector<HostSpec> hosts)
      : world_(&world), id_(id), name_(RecordBook::device_name(id)), resources_(std::move(hosts)) {}

  std::string_view name() const override { return name_; }
  DeviceId id() const noexcept { return id_; }
  void bind(EntityId e) { entity_ = e; }
  EntityId entity() const noexcept { return entity_; }

  const DeviceResources& resources() const noexcept { return resources_; }
  const std::map<VmId, VmRuntime>& vms() const noexcept { return vms_; }
  bool can_host(const VmSpec& vm) const { return resources_.can_host(vm); }

  // Allocates a VM; it becomes usable after `boot_delay`.
  HostId create_vm(const VmSpec& spec, SimTime now, double boot_delay, bool dynamic) {
    if (vms_.count(spec.id)) throw Error(Errc::DuplicateId, "compute", "vm " + std::to_string(spec.id) + " exists");
    HostId host = resources_.allocate_vm(spec);
    auto [it, ok] = vms_.try_emplace(spec.id, spec, id_, host);
    it->second.dynamic = dynamic;
    world_->trace.emit(now, name_, "vm_created", "vm:" + std::to_string(spec.id),
                       Detail().add("host", host).add("dynamic", dynamic ? 1 : 0).str());
    if (boot_delay <= 0.0) {
      mark_running(spec.id, now, dynamic);
    } else {
      world_->sim.schedule(now + boot_delay, entity_, entity_, kDeviceVmBoot, spec.id);
    }
    return host;
  }

  // Releases the VM's host resources. Without `force`, a VM with work fails
  // with VmBusy; with it, running executions are aborted.
  void destroy_vm(VmId id, bool force, SimTime now) {
    auto it = vms_.find(id);
    if (it == vms_.end()) throw Error(Errc::VmNotRunning, "compute", "vm " + std::to_string(id) + " not on " + name_);
    if (!it->second.scheduler.empty() && !force) {
      throw Error(Errc::VmBusy, "compute", "vm " + std::to_string(id) + " has active tasks");
    }
    for (auto e = executions_.begin(); e != executions_.end();) {
      if (e->second.vm == id) {
        world_->book->terminate(e->second.task, now, TaskStatus::Killed, "vm-destroyed");
        notify_broker(AbortedMsg{e->second.task, e->second.execution, id, "vm-destroyed"}, "aborted");
        e = executions_.erase(e);
      } else {
        ++e;
      }
    }
    vms_.erase(it);
    generation_.erase(id);
    resources_.release_vm(id);
    world_->trace.emit(now, name_, "vm_destroyed", "vm:" + std::to_string(id));
  }

  // Starts a task on a local VM immediately.
  ExecutionId submit(const TaskRef& task, int execution, VmId vm, double length, int pes, SimTime now) {
    auto it = vms_.find(vm);
    if (it == vms_.end() || !it->second.running) {
      throw Error(Errc::VmNotRunning, "compute", "vm " + std::to_string(vm) + " is not running on " + name_);
    }
    ExecutionId eid = next_execution_++;
    executions_[eid] = Running{task, execution, vm};
    it->second.scheduler.submit(eid, length, pes, now);
    refresh(vm, now);
    return eid;
  }

  void process(Simulation& sim, const SimEvent& ev) override {
    switch (ev.tag) {
      case kDeviceControl: {
        const auto& delivery = std::any_cast<const Delivery&>(ev.payload);
        on_control(std::any_cast<const ControlMsg&>(delivery.packet.payload), sim.now());
        break;
      }
      case kDeviceFile: {
        const auto& delivery = std::any_cast<const Delivery&>(ev.payload);
        on_file(std::any_cast<const FileMsg&>(delivery.packet.payload), delivery.packet.origin, sim.now());
        break;
      }
      case kDeviceVmCheck: {
        auto [vm, gen] = std::any_cast<std::pair<VmId, std::uint64_t>>(ev.payload);
        auto g = generation_.find(vm);
        if (g == generation_.end() || g->second != gen) break;  // stale
        auto& runtime = vms_.at(vm);
        for (ExecutionId eid : runtime.scheduler.collect_finished(sim.now())) {
          Running r = executions_.at(eid);
          executions_.erase(eid);
          world_->book->exec_finished(r.task, sim.now(), vm, id_);
          notify_broker(DoneMsg{r.task, r.execution, vm}, "done");
        }
        refresh(vm, sim.now());
        break;
      }
      case kDeviceVmBoot: {
        VmId vm = std::any_cast<VmId>(ev.payload);
        if (vms_.count(vm)) mark_running(vm, sim.now(), true);
        break;
      }
      default:
        break;
    }
  }

 private:
  struct Running {
    TaskRef task;
    int execution = 0;
    VmId vm = 0;
  };
  struct Pending {
    std::optional<DispatchMsg> dispatch;
    int files = 0;
  };
  using ExecKey = std::pair<TaskRef, int>;

  void notify_broker(ControlMsg msg, std::string label) {
    world_->send_control(id_, world_->broker_device, world_->broker, kBrokerControl, std::move(msg), std::move(label));
  }

  void mark_running(VmId vm, SimTime now, bool notify) {
    vms_.at(vm).running = true;
    world_->trace.emit(now, name_, "vm_ready", "vm:" + std::to_string(vm));
    if (notify) notify_broker(VmReadyMsg{vm, id_}, "vm_ready");
  }

  // Records newly started executions and re-arms the completion check.
  void refresh(VmId vm, SimTime now) {
    auto& runtime = vms_.at(vm);
    for (ExecutionId eid : runtime.scheduler.take_started()) {
      world_->book->exec_started(executions_.at(eid).task, now, vm, id_);
    }
    const std::uint64_t gen = ++generation_[vm];
    if (auto next = runtime.scheduler.next_completion()) {
      world_->sim.schedule(std::max(*next, now), entity_, entity_, kDeviceVmCheck, std::pair{vm, gen});
    }
  }

  void on_control(const ControlMsg& msg, SimTime now) {
    if (const auto* d = std::get_if<DispatchMsg>(&msg)) {
      if (world_->book->terminal(d->task)) return;
      pending_[{d->task, d->execution}].dispatch = *d;
      try_start({d->task, d->execution}, now);
    } else if (const auto* k = std::get_if<KillMsg>(&msg)) {
      pending_.erase({k->task, k->execution});
      for (auto it = executions_.begin(); it != executions_.end(); ++it) {
        if (it->second.task == k->task && it->second.execution == k->execution) {
          VmId vm = it->second.vm;
          vms_.at(vm).scheduler.cancel(it->first, now);
          executions_.erase(it);
          refresh(vm, now);
          break;
        }
      }
    } else if (const auto* c = std::get_if<CreateVmMsg>(&msg)) {
      try {
        create_vm(c->vm, now, world_->options.vm_boot_delay_s, true);
      } catch (const Error& e) {
        notify_broker(VmFailedMsg{c->vm.id, true, e.message()}, "vm_failed");
      }
    } else if (const auto* x = std::get_if<DestroyVmMsg>(&msg)) {
      try {
        destroy_vm(x->vm, x->force, now);
        notify_broker(VmGoneMsg{x->vm}, "vm_gone");
      } catch (const Error& e) {
        notify_broker(VmFailedMsg{x->vm, false, std::string(errc_name(e.code())) + ": " + e.message()}, "vm_failed");
      }
    }
  }

  void on_file(const FileMsg& msg, DeviceId origin, SimTime now) {
    if (msg.redelivery) {
      world_->trace.emit(now, name_, "redelivered", msg.consumer.str(),
                         Detail().add("file", msg.file.name).add("from", origin).str());
      return;
    }
    if (world_->book->terminal(msg.consumer)) return;
    world_->book->transfer_end(msg.consumer, now, msg.file.name, id_);
    ++pending_[{msg.consumer, msg.execution}].files;
    try_start({msg.consumer, msg.execution}, now);
  }

  void try_start(const ExecKey& key, SimTime now) {
    auto it = pending_.find(key);
    if (it == pending_.end() || !it->second.dispatch || it->second.files < it->second.dispatch->expected_files) return;
    DispatchMsg d = *it->second.dispatch;
    pending_.erase(it);
    try {
      submit(d.task, d.execution, d.vm, d.length, d.pes, now);
    } catch (const Error& e) {
      world_->book->terminate(d.task, now, TaskStatus::Killed, "vm-unavailable");
      notify_broker(AbortedMsg{d.task, d.execution, d.vm, "vm-unavailable"}, "aborted");
    }
  }

  World* world_;
  DeviceId id_;
  std::string name_;
  EntityId entity_;
  DeviceResources resources_;
  std::map<VmId, VmRuntime> vms_;
  std::map<VmId, std::uint64_t> generation_;
  std::map<ExecutionId, Running> executions_;
  std::map<ExecKey, Pending> pending_;
  ExecutionId next_execution_ = 0;
};

// ---------------------------------------------------------------------------
// TaskManager: releases tasks at their entry times, ignoring dependencies.

class TaskManager : public Entity {
 public:
  explicit TaskManager(World& world) : world_(&world) {}
  std::string_view name() const override { return "task_manager"; }

  void start() {
    for (const auto& wf : world_->app.workflows) {
      for (const auto& t : wf.tasks) {
        world_->sim.schedule(t.entry_time, world_->task_manager, world_->task_manager, kTmRelease,
                             TaskRef{wf.workflow_id, t.id});
      }
    }
  }

  void process(Simulation& sim, const SimEvent& ev) override {
    if (ev.tag != kTmRelease) return;
    const auto& ref = std::any_cast<const TaskRef&>(ev.payload);
    world_->book->released(ref, sim.now());
    sim.schedule(sim.now(), world_->task_manager, world_->engine, kEngineRelease, ref);
  }

 private:
  World* world_;
};

// ---------------------------------------------------------------------------
// WorkflowEngine: holds released tasks until all their parents completed.

class WorkflowEngine : public Entity {
 public:
  explicit WorkflowEngine(World& world) : world_(&world) {}
  std::string_view name() const override { return "engine"; }

  void process(Simulation& sim, const SimEvent& ev) override {
    const auto& ref = std::any_cast<const TaskRef&>(ev.payload);
    const Workflow* wf = world_->app.find_workflow(ref.workflow);
    if (!wf) throw Error(Errc::UnknownWorkflow, "orchestration", "engine got task of unknown workflow " + ref.workflow);
    auto& state = state_[ref.workflow];
    if (ev.tag == kEngineRelease) {
      state.released.insert(ref.task);
      try_forward(*wf, state, ref.task, sim);
    } else if (ev.tag == kEngineCompleted) {
      state.completed.insert(ref.task);
      for (int child : wf->task(ref.task).children) {
        if (state.released.count(child)) try_forward(*wf, state, child, sim);
      }
    }
  }

  const std::set<int>& forwarded(const std::string& workflow) { return state_[workflow].forwarded; }

 private:
  struct WorkflowState {
    std::set<int> released;
    std::set<int> completed;
    std::set<int> forwarded;
  };

  void try_forward(const Workflow& wf, WorkflowState& state, int id, Simulation& sim) {
    TaskRef ref{wf.workflow_id, id};
    const auto& rec = world_->book->at(ref);
    if (state.forwarded.count(id) || is_terminal(rec.status) || rec.missing_input) return;
    auto ready = ready_set(wf, state.completed, {id}, state.forwarded);
    if (!ready.count(id)) return;
    state.forwarded.insert(id);
    world_->book->ready(ref, sim.now());
    sim.schedule(sim.now(), world_->engine, world_->broker, kBrokerReady, ref);
  }

  World* world_;
  std::map<std::string, WorkflowState> state_;
};

// ---------------------------------------------------------------------------
// FogBroker: scheduling, input staging, lifecycle tracking, deadlines and
// dynamic provisioning.

class FogBroker : public Entity {
 public:
  FogBroker(World& world, std::unique_ptr<SchedulingPolicy> scheduler, std::unique_ptr<ProvisioningPolicy> provisioner)
      : world_(&world), scheduler_(std::move(scheduler)), provisioner_(std::move(provisioner)) {
    if (!scheduler_) scheduler_ = std::make_unique<RoundRobinPolicy>();
    if (!provisioner_) provisioner_ = std::make_unique<StaticProvisioning>();
  }

  std::string_view name() const override { return "broker"; }

  void add_vm(const VmSpec& spec, DeviceId device, bool running, bool dynamic) {
    vms_[spec.id] = VmInfo{spec, device, running, dynamic, 0, 0.0};
    next_vm_id_ = std::max(next_vm_id_, spec.id + 1);
  }

  void start() {
    for (const auto& wf : world_->app.workflows) {
      for (const auto& t : wf.tasks) {
        if (auto d = effective_deadline(world_->app, wf, t)) {
          world_->sim.schedule(*d, world_->broker, world_->broker, kBrokerDeadline, TaskRef{wf.workflow_id, t.id});
        }
      }
    }
  }

  // Tasks left blocked by a dropped input are reported as killed.
  void finalize(SimTime now) {
    for (const auto& [ref, rec] : world_->book->all()) {
      if (rec.missing_input && !is_terminal(rec.status) && rec.status != TaskStatus::Completed) {
        world_->book->terminate(ref, now, TaskStatus::Killed, "missing-input");
      }
    }
  }

  const SchedulingPolicy& scheduler() const { return *scheduler_; }
  const ProvisioningPolicy& provisioner() const { return *provisioner_; }

  std::vector<VmView> vm_views() const {
    std::vector<VmView> out;
    for (const auto& [id, v] : vms_) {
      out.push_back({id, v.device, v.running, v.dynamic, v.spec.mips, v.spec.pes, v.spec.scheduler, v.assigned,
                     v.outstanding});
    }
    return out;
  }

  void process(Simulation& sim, const SimEvent& ev) override {
    const SimTime now = sim.now();
    switch (ev.tag) {
      case kBrokerReady: {
        ready_.push_back(std::any_cast<const TaskRef&>(ev.payload));
        request_cycle();
        break;
      }
      case kBrokerReactivate: {
        const auto& ref = std::any_cast<const TaskRef&>(ev.payload);
        if (world_->book->terminal(ref)) break;
        world_->book->ready(ref, now, "broker");
        ready_.push_back(ref);
        request_cycle();
        break;
      }
      case kBrokerCycle:
        cycle_pending_ = false;
        cycle(now);
        break;
      case kBrokerTimer:
        timer_pending_ = false;
        cycle(now);
        break;
      case kBrokerDeadline:
        on_deadline(std::any_cast<const TaskRef&>(ev.payload), now);
        break;
      case kBrokerControl: {
        const auto& delivery = std::any_cast<const Delivery&>(ev.payload);
        on_control(std::any_cast<const ControlMsg&>(delivery.packet.payload), now);
        break;
      }
      default:
        break;
    }
  }

 private:
  struct VmInfo {
    VmSpec spec;
    DeviceId device = 0;
    bool running = false;
    bool dynamic = false;
    int assigned = 0;
    double outstanding = 0.0;
  };
  struct Output {
    DeviceId device = 0;
    std::set<std::string> files;
  };
  struct Active {
    VmId vm = 0;
    int execution = 0;
  };

  void request_cycle() {
    if (cycle_pending_) return;
    cycle_pending_ = true;
    world_->sim.schedule(world_->sim.now(), world_->broker, world_->broker, kBrokerCycle);
  }

  // Producing device of each input that must be staged, or nullopt when local.
  std::vector<InputSource> input_sources(const Task& task) const {
    const Workflow& wf = *world_->app.find_workflow(task.workflow_id);
    std::vector<InputSource> out;
    for (const auto& f : task.inputs) {
      InputSource src{std::nullopt, f.size};
      if (auto p = producer_of(wf, task, f.name)) {
        auto it = outputs_.find(TaskRef{wf.workflow_id, *p});
        if (it != outputs_.end()) src.device = it->second.device;
      } else {
        src.device = world_->options.data_origin_device;
      }
      out.push_back(src);
    }
    return out;
  }

  static std::optional<int> producer_of(const Workflow& wf, const Task& task, const std::string& file) {
    for (int p : task.parents) {
      for (const auto& out : wf.task(p).outputs) {
        if (out.name == file) return p;
      }
    }
    return std::nullopt;
  }

  void cycle(SimTime now) {
    std::erase_if(ready_, [&](const TaskRef& r) { return world_->book->terminal(r); });

    std::vector<ReadyTaskView> views;
    for (const auto& ref : ready_) {
      const Task& t = world_->task(ref);
      views.push_back({ref, t.runtime, t.pes, world_->book->at(ref).ready_time.value_or(now), input_sources(t)});
    }
    auto vm_list = vm_views();
    std::vector<Assignment> decisions;
    if (!views.empty()) decisions = scheduler_->decide(views, vm_list, NetworkView(*world_->network), now);

    std::set<TaskRef> taken;
    for (const auto& a : decisions) {
      auto pos = std::find(ready_.begin(), ready_.end(), a.task);
      auto vm = vms_.find(a.vm);
      std::string problem;
      if (pos == ready_.end() || taken.count(a.task)) {
        problem = "task not ready";
      } else if (vm == vms_.end()) {
        problem = "unknown vm";
      } else if (!vm->second.running) {
        problem = "vm not running";
      } else if (vm->second.spec.pes < world_->task(a.task).pes) {
        problem = "vm has too few pes";
      }
      if (!problem.empty()) {
        world_->trace.emit(now, "broker", "policy_error", a.task.str(),
                           Detail().add("vm", a.vm).add("reason", problem).str());
        continue;
      }
      taken.insert(a.task);
      dispatch(a.task, vm->second, now);
    }
    std::erase_if(ready_, [&](const TaskRef& r) { return taken.count(r) > 0; });

    provision(now);

    if (world_->options.schedule_interval_s && !ready_.empty() && !timer_pending_) {
      const SimTime next = now + *world_->options.schedule_interval_s;
      if (!world_->options.horizon || next <= *world_->options.horizon) {
        timer_pending_ = true;
        world_->sim.schedule(next, world_->broker, world_->broker, kBrokerTimer);
      }
    }
  }

  void dispatch(const TaskRef& ref, VmInfo& vm, SimTime now) {
    const Task& task = world_->task(ref);
    const int execution = world_->book->at(ref).executions;
    world_->book->scheduled(ref, now, vm.spec.id, execution);

    std::vector<std::pair<DataFile, DeviceId>> staged;
    auto sources = input_sources(task);
    for (std::size_t i = 0; i < task.inputs.size(); ++i) {
      if (sources[i].device && *sources[i].device != vm.device) staged.emplace_back(task.inputs[i], *sources[i].device);
    }
    world_->book->transferring(ref, now, static_cast<int>(staged.size()));
    world_->send_control(world_->broker_device, vm.device, world_->device_entities.at(vm.device), kDeviceControl,
                         DispatchMsg{ref, execution, vm.spec.id, task.runtime, task.pes, static_cast<int>(staged.size())},
                         "dispatch:" + ref.str());
    for (const auto& [file, from] : staged) {
      world_->book->transfer_start(ref, now, file, from, vm.device);
      send_file(ref, execution, file, from, vm.device, false);
    }
    ++vm.assigned;
    vm.outstanding += task.runtime;
    active_[ref] = Active{vm.spec.id, execution};
  }

  void send_file(const TaskRef& consumer, int execution, const DataFile& file, DeviceId from, DeviceId to,
                 bool redelivery) {
    Packet p;
    p.size_mb = file.size;
    p.origin = from;
    p.final_destination = to;
    p.deliver_to = world_->device_entities.at(to);
    p.deliver_tag = kDeviceFile;
    p.label = "file:" + file.name;
    p.payload = FileMsg{consumer, execution, file, redelivery};
    world_->network->send(world_->sim, std::move(p), world_->sim.now());
  }

  void release_vm_slot(const TaskRef& ref) {
    auto it = active_.find(ref);
    if (it == active_.end()) return;
    auto vm = vms_.find(it->second.vm);
    if (vm != vms_.end()) {
      --vm->second.assigned;
      vm->second.outstanding -= world_->task(ref).runtime;
      if (vm->second.assigned == 0) vm->second.outstanding = 0.0;
    }
    active_.erase(it);
  }

  void on_control(const ControlMsg& msg, SimTime now) {
    if (const auto* done = std::get_if<DoneMsg>(&msg)) {
      on_done(*done, now);
    } else if (const auto* aborted = std::get_if<AbortedMsg>(&msg)) {
      release_vm_slot(aborted->task);
      request_cycle();
    } else if (const auto* ready = std::get_if<VmReadyMsg>(&msg)) {
      if (auto it = vms_.find(ready->vm); it != vms_.end()) it->second.running = true;
      request_cycle();
    } else if (const auto* gone = std::get_if<VmGoneMsg>(&msg)) {
      vms_.erase(gone->vm);
      destroying_.erase(gone->vm);
    } else if (const auto* failed = std::get_if<VmFailedMsg>(&msg)) {
      world_->trace.emit(now, "broker", "provisioning_error", "vm:" + std::to_string(failed->vm),
                         Detail().add("reason", failed->reason).str());
      if (failed->on_create) {
        vms_.erase(failed->vm);
      } else {
        destroying_.erase(failed->vm);
        if (auto it = vms_.find(failed->vm); it != vms_.end()) it->second.running = true;
      }
    }
  }

  void on_done(const DoneMsg& done, SimTime now) {
    auto active = active_.find(done.task);
    const bool current = active != active_.end() && active->second.execution == done.execution;
    if (current) release_vm_slot(done.task);
    if (!current || world_->book->terminal(done.task)) {
      request_cycle();
      return;
    }
    const Task& task = world_->task(done.task);
    const Workflow& wf = *world_->app.find_workflow(done.task.workflow);
    auto emitted = apply_selectivity(task, world_->options.seed, static_cast<std::uint64_t>(done.execution));
    Output out{vms_.count(done.vm) ? vms_.at(done.vm).device : world_->broker_device, {}};
    for (const auto& f : emitted) out.files.insert(f.name);
    outputs_[done.task] = out;
    world_->book->completed(done.task, now, emitted.size());
    const int executions = world_->book->at(done.task).executions;

    if (executions == 1) {
      for (int child : task.children) {
        const Task& c = wf.task(child);
        for (const auto& f : c.inputs) {
          if (producer_of(wf, c, f.name) == task.id && !out.files.count(f.name)) {
            world_->book->mark_missing_input(TaskRef{wf.workflow_id, child}, now, f.name);
          }
        }
      }
      world_->sim.schedule(now, world_->broker, world_->engine, kEngineCompleted, done.task);
    } else {
      // Periodic re-run: push fresh outputs to children that already have a VM.
      for (int child : task.children) {
        TaskRef cref{wf.workflow_id, child};
        const auto& crec = world_->book->at(cref);
        if (!crec.assigned_vm || !vms_.count(*crec.assigned_vm)) continue;
        const DeviceId to = vms_.at(*crec.assigned_vm).device;
        for (const auto& f : wf.task(child).inputs) {
          if (out.files.count(f.name) && producer_of(wf, wf.task(child), f.name) == task.id && to != out.device) {
            world_->trace.emit(now, "broker", "redeliver", cref.str(),
                               Detail().add("file", f.name).add("from", out.device).add("to", to).str());
            send_file(cref, crec.executions, f, out.device, to, true);
          }
        }
      }
    }
    if (auto next = next_activation(task, now, executions, world_->options.horizon)) {
      world_->sim.schedule(*next, world_->broker, world_->broker, kBrokerReactivate, done.task);
    }
    request_cycle();
  }

  void kill(const TaskRef& ref, SimTime now, TaskStatus status, const std::string& reason) {
    std::erase(ready_, ref);
    if (auto it = active_.find(ref); it != active_.end()) {
      const VmId vm = it->second.vm;
      const int execution = it->second.execution;
      if (auto v = vms_.find(vm); v != vms_.end()) {
        world_->send_control(world_->broker_device, v->second.device, world_->device_entities.at(v->second.device),
                             kDeviceControl, KillMsg{ref, execution}, "kill:" + ref.str());
      }
      release_vm_slot(ref);
    }
    world_->book->terminate(ref, now, status, reason);
  }

  void on_deadline(const TaskRef& ref, SimTime now) {
    const auto& rec = world_->book->at(ref);
    if (rec.executions > 0 || rec.exec_end || is_terminal(rec.status)) return;
    switch (world_->options.deadline_policy) {
      case DeadlinePolicy::Continue:
        world_->book->flag_deadline(ref, now);
        break;
      case DeadlinePolicy::Kill:
        kill(ref, now, TaskStatus::DeadlineMissed, "deadline");
        break;
      case DeadlinePolicy::DropDescendants: {
        kill(ref, now, TaskStatus::DeadlineMissed, "deadline");
        const Workflow& wf = *world_->app.find_workflow(ref.workflow);
        std::vector<int> stack = wf.task(ref.task).children;
        std::set<int> seen;
        while (!stack.empty()) {
          int id = stack.back();
          stack.pop_back();
          if (!seen.insert(id).second) continue;
          TaskRef d{wf.workflow_id, id};
          const auto& drec = world_->book->at(d);
          if (drec.status != TaskStatus::Completed && !is_terminal(drec.status)) {
            kill(d, now, TaskStatus::Killed, "ancestor-deadline");
          }
          for (int c : wf.task(id).children) stack.push_back(c);
        }
        request_cycle();
        break;
      }
    }
  }

  void provision(SimTime now) {
    std::vector<DeviceView> devices;
    for (const auto& [id, dev] : world_->devices) {
      FogDevice* d = dev;
      devices.push_back({id, [d](const VmSpec& vm) { return d->can_host(vm); }});
    }
    auto vm_list = vm_views();
    std::erase_if(vm_list, [&](const VmView& v) { return destroying_.count(v.id) > 0; });
    ProvisioningView view{now, ready_.size(), vm_list, devices, next_vm_id_};
    for (auto& d : provisioner_->decide(view)) {
      if (d.op == ProvisioningDirective::Op::Create) {
        if (vms_.count(d.vm.id) || !world_->device_entities.count(d.device)) {
          world_->trace.emit(now, "broker", "provisioning_error", "vm:" + std::to_string(d.vm.id),
                             Detail().add("reason", "invalid create directive").str());
          continue;
        }
        d.vm.device = d.device;
        add_vm(d.vm, d.device, false, true);
        world_->trace.emit(now, "broker", "vm_create", "vm:" + std::to_string(d.vm.id),
                           Detail().add("device", d.device).str());
        world_->send_control(world_->broker_device, d.device, world_->device_entities.at(d.device), kDeviceControl,
                             CreateVmMsg{d.vm}, "create_vm");
      } else {
        auto it = vms_.find(d.vm_id);
        if (it == vms_.end() || destroying_.count(d.vm_id)) continue;
        it->second.running = false;  // no new work while the request is in flight
        destroying_.insert(d.vm_id);
        world_->trace.emit(now, "broker", "vm_destroy", "vm:" + std::to_string(d.vm_id));
        world_->send_control(world_->broker_device, it->second.device, world_->device_entities.at(it->second.device),
                             kDeviceControl, DestroyVmMsg{d.vm_id, d.force}, "destroy_vm");
      }
    }
  }

  World* world_;
  std::unique_ptr<SchedulingPolicy> scheduler_;
  std::unique_ptr<ProvisioningPolicy> provisioner_;
  std::vector<TaskRef> ready_;
  std::map<VmId, VmInfo> vms_;
  std::set<VmId> destroying_;
  std::map<TaskRef, Output> outputs_;
  std::map<TaskRef, Active> active_;
  VmId next_vm_id_ = 0;
  bool cycle_pending_ = false;
  bool timer_pending_ = false;
};

// ---------------------------------------------------------------------------
// Simulator: builds and owns every entity of one simulation instance.

class Simulator {
 public:
  // `app` must already be linked and validated.
  Simulator(Application app, const Infrastructure& infra, SimulationOptions options,
            std::unique_ptr<SchedulingPolicy> scheduler = nullptr,
            std::unique_ptr<ProvisioningPolicy> provisioner = nullptr) {
    world_.app = std::move(app);
    world_.options = options;
    if (infra.devices.empty()) throw Error(Errc::ValidationError, "orchestration", "topology has no devices");
    check_options(infra);

    Topology topo = infra.topology();
    RoutingTable routes = build_routing_tables(topo, infra.routes);
    world_.network = std::make_unique<Network>(std::move(topo), std::move(routes), &world_.trace);
    world_.book = std::make_unique<RecordBook>(world_.trace, world_.app);
    world_.broker_device = options.broker_device.value_or(world_.network->topology().devices().front());

    task_manager_ = std::make_unique<TaskManager>(world_);
    engine_ = std::make_unique<WorkflowEngine>(world_);
    broker_ = std::make_unique<FogBroker>(world_, std::move(scheduler), std::move(provisioner));

    world_.network->attach(world_.sim);
    world_.task_manager = world_.sim.register_entity(*task_manager_);
    world_.engine = world_.sim.register_entity(*engine_);
    world_.broker = world_.sim.register_entity(*broker_);

    auto sorted = infra.devices;
    std::sort(sorted.begin(), sorted.end(), [](const DeviceSpec& a, const DeviceSpec& b) { return a.id < b.id; });
    for (const auto& d : sorted) {
      auto dev = std::make_unique<FogDevice>(world_, d.id, d.hosts);
      dev->bind(world_.sim.register_entity(*dev));
      world_.devices[d.id] = dev.get();
      world_.device_entities[d.id] = dev->entity();
      devices_.push_back(std::move(dev));
    }
    place_static_vms(infra.vms);
  }

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  SimTime run() {
    task_manager_->start();
    broker_->start();
    SimTime end = world_.sim.run(world_.options.horizon);
    broker_->finalize(end);
    return end;
  }

  const TraceSink& trace() const noexcept { return world_.trace; }
  const RecordBook& records() const noexcept { return *world_.book; }
  const Network& network() const noexcept { return *world_.network; }
  const Application& application() const noexcept { return world_.app; }
  const Simulation& kernel() const noexcept { return world_.sim; }
  Simulation& kernel() noexcept { return world_.sim; }
  const FogBroker& broker() const noexcept { return *broker_; }
  const FogDevice& device(DeviceId id) const { return *world_.devices.at(id); }
  FogDevice& device(DeviceId id) { return *world_.devices.at(id); }
  DeviceId broker_device() const noexcept { return world_.broker_device; }

 private:
  void check_options(const Infrastructure& infra) {
    std::set<DeviceId> ids;
    for (const auto& d : infra.devices) ids.insert(d.id);
    const auto& o = world_.options;
    if (o.broker_device && !ids.count(*o.broker_device)) {
      throw Error(Errc::DanglingReference, "orchestration", "broker_device " + std::to_string(*o.broker_device));
    }
    if (o.data_origin_device && !ids.count(*o.data_origin_device)) {
      throw Error(Errc::DanglingReference, "orchestration",
                  "data_origin_device " + std::to_string(*o.data_origin_device));
    }
    if (o.horizon && !(*o.horizon >= 0.0)) throw Error(Errc::ValidationError, "orchestration", "horizon must be >= 0");
    if (!(o.control_message_mb >= 0.0) || !(o.vm_boot_delay_s >= 0.0)) {
      throw Error(Errc::ValidationError, "orchestration", "control_message_mb and vm_boot_delay_s must be >= 0");
    }
    if (o.schedule_interval_s && !(*o.schedule_interval_s > 0.0)) {
      throw Error(Errc::ValidationError, "orchestration", "schedule interval must be > 0");
    }
    for (const auto& wf : world_.app.workflows) {
      for (const auto& t : wf.tasks) {
        if (t.execution.kind == ExecutionModel::Kind::Periodic && !t.execution.repetitions && !o.horizon) {
          throw Error(Errc::ValidationError, "orchestration",
                      wf.workflow_id + "/" + std::to_string(t.id) + ": unbounded periodic task needs a horizon");
        }
      }
    }
  }

  void place_static_vms(const std::vector<VmSpec>& vms) {
    std::set<VmId> seen;
    for (const auto& vm : vms) {
      if (!seen.insert(vm.id).second) throw Error(Errc::DuplicateId, "orchestration", "duplicate vm id " + std::to_string(vm.id));
      check_vm_spec(vm);
      DeviceId target;
      if (vm.device) {
        if (!world_.devices.count(*vm.device)) {
          throw Error(Errc::DanglingReference, "orchestration",
                      "vm " + std::to_string(vm.id) + " names unknown device " + std::to_string(*vm.device));
        }
        target = *vm.device;
      } else {
        auto it = std::find_if(world_.devices.begin(), world_.devices.end(),
                               [&](const auto& d) { return d.second->can_host(vm); });
        if (it == world_.devices.end()) {
          throw Error(Errc::InsufficientCapacity, "compute", "no device can host vm " + std::to_string(vm.id));
        }
        target = it->first;
      }
      world_.devices.at(target)->create_vm(vm, 0.0, 0.0, false);
      broker_->add_vm(vm, target, true, false);
    }
  }

  World world_;
  std::unique_ptr<TaskManager> task_manager_;
  std::unique_ptr<WorkflowEngine> engine_;
  std::unique_ptr<FogBroker> broker_;
  std::vector<std::unique_ptr<FogDevice>> devices_;
};

}  // namespace widesim
