#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "widesim/compute.hpp"
#include "widesim/error.hpp"
#include "widesim/network.hpp"
#include "widesim/workflow.hpp"

namespace widesim {

// What a policy may know about one VM.
struct VmView {
  VmId id = 0;
  DeviceId device = 0;
  bool running = false;
  bool dynamic = false;
  double mips = 0.0;  // per PE
  int pes = 1;
  SchedulerKind scheduler = SchedulerKind::TimeShared;
  int assigned = 0;             // tasks assigned and not yet finished
  double outstanding_mi = 0.0;  // their total length
};

struct InputSource {
  std::optional<DeviceId> device;  // nullopt: resident wherever the task runs
  double size = 0.0;
};

struct ReadyTaskView {
  TaskRef ref;
  double runtime = 0.0;
  int pes = 1;
  SimTime ready_time = 0.0;
  std::vector<InputSource> inputs;
};

// Read access to routing. A policy can restrict itself to part of the graph
// through `neighbors` and `hops`.
class NetworkView {
 public:
  explicit NetworkView(const Network& net) : net_(&net) {}
  SimTime transfer_estimate(DeviceId from, DeviceId to, double size) const {
    return from == to ? 0.0 : net_->estimate_transfer(from, to, size);
  }
  std::vector<DeviceId> neighbors(DeviceId d) const { return net_->topology().neighbors(d); }
  std::size_t hops(DeviceId from, DeviceId to) const { return from == to ? 0 : net_->routes().path(from, to).size(); }

 private:
  const Network* net_;
};

struct Assignment {
  TaskRef task;
  VmId vm = 0;
  friend bool operator==(const Assignment&, const Assignment&) = default;
};

class SchedulingPolicy {
 public:
  virtual ~SchedulingPolicy() = default;
  virtual std::string_view name() const = 0;
  // May leave tasks unassigned; they are offered again on the next cycle.
  virtual std::vector<Assignment> decide(std::span<const ReadyTaskView> ready, std::span<const VmView> vms,
                                         const NetworkView& network, SimTime now) = 0;
};

// Optional candidate restriction shared by the built-in policies:
// workflow id -> allowed VM ids, and "workflow/task" -> one VM.
struct Affinity {
  std::map<std::string, std::vector<VmId>> workflow_vms;
  std::map<std::string, VmId> task_vm;

  bool allows(const TaskRef& t, VmId vm) const {
    if (auto it = task_vm.find(t.str()); it != task_vm.end()) return it->second == vm;
    if (auto it = workflow_vms.find(t.workflow); it != workflow_vms.end()) {
      return std::find(it->second.begin(), it->second.end(), vm) != it->second.end();
    }
    return true;
  }
};

class RoundRobinPolicy : public SchedulingPolicy {
 public:
  explicit RoundRobinPolicy(Affinity affinity = {}) : affinity_(std::move(affinity)) {}
  std::string_view name() const override { return "round_robin"; }

  std::vector<Assignment> decide(std::span<const ReadyTaskView> ready, std::span<const VmView> vms, const NetworkView&,
                                 SimTime) override {
    std::vector<Assignment> out;
    std::vector<VmId> ids;
    for (const auto& v : vms) {
      if (v.running) ids.push_back(v.id);
    }
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) return out;
    for (const auto& t : ready) {
      // First allowed VM strictly after the last one this workflow used,
      // wrapping around.
      auto& last = last_.try_emplace(t.ref.workflow, std::numeric_limits<VmId>::min()).first->second;
      auto start = std::upper_bound(ids.begin(), ids.end(), last);
      for (std::size_t k = 0; k < ids.size(); ++k) {
        auto idx = (static_cast<std::size_t>(start - ids.begin()) + k) % ids.size();
        VmId vm = ids[idx];
        const auto& view = *std::find_if(vms.begin(), vms.end(), [&](const VmView& v) { return v.id == vm; });
        if (view.pes < t.pes || !affinity_.allows(t.ref, vm)) continue;
        out.push_back({t.ref, vm});
        last = vm;
        break;
      }
    }
    return out;
  }

 private:
  Affinity affinity_;
  std::map<std::string, VmId> last_;
};

namespace detail {

inline SimTime estimated_finish(const ReadyTaskView& t, const VmView& v, double backlog_mi, const NetworkView& net,
                                SimTime now) {
  SimTime staging = 0.0;
  for (const auto& in : t.inputs) {
    if (in.device) staging = std::max(staging, net.transfer_estimate(*in.device, v.device, in.size));
  }
  const double capacity = v.mips * v.pes;
  const SimTime available = now + backlog_mi / capacity;
  const double speed = v.mips * std::min(t.pes, v.pes);
  return std::max(available, now + staging) + t.runtime / speed;
}

}  // namespace detail

// Each task, in ready order, goes to the VM with the earliest estimated finish.
class EarliestFinishPolicy : public SchedulingPolicy {
 public:
  explicit EarliestFinishPolicy(Affinity affinity = {}) : affinity_(std::move(affinity)) {}
  std::string_view name() const override { return "earliest_finish"; }

  std::vector<Assignment> decide(std::span<const ReadyTaskView> ready, std::span<const VmView> vms,
                                 const NetworkView& net, SimTime now) override {
    std::vector<Assignment> out;
    std::map<VmId, double> backlog;
    for (const auto& v : vms) backlog[v.id] = v.outstanding_mi;
    for (const auto& t : ready) {
      const VmView* best = nullptr;
      SimTime best_finish = std::numeric_limits<SimTime>::infinity();
      for (const auto& v : vms) {
        if (!v.running || v.pes < t.pes || !affinity_.allows(t.ref, v.id)) continue;
        SimTime f = detail::estimated_finish(t, v, backlog[v.id], net, now);
        if (f < best_finish) {
          best_finish = f;
          best = &v;
        }
      }
      if (!best) continue;
      backlog[best->id] += t.runtime;
      out.push_back({t.ref, best->id});
    }
    return out;
  }

 private:
  Affinity affinity_;
};

// Min-min over the current ready batch.
class MinMinPolicy : public SchedulingPolicy {
 public:
  explicit MinMinPolicy(Affinity affinity = {}) : affinity_(std::move(affinity)) {}
  std::string_view name() const override { return "min_min"; }

  std::vector<Assignment> decide(std::span<const ReadyTaskView> ready, std::span<const VmView> vms,
                                 const NetworkView& net, SimTime now) override {
    std::vector<Assignment> out;
    std::map<VmId, double> backlog;
    for (const auto& v : vms) backlog[v.id] = v.outstanding_mi;
    std::vector<bool> done(ready.size(), false);
    while (true) {
      std::size_t best_task = ready.size();
      const VmView* best_vm = nullptr;
      SimTime best = std::numeric_limits<SimTime>::infinity();
      for (std::size_t i = 0; i < ready.size(); ++i) {
        if (done[i]) continue;
        for (const auto& v : vms) {
          if (!v.running || v.pes < ready[i].pes || !affinity_.allows(ready[i].ref, v.id)) continue;
          SimTime f = detail::estimated_finish(ready[i], v, backlog[v.id], net, now);
          if (f < best) {
            best = f;
            best_task = i;
            best_vm = &v;
          }
        }
      }
      if (!best_vm) break;
      done[best_task] = true;
      backlog[best_vm->id] += ready[best_task].runtime;
      out.push_back({ready[best_task].ref, best_vm->id});
    }
    return out;
  }

 private:
  Affinity affinity_;
};

// Capacity of one device, for provisioning decisions.
struct DeviceView {
  DeviceId id = 0;
  std::function<bool(const VmSpec&)> can_host;
};

struct ProvisioningView {
  SimTime now = 0.0;
  std::size_t unassigned_ready = 0;  // ready tasks the scheduler could not place
  std::span<const VmView> vms;
  std::span<const DeviceView> devices;
  VmId next_vm_id = 0;
};

struct ProvisioningDirective {
  enum class Op { Create, Destroy };
  Op op = Op::Create;
  VmSpec vm;  // Create
  DeviceId device = 0;
  VmId vm_id = 0;  // Destroy
  bool force = false;
};

class ProvisioningPolicy {
 public:
  virtual ~ProvisioningPolicy() = default;
  virtual std::string_view name() const = 0;
  virtual std::vector<ProvisioningDirective> decide(const ProvisioningView& view) = 0;
};

// Never changes the VM set.
class StaticProvisioning : public ProvisioningPolicy {
 public:
  std::string_view name() const override { return "static"; }
  std::vector<ProvisioningDirective> decide(const ProvisioningView&) override { return {}; }
};

// Creates VMs from a template while ready tasks go unplaced, and destroys
// idle dynamic VMs once demand is gone.
class ElasticProvisioning : public ProvisioningPolicy {
 public:
  ElasticProvisioning(VmSpec templ, std::size_t max_dynamic, std::optional<DeviceId> device = std::nullopt)
      : template_(std::move(templ)), max_dynamic_(max_dynamic), device_(device) {}

  std::string_view name() const override { return "elastic"; }

  std::vector<ProvisioningDirective> decide(const ProvisioningView& view) override {
    std::vector<ProvisioningDirective> out;
    std::size_t dynamic = 0, idle = 0, booting = 0;
    for (const auto& v : view.vms) {
      if (v.dynamic) ++dynamic;
      if (v.running && v.assigned == 0) ++idle;
      if (!v.running) ++booting;
    }
    std::size_t shortfall = view.unassigned_ready > idle + booting ? view.unassigned_ready - idle - booting : 0;
    VmId next = view.next_vm_id;
    std::vector<std::size_t> planned(view.devices.size(), 0);
    while (shortfall > 0 && dynamic < max_dynamic_) {
      VmSpec vm = template_;
      vm.id = next;
      vm.device.reset();
      const DeviceView* target = nullptr;
      for (const auto& d : view.devices) {
        if (device_ && d.id != *device_) continue;
        // One new VM per device per decision keeps the capacity check exact.
        if (planned[static_cast<std::size_t>(&d - view.devices.data())] == 0 && d.can_host(vm)) {
          target = &d;
          break;
        }
      }
      if (!target) break;
      ++planned[static_cast<std::size_t>(target - view.devices.data())];
      out.push_back({ProvisioningDirective::Op::Create, vm, target->id, 0, false});
      ++next;
      ++dynamic;
      --shortfall;
    }
    if (view.unassigned_ready == 0) {
      for (const auto& v : view.vms) {
        if (v.dynamic && v.running && v.assigned == 0) {
          out.push_back({ProvisioningDirective::Op::Destroy, {}, v.device, v.id, false});
        }
      }
    }
    return out;
  }

 private:
  VmSpec template_;
  std::size_t max_dynamic_;
  std::optional<DeviceId> device_;
};

}  // namespace widesim
