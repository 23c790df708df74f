#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "widesim/des.hpp"
#include "widesim/error.hpp"
#include "widesim/network.hpp"

namespace widesim {

using HostId = int;
using VmId = int;

enum class SchedulerKind { TimeShared, SpaceShared };

inline std::string_view scheduler_kind_name(SchedulerKind k) {
  return k == SchedulerKind::TimeShared ? "time-shared" : "space-shared";
}

// Equivalent CloudSim class names.
inline std::string_view scheduler_class_name(SchedulerKind k) {
  return k == SchedulerKind::TimeShared ? "CloudletSchedulerTimeShared" : "CloudletSchedulerSpaceShared";
}
inline constexpr std::string_view kVmAllocationPolicyName = "VmAllocationPolicySimple";

struct PeSpec {
  double mips = 0.0;
  std::optional<int> id;
  friend bool operator==(const PeSpec&, const PeSpec&) = default;
};

struct HostSpec {
  HostId id = 0;
  std::vector<PeSpec> pes;
  double ram = 0.0;      // MB
  double bw = 0.0;       // MB/s
  double storage = 0.0;  // MB

  int pe_count() const noexcept { return static_cast<int>(pes.size()); }
  double total_mips() const {
    double sum = 0.0;
    for (const auto& pe : pes) sum += pe.mips;
    return sum;
  }
  friend bool operator==(const HostSpec&, const HostSpec&) = default;
};

struct VmSpec {
  VmId id = 0;
  double mips = 0.0;  // per PE
  int pes = 1;
  double ram = 0.0;
  double bw = 0.0;
  double size = 0.0;  // image size, MB
  std::optional<DeviceId> device;
  std::optional<HostId> host;
  SchedulerKind scheduler = SchedulerKind::TimeShared;

  double total_mips() const noexcept { return mips * pes; }
  friend bool operator==(const VmSpec&, const VmSpec&) = default;
};

inline void check_vm_spec(const VmSpec& vm) {
  if (!(vm.mips > 0.0)) throw Error(Errc::ValidationError, "compute", "vm " + std::to_string(vm.id) + ": mips must be > 0");
  if (vm.pes < 1) throw Error(Errc::ValidationError, "compute", "vm " + std::to_string(vm.id) + ": pes must be >= 1");
  if (vm.ram < 0 || vm.bw < 0 || vm.size < 0) {
    throw Error(Errc::ValidationError, "compute", "vm " + std::to_string(vm.id) + ": negative resource");
  }
}

inline void check_host_spec(const HostSpec& h) {
  if (h.pes.empty()) throw Error(Errc::ValidationError, "compute", "host " + std::to_string(h.id) + ": needs >= 1 pe");
  for (const auto& pe : h.pes) {
    if (!(pe.mips > 0.0)) throw Error(Errc::ValidationError, "compute", "host " + std::to_string(h.id) + ": pe mips must be > 0");
  }
  if (h.ram < 0 || h.bw < 0 || h.storage < 0) {
    throw Error(Errc::ValidationError, "compute", "host " + std::to_string(h.id) + ": negative resource");
  }
}

// Capacity-tracking host. PE, RAM and bandwidth provisioning all follow the
// "grant iff remaining capacity suffices" rule; a VM PE takes `vm.mips` from
// one physical PE.
class Host {
 public:
  explicit Host(HostSpec spec) : spec_(std::move(spec)) {
    check_host_spec(spec_);
    for (const auto& pe : spec_.pes) pe_free_.push_back(pe.mips);
    ram_free_ = spec_.ram;
    bw_free_ = spec_.bw;
    storage_free_ = spec_.storage;
  }

  // Name of the first resource that cannot satisfy `vm`, if any.
  std::optional<std::string> fit_failure(const VmSpec& vm) const {
    if (spec_.pe_count() < vm.pes) return "pe";
    auto capable = std::count_if(spec_.pes.begin(), spec_.pes.end(), [&](const PeSpec& p) { return p.mips >= vm.mips; });
    if (capable < vm.pes) return "mips";
    auto free = std::count_if(pe_free_.begin(), pe_free_.end(), [&](double m) { return m >= vm.mips; });
    if (free < vm.pes) return "pe";
    if (ram_free_ < vm.ram) return "ram";
    if (bw_free_ < vm.bw) return "bw";
    if (storage_free_ < vm.size) return "storage";
    return std::nullopt;
  }

  void allocate(const VmSpec& vm) {
    if (auto why = fit_failure(vm)) {
      throw Error(Errc::InsufficientCapacity, "compute",
                  "vm " + std::to_string(vm.id) + " on host " + std::to_string(spec_.id) + ": " + *why);
    }
    std::vector<std::size_t> taken;
    for (std::size_t i = 0; i < pe_free_.size() && static_cast<int>(taken.size()) < vm.pes; ++i) {
      if (pe_free_[i] >= vm.mips) {
        pe_free_[i] -= vm.mips;
        taken.push_back(i);
      }
    }
    ram_free_ -= vm.ram;
    bw_free_ -= vm.bw;
    storage_free_ -= vm.size;
    allocations_[vm.id] = Allocation{vm, std::move(taken)};
  }

  void release(VmId id) {
    auto it = allocations_.find(id);
    if (it == allocations_.end()) return;
    const auto& a = it->second;
    for (std::size_t pe : a.pes) pe_free_[pe] += a.vm.mips;
    ram_free_ += a.vm.ram;
    bw_free_ += a.vm.bw;
    storage_free_ += a.vm.size;
    allocations_.erase(it);
  }

  const HostSpec& spec() const noexcept { return spec_; }
  HostId id() const noexcept { return spec_.id; }
  double ram_free() const noexcept { return ram_free_; }
  double bw_free() const noexcept { return bw_free_; }
  double storage_free() const noexcept { return storage_free_; }
  const std::vector<double>& pe_free_mips() const noexcept { return pe_free_; }
  int free_pes(double mips) const {
    return static_cast<int>(std::count_if(pe_free_.begin(), pe_free_.end(), [&](double m) { return m >= mips; }));
  }
  std::size_t vm_count() const noexcept { return allocations_.size(); }
  bool hosts(VmId id) const { return allocations_.count(id) > 0; }

 private:
  struct Allocation {
    VmSpec vm;
    std::vector<std::size_t> pes;
  };

  HostSpec spec_;
  std::vector<double> pe_free_;
  double ram_free_ = 0.0;
  double bw_free_ = 0.0;
  double storage_free_ = 0.0;
  std::map<VmId, Allocation> allocations_;
};

// Hosts of one fog device with first-fit VM placement.
class DeviceResources {
 public:
  DeviceResources() = default;
  explicit DeviceResources(std::vector<HostSpec> hosts) {
    std::sort(hosts.begin(), hosts.end(), [](const HostSpec& a, const HostSpec& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < hosts.size(); ++i) {
      if (hosts[i].id == hosts[i - 1].id) {
        throw Error(Errc::DuplicateId, "compute", "duplicate host id " + std::to_string(hosts[i].id));
      }
    }
    for (auto& h : hosts) hosts_.emplace_back(std::move(h));
  }

  // Binds the VM to the first host (ascending id) with enough free PEs, MIPS,
  // RAM, bandwidth and storage, or to its pinned host.
  HostId allocate_vm(const VmSpec& vm) {
    check_vm_spec(vm);
    if (hosts_.empty()) throw Error(Errc::InsufficientCapacity, "compute", "vm " + std::to_string(vm.id) + ": device has no hosts");
    std::string reasons;
    for (auto& h : hosts_) {
      if (vm.host && h.id() != *vm.host) continue;
      auto why = h.fit_failure(vm);
      if (!why) {
        h.allocate(vm);
        placement_[vm.id] = h.id();
        return h.id();
      }
      if (!reasons.empty()) reasons += ", ";
      reasons += "host " + std::to_string(h.id()) + ": " + *why;
    }
    if (reasons.empty()) reasons = "pinned host " + std::to_string(*vm.host) + " not found";
    throw Error(Errc::InsufficientCapacity, "compute", "vm " + std::to_string(vm.id) + " (" + reasons + ")");
  }

  void release_vm(VmId id) {
    auto it = placement_.find(id);
    if (it == placement_.end()) return;
    for (auto& h : hosts_) {
      if (h.id() == it->second) h.release(id);
    }
    placement_.erase(it);
  }

  bool can_host(const VmSpec& vm) const {
    return std::any_of(hosts_.begin(), hosts_.end(), [&](const Host& h) {
      return (!vm.host || h.id() == *vm.host) && !h.fit_failure(vm);
    });
  }

  std::optional<HostId> host_of(VmId id) const {
    auto it = placement_.find(id);
    if (it == placement_.end()) return std::nullopt;
    return it->second;
  }

  const std::vector<Host>& hosts() const noexcept { return hosts_; }

 private:
  std::vector<Host> hosts_;
  std::map<VmId, HostId> placement_;
};

using ExecutionId = std::uint64_t;

struct Execution {
  ExecutionId id = 0;
  double length = 0.0;     // MI
  double remaining = 0.0;  // MI
  int pes = 1;
  SimTime submitted = 0.0;
  std::optional<SimTime> started;
  double share = 0.0;  // MIPS currently granted
};

// Per-VM task scheduler.
//  time-shared:  fluid sharing; each active task gets pes * mips * min(1, vm_pes / sum(pes)).
//  space-shared: tasks hold whole PEs at full speed; the rest wait FCFS.
// Shares are recomputed whenever the active set changes.
class CloudletScheduler {
 public:
  CloudletScheduler(SchedulerKind kind, double mips_per_pe, int pes)
      : kind_(kind), mips_(mips_per_pe), pes_(pes) {}

  SchedulerKind kind() const noexcept { return kind_; }

  void submit(ExecutionId id, double length, int pes, SimTime now) {
    if (!(length > 0.0)) throw Error(Errc::ValidationError, "compute", "task length must be > 0");
    if (pes < 1 || pes > pes_) {
      throw Error(Errc::ValidationError, "compute",
                  "task needs " + std::to_string(pes) + " pes, vm has " + std::to_string(pes_));
    }
    progress(now);
    Execution e;
    e.id = id;
    e.length = length;
    e.remaining = length;
    e.pes = pes;
    e.submitted = now;
    if (kind_ == SchedulerKind::TimeShared) {
      e.started = now;
      started_.push_back(id);
      running_.push_back(e);
    } else {
      waiting_.push_back(e);
      start_waiting(now);
    }
    recompute();
  }

  // Advances every running task to `now`, then removes and returns the ones
  // that have finished (in submission order).
  std::vector<ExecutionId> collect_finished(SimTime now) {
    progress(now);
    const double tol = 1e-12 * std::max(1.0, now);
    std::vector<ExecutionId> done;
    std::erase_if(running_, [&](const Execution& e) {
      if (e.share > 0.0 && e.remaining / e.share <= tol) {
        done.push_back(e.id);
        return true;
      }
      return false;
    });
    if (!done.empty()) {
      if (kind_ == SchedulerKind::SpaceShared) start_waiting(now);
      recompute();
    }
    return done;
  }

  bool cancel(ExecutionId id, SimTime now) {
    progress(now);
    auto match = [id](const Execution& e) { return e.id == id; };
    if (std::erase_if(running_, match) > 0) {
      if (kind_ == SchedulerKind::SpaceShared) start_waiting(now);
      recompute();
      return true;
    }
    return std::erase_if(waiting_, match) > 0;
  }

  std::optional<SimTime> next_completion() const {
    std::optional<SimTime> best;
    for (const auto& e : running_) {
      if (e.share <= 0.0) continue;
      SimTime t = last_ + e.remaining / e.share;
      if (!best || t < *best) best = t;
    }
    return best;
  }

  // Projected finish of every running task under the current shares.
  std::vector<std::pair<ExecutionId, SimTime>> projected_finishes() const {
    std::vector<std::pair<ExecutionId, SimTime>> out;
    for (const auto& e : running_) {
      if (e.share > 0.0) out.emplace_back(e.id, last_ + e.remaining / e.share);
    }
    return out;
  }

  // Executions that started since the previous call.
  std::vector<ExecutionId> take_started() { return std::exchange(started_, {}); }

  std::optional<double> share(ExecutionId id) const {
    for (const auto& e : running_) {
      if (e.id == id) return e.share;
    }
    for (const auto& e : waiting_) {
      if (e.id == id) return 0.0;
    }
    return std::nullopt;
  }

  const Execution* find(ExecutionId id) const {
    for (const auto& e : running_) {
      if (e.id == id) return &e;
    }
    for (const auto& e : waiting_) {
      if (e.id == id) return &e;
    }
    return nullptr;
  }

  double allocated_mips() const {
    double s = 0.0;
    for (const auto& e : running_) s += e.share;
    return s;
  }

  double capacity_mips() const noexcept { return mips_ * pes_; }
  std::size_t running() const noexcept { return running_.size(); }
  std::size_t waiting() const noexcept { return waiting_.size(); }
  bool empty() const noexcept { return running_.empty() && waiting_.empty(); }

  double remaining_work() const {
    double s = 0.0;
    for (const auto& e : running_) s += e.remaining;
    for (const auto& e : waiting_) s += e.remaining;
    return s;
  }

 private:
  void progress(SimTime now) {
    const double dt = now - last_;
    if (dt > 0.0) {
      for (auto& e : running_) e.remaining = std::max(0.0, e.remaining - e.share * dt);
    }
    last_ = std::max(last_, now);
  }

  void start_waiting(SimTime now) {
    int used = 0;
    for (const auto& e : running_) used += e.pes;
    while (!waiting_.empty() && waiting_.front().pes <= pes_ - used) {
      Execution e = waiting_.front();
      waiting_.pop_front();
      e.started = now;
      used += e.pes;
      started_.push_back(e.id);
      running_.push_back(e);
    }
  }

  void recompute() {
    if (kind_ == SchedulerKind::SpaceShared) {
      for (auto& e : running_) e.share = e.pes * mips_;
      return;
    }
    int demand = 0;
    for (const auto& e : running_) demand += e.pes;
    const double factor = demand > 0 ? std::min(1.0, static_cast<double>(pes_) / demand) : 0.0;
    for (auto& e : running_) e.share = e.pes * mips_ * factor;
  }

  SchedulerKind kind_;
  double mips_;
  int pes_;
  SimTime last_ = 0.0;
  std::vector<Execution> running_;
  std::deque<Execution> waiting_;
  std::vector<ExecutionId> started_;
};

struct VmRuntime {
  VmSpec spec;
  DeviceId device = 0;
  HostId host = 0;
  CloudletScheduler scheduler;
  bool running = false;
  bool dynamic = false;

  VmRuntime(VmSpec s, DeviceId d, HostId h)
      : spec(std::move(s)), device(d), host(h), scheduler(spec.scheduler, spec.mips, spec.pes) {}
};

}  // namespace widesim
