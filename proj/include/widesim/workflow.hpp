#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "widesim/des.hpp"
#include "widesim/error.hpp"

namespace widesim {

struct DataFile {
  std::string name;
  double size = 0.0;  // MB
  friend bool operator==(const DataFile&, const DataFile&) = default;
};

struct Selectivity {
  enum class Kind { All, Fractional };
  Kind kind = Kind::All;
  double probability = 1.0;
  friend bool operator==(const Selectivity&, const Selectivity&) = default;
};

struct ExecutionModel {
  enum class Kind { SingleShot, Periodic };
  Kind kind = Kind::SingleShot;
  double interval = 0.0;
  std::optional<int> repetitions;  // restarts after the first run; nullopt = until the horizon
  friend bool operator==(const ExecutionModel&, const ExecutionModel&) = default;
};

struct Task {
  int id = 0;
  std::string workflow_id;
  double runtime = 0.0;  // MI
  int pes = 1;
  std::vector<DataFile> inputs;
  std::vector<DataFile> outputs;
  std::optional<std::vector<int>> declared_parents;
  SimTime entry_time = 0.0;
  std::optional<SimTime> deadline;  // absolute simulation time
  Selectivity selectivity;
  ExecutionModel execution;

  // Filled by link_dependencies; sorted ascending.
  std::vector<int> parents;
  std::vector<int> children;

  friend bool operator==(const Task&, const Task&) = default;
};

struct Workflow {
  std::string workflow_id;
  std::vector<Task> tasks;
  std::optional<SimTime> deadline;
  std::optional<double> budget;

  const Task* find(int id) const {
    for (const auto& t : tasks) {
      if (t.id == id) return &t;
    }
    return nullptr;
  }
  const Task& task(int id) const {
    if (const Task* t = find(id)) return *t;
    throw Error(Errc::DanglingReference, "workflow", workflow_id + ": no task " + std::to_string(id));
  }
  friend bool operator==(const Workflow&, const Workflow&) = default;
};

struct Ensemble {
  std::string ensemble_id;
  std::vector<std::string> workflow_ids;
  std::optional<SimTime> deadline;
  std::optional<double> budget;
  friend bool operator==(const Ensemble&, const Ensemble&) = default;
};

struct Application {
  std::vector<Workflow> workflows;
  std::vector<Ensemble> ensembles;

  const Workflow* find_workflow(std::string_view id) const {
    for (const auto& w : workflows) {
      if (w.workflow_id == id) return &w;
    }
    return nullptr;
  }
  const Ensemble* ensemble_of(std::string_view workflow_id) const {
    for (const auto& e : ensembles) {
      if (std::find(e.workflow_ids.begin(), e.workflow_ids.end(), workflow_id) != e.workflow_ids.end()) return &e;
    }
    return nullptr;
  }
  std::size_t task_count() const {
    std::size_t n = 0;
    for (const auto& w : workflows) n += w.tasks.size();
    return n;
  }
  friend bool operator==(const Application&, const Application&) = default;
};

struct TaskRef {
  std::string workflow;
  int task = 0;
  friend auto operator<=>(const TaskRef&, const TaskRef&) = default;
  std::string str() const { return workflow + "/" + std::to_string(task); }
};

class CycleError : public Error {
 public:
  CycleError(const std::string& workflow, std::vector<int> cycle)
      : Error(Errc::CycleDetected, "workflow", workflow + ": cycle " + render(cycle)), cycle_(std::move(cycle)) {}
  const std::vector<int>& cycle() const noexcept { return cycle_; }

 private:
  static std::string render(const std::vector<int>& c) {
    std::string s = "[";
    for (std::size_t i = 0; i < c.size(); ++i) s += (i ? ", " : "") + std::to_string(c[i]);
    return s + "]";
  }
  std::vector<int> cycle_;
};

enum class OrphanPolicy { Allow, Warn, Error };

namespace detail {

inline void check_task_fields(const Workflow& wf, const Task& t) {
  auto where = [&] { return wf.workflow_id + "/" + std::to_string(t.id); };
  if (!(t.runtime > 0.0)) throw Error(Errc::ValidationError, "workflow", where() + ": runtime must be > 0");
  if (t.pes < 1) throw Error(Errc::ValidationError, "workflow", where() + ": pes must be >= 1");
  if (!(t.entry_time >= 0.0)) throw Error(Errc::ValidationError, "workflow", where() + ": entry_time must be >= 0");
  for (const auto* files : {&t.inputs, &t.outputs}) {
    std::set<std::string> seen;
    for (const auto& f : *files) {
      if (!(f.size >= 0.0)) throw Error(Errc::ValidationError, "workflow", where() + ": file " + f.name + " has negative size");
      if (!seen.insert(f.name).second) throw Error(Errc::DuplicateId, "workflow", where() + ": file " + f.name + " listed twice");
    }
  }
  if (t.selectivity.kind == Selectivity::Kind::Fractional &&
      !(t.selectivity.probability >= 0.0 && t.selectivity.probability <= 1.0)) {
    throw Error(Errc::ValidationError, "workflow", where() + ": selectivity probability outside [0,1]");
  }
  if (t.execution.kind == ExecutionModel::Kind::Periodic) {
    if (!(t.execution.interval > 0.0)) throw Error(Errc::ValidationError, "workflow", where() + ": periodic interval must be > 0");
    if (t.execution.repetitions && *t.execution.repetitions < 0) {
      throw Error(Errc::ValidationError, "workflow", where() + ": repetitions must be >= 0");
    }
  }
}

}  // namespace detail

// Derives parent/child edges. File edges come from output->input name
// matches; declared parents may add edges but must include every file edge.
inline void link_dependencies(Workflow& wf) {
  std::set<int> ids;
  for (auto& t : wf.tasks) {
    t.workflow_id = wf.workflow_id;
    if (!ids.insert(t.id).second) {
      throw Error(Errc::DuplicateId, "workflow", wf.workflow_id + ": duplicate task id " + std::to_string(t.id));
    }
    detail::check_task_fields(wf, t);
  }

  std::map<std::string, std::pair<int, double>> producer;
  for (const auto& t : wf.tasks) {
    for (const auto& f : t.outputs) {
      if (!producer.emplace(f.name, std::pair{t.id, f.size}).second) {
        throw Error(Errc::DuplicateId, "workflow", wf.workflow_id + ": file " + f.name + " produced by two tasks");
      }
    }
  }

  std::map<int, std::set<int>> children;
  for (auto& t : wf.tasks) {
    std::set<int> from_files;
    for (const auto& f : t.inputs) {
      auto it = producer.find(f.name);
      if (it == producer.end()) continue;
      if (it->second.first == t.id) throw CycleError(wf.workflow_id, {t.id});
      if (it->second.second != f.size) {
        throw Error(Errc::ValidationError, "workflow",
                    wf.workflow_id + "/" + std::to_string(t.id) + ": size of " + f.name + " differs from its producer");
      }
      from_files.insert(it->second.first);
    }
    std::set<int> parents = from_files;
    if (t.declared_parents) {
      std::set<int> declared;
      for (int p : *t.declared_parents) {
        if (!ids.count(p)) {
          throw Error(Errc::DanglingReference, "workflow",
                      wf.workflow_id + "/" + std::to_string(t.id) + ": unknown parent " + std::to_string(p));
        }
        if (p == t.id) throw CycleError(wf.workflow_id, {t.id});
        declared.insert(p);
      }
      for (int p : from_files) {
        if (!declared.count(p)) {
          throw Error(Errc::ValidationError, "workflow",
                      wf.workflow_id + "/" + std::to_string(t.id) + ": consumes output of task " + std::to_string(p) +
                          " but does not list it as a parent");
        }
      }
      parents = std::move(declared);
    }
    t.parents.assign(parents.begin(), parents.end());
    for (int p : parents) children[p].insert(t.id);
  }
  for (auto& t : wf.tasks) t.children.assign(children[t.id].begin(), children[t.id].end());
}

struct ValidationReport {
  std::vector<int> topological_order;
  std::vector<std::string> warnings;
};

// Checks acyclicity, parent/child symmetry and input provenance. Expects
// link_dependencies to have run.
inline ValidationReport validate(const Workflow& wf, OrphanPolicy orphans = OrphanPolicy::Warn) {
  ValidationReport report;
  std::map<int, const Task*> by_id;
  for (const auto& t : wf.tasks) by_id[t.id] = &t;

  for (const auto& t : wf.tasks) {
    for (int p : t.parents) {
      auto it = by_id.find(p);
      if (it == by_id.end()) {
        throw Error(Errc::DanglingReference, "workflow",
                    wf.workflow_id + "/" + std::to_string(t.id) + ": unknown parent " + std::to_string(p));
      }
      const auto& ch = it->second->children;
      if (!std::binary_search(ch.begin(), ch.end(), t.id)) {
        throw Error(Errc::ValidationError, "workflow",
                    wf.workflow_id + ": edge " + std::to_string(p) + "->" + std::to_string(t.id) + " is not symmetric");
      }
    }
    for (int c : t.children) {
      auto it = by_id.find(c);
      if (it == by_id.end()) {
        throw Error(Errc::DanglingReference, "workflow",
                    wf.workflow_id + "/" + std::to_string(t.id) + ": unknown child " + std::to_string(c));
      }
      const auto& ps = it->second->parents;
      if (!std::binary_search(ps.begin(), ps.end(), t.id)) {
        throw Error(Errc::ValidationError, "workflow",
                    wf.workflow_id + ": edge " + std::to_string(t.id) + "->" + std::to_string(c) + " is not symmetric");
      }
    }
  }

  // Kahn's algorithm, smallest ready id first.
  std::map<int, int> indegree;
  for (const auto& [id, t] : by_id) indegree[id] = static_cast<int>(t->parents.size());
  std::set<int> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.insert(id);
  }
  while (!ready.empty()) {
    int id = *ready.begin();
    ready.erase(ready.begin());
    report.topological_order.push_back(id);
    for (int c : by_id[id]->children) {
      if (--indegree[c] == 0) ready.insert(c);
    }
  }
  if (report.topological_order.size() != by_id.size()) {
    // Every leftover node has a leftover parent; walk parents until a repeat.
    std::set<int> left;
    for (const auto& [id, d] : indegree) {
      if (d > 0) left.insert(id);
    }
    std::vector<int> walk{*left.begin()};
    std::map<int, std::size_t> pos{{walk.back(), 0}};
    while (true) {
      int next = -1;
      for (int p : by_id[walk.back()]->parents) {
        if (left.count(p)) {
          next = p;
          break;
        }
      }
      if (auto it = pos.find(next); it != pos.end()) {
        std::vector<int> cycle(walk.begin() + static_cast<std::ptrdiff_t>(it->second), walk.end());
        std::reverse(cycle.begin(), cycle.end());  // parent -> child order
        auto smallest = std::min_element(cycle.begin(), cycle.end());
        std::rotate(cycle.begin(), smallest, cycle.end());
        throw CycleError(wf.workflow_id, std::move(cycle));
      }
      pos[next] = walk.size();
      walk.push_back(next);
    }
  }

  std::set<std::string> produced;
  for (const auto& t : wf.tasks) {
    for (const auto& f : t.outputs) produced.insert(f.name);
  }
  for (const auto& t : wf.tasks) {
    for (const auto& f : t.inputs) {
      if (produced.count(f.name) || orphans == OrphanPolicy::Allow) continue;
      std::string msg = wf.workflow_id + "/" + std::to_string(t.id) + ": input " + f.name + " has no producer";
      if (orphans == OrphanPolicy::Error) throw Error(Errc::OrphanInput, "workflow", msg);
      report.warnings.push_back(msg + " (treated as a source file)");
    }
  }
  return report;
}

// Kahn order, smallest ready id first. Throws CycleError.
inline std::vector<int> topological_order(const Workflow& wf) {
  return validate(wf, OrphanPolicy::Allow).topological_order;
}

// Validates every workflow and the ensemble membership rules.
inline std::vector<std::string> link_and_validate(Application& app, OrphanPolicy orphans = OrphanPolicy::Warn) {
  std::vector<std::string> warnings;
  std::set<std::string> ids;
  for (auto& wf : app.workflows) {
    if (!ids.insert(wf.workflow_id).second) {
      throw Error(Errc::DuplicateId, "workflow", "duplicate workflow_id " + wf.workflow_id);
    }
    link_dependencies(wf);
    auto report = validate(wf, orphans);
    warnings.insert(warnings.end(), report.warnings.begin(), report.warnings.end());
  }
  std::set<std::string> ensemble_ids;
  std::set<std::string> member_of_any;
  for (const auto& e : app.ensembles) {
    if (!ensemble_ids.insert(e.ensemble_id).second) {
      throw Error(Errc::DuplicateId, "workflow", "duplicate ensemble_id " + e.ensemble_id);
    }
    std::set<std::string> members;
    for (const auto& w : e.workflow_ids) {
      if (!ids.count(w)) throw Error(Errc::UnknownWorkflow, "workflow", e.ensemble_id + ": unknown workflow " + w);
      if (!members.insert(w).second) throw Error(Errc::DuplicateId, "workflow", e.ensemble_id + ": workflow " + w + " listed twice");
      if (!member_of_any.insert(w).second) {
        throw Error(Errc::ValidationError, "workflow", "workflow " + w + " belongs to more than one ensemble");
      }
    }
  }
  return warnings;
}

// Released tasks, not yet dispatched, whose parents have all completed.
inline std::set<int> ready_set(const Workflow& wf, const std::set<int>& completed, const std::set<int>& released,
                               const std::set<int>& dispatched = {}) {
  std::set<int> out;
  for (const auto& t : wf.tasks) {
    if (!released.count(t.id) || dispatched.count(t.id) || completed.count(t.id)) continue;
    if (std::all_of(t.parents.begin(), t.parents.end(), [&](int p) { return completed.count(p) > 0; })) {
      out.insert(t.id);
    }
  }
  return out;
}

// Counter-based random substreams: the value depends only on the key, never
// on how many draws happened before.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline double substream_uniform(std::uint64_t seed, const TaskRef& task, std::uint64_t execution, std::uint64_t slot) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ fnv1a(task.workflow));
  h = splitmix64(h ^ static_cast<std::uint64_t>(static_cast<std::int64_t>(task.task)));
  h = splitmix64(h ^ execution);
  h = splitmix64(h ^ slot);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

// Outputs actually emitted by one execution of `task`.
inline std::vector<DataFile> apply_selectivity(const Task& task, std::uint64_t seed, std::uint64_t execution = 0) {
  if (task.selectivity.kind == Selectivity::Kind::All) return task.outputs;
  std::vector<DataFile> kept;
  const TaskRef ref{task.workflow_id, task.id};
  for (std::size_t i = 0; i < task.outputs.size(); ++i) {
    if (substream_uniform(seed, ref, execution, i) < task.selectivity.probability) kept.push_back(task.outputs[i]);
  }
  return kept;
}

// Restart time after the `executions_done`-th completion, if any.
inline std::optional<SimTime> next_activation(const Task& task, SimTime finished_at, int executions_done,
                                              std::optional<SimTime> horizon = std::nullopt) {
  if (task.execution.kind == ExecutionModel::Kind::SingleShot) return std::nullopt;
  if (task.execution.repetitions && executions_done > *task.execution.repetitions) return std::nullopt;
  SimTime next = finished_at + task.execution.interval;
  if (horizon && next > *horizon) return std::nullopt;
  return next;
}

// Task deadline, else its workflow's, else its ensemble's.
inline std::optional<SimTime> effective_deadline(const Application& app, const Workflow& wf, const Task& task) {
  if (task.deadline) return task.deadline;
  if (wf.deadline) return wf.deadline;
  if (const Ensemble* e = app.ensemble_of(wf.workflow_id)) return e->deadline;
  return std::nullopt;
}

}  // namespace widesim
