#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "widesim/orchestration.hpp"
#include "widesim/trace.hpp"
#include "widesim/workflow.hpp"

namespace widesim {

struct WorkflowSummary {
  std::string workflow_id;
  std::size_t tasks = 0;
  std::size_t completed = 0;
  std::size_t deadline_missed = 0;
  std::size_t killed = 0;
  std::size_t unfinished = 0;
  std::optional<double> makespan;
  // completed | late | failed | incomplete
  std::string status;
  std::vector<std::string> violations;
};

struct EnsembleSummary {
  std::string ensemble_id;
  std::size_t workflows = 0;
  std::size_t completed_count = 0;
  std::map<std::string, std::optional<double>> makespans;
  std::vector<std::string> violations;
};

struct LinkUsage {
  DeviceId from = 0;
  DeviceId to = 0;
  double busy_time = 0.0;
  std::size_t packets = 0;
  double utilization = 0.0;
};

struct RunReport {
  SimTime total_time = 0.0;
  std::map<TaskRef, TaskRecord> tasks;
  std::vector<WorkflowSummary> workflows;
  std::vector<EnsembleSummary> ensembles;
  std::vector<LinkUsage> links;
};

namespace detail {

inline TaskRef parse_subject(const std::string& s) {
  auto slash = s.rfind('/');
  if (slash == std::string::npos) throw Error(Errc::ValidationError, "report", "bad task subject " + s);
  return {s.substr(0, slash), std::stoi(s.substr(slash + 1))};
}

inline void push_status(TaskRecord& r, TaskStatus s) {
  r.status = s;
  r.path.push_back(s);
}

}  // namespace detail

// Rebuilds every task record from lifecycle trace lines alone.
inline std::map<TaskRef, TaskRecord> fold_task_records(std::span<const TraceRecord> trace, const Application& app) {
  std::map<TaskRef, TaskRecord> out;
  for (const auto& wf : app.workflows) {
    for (const auto& t : wf.tasks) {
      TaskRef ref{wf.workflow_id, t.id};
      out[ref].ref = ref;
    }
  }
  for (const auto& rec : trace) {
    const std::string& k = rec.kind;
    static const std::set<std::string> lifecycle{
        "release",   "ready",    "reactivated", "scheduled",     "transferring",  "transfer_start", "transfer_end",
        "exec_start", "exec_end", "completed",   "deadline_flag", "missing_input", "deadline_missed", "killed"};
    if (!lifecycle.count(k)) continue;
    auto it = out.find(detail::parse_subject(rec.subject));
    if (it == out.end()) continue;
    TaskRecord& r = it->second;
    const SimTime t = rec.time;
    if (k == "release") {
      if (!r.release_time) r.release_time = t;
    } else if (k == "ready" || k == "reactivated") {
      if (!r.ready_time) r.ready_time = t;
      detail::push_status(r, TaskStatus::Ready);
    } else if (k == "scheduled") {
      r.schedule_time = t;
      r.assigned_vm = std::stoi(detail_get(rec.detail, "vm").value_or("0"));
      detail::push_status(r, TaskStatus::Scheduled);
    } else if (k == "transferring") {
      detail::push_status(r, TaskStatus::Transferring);
    } else if (k == "transfer_start") {
      r.transfers.push_back({detail_get(rec.detail, "file").value_or(""),
                             std::stoi(detail_get(rec.detail, "from").value_or("0")),
                             std::stoi(detail_get(rec.detail, "to").value_or("0")), t, std::nullopt});
    } else if (k == "transfer_end") {
      auto file = detail_get(rec.detail, "file").value_or("");
      for (auto& span : r.transfers) {
        if (span.file == file && !span.end) {
          span.end = t;
          break;
        }
      }
    } else if (k == "exec_start") {
      r.exec_start = t;
      r.exec_end.reset();
      detail::push_status(r, TaskStatus::Executing);
    } else if (k == "exec_end") {
      r.exec_end = t;
    } else if (k == "completed") {
      r.completed_at = t;
      ++r.executions;
      detail::push_status(r, TaskStatus::Completed);
    } else if (k == "deadline_flag") {
      r.deadline_flagged = true;
    } else if (k == "missing_input") {
      r.missing_input = true;
    } else if (k == "deadline_missed" || k == "killed") {
      r.terminated_at = t;
      r.reason = detail_get(rec.detail, "reason").value_or("");
      detail::push_status(r, k == "killed" ? TaskStatus::Killed : TaskStatus::DeadlineMissed);
    }
  }
  return out;
}

inline WorkflowSummary summarize_workflow(const Application& app, const Workflow& wf,
                                          const std::map<TaskRef, TaskRecord>& records) {
  WorkflowSummary s;
  s.workflow_id = wf.workflow_id;
  s.tasks = wf.tasks.size();
  std::optional<SimTime> first_release, last_end;
  bool late = false;
  for (const auto& t : wf.tasks) {
    const auto& r = records.at(TaskRef{wf.workflow_id, t.id});
    if (r.release_time) first_release = std::min(first_release.value_or(*r.release_time), *r.release_time);
    if (r.exec_end) last_end = std::max(last_end.value_or(*r.exec_end), *r.exec_end);
    switch (r.status) {
      case TaskStatus::Completed: ++s.completed; break;
      case TaskStatus::DeadlineMissed: ++s.deadline_missed; break;
      case TaskStatus::Killed: ++s.killed; break;
      default: ++s.unfinished; break;
    }
    const auto deadline = effective_deadline(app, wf, t);
    if (r.status == TaskStatus::Completed && deadline && r.exec_end && *r.exec_end > *deadline) {
      late = true;
      s.violations.push_back(wf.workflow_id + "/" + std::to_string(t.id) + " finished after its deadline");
    } else if (r.status == TaskStatus::DeadlineMissed) {
      s.violations.push_back(wf.workflow_id + "/" + std::to_string(t.id) + " missed its deadline");
    } else if (r.status == TaskStatus::Killed) {
      s.violations.push_back(wf.workflow_id + "/" + std::to_string(t.id) + " killed (" + r.reason + ")");
    }
  }
  if (first_release && last_end) s.makespan = *last_end - *first_release;
  if (s.completed == s.tasks) {
    s.status = late ? "late" : "completed";
  } else if (s.deadline_missed + s.killed > 0) {
    s.status = "failed";
  } else {
    s.status = "incomplete";
  }
  return s;
}

// A member workflow counts when every task completed within its inherited
// deadline.
inline EnsembleSummary ensemble_report(const Ensemble& ensemble, const Application& app,
                                       const std::map<TaskRef, TaskRecord>& records) {
  EnsembleSummary e;
  e.ensemble_id = ensemble.ensemble_id;
  e.workflows = ensemble.workflow_ids.size();
  for (const auto& id : ensemble.workflow_ids) {
    const Workflow* wf = app.find_workflow(id);
    if (!wf) throw Error(Errc::UnknownWorkflow, "report", ensemble.ensemble_id + ": unknown workflow " + id);
    auto s = summarize_workflow(app, *wf, records);
    e.makespans[id] = s.makespan;
    if (s.status == "completed") {
      ++e.completed_count;
    } else {
      e.violations.push_back(id + ": " + s.status);
    }
  }
  return e;
}

inline RunReport build_report(std::span<const TraceRecord> trace, const Application& app, SimTime total_time) {
  RunReport report;
  report.total_time = total_time;
  report.tasks = fold_task_records(trace, app);
  for (const auto& wf : app.workflows) report.workflows.push_back(summarize_workflow(app, wf, report.tasks));
  for (const auto& e : app.ensembles) report.ensembles.push_back(ensemble_report(e, app, report.tasks));

  std::map<std::pair<DeviceId, DeviceId>, std::pair<SimTime, LinkUsage>> links;
  for (const auto& rec : trace) {
    if (rec.kind != "link_tx_start" && rec.kind != "link_tx_end") continue;
    auto arrow = rec.subject.find("->");
    DeviceId from = std::stoi(rec.subject.substr(0, arrow));
    DeviceId to = std::stoi(rec.subject.substr(arrow + 2));
    auto& [open, usage] = links[{from, to}];
    usage.from = from;
    usage.to = to;
    if (rec.kind == "link_tx_start") {
      open = rec.time;
      ++usage.packets;
    } else {
      usage.busy_time += rec.time - open;
    }
  }
  for (auto& [key, entry] : links) {
    auto usage = entry.second;
    usage.utilization = total_time > 0.0 ? usage.busy_time / total_time : 0.0;
    report.links.push_back(usage);
  }
  return report;
}

namespace detail {

inline nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline std::string opt_csv(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace detail

inline nlohmann::json report_to_json(const RunReport& r) {
  using nlohmann::json;
  json out;
  out["total_time"] = r.total_time;
  json tasks = json::array();
  for (const auto& [ref, t] : r.tasks) {
    json transfers = json::array();
    for (const auto& s : t.transfers) {
      transfers.push_back({{"file", s.file}, {"from", s.from}, {"to", s.to}, {"start", s.start},
                           {"end", detail::opt_json(s.end)}});
    }
    tasks.push_back({{"workflow_id", ref.workflow},
                     {"task_id", ref.task},
                     {"status", task_status_name(t.status)},
                     {"release_time", detail::opt_json(t.release_time)},
                     {"ready_time", detail::opt_json(t.ready_time)},
                     {"schedule_time", detail::opt_json(t.schedule_time)},
                     {"vm", t.assigned_vm ? json(*t.assigned_vm) : json()},
                     {"exec_start", detail::opt_json(t.exec_start)},
                     {"exec_end", detail::opt_json(t.exec_end)},
                     {"executions", t.executions},
                     {"deadline_flagged", t.deadline_flagged},
                     {"reason", t.reason},
                     {"transfers", transfers}});
  }
  out["tasks"] = tasks;
  json workflows = json::array();
  for (const auto& w : r.workflows) {
    workflows.push_back({{"workflow_id", w.workflow_id},
                         {"status", w.status},
                         {"makespan", detail::opt_json(w.makespan)},
                         {"tasks", w.tasks},
                         {"completed", w.completed},
                         {"deadline_missed", w.deadline_missed},
                         {"killed", w.killed},
                         {"unfinished", w.unfinished},
                         {"violations", w.violations}});
  }
  out["workflows"] = workflows;
  json ensembles = json::array();
  for (const auto& e : r.ensembles) {
    json makespans = json::object();
    for (const auto& [id, m] : e.makespans) makespans[id] = detail::opt_json(m);
    ensembles.push_back({{"ensemble_id", e.ensemble_id},
                         {"workflows", e.workflows},
                         {"completed_count", e.completed_count},
                         {"makespans", makespans},
                         {"violations", e.violations}});
  }
  out["ensembles"] = ensembles;
  json links = json::array();
  for (const auto& l : r.links) {
    links.push_back({{"from", l.from}, {"to", l.to}, {"busy_time", l.busy_time}, {"packets", l.packets},
                     {"utilization", l.utilization}});
  }
  out["links"] = links;
  return out;
}

// Four CSV tables separated by blank lines: tasks, workflows, ensembles, links.
inline void write_report_csv(const RunReport& r, std::ostream& out) {
  out << "workflow_id,task_id,status,release_time,ready_time,schedule_time,vm,exec_start,exec_end,executions,"
         "deadline_flagged,reason\n";
  for (const auto& [ref, t] : r.tasks) {
    out << detail::csv_field(ref.workflow) << ',' << ref.task << ',' << task_status_name(t.status) << ','
        << detail::opt_csv(t.release_time) << ',' << detail::opt_csv(t.ready_time) << ','
        << detail::opt_csv(t.schedule_time) << ',' << (t.assigned_vm ? std::to_string(*t.assigned_vm) : "") << ','
        << detail::opt_csv(t.exec_start) << ',' << detail::opt_csv(t.exec_end) << ',' << t.executions << ','
        << (t.deadline_flagged ? 1 : 0) << ',' << detail::csv_field(t.reason) << '\n';
  }
  out << "\nworkflow_id,status,makespan,tasks,completed,deadline_missed,killed,unfinished\n";
  for (const auto& w : r.workflows) {
    out << detail::csv_field(w.workflow_id) << ',' << w.status << ',' << detail::opt_csv(w.makespan) << ',' << w.tasks
        << ',' << w.completed << ',' << w.deadline_missed << ',' << w.killed << ',' << w.unfinished << '\n';
  }
  out << "\nensemble_id,workflows,completed_count\n";
  for (const auto& e : r.ensembles) {
    out << detail::csv_field(e.ensemble_id) << ',' << e.workflows << ',' << e.completed_count << '\n';
  }
  out << "\nfrom,to,busy_time,packets,utilization\n";
  for (const auto& l : r.links) {
    out << l.from << ',' << l.to << ',' << format_number(l.busy_time) << ',' << l.packets << ','
        << format_number(l.utilization) << '\n';
  }
  out << "\ntotal_time\n" << format_number(r.total_time) << '\n';
}

}  // namespace widesim
