#include <algorithm>
#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "widesim/widesim.hpp"

namespace fs = std::filesystem;
using namespace widesim;

namespace {

std::string render_report(const RunReport& report, const std::string& format) {
  if (format == "csv") {
    std::ostringstream out;
    write_report_csv(report, out);
    return out.str();
  }
  return report_to_json(report).dump(2) + "\n";
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int run_command(const fs::path& topology, const fs::path& workflows, const fs::path& config,
                const std::optional<fs::path>& trace, const std::optional<fs::path>& report_path,
                const std::string& format, std::optional<std::uint64_t> seed) {
  ScenarioBundle bundle = load_bundle(topology, workflows, config);
  if (seed) bundle.config.seed = *seed;
  print_warnings(bundle.warnings);
  RunResult result = run_scenario(bundle);
  if (trace) write_text_file(*trace, result.trace_text);
  std::string report = render_report(result.report, format);
  if (report_path) {
    write_text_file(*report_path, report);
  } else {
    std::cout << report;
  }
  return 0;
}

enum class DocKind { Workflows, Topology, Config, Dax };

DocKind classify(const fs::path& path, const std::string& text) {
  auto ext = path.extension().string();
  if (ext == ".dax" || ext == ".xml") return DocKind::Dax;
  auto doc = json::parse(text, nullptr, false);
  if (doc.is_object() && doc.contains("workflows")) return DocKind::Workflows;
  if (doc.is_object() && doc.contains("fog_devices")) return DocKind::Topology;
  return DocKind::Config;
}

int validate_command(const std::vector<fs::path>& paths) {
  int failures = 0;
  for (const auto& path : paths) {
    try {
      std::string text = read_text_file(path);
      std::vector<std::string> warnings;
      std::string kind;
      switch (classify(path, text)) {
        case DocKind::Workflows: {
          auto parsed = parse_workflows(text);
          warnings = parsed.warnings;
          kind = "workflows, " + std::to_string(parsed.value.workflows.size()) + " workflow(s), " +
                 std::to_string(parsed.value.task_count()) + " task(s)";
          break;
        }
        case DocKind::Topology: {
          auto parsed = parse_topology(text);
          warnings = parsed.warnings;
          parsed.value.topology();
          build_routing_tables(parsed.value.topology(), parsed.value.routes);
          kind = "topology, " + std::to_string(parsed.value.devices.size()) + " device(s), " +
                 std::to_string(parsed.value.links.size()) + " link(s), " + std::to_string(parsed.value.vms.size()) +
                 " vm(s)";
          break;
        }
        case DocKind::Config: {
          auto parsed = parse_config(text);
          warnings = parsed.warnings;
          make_scheduling_policy(parsed.value.scheduler, parsed.value.strict_parsing);
          make_provisioning_policy(parsed.value.provisioner, parsed.value.strict_parsing);
          kind = "config";
          break;
        }
        case DocKind::Dax: {
          auto parsed = import_dax(text);
          warnings = parsed.warnings;
          kind = "dax, " + std::to_string(parsed.value.task_count()) + " task(s)";
          break;
        }
      }
      print_warnings(warnings);
      std::cout << "ok " << path.string() << " (" << kind << ")\n";
    } catch (const Error& e) {
      ++failures;
      std::cerr << "error: " << path.string() << ": " << e.what() << "\n";
    }
  }
  return failures == 0 ? 0 : 2;
}

int import_dax_command(const fs::path& path, double ref_mips, const std::string& workflow_id,
                       const std::optional<fs::path>& output) {
  auto parsed = import_dax(read_text_file(path), ref_mips, workflow_id);
  print_warnings(parsed.warnings);
  std::string text = serialize_workflows(parsed.value);
  if (output) {
    write_text_file(*output, text);
  } else {
    std::cout << text;
  }
  return 0;
}

struct BatchJob {
  fs::path topology, workflows, config;
  std::optional<fs::path> trace, report;
};

// Manifest: array of {topology, workflows, config, trace?, report?}; relative
// paths resolve against the manifest's directory.
std::vector<BatchJob> read_manifest(const fs::path& manifest) {
  auto doc = detail::parse_json_text(read_text_file(manifest), "batch manifest");
  const auto base = manifest.parent_path();
  std::vector<BatchJob> jobs;
  std::vector<std::string> warnings;
  detail::as_array(doc, "$");
  for (std::size_t i = 0; i < doc.size(); ++i) {
    detail::ObjectReader r(doc[i], detail::index_path("$", i), true, warnings);
    BatchJob job;
    job.topology = base / r.string("topology");
    job.workflows = base / r.string("workflows");
    job.config = base / r.string("config");
    if (r.get("trace")) job.trace = base / r.string("trace");
    if (r.get("report")) job.report = base / r.string("report");
    r.finish();
    jobs.push_back(std::move(job));
  }
  return jobs;
}

int batch_command(const fs::path& manifest, unsigned workers, const std::string& format) {
  auto jobs = read_manifest(manifest);
  std::vector<std::string> lines(jobs.size());
  std::vector<int> codes(jobs.size(), 0);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const auto& job = jobs[i];
      try {
        RunResult result = run_scenario(load_bundle(job.topology, job.workflows, job.config));
        if (job.trace) write_text_file(*job.trace, result.trace_text);
        if (job.report) write_text_file(*job.report, render_report(result.report, format));
        lines[i] = "ok " + job.workflows.string() + " end=" + format_number(result.end_time);
      } catch (const Error& e) {
        codes[i] = 2;
        lines[i] = "error " + job.workflows.string() + ": " + e.what();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(jobs.size(), 1))));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  int code = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    (codes[i] ? std::cerr : std::cout) << lines[i] << "\n";
    code = std::max(code, codes[i]);
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Workflow simulator for graph-topology fog, edge and cloud infrastructure"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Simulate one scenario");
  fs::path topology, workflows, config;
  std::optional<fs::path> trace, report;
  std::string format = "json";
  std::optional<std::uint64_t> seed;
  run->add_option("--topology", topology, "Topology.json")->required()->check(CLI::ExistingFile);
  run->add_option("--workflows", workflows, "Workflows.json")->required()->check(CLI::ExistingFile);
  run->add_option("--config", config, "Config.json")->required()->check(CLI::ExistingFile);
  run->add_option("--trace", trace, "Trace output path");
  run->add_option("--report", report, "Report output path (default: stdout)");
  run->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  run->add_option("--seed", seed, "Override the configured seed");

  auto* validate = app.add_subcommand("validate", "Check input documents without simulating");
  std::vector<fs::path> paths;
  validate->add_option("paths", paths, "Workflows, Topology, Config or DAX files")->required()->check(CLI::ExistingFile);

  auto* dax = app.add_subcommand("import-dax", "Convert a DAX workflow to Workflows.json");
  fs::path dax_path;
  double ref_mips = 1000.0;
  std::string workflow_id;
  std::optional<fs::path> dax_out;
  dax->add_option("path", dax_path, "DAX file")->required()->check(CLI::ExistingFile);
  dax->add_option("--ref-mips", ref_mips, "MIPS of the machine the runtimes were measured on")
      ->check(CLI::PositiveNumber);
  dax->add_option("--workflow-id", workflow_id, "Workflow id (default: adag name)");
  dax->add_option("-o,--output", dax_out, "Output path (default: stdout)");

  auto* batch = app.add_subcommand("batch", "Run several scenarios concurrently");
  fs::path manifest;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  batch->add_option("manifest", manifest, "JSON array of scenario paths")->required()->check(CLI::ExistingFile);
  batch->add_option("-j,--jobs", jobs, "Worker threads");
  batch->add_option("--format", format, "Report format")->check(CLI::IsMember({"json", "csv"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return run_command(topology, workflows, config, trace, report, format, seed);
    if (*validate) return validate_command(paths);
    if (*dax) return import_dax_command(dax_path, ref_mips, workflow_id, dax_out);
    if (*batch) return batch_command(manifest, jobs, format);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
