#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>

#include "pisces/analysis.hpp"
#include "pisces/core.hpp"
#include "pisces/engine.hpp"
#include "pisces/events.hpp"
#include "pisces/scenario.hpp"
#include "pisces/tasks.hpp"

namespace pisces {

enum ExitCode : int { kExitOk = 0, kExitVerifyFailed = 1, kExitDiverged = 2, kExitConfigError = 3 };

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IOError, "cannot write " + path.string());
  out << body;
  if (!out) throw Error(Errc::IOError, "write failed for " + path.string());
}

}  // namespace detail

/// Writes events.jsonl, metrics.json and resolved_config.json into `out_dir`.
inline int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& out_dir,
                   std::ostream& out, std::ostream& err) {
  RunResult result;
  ScenarioConfig cfg;
  try {
    auto doc = parse_scenario_document(read_text_file(scenario_path));
    if (seed) doc.seed = *seed;
    cfg = resolve(doc);
    validate(cfg);
    std::filesystem::create_directories(out_dir);
    result = run_scenario(cfg);
    const std::filesystem::path dir(out_dir);
    detail::write_file(dir / "resolved_config.json", scenario_to_text(cfg));
    detail::write_file(dir / "events.jsonl", serialize_log(result.log));
    detail::write_file(dir / "metrics.json", metrics_to_json(result.metrics).dump(2) + "\n");
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfigError;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: IOError: " << ex.what() << '\n';
    return kExitConfigError;
  }
  if (result.diverged) {
    err << "run diverged: " << result.failure << '\n';
    return kExitDiverged;
  }
  out << "aggregations=" << result.metrics.total_aggregations << " final_version=" << result.model.version;
  if (result.metrics.final_loss) out << " final_loss=" << *result.metrics.final_loss;
  if (result.metrics.time_to_target) out << " time_to_target=" << *result.metrics.time_to_target;
  out << '\n';
  return kExitOk;
}

/// Runs both log verifiers. Without `bound`, b is taken from the log header.
inline int cmd_verify(const std::string& log_path, std::optional<std::size_t> bound, std::ostream& out,
                      std::ostream& err) {
  EventLog log;
  try {
    std::ifstream in(log_path);
    if (!in) throw Error(Errc::IOError, "cannot open " + log_path);
    log = parse_log(in);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfigError;
  }
  if (!bound) {
    const auto* header = find_header(log);
    if (!header) {
      err << "error: no --bound given and the log has no run_started header\n";
      return kExitConfigError;
    }
    bound = header->bound;
  }

  VerifierReport report;
  try {
    report = verify_thm1(log, *bound);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitVerifyFailed;
  }
  const char* rel = report.max_count <= report.bound ? "≤" : ">";
  out << "m=" << report.max_count << ' ' << rel << " b=" << report.bound << " (spans=" << report.spans_checked
      << ", strict m<b: " << (report.strict_pass ? "yes" : "no") << ")\n";
  for (const auto& v : report.span_violations) {
    out << "span violation: client " << v.client << " (" << v.start << ", " << v.end << ") has "
        << v.aggregation_times.size() << " aggregations at";
    for (double t : v.aggregation_times) out << ' ' << t;
    out << '\n';
  }

  try {
    report.lemma1_violations = verify_lemma1(log);
  } catch (const Error& ex) {
    out << "lemma1: " << ex.what() << '\n';
    return kExitVerifyFailed;
  }
  out << "lemma1 violations=" << report.lemma1_violations.size() << '\n';
  for (const auto& v : report.lemma1_violations) {
    out << "lemma1 violation: aggregation at " << v.aggregation_time << " (I=" << v.interval << ") preceded by one at "
        << v.other_time << '\n';
  }
  report.pass = report.span_violations.empty() && report.lemma1_violations.empty();
  out << (report.pass ? "PASS" : "FAIL") << '\n';
  return report.pass ? kExitOk : kExitVerifyFailed;
}

inline std::string format_bound(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%#.9g", v);
  return buf;
}

inline int cmd_bound(const BoundParams& p, std::ostream& out, std::ostream& err) {
  try {
    out << format_bound(convergence_bound(p)) << '\n';
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfigError;
  }
  return kExitOk;
}

/// Writes the scenario's sample-to-client assignment as CSV.
inline int cmd_partition(const std::string& scenario_path, std::ostream& out, std::ostream& err) {
  try {
    const Simulator sim(load_scenario(scenario_path));
    const auto labels = sim.train_pool().labels();
    write_partition_csv(out, sim.partition(), labels);
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitConfigError;
  }
  return kExitOk;
}

}  // namespace pisces
