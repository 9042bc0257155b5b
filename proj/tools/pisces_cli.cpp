#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pisces/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Staleness-bounded asynchronous federated learning simulator"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "run a scenario and write events, metrics and the resolved config");
  run->add_option("--scenario", scenario, "scenario JSON file")->required();
  run->add_option("--seed", seed, "override the scenario seed");
  run->add_option("--out", out_dir, "output directory")->required();

  std::string log_path;
  std::optional<std::size_t> bound;
  auto* verify = app.add_subcommand("verify", "check an event log against the staleness bound");
  verify->add_option("--log", log_path, "events.jsonl file")->required();
  verify->add_option("--bound", bound, "staleness bound b (default: from the log header)");

  pisces::BoundParams bp;
  double b = 0.0;
  auto* bnd = app.add_subcommand("bound", "evaluate the ergodic convergence bound");
  bnd->add_option("--f0", bp.f0_minus_fstar, "f(w0) - f*")->required();
  bnd->add_option("--L", bp.L_smooth, "smoothness constant")->required();
  bnd->add_option("--sigma-l2", bp.sigma_l_sq, "local variance bound")->required();
  bnd->add_option("--sigma-g2", bp.sigma_g_sq, "global variance bound")->required();
  bnd->add_option("--G", bp.G, "gradient norm bound")->required();
  bnd->add_option("--Q", bp.Q, "local steps")->required();
  bnd->add_option("--eta", bp.eta_schedule, "learning rate, or one per local step")->required()->delimiter(',');
  bnd->add_option("--b", b, "staleness bound")->required();
  bnd->add_option("--T", bp.T, "server steps")->required();

  std::string part_scenario;
  std::string part_out;
  bool preview = false;
  auto* part = app.add_subcommand("partition", "write the sample_id,client_id,label CSV for a scenario");
  part->add_option("--scenario", part_scenario, "scenario JSON file")->required();
  part->add_flag("--preview", preview, "print to stdout (default when --out is absent)");
  part->add_option("--out", part_out, "CSV output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : pisces::kExitConfigError;
  }

  if (*run) return pisces::cmd_run(scenario, seed, out_dir, std::cout, std::cerr);
  if (*verify) return pisces::cmd_verify(log_path, bound, std::cout, std::cerr);
  if (*bnd) {
    bp.b = b;
    return pisces::cmd_bound(bp, std::cout, std::cerr);
  }
  if (part_out.empty() || preview) return pisces::cmd_partition(part_scenario, std::cout, std::cerr);
  std::ofstream os(part_out);
  if (!os) {
    std::cerr << "error: IOError: cannot write " << part_out << '\n';
    return pisces::kExitConfigError;
  }
  return pisces::cmd_partition(part_scenario, os, std::cerr);
}
