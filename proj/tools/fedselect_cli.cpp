#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fedselect/config_io.hpp"
#include "fedselect/experiment.hpp"
#include "fedselect/verification.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> snapshot_interval;
  std::optional<std::size_t> threads;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--out-dir", out_dir, "Output directory");
    cmd->add_option("--snapshot-interval", snapshot_interval, "Write full parameter snapshots every K rounds");
    cmd->add_option("--threads", threads, "Client worker threads");
  }

  void apply(fedselect::FLConfig& cfg) const {
    if (seed) cfg.master_seed = *seed;
    if (out_dir) cfg.out_dir = *out_dir;
    if (snapshot_interval) cfg.snapshot_interval = *snapshot_interval;
    if (threads) cfg.threads = *threads;
    cfg.validate();
  }
};

int cmd_run(const std::string& config_path, const Overrides& ov) {
  fedselect::FLConfig cfg = fedselect::load_config(config_path);
  ov.apply(cfg);
  const auto h = fedselect::run_experiment(cfg);
  std::cout << fedselect::to_string(cfg.algorithm.kind) << ": " << h.rounds.size() << " rounds, final mean accuracy "
            << h.final_mean_accuracy() << ", outputs in " << cfg.out_dir << "\n";
  if (h.no_eligible_warnings > 0)
    std::cerr << "warning: " << h.no_eligible_warnings << " growth steps found no eligible global parameter\n";
  return kExitOk;
}

int cmd_grid(const std::string& config_path, const std::string& sweep_path, const Overrides& ov) {
  fedselect::FLConfig cfg = fedselect::load_config(config_path);
  ov.apply(cfg);
  const auto axes = fedselect::parse_sweep(fedselect::read_json_file(sweep_path));
  const auto rows = fedselect::run_grid(cfg, axes);
  for (const auto& row : rows) {
    std::cout << "cell " << row.cell;
    for (const auto& [key, value] : row.settings) std::cout << ' ' << key << '=' << value.dump();
    std::cout << " mean_accuracy=" << row.mean_accuracy << '\n';
  }
  return kExitOk;
}

int cmd_verify(const std::string& out_dir) {
  const auto checks = fedselect::run_verification();
  const auto report = fedselect::verification_report(checks);
  std::filesystem::create_directories(out_dir);
  std::ofstream(std::filesystem::path(out_dir) / "verify.json") << report.dump(2) << '\n';
  for (const auto& c : checks)
    std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.value << " (threshold " << c.threshold
              << ") " << c.detail << '\n';
  return report["all_passed"].get<bool>() ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Personalized federated learning with grown parameter masks"};
  app.require_subcommand(1);

  std::string config_path, sweep_path, verify_out = "out";
  Overrides run_ov, grid_ov;

  auto* run = app.add_subcommand("run", "Run one experiment from a config file");
  run->add_option("config", config_path, "Config file (JSON)")->required();
  run_ov.add_to(run);

  auto* grid = app.add_subcommand("grid", "Run a parameter sweep");
  grid->add_option("config", config_path, "Base config file (JSON)")->required();
  grid->add_option("sweep", sweep_path, "Sweep file (JSON object of arrays)")->required();
  grid_ov.add_to(grid);

  auto* verify = app.add_subcommand("verify", "Run the oracle checks and write verify.json");
  verify->add_option("--out-dir", verify_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, run_ov);
    if (grid->parsed()) return cmd_grid(config_path, sweep_path, grid_ov);
    return cmd_verify(verify_out);
  } catch (const fedselect::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fedselect::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
