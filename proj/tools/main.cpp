// Command-line front end: sbd <command> [--config PATH] [overrides].

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "sbd/commands.hpp"
#include "sbd/config.hpp"
#include "sbd/io.hpp"

namespace {

std::vector<double> parse_times(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw sbd::ConfigError("--snapshot-times", "cannot parse '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatial birth-death simulation and perfect sampling"};
  std::string command;
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  std::optional<int> threads;
  std::optional<double> horizon;
  std::optional<std::string> snapshot_times;

  const auto& names = sbd::command_names();
  app.add_option("command", command, "simulate | perfect-sample | oracle | validate | stats | contraction")
      ->required()
      ->check(CLI::IsMember(names));
  app.add_option("--config", config_path, "JSON run configuration (defaults apply when omitted)");
  app.add_option("--seed", seed, "master seed (unsigned 64-bit)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--replicates", replicates, "independent replicates");
  app.add_option("--threads", threads, "worker threads for replicates");
  app.add_option("--horizon", horizon, "simulation horizon");
  app.add_option("--snapshot-times", snapshot_times, "comma-separated snapshot times");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : sbd::kExitConfig;
  }

  const bool verbose = std::getenv("SBD_QUIET") == nullptr;
  std::ostringstream sink;
  std::ostream& log = verbose ? std::cout : sink;

  sbd::RunConfig config;
  try {
    config = config_path.empty() ? sbd::RunConfig{} : sbd::parse_config(sbd::read_file(config_path));
    if (seed) config.seed = *seed;
    if (replicates) config.replicates = *replicates;
    if (threads) config.threads = *threads;
    if (horizon) {
      config.simulate.horizon = *horizon;
      if (!snapshot_times) std::erase_if(config.simulate.snapshot_times, [&](double t) { return t > *horizon; });
    }
    if (snapshot_times) config.simulate.snapshot_times = parse_times(*snapshot_times);
    sbd::validate_config(config);
  } catch (const sbd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return sbd::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return sbd::kExitConfig;
  }

  try {
    return sbd::run_command(command, config, out_dir, log);
  } catch (const sbd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return sbd::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sbd::kExitFailure;
  }
}
