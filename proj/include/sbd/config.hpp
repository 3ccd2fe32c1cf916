#pragma once

// Run configuration: a JSON document with space, model and per-command
// blocks. Parsing is strict; every problem is reported with its field path.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbd/core.hpp"
#include "sbd/models.hpp"

namespace sbd {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class InitialKind { Empty, Poisson, Points };

struct InitialSpec {
  InitialKind kind = InitialKind::Empty;
  double intensity = 1.0;  // Poisson, relative to β
  std::vector<std::vector<double>> points;
};

struct SimulateConfig {
  double horizon = 10.0;
  std::vector<double> snapshot_times;
  InitialSpec initial;
  bool write_noise = false;
};

struct CftpConfig {
  double T0 = 1.0;
  double T_max = 1024.0;
  int max_sweeps = 64;
};

struct OracleConfig {
  int cells = 3;
  std::vector<int> caps{20, 20, 20};
};

enum class SampleSource { Perfect, Forward };

struct StatsConfig {
  SampleSource source = SampleSource::Perfect;
  double horizon = 20.0;  // forward source only
  std::vector<double> radii{0.05, 0.1, 0.2};
  std::vector<int> block_counts{1, 2, 4, 8};
};

struct ValidateConfig {
  int replicates = 400;
  double horizon = 20.0;
};

struct RunConfig {
  std::uint64_t seed = 1;
  double slab_length = 1.0;
  int replicates = 1;
  int threads = 1;
  SpaceSpec space;
  BirthSpec birth = PairwiseRate{};
  DeathSpec death = UnitDeath{};
  SimulateConfig simulate;
  CftpConfig cftp;
  OracleConfig oracle;
  StatsConfig stats;
  ValidateConfig validate;

  RateModel model() const { return RateModel(birth, death); }
};

/// Parses and validates; throws ConfigError naming the field (and the line
/// and column for syntax errors).
RunConfig parse_config(const std::string& text);
RunConfig config_from_json(const nlohmann::json& doc);
/// Canonical form: parse_config(to_json(c).dump()) reproduces c exactly.
nlohmann::json to_json(const RunConfig& config);

/// Cross-field checks (model against space, command parameters).
void validate_config(const RunConfig& config);

}  // namespace sbd
