#pragma once

// Command orchestration behind the CLI: each command reads a validated
// RunConfig, writes its outputs (and the config itself) to a directory and
// returns a process exit code.

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "sbd/config.hpp"
#include "sbd/core.hpp"

namespace sbd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitValidation = 3;

const std::vector<std::string>& command_names();

/// Seed of replicate i: derive_key(master, Replicate, i).
std::uint64_t replicate_seed(std::uint64_t master, std::size_t i);

/// Initial configuration for simulate, drawn with the replicate seed when random.
Configuration initial_configuration(const RunConfig& config, std::uint64_t seed);

int run_command(const std::string& command, const RunConfig& config,
                const std::filesystem::path& out, std::ostream& log);

}  // namespace sbd
