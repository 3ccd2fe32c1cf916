#pragma once

// File formats: JSON snapshots, CSV event logs, noise dumps and tables.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sbd/analysis.hpp"
#include "sbd/core.hpp"
#include "sbd/engine.hpp"
#include "sbd/noise.hpp"

namespace sbd {

/// {"time": t, "points": [[x1, …], …]} with points in sorted order.
nlohmann::json snapshot_json(double time, const Configuration& eta);
Configuration configuration_from_json(const nlohmann::json& points, int d);

/// time,kind,point_id,x1..xd
std::string events_csv(const Trajectory& trajectory, int d);
/// k,s,x1..xd,r,u
std::string noise_csv(std::span<const NoisePoint> atoms, int d);
/// state,probability with the occupancy vector joined by ';'.
std::string table_csv(const DistributionTable& table);
std::string curve_csv(const std::string& x_name, const std::string& y_name,
                      std::span<const double> xs, std::span<const double> ys);

/// Shortest decimal form that reads back to the same double.
std::string format_double(double v);

void write_file(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace sbd
