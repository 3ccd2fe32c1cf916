#include "sbd/io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace sbd {

std::string format_double(double v) { return fmt::format("{}", v); }

nlohmann::json snapshot_json(double time, const Configuration& eta) {
  nlohmann::json pts = nlohmann::json::array();
  for (const Point& p : eta.sorted_points()) {
    nlohmann::json c = nlohmann::json::array();
    for (double v : p.coords()) c.push_back(v);
    pts.push_back(std::move(c));
  }
  return {{"time", time}, {"points", std::move(pts)}};
}

Configuration configuration_from_json(const nlohmann::json& points, int d) {
  if (!points.is_array()) throw InvalidInput("points must be an array of coordinate arrays");
  Configuration eta;
  for (const auto& p : points) {
    if (!p.is_array() || p.size() != static_cast<std::size_t>(d)) {
      throw InvalidInput(fmt::format("each point needs exactly {} coordinates", d));
    }
    std::vector<double> c;
    for (const auto& v : p) {
      if (!v.is_number()) throw InvalidInput("point coordinates must be numbers");
      c.push_back(v.get<double>());
    }
    eta.add(Point(std::span<const double>(c)));
  }
  return eta;
}

std::string events_csv(const Trajectory& trajectory, int d) {
  std::string out = "time,kind,point_id";
  for (int i = 1; i <= d; ++i) out += fmt::format(",x{}", i);
  out += '\n';
  for (const Event& ev : trajectory.events) {
    out += fmt::format("{},{},{}", ev.time, ev.kind == EventKind::Birth ? "birth" : "death", ev.id);
    for (double c : ev.location.coords()) out += fmt::format(",{}", c);
    out += '\n';
  }
  return out;
}

std::string noise_csv(std::span<const NoisePoint> atoms, int d) {
  std::string out = "k,s";
  for (int i = 1; i <= d; ++i) out += fmt::format(",x{}", i);
  out += ",r,u\n";
  for (const NoisePoint& p : atoms) {
    out += fmt::format("{},{}", p.slab, p.s);
    for (double c : p.x.coords()) out += fmt::format(",{}", c);
    out += fmt::format(",{},{}\n", p.r, p.u);
  }
  return out;
}

std::string table_csv(const DistributionTable& table) {
  std::string out = "state,probability\n";
  for (const auto& [k, p] : table.probabilities()) {
    std::string state;
    for (std::size_t i = 0; i < k.size(); ++i) state += (i ? ";" : "") + std::to_string(k[i]);
    out += fmt::format("{},{}\n", state, p);
  }
  return out;
}

std::string curve_csv(const std::string& x_name, const std::string& y_name,
                      std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw InvalidInput("curve columns differ in length");
  std::string out = x_name + "," + y_name + "\n";
  for (std::size_t i = 0; i < xs.size(); ++i) out += fmt::format("{},{}\n", xs[i], ys[i]);
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << contents;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace sbd
