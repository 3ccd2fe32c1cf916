#include "sbd/config.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <type_traits>
#include <variant>

#include <fmt/format.h>

namespace sbd {
namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Strict view of one JSON object: typed getters, and a closing check that
// rejects keys nobody asked for.
class Block {
 public:
  Block(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const std::string& path() const { return path_; }

  Block block(const std::string& key) {
    seen_.insert(key);
    return Block(j_.at(key), join(path_, key));
  }

  double number(const std::string& key, double fallback) {
    if (!mark(key)) return fallback;
    return as_number(j_.at(key), join(path_, key));
  }
  double number(const std::string& key) {
    require(key);
    return number(key, 0.0);
  }
  int integer(const std::string& key, int fallback) {
    if (!mark(key)) return fallback;
    return as_int(j_.at(key), join(path_, key));
  }
  int integer(const std::string& key) {
    require(key);
    return integer(key, 0);
  }
  std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
    if (!mark(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(join(path_, key), "expected an unsigned 64-bit integer");
    }
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!mark(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw ConfigError(join(path_, key), "expected true or false");
    return v.get<bool>();
  }
  std::string string(const std::string& key, const std::string& fallback) {
    if (!mark(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) throw ConfigError(join(path_, key), "expected a string");
    return v.get<std::string>();
  }
  std::string string(const std::string& key) {
    require(key);
    return string(key, "");
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!mark(key)) return fallback;
    const std::string p = join(path_, key);
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(p, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], fmt::format("{}[{}]", p, i)));
    return out;
  }
  std::vector<double> numbers(const std::string& key) {
    require(key);
    return numbers(key, {});
  }
  std::vector<int> integers(const std::string& key, std::vector<int> fallback) {
    if (!mark(key)) return fallback;
    const std::string p = join(path_, key);
    const json& v = j_.at(key);
    if (!v.is_array()) throw ConfigError(p, "expected an array of integers");
    std::vector<int> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_int(v[i], fmt::format("{}[{}]", p, i)));
    return out;
  }
  const json& raw(const std::string& key) {
    require(key);
    mark(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(join(path_, key), "unknown key");
    }
  }

 private:
  bool mark(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  void require(const std::string& key) const {
    if (!j_.contains(key)) throw ConfigError(join(path_, key), "required key is missing");
  }
  static double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path, "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path, "expected a finite number");
    return x;
  }
  static int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError(path, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError(path, "integer out of range");
    }
    return static_cast<int>(x);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

SpaceSpec parse_space(Block b) {
  SpaceSpec s;
  s.d = b.integer("dimension", 1);
  s.lengths = b.numbers("lengths", std::vector<double>(static_cast<std::size_t>(std::max(s.d, 1)), 1.0));
  const std::string boundary = b.string("boundary", "periodic");
  if (boundary == "periodic") {
    s.boundary = Boundary::Periodic;
  } else if (boundary == "free") {
    s.boundary = Boundary::Free;
  } else {
    throw ConfigError(join(b.path(), "boundary"), "expected \"periodic\" or \"free\"");
  }
  s.beta_intensity = b.number("intensity", 1.0);
  s.quadrature_resolution = b.integer("quadrature_resolution", 256);
  b.finish();
  try {
    s.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(b.path(), e.what());
  }
  return s;
}

BirthSpec parse_model(Block b) {
  const std::string type = b.string("type");
  BirthSpec out;
  if (type == "constant") {
    out = ConstantRate{b.number("lambda", 1.0)};
  } else if (type == "pairwise") {
    out = PairwiseRate{b.number("theta"), b.number("range")};
  } else if (type == "cell_pairwise") {
    CellPairwiseRate m;
    m.theta = b.number("theta");
    m.cells = b.integer("cells");
    m.coupling = b.numbers("coupling");
    out = m;
  } else if (type == "area_interaction") {
    AreaInteractionRate m;
    m.rho = b.number("rho");
    m.gamma = b.number("gamma");
    m.grain_radius = b.number("grain_radius");
    m.qmc_points = b.integer("qmc_points", m.qmc_points);
    out = m;
  } else if (type == "nearest_neighbor") {
    NearestNeighborRate m;
    m.knots = b.numbers("knots");
    m.values = b.numbers("values");
    m.at_infinity = b.number("at_infinity");
    out = m;
  } else {
    throw ConfigError(join(b.path(), "type"),
                      "expected one of constant, pairwise, cell_pairwise, area_interaction, nearest_neighbor");
  }
  b.finish();
  return out;
}

DeathSpec parse_death(Block b) {
  const std::string type = b.string("type", "unit");
  DeathSpec out;
  if (type == "unit") {
    out = UnitDeath{};
  } else if (type == "constant") {
    out = ConstantDeath{b.number("rate")};
  } else {
    throw ConfigError(join(b.path(), "type"), "expected \"unit\" or \"constant\"");
  }
  b.finish();
  return out;
}

InitialSpec parse_initial(Block b) {
  InitialSpec s;
  const std::string type = b.string("type", "empty");
  if (type == "empty") {
    s.kind = InitialKind::Empty;
  } else if (type == "poisson") {
    s.kind = InitialKind::Poisson;
    s.intensity = b.number("intensity");
  } else if (type == "points") {
    s.kind = InitialKind::Points;
    const json& pts = b.raw("points");
    const std::string path = join(b.path(), "points");
    if (!pts.is_array()) throw ConfigError(path, "expected an array of coordinate arrays");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string pi = fmt::format("{}[{}]", path, i);
      if (!pts[i].is_array()) throw ConfigError(pi, "expected a coordinate array");
      std::vector<double> c;
      for (const auto& v : pts[i]) {
        if (!v.is_number()) throw ConfigError(pi, "coordinates must be numbers");
        c.push_back(v.get<double>());
      }
      s.points.push_back(std::move(c));
    }
  } else {
    throw ConfigError(join(b.path(), "type"), "expected \"empty\", \"poisson\" or \"points\"");
  }
  b.finish();
  return s;
}

}  // namespace

RunConfig config_from_json(const json& doc) {
  Block root(doc, "");
  RunConfig c;
  c.seed = root.unsigned64("seed", c.seed);
  c.slab_length = root.number("slab_length", c.slab_length);
  c.replicates = root.integer("replicates", c.replicates);
  c.threads = root.integer("threads", c.threads);
  if (root.has("space")) c.space = parse_space(root.block("space"));
  if (root.has("model")) c.birth = parse_model(root.block("model"));
  if (root.has("death")) c.death = parse_death(root.block("death"));
  if (root.has("simulate")) {
    Block b = root.block("simulate");
    c.simulate.horizon = b.number("horizon", c.simulate.horizon);
    c.simulate.snapshot_times = b.numbers("snapshot_times", {});
    c.simulate.write_noise = b.boolean("write_noise", false);
    if (b.has("initial")) c.simulate.initial = parse_initial(b.block("initial"));
    b.finish();
  }
  if (root.has("cftp")) {
    Block b = root.block("cftp");
    c.cftp.T0 = b.number("T0", c.cftp.T0);
    c.cftp.T_max = b.number("T_max", c.cftp.T_max);
    c.cftp.max_sweeps = b.integer("max_sweeps", c.cftp.max_sweeps);
    b.finish();
  }
  if (root.has("oracle")) {
    Block b = root.block("oracle");
    c.oracle.cells = b.integer("cells", c.oracle.cells);
    c.oracle.caps = b.integers("caps", std::vector<int>(static_cast<std::size_t>(std::max(c.oracle.cells, 0)), 20));
    b.finish();
  }
  if (root.has("stats")) {
    Block b = root.block("stats");
    const std::string source = b.string("source", "perfect");
    if (source == "perfect") {
      c.stats.source = SampleSource::Perfect;
    } else if (source == "forward") {
      c.stats.source = SampleSource::Forward;
    } else {
      throw ConfigError("stats.source", "expected \"perfect\" or \"forward\"");
    }
    c.stats.horizon = b.number("horizon", c.stats.horizon);
    c.stats.radii = b.numbers("radii", c.stats.radii);
    c.stats.block_counts = b.integers("block_counts", c.stats.block_counts);
    b.finish();
  }
  if (root.has("validate")) {
    Block b = root.block("validate");
    c.validate.replicates = b.integer("replicates", c.validate.replicates);
    c.validate.horizon = b.number("horizon", c.validate.horizon);
    b.finish();
  }
  root.finish();
  validate_config(c);
  return c;
}

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    std::size_t column = 1;
    const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("", fmt::format("syntax error at line {}, column {}: {}", line, column, e.what()));
  }
  return config_from_json(doc);
}

void validate_config(const RunConfig& c) {
  if (!(c.slab_length > 0.0)) throw ConfigError("slab_length", "must be positive");
  if (c.replicates < 1) throw ConfigError("replicates", "must be at least 1");
  if (c.threads < 1) throw ConfigError("threads", "must be at least 1");
  try {
    c.model().validate(c.space);
  } catch (const InvalidInput& e) {
    throw ConfigError("model", e.what());
  }
  if (!(c.simulate.horizon >= 0.0)) throw ConfigError("simulate.horizon", "must be nonnegative");
  for (std::size_t i = 0; i < c.simulate.snapshot_times.size(); ++i) {
    const double t = c.simulate.snapshot_times[i];
    if (!(t >= 0.0 && t <= c.simulate.horizon)) {
      throw ConfigError(fmt::format("simulate.snapshot_times[{}]", i), "must lie in [0, horizon]");
    }
  }
  for (std::size_t i = 0; i < c.simulate.initial.points.size(); ++i) {
    const auto& p = c.simulate.initial.points[i];
    const std::string field = fmt::format("simulate.initial.points[{}]", i);
    if (p.size() != static_cast<std::size_t>(c.space.d)) throw ConfigError(field, "wrong number of coordinates");
    if (!c.space.contains(Point(std::span<const double>(p)))) throw ConfigError(field, "outside the window");
  }
  if (c.simulate.initial.kind == InitialKind::Poisson && !(c.simulate.initial.intensity >= 0.0)) {
    throw ConfigError("simulate.initial.intensity", "must be nonnegative");
  }
  if (!(c.cftp.T0 > 0.0)) throw ConfigError("cftp.T0", "must be positive");
  if (!(c.cftp.T_max >= c.cftp.T0)) throw ConfigError("cftp.T_max", "must be at least T0");
  if (c.cftp.max_sweeps < 1) throw ConfigError("cftp.max_sweeps", "must be at least 1");
  if (c.oracle.cells < 1) throw ConfigError("oracle.cells", "must be at least 1");
  if (c.oracle.caps.size() != static_cast<std::size_t>(c.oracle.cells)) {
    throw ConfigError("oracle.caps", "needs one cap per cell");
  }
  for (int cap : c.oracle.caps) {
    if (cap < 0) throw ConfigError("oracle.caps", "caps must be nonnegative");
  }
  if (!(c.stats.horizon >= 0.0)) throw ConfigError("stats.horizon", "must be nonnegative");
  for (double r : c.stats.radii) {
    if (!(r >= 0.0)) throw ConfigError("stats.radii", "radii must be nonnegative");
  }
  for (int m : c.stats.block_counts) {
    if (m < 1) throw ConfigError("stats.block_counts", "block counts must be positive");
  }
  if (c.validate.replicates < 10) throw ConfigError("validate.replicates", "must be at least 10");
  if (!(c.validate.horizon > 0.0)) throw ConfigError("validate.horizon", "must be positive");
}

json to_json(const RunConfig& c) {
  json space = {{"dimension", c.space.d},
                {"lengths", c.space.lengths},
                {"boundary", c.space.periodic() ? "periodic" : "free"},
                {"intensity", c.space.beta_intensity},
                {"quadrature_resolution", c.space.quadrature_resolution}};
  json model = std::visit(
      [](const auto& m) -> json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ConstantRate>) {
          return {{"type", "constant"}, {"lambda", m.lambda0}};
        } else if constexpr (std::is_same_v<T, PairwiseRate>) {
          return {{"type", "pairwise"}, {"theta", m.theta}, {"range", m.range}};
        } else if constexpr (std::is_same_v<T, CellPairwiseRate>) {
          return {{"type", "cell_pairwise"}, {"theta", m.theta}, {"cells", m.cells}, {"coupling", m.coupling}};
        } else if constexpr (std::is_same_v<T, AreaInteractionRate>) {
          return {{"type", "area_interaction"},
                  {"rho", m.rho},
                  {"gamma", m.gamma},
                  {"grain_radius", m.grain_radius},
                  {"qmc_points", m.qmc_points}};
        } else {
          return {{"type", "nearest_neighbor"}, {"knots", m.knots}, {"values", m.values}, {"at_infinity", m.at_infinity}};
        }
      },
      c.birth);
  json death = std::holds_alternative<UnitDeath>(c.death)
                   ? json{{"type", "unit"}}
                   : json{{"type", "constant"}, {"rate", std::get<ConstantDeath>(c.death).delta0}};
  json initial;
  switch (c.simulate.initial.kind) {
    case InitialKind::Empty:
      initial = {{"type", "empty"}};
      break;
    case InitialKind::Poisson:
      initial = {{"type", "poisson"}, {"intensity", c.simulate.initial.intensity}};
      break;
    case InitialKind::Points:
      initial = {{"type", "points"}, {"points", c.simulate.initial.points}};
      break;
  }
  return {{"seed", c.seed},
          {"slab_length", c.slab_length},
          {"replicates", c.replicates},
          {"threads", c.threads},
          {"space", space},
          {"model", model},
          {"death", death},
          {"simulate",
           {{"horizon", c.simulate.horizon},
            {"snapshot_times", c.simulate.snapshot_times},
            {"initial", initial},
            {"write_noise", c.simulate.write_noise}}},
          {"cftp", {{"T0", c.cftp.T0}, {"T_max", c.cftp.T_max}, {"max_sweeps", c.cftp.max_sweeps}}},
          {"oracle", {{"cells", c.oracle.cells}, {"caps", c.oracle.caps}}},
          {"stats",
           {{"source", c.stats.source == SampleSource::Perfect ? "perfect" : "forward"},
            {"horizon", c.stats.horizon},
            {"radii", c.stats.radii},
            {"block_counts", c.stats.block_counts}}},
          {"validate", {{"replicates", c.validate.replicates}, {"horizon", c.validate.horizon}}}};
}

}  // namespace sbd
