#include "sbd/core.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sbd {

Point::Point(std::initializer_list<double> coords)
    : Point(std::span<const double>(coords.begin(), coords.size())) {}

Point::Point(std::span<const double> coords) {
  if (coords.empty() || coords.size() > static_cast<std::size_t>(kMaxDim)) {
    throw InvalidInput("point dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  }
  dim_ = static_cast<int>(coords.size());
  std::copy(coords.begin(), coords.end(), c_.begin());
}

void SpaceSpec::validate() const {
  if (d < 1 || d > kMaxDim) {
    throw InvalidInput("space.dimension must be in [1, " + std::to_string(kMaxDim) + "]");
  }
  if (lengths.size() != static_cast<std::size_t>(d)) {
    throw InvalidInput("space.lengths must have exactly `dimension` entries");
  }
  for (double len : lengths) {
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw InvalidInput("space.lengths must be positive and finite");
    }
  }
  if (!(beta_intensity >= 0.0) || !std::isfinite(beta_intensity)) {
    throw InvalidInput("space.intensity must be nonnegative and finite");
  }
  if (quadrature_resolution < 1) {
    throw InvalidInput("space.quadrature_resolution must be positive");
  }
}

double SpaceSpec::volume() const {
  double v = 1.0;
  for (double len : lengths) v *= len;
  return v;
}

double SpaceSpec::min_length() const {
  return *std::min_element(lengths.begin(), lengths.end());
}

bool SpaceSpec::contains(const Point& x) const {
  if (x.dim() != d) return false;
  for (int i = 0; i < d; ++i) {
    const double len = lengths[static_cast<std::size_t>(i)];
    if (x[i] < 0.0) return false;
    if (periodic() ? !(x[i] < len) : !(x[i] <= len)) return false;
  }
  return true;
}

void SpaceSpec::check_point(const Point& x) const {
  if (x.dim() != d) {
    throw InvalidInput("point dimension " + std::to_string(x.dim()) +
                       " does not match space dimension " + std::to_string(d));
  }
  if (!contains(x)) throw InvalidInput("point lies outside the window");
}

Point SpaceSpec::wrap(Point x) const {
  if (!periodic()) return x;
  for (int i = 0; i < d; ++i) {
    const double len = lengths[static_cast<std::size_t>(i)];
    double v = std::fmod(x[i], len);
    if (v < 0.0) v += len;
    // fmod of a value just below 0 can round up to len.
    if (v >= len) v = 0.0;
    x[i] = v;
  }
  return x;
}

Displacement SpaceSpec::displacement(const Point& x, const Point& y) const {
  Displacement out{};
  for (int i = 0; i < d; ++i) {
    double diff = y[i] - x[i];
    if (periodic()) {
      const double len = lengths[static_cast<std::size_t>(i)];
      if (diff > 0.5 * len) {
        diff -= len;
      } else if (diff < -0.5 * len) {
        diff += len;
      }
    }
    out[static_cast<std::size_t>(i)] = diff;
  }
  return out;
}

double torus_distance(const SpaceSpec& space, const Point& x, const Point& y) {
  space.check_point(x);
  space.check_point(y);
  return std::sqrt(distance_sq_unchecked(space, x, y));
}

Configuration Configuration::from_points(std::span<const Point> points) {
  Configuration c;
  for (const Point& p : points) c.add(p);
  return c;
}

PointId Configuration::add(const Point& p) {
  while (index_.count(next_id_) != 0) ++next_id_;
  const PointId id = next_id_++;
  insert(id, p);
  return id;
}

void Configuration::insert(PointId id, const Point& p) {
  if (!index_.emplace(id, entries_.size()).second) {
    throw InvalidInput("duplicate point id " + std::to_string(id));
  }
  entries_.push_back({id, p});
  if (id >= next_id_) next_id_ = id + 1;
}

bool Configuration::erase(PointId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  const std::size_t pos = it->second;
  index_.erase(it);
  if (pos + 1 != entries_.size()) {
    entries_[pos] = entries_.back();
    index_[entries_[pos].id] = pos;
  }
  entries_.pop_back();
  return true;
}

const Point& Configuration::at(PointId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidInput("unknown point id " + std::to_string(id));
  return entries_[it->second].point;
}

std::vector<Point> Configuration::points() const {
  std::vector<Point> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.point);
  return out;
}

std::vector<Point> Configuration::sorted_points() const {
  auto out = points();
  std::sort(out.begin(), out.end());
  return out;
}

bool operator==(const Configuration& a, const Configuration& b) {
  return a.size() == b.size() && a.sorted_points() == b.sorted_points();
}

void TimedConfiguration::insert(const TimedEntry& e) {
  if (!(e.clock > 0.0)) {
    throw InvalidInput("residual clock must be positive");
  }
  if (!index_.emplace(e.id, entries_.size()).second) {
    throw InvalidInput("duplicate point id " + std::to_string(e.id));
  }
  entries_.push_back(e);
  max_id_ = std::max(max_id_, e.id);
}

bool TimedConfiguration::erase(PointId id) {
  auto it = index_.find(id);
  if (it == index_.end()) return false;
  const std::size_t pos = it->second;
  index_.erase(it);
  if (pos + 1 != entries_.size()) {
    entries_[pos] = entries_.back();
    index_[entries_[pos].id] = pos;
  }
  entries_.pop_back();
  return true;
}

const TimedEntry& TimedConfiguration::at(PointId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw InvalidInput("unknown point id " + std::to_string(id));
  return entries_[it->second];
}

Configuration TimedConfiguration::configuration() const {
  Configuration c;
  for (const auto& e : entries_) c.insert(e.id, e.point);
  return c;
}

PointMultiset symmetric_difference(const Configuration& a, const Configuration& b) {
  const auto pa = a.sorted_points();
  const auto pb = b.sorted_points();
  PointMultiset out;
  std::set_symmetric_difference(pa.begin(), pa.end(), pb.begin(), pb.end(),
                                std::back_inserter(out));
  return out;
}

PointMultiset multiset_difference(const Configuration& upper, const Configuration& lower) {
  const auto pu = upper.sorted_points();
  const auto pl = lower.sorted_points();
  PointMultiset out;
  std::set_difference(pu.begin(), pu.end(), pl.begin(), pl.end(), std::back_inserter(out));
  return out;
}

bool is_submultiset(const Configuration& lower, const Configuration& upper) {
  if (lower.size() > upper.size()) return false;
  const auto pl = lower.sorted_points();
  const auto pu = upper.sorted_points();
  return std::includes(pu.begin(), pu.end(), pl.begin(), pl.end());
}

double nearest_distance(const SpaceSpec& space, const Point& x, const Configuration& eta) {
  double best = kInfinity;
  for (const auto& e : eta) {
    best = std::min(best, distance_sq_unchecked(space, x, e.point));
  }
  return std::sqrt(best);
}

}  // namespace sbd
