#pragma once

// Configurations as finite counting measures on a bounded window, plus the
// window geometry (torus or free boundary) and the multiset algebra used by
// the Lipschitz and coupling estimates.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace sbd {

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr int kMaxDim = 3;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

class Point {
 public:
  Point() = default;
  Point(std::initializer_list<double> coords);
  explicit Point(std::span<const double> coords);

  int dim() const noexcept { return dim_; }
  double operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }
  double& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }
  std::span<const double> coords() const {
    return {c_.data(), static_cast<std::size_t>(dim_)};
  }

  // Lexicographic; unused trailing coordinates are always zero.
  friend auto operator<=>(const Point&, const Point&) = default;
  friend bool operator==(const Point&, const Point&) = default;

 private:
  std::array<double, kMaxDim> c_{};
  int dim_ = 0;
};

using Displacement = std::array<double, kMaxDim>;

enum class Boundary { Periodic, Free };

struct SpaceSpec {
  int d = 1;
  std::vector<double> lengths{1.0};
  Boundary boundary = Boundary::Periodic;
  double beta_intensity = 1.0;
  int quadrature_resolution = 256;

  /// Throws InvalidInput unless the window is a finite box with beta_total > 0
  /// (beta_intensity == 0 is allowed; it only empties the noise).
  void validate() const;

  double volume() const;
  double beta_total() const { return beta_intensity * volume(); }
  bool periodic() const { return boundary == Boundary::Periodic; }
  double min_length() const;

  bool contains(const Point& x) const;
  void check_point(const Point& x) const;
  /// Maps coordinates back into [0, L) on periodic axes.
  Point wrap(Point x) const;
  /// y - x, minimal image on periodic axes.
  Displacement displacement(const Point& x, const Point& y) const;
};

double torus_distance(const SpaceSpec& space, const Point& x, const Point& y);

/// Squared distance, no dimension checks; the hot path in rate evaluation.
inline double distance_sq_unchecked(const SpaceSpec& space, const Point& x, const Point& y) {
  double acc = 0.0;
  for (int i = 0; i < space.d; ++i) {
    double diff = y[i] - x[i];
    if (space.boundary == Boundary::Periodic) {
      const double len = space.lengths[static_cast<std::size_t>(i)];
      if (diff > 0.5 * len) {
        diff -= len;
      } else if (diff < -0.5 * len) {
        diff += len;
      }
    }
    acc += diff * diff;
  }
  return acc;
}

using PointId = std::uint64_t;

/// Finite counting measure. Ids are opaque and unique within a configuration;
/// equality ignores ids (multiset equality of locations).
class Configuration {
 public:
  struct Entry {
    PointId id;
    Point point;
  };

  Configuration() = default;
  static Configuration from_points(std::span<const Point> points);

  PointId add(const Point& p);
  void insert(PointId id, const Point& p);
  bool erase(PointId id);
  bool contains(PointId id) const { return index_.count(id) != 0; }
  const Point& at(PointId id) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::span<const Entry> entries() const { return entries_; }

  std::vector<Point> points() const;
  std::vector<Point> sorted_points() const;

  friend bool operator==(const Configuration& a, const Configuration& b);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<PointId, std::size_t> index_;
  PointId next_id_ = 0;
};

/// Point carrying its residual exponential clock.
struct TimedEntry {
  PointId id;
  Point point;
  double clock;
  double birth_time;
};

class TimedConfiguration {
 public:
  TimedConfiguration() = default;

  void insert(const TimedEntry& e);
  bool erase(PointId id);
  bool contains(PointId id) const { return index_.count(id) != 0; }
  const TimedEntry& at(PointId id) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::span<const TimedEntry> entries() const { return entries_; }
  PointId max_id() const noexcept { return max_id_; }

  /// Forgets clocks and birth times; ids are kept.
  Configuration configuration() const;

 private:
  std::vector<TimedEntry> entries_;
  std::unordered_map<PointId, std::size_t> index_;
  PointId max_id_ = 0;
};

using PointMultiset = std::vector<Point>;

/// |η1 − η2| as a sorted multiset; multiplicity |η1({x}) − η2({x})|.
PointMultiset symmetric_difference(const Configuration& a, const Configuration& b);

/// Points of `upper` not matched in `lower` (multiset difference), sorted.
PointMultiset multiset_difference(const Configuration& upper, const Configuration& lower);

bool is_submultiset(const Configuration& lower, const Configuration& upper);

template <class Kernel>
double kernel_mass(Kernel&& a, const Point& x, std::span<const Point> delta) {
  double sum = 0.0;
  for (const Point& y : delta) sum += a(x, y);
  return sum;
}

/// d(x, η); +∞ on the empty configuration.
double nearest_distance(const SpaceSpec& space, const Point& x, const Configuration& eta);

}  // namespace sbd
