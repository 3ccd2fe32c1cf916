#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "sbd/core.hpp"

namespace sbd::test {

inline SpaceSpec torus(int d = 1, double side = 1.0, double intensity = 1.0) {
  SpaceSpec s;
  s.d = d;
  s.lengths.assign(static_cast<std::size_t>(d), side);
  s.beta_intensity = intensity;
  return s;
}

inline SpaceSpec box(int d = 1, double side = 1.0, double intensity = 1.0) {
  SpaceSpec s = torus(d, side, intensity);
  s.boundary = Boundary::Free;
  return s;
}

inline Point random_point(const SpaceSpec& space, std::mt19937_64& rng) {
  std::vector<double> c;
  for (int i = 0; i < space.d; ++i) {
    std::uniform_real_distribution<double> u(0.0, space.lengths[static_cast<std::size_t>(i)]);
    c.push_back(u(rng));
  }
  return Point(std::span<const double>(c));
}

inline Configuration random_configuration(const SpaceSpec& space, std::mt19937_64& rng, int max_points) {
  std::uniform_int_distribution<int> n(0, max_points);
  Configuration eta;
  const int k = n(rng);
  for (int i = 0; i < k; ++i) eta.add(random_point(space, rng));
  return eta;
}

inline Configuration config_1d(std::initializer_list<double> xs) {
  Configuration eta;
  for (double x : xs) eta.add(Point{x});
  return eta;
}

}  // namespace sbd::test
