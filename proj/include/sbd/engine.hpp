#pragma once

// Exact event-driven solution of the thinning equation: an atom (x, s, r, u)
// of the driving noise becomes a point iff u ≤ λ(x, η_{s−}), and a point dies
// once its accumulated hazard reaches its mark r.

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "sbd/core.hpp"
#include "sbd/models.hpp"
#include "sbd/noise.hpp"

namespace sbd {

class ContainmentViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class EventKind { Birth, Death };

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::Birth;
  PointId id = 0;
  Point location;
  double mark = 0.0;  // births only: the exponential mark r
};

struct Trajectory {
  TimedConfiguration initial;
  std::vector<Event> events;
  double start_time = 0.0;
  double horizon = 0.0;
  TimedConfiguration final;
  double death_rate = 1.0;
  std::size_t candidates = 0;  // noise atoms examined

  double end_time() const { return start_time + horizon; }
};

/// Solves the equation on [start_time, start_time + horizon]. Points of
/// `initial` die when δ·(t − start_time) reaches their clock.
Trajectory simulate(const RateModel& model, const SpaceSpec& space,
                    const TimedConfiguration& initial, double horizon, const NoiseSource& noise,
                    double start_time = 0.0);

struct CoupledTrajectories {
  Trajectory lower;
  Trajectory upper;
  std::size_t containment_checks = 0;  // events audited (nondecreasing models only)
};

/// Two solutions driven by the same noise. `lower` must be a timed
/// sub-configuration of `upper` (shared ids carry identical clocks). For
/// nondecreasing λ containment is audited after every event and a violation
/// throws ContainmentViolation.
CoupledTrajectories coupled_simulate(const RateModel& model, const SpaceSpec& space,
                                     const TimedConfiguration& lower,
                                     const TimedConfiguration& upper, double horizon,
                                     const NoiseSource& noise, double start_time = 0.0);

/// Configuration and residual clocks at time t, by replay.
TimedConfiguration snapshot(const Trajectory& trajectory, double t);

/// Lifetimes of every point that died during the run, measured from its birth
/// (or from the start time for initial points).
std::vector<double> lifetimes(const Trajectory& trajectory);

}  // namespace sbd
