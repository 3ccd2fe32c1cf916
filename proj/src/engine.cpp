#include "sbd/engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>
#include <utility>

namespace sbd {
namespace {

struct Fate {
  double birth_time;
  double clock;  // clock at birth_time (mark for births, initial clock otherwise)
  double death_time;
};

using DeathQueue =
    std::priority_queue<std::pair<double, PointId>, std::vector<std::pair<double, PointId>>,
                        std::greater<>>;

class Process {
 public:
  Process(const TimedConfiguration& initial, double start, double delta)
      : delta_(delta) {
    trajectory_.initial = initial;
    trajectory_.start_time = start;
    trajectory_.death_rate = delta;
    for (const auto& e : initial) {
      live_.insert(e.id, e.point);
      add_fate(e.id, start, e.clock);
    }
  }

  const Configuration& live() const { return live_; }

  void deaths_before(double t) {
    while (!deaths_.empty() && deaths_.top().first < t) pop_death();
  }
  void deaths_through(double t) {
    while (!deaths_.empty() && deaths_.top().first <= t) pop_death();
  }

  void birth(PointId id, const NoisePoint& p) {
    live_.insert(id, p.x);
    add_fate(id, p.s, p.r);
    trajectory_.events.push_back({p.s, EventKind::Birth, id, p.x, p.r});
  }

  void count_candidate() { ++trajectory_.candidates; }

  Trajectory finish(double end) {
    trajectory_.horizon = end - trajectory_.start_time;
    for (const auto& e : live_) {
      const Fate& f = fates_.at(e.id);
      trajectory_.final.insert({e.id, e.point, remaining(f.clock, f.birth_time, end), f.birth_time});
    }
    return std::move(trajectory_);
  }

  double remaining(double clock, double from, double t) const {
    const double r = clock - delta_ * (t - from);
    return r > 0.0 ? r : std::numeric_limits<double>::denorm_min();
  }

 private:
  void add_fate(PointId id, double birth, double clock) {
    // Constant hazard δ: the accumulated hazard δ·(t − birth) hits the clock here.
    const double death = birth + clock / delta_;
    fates_[id] = {birth, clock, death};
    deaths_.emplace(death, id);
  }

  void pop_death() {
    const auto [t, id] = deaths_.top();
    deaths_.pop();
    trajectory_.events.push_back({t, EventKind::Death, id, live_.at(id), 0.0});
    live_.erase(id);
  }

  double delta_;
  Configuration live_;
  std::unordered_map<PointId, Fate> fates_;
  DeathQueue deaths_;
  Trajectory trajectory_;
};

void check_window(const SpaceSpec& space, const TimedConfiguration& initial) {
  for (const auto& e : initial) {
    if (!space.contains(e.point)) throw InvalidInput("initial point lies outside the window");
  }
}

// Visits every atom with s in [t0, t1) in (s, draw) order.
template <class Fn>
void for_each_candidate(const NoiseSource& noise, double t0, double t1, Fn&& fn) {
  if (!(t1 > t0)) return;
  const double len = noise.slab_length();
  const std::int64_t first = slab_index(t0, len);
  const std::int64_t last = slab_index(t1, len);
  for (std::int64_t k = first; k <= last; ++k) {
    for (const NoisePoint& p : noise.slab(k)) {
      if (p.s < t0) continue;
      if (p.s >= t1) return;
      fn(p);
    }
  }
}

void check_horizon(double horizon) {
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) {
    throw InvalidInput("horizon must be nonnegative and finite");
  }
}

}  // namespace

Trajectory simulate(const RateModel& model, const SpaceSpec& space,
                    const TimedConfiguration& initial, double horizon, const NoiseSource& noise,
                    double start_time) {
  model.validate(space);
  check_horizon(horizon);
  check_window(space, initial);
  const double end = start_time + horizon;

  Process proc(initial, start_time, model.death_constant());
  PointId next_id = initial.empty() ? 0 : initial.max_id() + 1;

  for_each_candidate(noise, start_time, end, [&](const NoisePoint& p) {
    proc.deaths_before(p.s);
    proc.count_candidate();
    if (p.u <= birth_rate(model, space, p.x, proc.live())) proc.birth(next_id++, p);
  });
  proc.deaths_through(end);
  return proc.finish(end);
}

CoupledTrajectories coupled_simulate(const RateModel& model, const SpaceSpec& space,
                                     const TimedConfiguration& lower,
                                     const TimedConfiguration& upper, double horizon,
                                     const NoiseSource& noise, double start_time) {
  model.validate(space);
  check_horizon(horizon);
  check_window(space, upper);
  for (const auto& e : lower) {
    if (!upper.contains(e.id)) throw InvalidInput("lower initial point missing from upper");
    const TimedEntry& u = upper.at(e.id);
    if (!(u.point == e.point) || u.clock != e.clock) {
      throw InvalidInput("shared initial points must carry identical locations and clocks");
    }
  }
  const double end = start_time + horizon;
  const double delta = model.death_constant();
  const bool audit = model.nondecreasing();

  Process lo(lower, start_time, delta);
  Process up(upper, start_time, delta);
  PointId next_id = upper.empty() ? 0 : upper.max_id() + 1;
  std::size_t checks = 0;

  auto audit_containment = [&](double t) {
    if (!audit) return;
    ++checks;
    for (const auto& e : lo.live()) {
      if (!up.live().contains(e.id)) {
        throw ContainmentViolation("coupled run lost containment at t = " + std::to_string(t));
      }
    }
  };

  for_each_candidate(noise, start_time, end, [&](const NoisePoint& p) {
    lo.deaths_before(p.s);
    up.deaths_before(p.s);
    audit_containment(p.s);
    lo.count_candidate();
    up.count_candidate();
    const bool in_lo = p.u <= birth_rate(model, space, p.x, lo.live());
    const bool in_up = p.u <= birth_rate(model, space, p.x, up.live());
    if (in_lo || in_up) {
      const PointId id = next_id++;
      if (in_lo) lo.birth(id, p);
      if (in_up) up.birth(id, p);
      audit_containment(p.s);
    }
  });
  lo.deaths_through(end);
  up.deaths_through(end);
  audit_containment(end);

  CoupledTrajectories out;
  out.lower = lo.finish(end);
  out.upper = up.finish(end);
  out.containment_checks = checks;
  return out;
}

TimedConfiguration snapshot(const Trajectory& trajectory, double t) {
  const double start = trajectory.start_time;
  const double end = trajectory.end_time();
  if (!(t >= start && t <= end)) throw InvalidInput("snapshot time outside the trajectory window");
  const double delta = trajectory.death_rate;

  struct Origin {
    double from;  // time at which `clock` was read
    double clock;
    double birth_time;
  };
  std::unordered_map<PointId, Origin> origin;
  Configuration live;
  for (const auto& e : trajectory.initial) {
    live.insert(e.id, e.point);
    origin[e.id] = {start, e.clock, e.birth_time};
  }
  for (const auto& ev : trajectory.events) {
    if (ev.time > t) break;
    if (ev.kind == EventKind::Birth) {
      live.insert(ev.id, ev.location);
      origin[ev.id] = {ev.time, ev.mark, ev.time};
    } else {
      live.erase(ev.id);
    }
  }
  if (t == end) return trajectory.final;

  TimedConfiguration out;
  for (const auto& e : live) {
    const Origin& o = origin.at(e.id);
    double r = o.clock - delta * (t - o.from);
    if (!(r > 0.0)) r = std::numeric_limits<double>::denorm_min();
    out.insert({e.id, e.point, r, o.birth_time});
  }
  return out;
}

std::vector<double> lifetimes(const Trajectory& trajectory) {
  std::unordered_map<PointId, double> born;
  for (const auto& e : trajectory.initial) born[e.id] = trajectory.start_time;
  std::vector<double> out;
  for (const auto& ev : trajectory.events) {
    if (ev.kind == EventKind::Birth) {
      born[ev.id] = ev.time;
    } else {
      out.push_back(ev.time - born.at(ev.id));
    }
  }
  return out;
}

}  // namespace sbd
