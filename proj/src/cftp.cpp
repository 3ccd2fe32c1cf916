#include "sbd/cftp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>
#include <utility>

#include <fmt/format.h>

namespace sbd {
namespace {

struct Candidates {
  std::vector<NoisePoint> atoms;  // s in [t0, t1), time order
  std::map<std::int64_t, std::uint64_t> hashes;
};

Candidates collect(const NoiseStream& stream, double t0, double t1) {
  Candidates out;
  if (!(t1 > t0)) return out;
  const double len = stream.slab_length();
  const std::int64_t first = slab_index(t0, len);
  const std::int64_t last = slab_index(t1, len);
  for (std::int64_t k = first; k <= last; ++k) {
    const auto slab = stream.slab(k);
    out.hashes[k] = slab_hash(slab);
    for (const NoisePoint& p : slab) {
      if (p.s >= t0 && p.s < t1) out.atoms.push_back(p);
    }
  }
  return out;
}

double effective_anchor(double T, double anchor) { return std::max(T, anchor); }

void check_lookback(double T) {
  if (!(T > 0.0) || !std::isfinite(T)) throw InvalidInput("lookback T must be positive and finite");
}

// Replays one path on [start, ·): initial points plus accepted candidates, with
// deaths at birth + clock/δ. Candidate i carries id `base + i`.
class Replay {
 public:
  Replay(const TimedConfiguration& initial, double start, double delta, PointId base, bool record)
      : delta_(delta), base_(base), record_(record) {
    if (record_) {
      traj_.initial = initial;
      traj_.start_time = start;
      traj_.death_rate = delta;
    }
    for (const auto& e : initial) {
      live_.insert(e.id, e.point);
      fates_[e.id] = {start, e.clock, e.birth_time};
      deaths_.emplace(start + e.clock / delta_, e.id);
    }
  }

  const Configuration& live() const { return live_; }

  void deaths_before(double t) {
    while (!deaths_.empty() && deaths_.top().first < t) pop();
  }
  void deaths_through(double t) {
    while (!deaths_.empty() && deaths_.top().first <= t) pop();
  }

  void accept(std::size_t i, const NoisePoint& p) {
    const PointId id = base_ + i;
    live_.insert(id, p.x);
    fates_[id] = {p.s, p.r, p.s};
    deaths_.emplace(p.s + p.r / delta_, id);
    if (record_) traj_.events.push_back({p.s, EventKind::Birth, id, p.x, p.r});
  }

  Trajectory finish(double end, std::size_t candidates) {
    deaths_through(end);
    traj_.horizon = end - traj_.start_time;
    traj_.candidates = candidates;
    for (const auto& e : live_) {
      const Fate& f = fates_.at(e.id);
      double r = f.clock - delta_ * (end - f.from);
      if (!(r > 0.0)) r = std::numeric_limits<double>::denorm_min();
      traj_.final.insert({e.id, e.point, r, f.birth_time});
    }
    return std::move(traj_);
  }

 private:
  struct Fate {
    double from;
    double clock;
    double birth_time;
  };

  void pop() {
    const auto [t, id] = deaths_.top();
    deaths_.pop();
    if (record_) traj_.events.push_back({t, EventKind::Death, id, live_.at(id), 0.0});
    live_.erase(id);
  }

  double delta_;
  PointId base_;
  bool record_;
  Configuration live_;
  std::unordered_map<PointId, Fate> fates_;
  std::priority_queue<std::pair<double, PointId>, std::vector<std::pair<double, PointId>>,
                      std::greater<>>
      deaths_;
  Trajectory traj_;
};

struct Setup {
  Candidates cands;
  TimedConfiguration upper_initial;
  PointId base = 0;
  double delta = 1.0;
};

Setup prepare(const RateModel& model, const SpaceSpec& space, double T, const NoiseStream& stream,
              const SandwichOptions& options) {
  model.validate(space);
  check_lookback(T);
  if (options.max_sweeps < 1) throw InvalidInput("max_sweeps must be at least 1");
  Setup s;
  s.delta = model.death_constant();
  s.upper_initial = dominating_state(stream, T, options.anchor, s.delta);
  s.cands = collect(stream, -T, 0.0);
  s.base = s.upper_initial.empty() ? 0 : s.upper_initial.max_id() + 1;
  return s;
}

using Accepts = std::vector<char>;

struct SweepResult {
  Accepts lower;
  Accepts upper;
  int sweeps = 0;
};

bool contains_all(const Accepts& small, const Accepts& big) {
  for (std::size_t i = 0; i < small.size(); ++i) {
    if (small[i] && !big[i]) return false;
  }
  return true;
}

std::size_t count(const Accepts& a) { return static_cast<std::size_t>(std::count(a.begin(), a.end(), 1)); }

SweepResult iterate(const RateModel& model, const SpaceSpec& space, const Setup& s, double T,
                    int max_sweeps) {
  const auto& atoms = s.cands.atoms;
  const std::size_t n = atoms.size();
  // First iterate: lower empty, upper accepts every atom of the dominating process.
  Accepts lower(n, 0);
  Accepts upper(n, 1);
  std::vector<std::string> trace;
  trace.push_back(fmt::format("sweep 1: lower {} upper {}", 0, n));
  const TimedConfiguration none;

  for (int sweep = 2; sweep <= max_sweeps + 1; ++sweep) {
    Replay lo(none, -T, s.delta, s.base, false);
    Replay up(s.upper_initial, -T, s.delta, s.base, false);
    Accepts next_lower(n, 0);
    Accepts next_upper(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const NoisePoint& p = atoms[i];
      lo.deaths_before(p.s);
      up.deaths_before(p.s);
      const RateBounds b = sandwich_rates_unchecked(model, space, p.x, lo.live(), up.live());
      next_lower[i] = p.u < b.lower ? 1 : 0;
      next_upper[i] = p.u <= b.upper ? 1 : 0;
      if (lower[i]) lo.accept(i, p);
      if (upper[i]) up.accept(i, p);
    }
    trace.push_back(
        fmt::format("sweep {}: lower {} upper {}", sweep, count(next_lower), count(next_upper)));
    if (!contains_all(lower, next_lower) || !contains_all(next_upper, upper) ||
        !contains_all(next_lower, next_upper)) {
      throw std::logic_error("sandwich iterates lost monotonicity at " + trace.back());
    }
    if (next_lower == lower && next_upper == upper) return {std::move(lower), std::move(upper), sweep - 1};
    lower = std::move(next_lower);
    upper = std::move(next_upper);
  }
  throw ConvergenceFailure(
      fmt::format("sandwich did not reach a fixed point within {} sweeps (T = {})", max_sweeps, T),
      std::move(trace));
}

SandwichPaths build_paths(const Setup& s, double T, const Accepts& lower, const Accepts& upper,
                          int sweeps) {
  Replay lo(TimedConfiguration{}, -T, s.delta, s.base, true);
  Replay up(s.upper_initial, -T, s.delta, s.base, true);
  const auto& atoms = s.cands.atoms;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    lo.deaths_before(atoms[i].s);
    up.deaths_before(atoms[i].s);
    if (lower[i]) lo.accept(i, atoms[i]);
    if (upper[i]) up.accept(i, atoms[i]);
  }
  SandwichPaths out;
  out.lower = lo.finish(0.0, atoms.size());
  out.upper = up.finish(0.0, atoms.size());
  out.upper_initial = s.upper_initial;
  out.sweeps = sweeps;
  return out;
}

Configuration final_configuration(const Setup& s, double T, const Accepts& accepted,
                                  const TimedConfiguration& initial) {
  Replay r(initial, -T, s.delta, s.base, false);
  const auto& atoms = s.cands.atoms;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    r.deaths_before(atoms[i].s);
    if (accepted[i]) r.accept(i, atoms[i]);
  }
  r.deaths_through(0.0);
  return r.live();
}

}  // namespace

TimedConfiguration dominating_state(const NoiseStream& stream, double T, double anchor,
                                    double death_rate) {
  if (!(T >= 0.0) || !std::isfinite(T)) throw InvalidInput("lookback must be nonnegative");
  const double A = effective_anchor(T, anchor);
  TimedConfiguration out;
  PointId id = 0;
  for (const auto& e : stream.dominating_tail(A, death_rate)) {
    const double r = e.clock - death_rate * (A - T);
    if (r > 0.0) out.insert({id++, e.point, r, e.birth_time});
  }
  for (const NoisePoint& p : collect(stream, -A, -T).atoms) {
    const double r = p.r - death_rate * (-T - p.s);
    if (r > 0.0) out.insert({id++, p.x, r, p.s});
  }
  return out;
}

SandwichState sandwich_run(const RateModel& model, const SpaceSpec& space, double T,
                           const NoiseStream& stream, const SandwichOptions& options) {
  const Setup s = prepare(model, space, T, stream, options);
  const SweepResult res = iterate(model, space, s, T, options.max_sweeps);
  SandwichState out;
  out.T = T;
  out.sweeps = res.sweeps;
  out.candidates = s.cands.atoms.size();
  out.slab_hashes = s.cands.hashes;
  out.lower = final_configuration(s, T, res.lower, TimedConfiguration{});
  out.upper = final_configuration(s, T, res.upper, s.upper_initial);
  out.coalesced = out.lower == out.upper;
  return out;
}

SandwichPaths sandwich_paths(const RateModel& model, const SpaceSpec& space, double T,
                             const NoiseStream& stream, const SandwichOptions& options) {
  const Setup s = prepare(model, space, T, stream, options);
  const SweepResult res = iterate(model, space, s, T, options.max_sweeps);
  return build_paths(s, T, res.lower, res.upper, res.sweeps);
}

SandwichPaths sandwich_forward(const RateModel& model, const SpaceSpec& space, double T,
                               const NoiseStream& stream, const SandwichOptions& options) {
  const Setup s = prepare(model, space, T, stream, options);
  const auto& atoms = s.cands.atoms;
  Accepts lower(atoms.size(), 0);
  Accepts upper(atoms.size(), 0);
  Replay lo(TimedConfiguration{}, -T, s.delta, s.base, false);
  Replay up(s.upper_initial, -T, s.delta, s.base, false);
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const NoisePoint& p = atoms[i];
    lo.deaths_before(p.s);
    up.deaths_before(p.s);
    const RateBounds b = sandwich_rates_unchecked(model, space, p.x, lo.live(), up.live());
    lower[i] = p.u < b.lower ? 1 : 0;
    upper[i] = p.u <= b.upper ? 1 : 0;
    if (lower[i]) lo.accept(i, p);
    if (upper[i]) up.accept(i, p);
  }
  return build_paths(s, T, lower, upper, 1);
}

PerfectSample perfect_sample(const RateModel& model, const SpaceSpec& space,
                             std::uint64_t master_seed, double T0, double T_max, int max_sweeps,
                             double slab_length) {
  check_lookback(T0);
  if (!(T_max >= T0) || !std::isfinite(T_max)) throw InvalidInput("T_max must be finite and at least T0");
  const NoiseStream stream = NoiseStream::for_model(master_seed, model, space, slab_length);
  SandwichOptions opts;
  opts.max_sweeps = max_sweeps;
  opts.anchor = T_max;

  PerfectSample out;
  double T = T0;
  for (;;) {
    SandwichState st = sandwich_run(model, space, T, stream, opts);
    out.runs.push_back({T, st.coalesced, st.sweeps, st.slab_hashes});
    if (st.coalesced) {
      out.configuration = std::move(st.lower);
      out.T_used = T;
      out.status = SampleStatus::Coalesced;
      return out;
    }
    if (T >= T_max) break;
    T = std::min(2.0 * T, T_max);
  }
  out.T_used = T_max;
  out.status = SampleStatus::NotCoalesced;
  return out;
}

Configuration minimal_stationary_sample(const RateModel& model, const SpaceSpec& space,
                                        std::uint64_t seed, double horizon) {
  if (!model.nondecreasing()) throw UnsupportedModel("minimal stationary sampling needs a nondecreasing rate");
  const NoiseStream stream = NoiseStream::for_model(seed, model, space);
  return simulate(model, space, TimedConfiguration{}, horizon, stream, -horizon).final.configuration();
}

Configuration maximal_stationary_sample(const RateModel& model, const SpaceSpec& space,
                                        std::uint64_t seed, double horizon, double anchor) {
  if (!model.nondecreasing()) throw UnsupportedModel("maximal stationary sampling needs a nondecreasing rate");
  if (!(horizon >= 0.0) || !std::isfinite(horizon)) throw InvalidInput("horizon must be nonnegative and finite");
  const NoiseStream stream = NoiseStream::for_model(seed, model, space);
  const TimedConfiguration start =
      dominating_state(stream, horizon, effective_anchor(horizon, anchor), model.death_constant());
  return simulate(model, space, start, horizon, stream, -horizon).final.configuration();
}

DecayCurve coupling_decay_curve(const RateModel& model, const SpaceSpec& space,
                                const Configuration& eta1, const Configuration& eta2,
                                double horizon, int replicates, std::uint64_t seed,
                                int time_points) {
  model.validate(space);
  if (!is_submultiset(eta1, eta2)) throw InvalidInput("coupling curve needs eta1 contained in eta2");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidInput("horizon must be positive");
  if (replicates < 1) throw InvalidInput("replicates must be positive");
  if (time_points < 2) throw InvalidInput("need at least two time points");

  DecayCurve out;
  out.raw_mass = model.monotonicity() == Monotonicity::Constant;
  for (int k = 0; k < time_points; ++k) out.times.push_back(horizon * k / (time_points - 1));

  std::vector<Point> grid;
  if (!out.raw_mass) {
    const int per_axis = space.d == 1 ? std::min(space.quadrature_resolution, 256) : space.d == 2 ? 32 : 12;
    std::array<int, kMaxDim> idx{};
    const int total = static_cast<int>(std::pow(per_axis, space.d));
    for (int flat = 0; flat < total; ++flat) {
      int rest = flat;
      std::array<double, kMaxDim> c{};
      for (int a = 0; a < space.d; ++a) {
        idx[static_cast<std::size_t>(a)] = rest % per_axis;
        rest /= per_axis;
        c[static_cast<std::size_t>(a)] = (idx[static_cast<std::size_t>(a)] + 0.5) *
                                         space.lengths[static_cast<std::size_t>(a)] / per_axis;
      }
      grid.emplace_back(std::span<const double>(c.data(), static_cast<std::size_t>(space.d)));
    }
  }
  std::vector<double> weights;
  for (const Point& x : grid) weights.push_back(model.weight(x));

  const std::size_t nt = out.times.size();
  std::vector<double> raw(nt, 0.0);
  std::vector<std::vector<double>> acc(nt, std::vector<double>(grid.size(), 0.0));

  for (int rep = 0; rep < replicates; ++rep) {
    const std::uint64_t key = derive_key(seed, StreamTag::Replicate, static_cast<std::uint64_t>(rep));
    const NoiseStream stream = NoiseStream::for_model(key, model, space);
    const TimedConfiguration upper = initial_clocks(eta2, key);
    // Lower shares ids and clocks with the matching upper points.
    TimedConfiguration lower;
    std::vector<Point> wanted = eta1.sorted_points();
    std::vector<char> used(wanted.size(), 0);
    for (const auto& e : upper) {
      const auto it = std::lower_bound(wanted.begin(), wanted.end(), e.point);
      for (auto j = it; j != wanted.end() && *j == e.point; ++j) {
        const auto pos = static_cast<std::size_t>(j - wanted.begin());
        if (!used[pos]) {
          used[pos] = 1;
          lower.insert(e);
          break;
        }
      }
    }
    const CoupledTrajectories run = coupled_simulate(model, space, lower, upper, horizon, stream);
    for (std::size_t k = 0; k < nt; ++k) {
      const PointMultiset diff = symmetric_difference(snapshot(run.lower, out.times[k]).configuration(),
                                                      snapshot(run.upper, out.times[k]).configuration());
      if (out.raw_mass) {
        raw[k] += static_cast<double>(diff.size());
        continue;
      }
      for (std::size_t g = 0; g < grid.size(); ++g) {
        for (const Point& y : diff) acc[k][g] += weights[g] * increment_kernel(model, space, grid[g], y);
      }
    }
  }

  for (std::size_t k = 0; k < nt; ++k) {
    double v = raw[k];
    if (!out.raw_mass) v = acc[k].empty() ? 0.0 : *std::max_element(acc[k].begin(), acc[k].end());
    out.distance.push_back(v / replicates);
  }

  // Least-squares slope of log distance against t over the positive part.
  double n = 0, st = 0, sy = 0, stt = 0, sty = 0;
  for (std::size_t k = 0; k < nt; ++k) {
    if (!(out.distance[k] > 0.0)) continue;
    const double t = out.times[k];
    const double y = std::log(out.distance[k]);
    n += 1;
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
  }
  const double den = n * stt - st * st;
  out.fitted_rate = (n >= 2 && den > 0) ? (n * sty - st * sy) / den
                                        : std::numeric_limits<double>::quiet_NaN();
  return out;
}

}  // namespace sbd
