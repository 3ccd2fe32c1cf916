#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "helpers.hpp"
#include "sbd/analysis.hpp"
#include "sbd/cftp.hpp"

using namespace sbd;

namespace {

std::vector<RateModel> sandwich_models() {
  return {
      RateModel(ConstantRate{2.0}),
      RateModel(PairwiseRate{0.5, 0.2}),
      RateModel(PairwiseRate{1.5, 0.1}),
      RateModel(CellPairwiseRate{1.0, 3, {1, 0.5, 0.5, 0.5, 1, 0.5, 0.5, 0.5, 1}}),
      RateModel(AreaInteractionRate{1.0, 2.0, 0.05, 512}),
      RateModel(AreaInteractionRate{2.0, 0.5, 0.05, 512}),
      RateModel(NearestNeighborRate{{0.0, 0.1}, {0.2, 1.0}, 1.0}),
  };
}

std::set<double> event_times(const Trajectory& t) {
  std::set<double> out{t.start_time, t.end_time()};
  for (const auto& ev : t.events) out.insert(ev.time);
  return out;
}

bool same_accepts(const Trajectory& a, const Trajectory& b) {
  std::vector<PointId> x;
  std::vector<PointId> y;
  for (const auto& ev : a.events) {
    if (ev.kind == EventKind::Birth) x.push_back(ev.id);
  }
  for (const auto& ev : b.events) {
    if (ev.kind == EventKind::Birth) y.push_back(ev.id);
  }
  return x == y;
}

}  // namespace

TEST_CASE("sweep limit equals the single-pass forward solve") {
  const SpaceSpec ring = test::torus(1, 1.0, 6.0);
  for (const RateModel& m : sandwich_models()) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      const auto stream = NoiseStream::for_model(seed, m, ring);
      const auto swept = sandwich_paths(m, ring, 4.0, stream);
      const auto forward = sandwich_forward(m, ring, 4.0, stream);
      CHECK(same_accepts(swept.lower, forward.lower));
      CHECK(same_accepts(swept.upper, forward.upper));
      const auto state = sandwich_run(m, ring, 4.0, stream);
      CHECK(state.lower == swept.lower.final.configuration());
      CHECK(state.upper == swept.upper.final.configuration());
      CHECK(state.coalesced == (state.lower == state.upper));
      CHECK(is_submultiset(state.lower, state.upper));
    }
  }
}

TEST_CASE("sandwich paths stay ordered at every event") {
  const SpaceSpec ring = test::torus(1, 1.0, 6.0);
  for (const RateModel& m : sandwich_models()) {
    const auto stream = NoiseStream::for_model(99, m, ring);
    const auto p = sandwich_paths(m, ring, 6.0, stream);
    std::set<double> times = event_times(p.lower);
    for (double t : event_times(p.upper)) times.insert(t);
    for (double t : times) {
      CHECK(is_submultiset(snapshot(p.lower, t).configuration(), snapshot(p.upper, t).configuration()));
    }
  }
}

TEST_CASE("funnel: solutions from intermediate starts stay inside the sandwich") {
  const SpaceSpec ring = test::torus(1, 1.0, 6.0);
  for (const RateModel& m : sandwich_models()) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto stream = NoiseStream::for_model(seed, m, ring);
      const double T = 5.0;
      const auto p = sandwich_paths(m, ring, T, stream);
      std::mt19937_64 rng(seed);
      for (int trial = 0; trial < 5; ++trial) {
        TimedConfiguration start;
        for (const auto& e : p.upper_initial) {
          if (rng() % 2) start.insert(e);
        }
        const auto path = simulate(m, ring, start, T, stream, -T);
        std::set<double> times = event_times(path);
        for (double t : event_times(p.lower)) times.insert(t);
        for (double t : event_times(p.upper)) times.insert(t);
        for (double t : times) {
          const auto mid = snapshot(path, t).configuration();
          CHECK(is_submultiset(snapshot(p.lower, t).configuration(), mid));
          CHECK(is_submultiset(mid, snapshot(p.upper, t).configuration()));
        }
      }
    }
  }
}

TEST_CASE("constant model coalesces exactly when the dominating start has died") {
  const SpaceSpec ring = test::torus(1, 1.0, 3.0);
  const RateModel m(ConstantRate{1.0});
  int coalesced = 0;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const auto stream = NoiseStream::for_model(seed, m, ring);
    const double T = 2.0;
    const auto state = sandwich_run(m, ring, T, stream);
    const auto start = dominating_state(stream, T, 0.0, 1.0);
    double longest = 0.0;
    for (const auto& e : start) longest = std::max(longest, e.clock);
    CHECK(state.coalesced == (longest <= T));
    // Iterate 1 is the trivial start; the second already reads constant rates.
    CHECK(state.sweeps == 2);
    coalesced += state.coalesced ? 1 : 0;
  }
  CHECK(coalesced > 0);
  CHECK(coalesced < 200);
}

TEST_CASE("zero birth rate coalesces immediately") {
  const SpaceSpec ring = test::torus();
  const RateModel zero(ConstantRate{0.0});
  const auto stream = NoiseStream::for_model(1, zero, ring);
  const auto state = sandwich_run(zero, ring, 0.5, stream);
  CHECK(state.coalesced);
  CHECK(state.lower.empty());
  CHECK(state.upper.empty());
  const auto s = perfect_sample(zero, ring, 7, 1.0, 64.0);
  CHECK(s.status == SampleStatus::Coalesced);
  CHECK(s.configuration.empty());
  CHECK(s.T_used == 1.0);
}

TEST_CASE("attractive sandwich uses endpoint rates") {
  const SpaceSpec ring = test::torus(1, 1.0, 4.0);
  const RateModel m(AreaInteractionRate{1.0, 2.0, 0.05, 512});
  const auto stream = NoiseStream::for_model(8, m, ring);
  const auto p = sandwich_paths(m, ring, 8.0, stream);
  // Replay: every candidate's lower/upper decision matches λ at the path endpoints.
  std::set<PointId> lower_born;
  std::set<PointId> upper_born;
  for (const auto& ev : p.lower.events) {
    if (ev.kind == EventKind::Birth) lower_born.insert(ev.id);
  }
  for (const auto& ev : p.upper.events) {
    if (ev.kind == EventKind::Birth) upper_born.insert(ev.id);
  }
  std::vector<NoisePoint> atoms;
  for (std::int64_t k = -8; k < 0; ++k) {
    for (const auto& a : stream.slab(k)) atoms.push_back(a);
  }
  const PointId base = p.upper_initial.empty() ? 0 : p.upper_initial.max_id() + 1;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& a = atoms[i];
    const auto lo = snapshot(p.lower, std::nextafter(a.s, -kInfinity)).configuration();
    const auto up = snapshot(p.upper, std::nextafter(a.s, -kInfinity)).configuration();
    const bool in_lo = lower_born.count(base + i) > 0;
    const bool in_up = upper_born.count(base + i) > 0;
    CHECK(in_lo == (a.u < birth_rate(m, ring, a.x, lo)));
    CHECK(in_up == (a.u <= birth_rate(m, ring, a.x, up)));
  }
}

TEST_CASE("sweep limit exceeded raises a traced failure") {
  const SpaceSpec ring = test::torus(1, 1.0, 10.0);
  const RateModel m(PairwiseRate{2.0, 0.2});
  const auto stream = NoiseStream::for_model(3, m, ring);
  const auto ok = sandwich_run(m, ring, 8.0, stream);
  REQUIRE(ok.sweeps > 1);
  SandwichOptions tight;
  tight.max_sweeps = ok.sweeps - 1;
  try {
    sandwich_run(m, ring, 8.0, stream, tight);
    FAIL("expected ConvergenceFailure");
  } catch (const ConvergenceFailure& e) {
    CHECK(e.trace().size() == static_cast<std::size_t>(ok.sweeps));
  }
  SandwichOptions exact;
  exact.max_sweeps = ok.sweeps;
  CHECK_NOTHROW(sandwich_run(m, ring, 8.0, stream, exact));
}

TEST_CASE("doubling reuses slabs and does not depend on T0") {
  const SpaceSpec ring = test::torus(1, 1.0, 5.0);
  const RateModel m(PairwiseRate{0.5, 0.2});
  int compared = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto a = perfect_sample(m, ring, seed, 0.25, 256.0);
    const auto b = perfect_sample(m, ring, seed, 4.0, 256.0);
    REQUIRE(a.status == SampleStatus::Coalesced);
    REQUIRE(b.status == SampleStatus::Coalesced);
    CHECK(a.configuration == b.configuration);
    std::map<std::int64_t, std::uint64_t> seen;
    for (const auto& run : a.runs) {
      for (const auto& [k, h] : run.slab_hashes) {
        if (seen.count(k)) {
          CHECK(seen[k] == h);
          ++compared;
        }
        seen[k] = h;
      }
    }
    for (const auto& run : b.runs) {
      for (const auto& [k, h] : run.slab_hashes) {
        if (seen.count(k)) CHECK(seen[k] == h);
      }
    }
  }
  CHECK(compared > 0);
}

TEST_CASE("perfect sample schedule and status") {
  const SpaceSpec ring = test::torus(1, 1.0, 50.0);
  const RateModel m(ConstantRate{1.0});
  // Fifty expected dominating points cannot all die within a lookback of 1.
  const auto s = perfect_sample(m, ring, 5, 0.25, 1.0);
  CHECK(s.status == SampleStatus::NotCoalesced);
  CHECK(s.T_used == 1.0);
  REQUIRE(s.runs.size() == 3);
  CHECK(s.runs[0].T == 0.25);
  CHECK(s.runs[1].T == 0.5);
  CHECK(s.runs[2].T == 1.0);
  CHECK_THROWS_AS(perfect_sample(m, ring, 5, 2.0, 1.0), InvalidInput);
  const auto clipped = perfect_sample(m, ring, 5, 3.0, 10.0);
  CHECK(clipped.runs.back().T <= 10.0);
}

TEST_CASE("perfect samples of the constant model are Poisson") {
  const SpaceSpec ring = test::torus();
  const RateModel m(ConstantRate{1.0});
  std::vector<int> counts;
  for (std::uint64_t seed = 0; seed < 3000; ++seed) {
    const auto s = perfect_sample(m, ring, seed, 1.0, 1024.0);
    REQUIRE(s.status == SampleStatus::Coalesced);
    counts.push_back(static_cast<int>(s.configuration.size()));
  }
  CHECK(chi_square_poisson(counts, 1.0).p_value > 0.01);
}

TEST_CASE("coalescence time grows with the lookback requirement") {
  const SpaceSpec ring = test::torus(1, 1.0, 2.0);
  const RateModel m(PairwiseRate{0.5, 0.2});
  double prob_small = 0;
  double prob_large = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto stream = NoiseStream::for_model(seed, m, ring);
    SandwichOptions o;
    o.anchor = 64.0;
    prob_small += sandwich_run(m, ring, 0.5, stream, o).coalesced ? 1 : 0;
    prob_large += sandwich_run(m, ring, 8.0, stream, o).coalesced ? 1 : 0;
  }
  CHECK(prob_large >= prob_small);
  CHECK(prob_large / 200 > 0.95);
}

TEST_CASE("minimal and maximal samplers") {
  const SpaceSpec ring = test::torus();
  const RateModel zero(ConstantRate{0.0});
  CHECK(minimal_stationary_sample(zero, ring, 1, 5.0).empty());
  int empty = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    empty += maximal_stationary_sample(RateModel(ConstantRate{0.0}), ring, seed, 40.0).empty() ? 1 : 0;
  }
  CHECK(empty == 50);
  CHECK_THROWS_AS(minimal_stationary_sample(RateModel(PairwiseRate{}), ring, 1, 1.0), UnsupportedModel);
  CHECK_THROWS_AS(maximal_stationary_sample(RateModel(PairwiseRate{}), ring, 1, 1.0), UnsupportedModel);
}

TEST_CASE("extremal samplers of the constant model are Poisson") {
  const SpaceSpec ring = test::torus();
  const RateModel m(ConstantRate{1.0});
  std::vector<Configuration> low;
  std::vector<Configuration> high;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    low.push_back(minimal_stationary_sample(m, ring, seed, 20.0));
    high.push_back(maximal_stationary_sample(m, ring, seed + 50000, 0.7));
  }
  const auto target = poisson_table(1.0, 40);
  CHECK(tv_distance(empirical_count_table(low), target) < 0.02);
  CHECK(tv_distance(empirical_count_table(high), target) < 0.02);
}

TEST_CASE("extremal samplers are pathwise monotone in the horizon") {
  const SpaceSpec sq = test::torus(2, 2.0, 2.0);
  const RateModel m(AreaInteractionRate{1.0, 3.0, 0.1, 512});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Configuration prev_low;
    Configuration prev_high;
    bool first = true;
    for (double h : {0.5, 1.0, 2.0, 4.0, 8.0}) {
      const auto low = minimal_stationary_sample(m, sq, seed, h);
      const auto high = maximal_stationary_sample(m, sq, seed, h, 8.0);
      CHECK(is_submultiset(low, high));
      if (!first) {
        CHECK(is_submultiset(prev_low, low));
        CHECK(is_submultiset(high, prev_high));
      }
      prev_low = low;
      prev_high = high;
      first = false;
    }
  }
}

TEST_CASE("coupling decay curve examples") {
  const SpaceSpec ring = test::torus(1, 1.0, 3.0);
  const auto eta = test::config_1d({0.1, 0.4, 0.8});
  const auto same = coupling_decay_curve(RateModel(PairwiseRate{}), ring, eta, eta, 3.0, 20, 1, 11);
  for (double v : same.distance) CHECK(v == 0.0);
  CHECK(std::isnan(same.fitted_rate));

  Configuration big;
  for (int i = 0; i < 15; ++i) big.add(Point{(i + 0.5) / 15.0});
  const auto c = coupling_decay_curve(RateModel(ConstantRate{1.0}), ring, Configuration{}, big, 5.0, 400, 2, 26);
  CHECK(c.raw_mass);
  CHECK(c.distance.front() == 15.0);
  CHECK(std::abs(c.fitted_rate + 1.0) < 0.1);

  const RateModel pw(PairwiseRate{0.5, 0.2});
  const double M = contraction_constant(pw, ring).value;
  const auto p = coupling_decay_curve(pw, ring, Configuration{}, big, 5.0, 200, 3, 26);
  CHECK_FALSE(p.raw_mass);
  CHECK(p.fitted_rate <= -(1.0 - M) + 0.1);
  CHECK_THROWS_AS(coupling_decay_curve(pw, ring, big, Configuration{}, 1.0, 1, 1), InvalidInput);
}
