#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "sbd/models.hpp"

using namespace sbd;
using sbd::test::config_1d;

namespace {

const RateModel kPairwise(PairwiseRate{0.5, 0.2});

// Length of [x−r, x+r] not covered by the intervals [y−r, y+r] on a 1-D torus,
// by exact interval arithmetic in the frame centred at x.
double uncovered_length_1d(const SpaceSpec& ring, double r, const Point& x, const Configuration& eta) {
  std::vector<std::pair<double, double>> cover;
  for (const auto& e : eta) {
    const double off = ring.displacement(x, e.point)[0];
    const double lo = std::max(-r, off - r);
    const double hi = std::min(r, off + r);
    if (lo < hi) cover.emplace_back(lo, hi);
  }
  std::sort(cover.begin(), cover.end());
  double covered = 0.0;
  double reach = -r;
  for (auto [lo, hi] : cover) {
    if (hi <= reach) continue;
    covered += hi - std::max(lo, reach);
    reach = hi;
  }
  return 2.0 * r - covered;
}

// All sub-multisets of `extra` added to `base`.
std::vector<Configuration> between(const Configuration& base, const std::vector<Point>& extra) {
  std::vector<Configuration> out;
  for (unsigned mask = 0; mask < (1u << extra.size()); ++mask) {
    Configuration eta = base;
    for (std::size_t i = 0; i < extra.size(); ++i) {
      if (mask & (1u << i)) eta.add(extra[i]);
    }
    out.push_back(eta);
  }
  return out;
}

std::vector<RateModel> model_zoo() {
  return {
      RateModel(ConstantRate{1.5}),
      RateModel(PairwiseRate{0.5, 0.2}),
      RateModel(PairwiseRate{2.0, 0.05}),
      RateModel(CellPairwiseRate{1.0, 2, {1.0, 0.5, 0.5, 2.0}}),
      RateModel(AreaInteractionRate{1.5, 2.0, 0.05, 1024}),
      RateModel(AreaInteractionRate{1.5, 0.5, 0.05, 1024}),
      RateModel(NearestNeighborRate{{0.0, 0.1, 0.2}, {0.2, 0.5, 1.0}, 1.2}),
      RateModel(NearestNeighborRate{{0.0, 0.15}, {3.0, 1.0}, 0.5}),
  };
}

}  // namespace

TEST_CASE("pairwise birth rate examples") {
  const SpaceSpec ring = test::torus();
  CHECK(birth_rate(kPairwise, ring, Point{0.0}, Configuration{}) == 1.0);
  CHECK(birth_rate(kPairwise, ring, Point{0.0}, config_1d({0.1, 0.5})) ==
        doctest::Approx(std::exp(-0.5)).epsilon(1e-14));
  CHECK(birth_rate(kPairwise, ring, Point{0.0}, config_1d({0.1, 0.5})) == doctest::Approx(0.606531).epsilon(1e-6));
}

TEST_CASE("area interaction with gamma one is Poisson") {
  const SpaceSpec ring = test::torus();
  const RateModel m(AreaInteractionRate{2.0, 1.0, 0.1, 512});
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto eta = test::random_configuration(ring, rng, 12);
    CHECK(birth_rate(m, ring, test::random_point(ring, rng), eta) == 2.0);
  }
}

TEST_CASE("area interaction rate on the empty configuration") {
  const SpaceSpec ring = test::torus();
  const double r0 = 0.1;
  const RateModel m(AreaInteractionRate{1.0, std::numbers::e, r0, 4096});
  // Independent area: fine midpoint count of the grain that lies uncovered.
  const int n = 200000;
  double area = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = -r0 + (i + 0.5) * (2.0 * r0 / n);
    area += std::abs(y) <= r0 ? 2.0 * r0 / n : 0.0;
  }
  CHECK(area == doctest::Approx(2.0 * r0).epsilon(1e-9));
  CHECK(birth_rate(m, ring, Point{0.3}, Configuration{}) == doctest::Approx(std::exp(-area)).epsilon(1e-12));
  CHECK(birth_rate(m, ring, Point{0.3}, Configuration{}) == doctest::Approx(std::exp(-2.0 * r0)).epsilon(1e-12));
}

TEST_CASE("area interaction rate matches exact interval arithmetic in 1-D") {
  const SpaceSpec ring = test::torus();
  const double r0 = 0.05;
  const AreaInteractionRate spec{1.3, 3.0, r0, 4096};
  const RateModel m(spec);
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto eta = test::random_configuration(ring, rng, 15);
    const Point x = test::random_point(ring, rng);
    const double length = uncovered_length_1d(ring, r0, x, eta);
    const double exact = spec.rho * std::pow(spec.gamma, -length);
    // Each shift is a stratified van der Corput set of spacing 2r0/per_shift, so
    // each interval end misplaces at most one of its nodes.
    const GrainRule& rule = m.grain(1);
    const double spacing = 2.0 * r0 * rule.shifts() / rule.size();
    const double tol = exact * std::log(spec.gamma) * (2 * eta.size() + 2) * spacing;
    CHECK(std::abs(birth_rate(m, ring, x, eta) - exact) <= tol + 1e-14);
    std::vector<Displacement> nb;
    for (const auto& e : eta) {
      if (torus_distance(ring, x, e.point) <= 2.0 * r0) nb.push_back(ring.displacement(x, e.point));
    }
    const auto v = rule.uncovered(nb);
    CHECK(std::abs(v.value - length) <= v.error);
  }
}

TEST_CASE("area interaction rate range") {
  std::mt19937_64 rng(23);
  for (double gamma : {0.4, 2.5}) {
    const SpaceSpec sq = test::torus(2);
    const AreaInteractionRate spec{0.8, gamma, 0.08, 2048};
    const RateModel m(spec);
    const double top = spec.rho * std::max(1.0, std::pow(gamma, -std::numbers::pi * 0.08 * 0.08));
    for (int i = 0; i < 500; ++i) {
      const double v = birth_rate(m, sq, test::random_point(sq, rng), test::random_configuration(sq, rng, 30));
      CHECK(v > 0.0);
      CHECK(v <= top + 1e-12);
    }
  }
}

TEST_CASE("death rate examples") {
  const SpaceSpec ring = test::torus();
  const auto eta = config_1d({0.2, 0.6});
  CHECK(death_rate(kPairwise, ring, Point{0.2}, eta) == 1.0);
  const RateModel doubled(PairwiseRate{0.5, 0.2}, ConstantDeath{2.0});
  CHECK(death_rate(doubled, ring, Point{0.6}, eta) == 2.0);
  CHECK_THROWS_AS(death_rate(kPairwise, ring, Point{0.3}, Configuration{}), InvalidInput);
  CHECK_THROWS_AS(death_rate(kPairwise, ring, Point{0.3}, eta), InvalidInput);
}

TEST_CASE("envelope examples") {
  const SpaceSpec ring = test::torus();
  CHECK(envelope(RateModel(ConstantRate{2.5}), ring, Point{0.1}) == 2.5);
  CHECK(envelope(kPairwise, ring, Point{0.1}) == 1.0);
  CHECK(envelope(RateModel(AreaInteractionRate{1.7, 2.0, 0.1, 256}), ring, Point{0.1}) == 1.7);

  // The envelope is attained: sup over random η of the pairwise rate is 1.
  std::mt19937_64 rng(1);
  double best = 0.0;
  for (int i = 0; i < 2000; ++i) {
    best = std::max(best, birth_rate(kPairwise, ring, Point{0.5}, test::random_configuration(ring, rng, 4)));
  }
  CHECK(best == 1.0);
  const RateModel attractive(AreaInteractionRate{1.7, 2.0, 0.1, 256});
  best = 0.0;
  for (int i = 0; i < 2000; ++i) {
    best = std::max(best, birth_rate(attractive, ring, Point{0.5}, test::random_configuration(ring, rng, 40)));
  }
  CHECK(best <= 1.7);
  CHECK(best > 1.6);
}

TEST_CASE("increment kernel examples") {
  const SpaceSpec ring = test::torus();
  CHECK(increment_kernel(RateModel(ConstantRate{3.0}), ring, Point{0.0}, Point{0.0}) == 0.0);
  const double a = increment_kernel(kPairwise, ring, Point{0.0}, Point{0.1});
  CHECK(a == doctest::Approx(1.0 - std::exp(-0.5)).epsilon(1e-14));
  CHECK(a == doctest::Approx(0.393469).epsilon(1e-6));
  CHECK(increment_kernel(kPairwise, ring, Point{0.0}, Point{0.3}) == 0.0);

  // The bound is attained at η = ∅ and never exceeded on random η.
  std::mt19937_64 rng(2);
  double worst = 0.0;
  for (int i = 0; i < 5000; ++i) {
    auto eta = test::random_configuration(ring, rng, 3);
    const double base = birth_rate(kPairwise, ring, Point{0.0}, eta);
    eta.add(Point{0.1});
    worst = std::max(worst, std::abs(birth_rate(kPairwise, ring, Point{0.0}, eta) - base));
  }
  CHECK(worst <= a + 1e-15);
  CHECK(worst == doctest::Approx(a).epsilon(1e-14));
}

TEST_CASE("nearest-neighbour increment kernel follows h") {
  const SpaceSpec ring = test::torus();
  const NearestNeighborRate up{{0.0, 0.1, 0.2}, {0.2, 0.5, 1.0}, 1.2};
  const NearestNeighborRate down{{0.0, 0.15}, {3.0, 1.0}, 0.5};
  for (double dist : {0.0, 0.05, 0.13, 0.19, 0.3}) {
    CHECK(increment_kernel(RateModel(up), ring, Point{0.0}, Point{dist}) ==
          doctest::Approx(up.at_infinity - up(dist)).epsilon(1e-14));
    CHECK(increment_kernel(RateModel(down), ring, Point{0.0}, Point{dist}) ==
          doctest::Approx(down(dist) - down.at_infinity).epsilon(1e-14));
  }
  CHECK(up(0.05) == doctest::Approx(0.35));
  CHECK(up(kInfinity) == 1.2);
}

TEST_CASE("contraction constant examples") {
  const SpaceSpec ring = test::torus();
  CHECK(contraction_constant(RateModel(ConstantRate{1.0}), ring).value == 0.0);

  const double exact = 2.0 * 0.2 * -std::expm1(-0.5);
  const auto m = contraction_constant(kPairwise, ring);
  CHECK(std::abs(m.value - exact) < 1e-6);
  CHECK(m.value == doctest::Approx(0.157388).epsilon(1e-5));
  CHECK(m.error < 1e-6);
  CHECK(m.uniqueness_applies());

  const auto dense = contraction_constant(kPairwise, test::torus(1, 1.0, 10.0));
  CHECK(std::abs(dense.value - 10.0 * exact) < 1e-5);
  CHECK_FALSE(dense.uniqueness_applies());
}

TEST_CASE("contraction constant without the translation shortcut") {
  // A non-default weight forces the supremum over the x-grid; c ≡ 2 changes nothing.
  const RateModel weighted(PairwiseRate{0.5, 0.2}, UnitDeath{}, [](const Point&) { return 2.0; });
  const auto m = contraction_constant(weighted, test::torus());
  CHECK_FALSE(m.translation_shortcut);
  CHECK(std::abs(m.value - 2.0 * 0.2 * -std::expm1(-0.5)) < 1e-6);

  // Free boundary: the supremum is attained away from the walls.
  const auto free = contraction_constant(kPairwise, test::box());
  CHECK(std::abs(free.value - 2.0 * 0.2 * -std::expm1(-0.5)) < 1e-6);

  // Cell couplings: row sums of (1 − e^{−θJ}) times the cell mass.
  const RateModel cells(CellPairwiseRate{1.0, 2, {1.0, 0.5, 0.5, 2.0}});
  const auto c = contraction_constant(cells, test::torus(1, 2.0));
  const double row1 = -std::expm1(-0.5) - std::expm1(-2.0);
  CHECK(std::abs(c.value - row1) < 1e-9);
}

TEST_CASE("contraction constant in 2-D") {
  const SpaceSpec sq = test::torus(2);
  const auto m = contraction_constant(kPairwise, sq);
  const double exact = std::numbers::pi * 0.04 * -std::expm1(-0.5);
  CHECK(std::abs(m.value - exact) < 5.0 * m.error + 1e-4);
}

TEST_CASE("energy examples") {
  const SpaceSpec ring = test::torus();
  CHECK(energy(kPairwise, ring, Configuration{}) == 0.0);
  CHECK(energy(kPairwise, ring, config_1d({0.0, 0.1, 0.5})) == doctest::Approx(0.5));
  CHECK(energy(kPairwise, ring, config_1d({0.3})) == 0.0);
  CHECK_THROWS_AS(energy(RateModel(ConstantRate{}), ring, Configuration{}), UnsupportedModel);
  CHECK_THROWS_AS(energy(RateModel(NearestNeighborRate{{0.0}, {1.0}, 1.0}), ring, Configuration{}),
                  UnsupportedModel);
}

TEST_CASE("energies are hereditary on sampled pairs") {
  std::mt19937_64 rng(29);
  const SpaceSpec ring = test::torus();
  for (const RateModel& m : model_zoo()) {
    if (!m.has_energy()) continue;
    for (int i = 0; i < 300; ++i) {
      auto eta = test::random_configuration(ring, rng, 10);
      REQUIRE(std::isfinite(energy(m, ring, eta)));
      while (!eta.empty()) {
        eta.erase(eta.entries().front().id);
        CHECK(std::isfinite(energy(m, ring, eta)));
      }
    }
  }
}

TEST_CASE("detailed balance examples") {
  const SpaceSpec ring = test::torus();
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const auto eta = test::random_configuration(ring, rng, 8);
    CHECK(std::abs(detailed_balance_residual(kPairwise, ring, test::random_point(ring, rng), eta)) < 1e-12);
  }
  const EnergySpec zero{[](const Configuration&) { return 0.0; }};
  CHECK(detailed_balance_residual(RateModel(ConstantRate{1.0}), ring, zero, Point{0.4}, config_1d({0.1})) == 0.0);
  // Pairwise rates with a flat energy: both sides differ by the interaction.
  const auto eta = config_1d({0.0, 0.1});
  const double expected = std::exp(-0.5) - 1.0;  // λ(0.05, η)·1 − δ·1
  CHECK(detailed_balance_residual(kPairwise, ring, zero, Point{0.45}, eta) == 0.0);
  CHECK(detailed_balance_residual(kPairwise, ring, zero, Point{0.5}, config_1d({0.4})) ==
        doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(detailed_balance_residual(RateModel(ConstantRate{}), ring, Point{0.1}, Configuration{}),
                  UnsupportedModel);
}

TEST_CASE("detailed balance holds on random cases") {
  std::mt19937_64 rng(37);
  const SpaceSpec ring = test::torus();
  const SpaceSpec sq = test::torus(2);
  const RateModel area(AreaInteractionRate{1.2, 2.0, 0.06, 2048});
  for (int i = 0; i < 2000; ++i) {
    const auto eta = test::random_configuration(ring, rng, 12);
    const Point x = test::random_point(ring, rng);
    CHECK(std::abs(detailed_balance_residual(kPairwise, ring, x, eta)) < 1e-12);
    const auto sq_eta = test::random_configuration(sq, rng, 25);
    const auto check = detailed_balance_check(area, sq, test::random_point(sq, rng), sq_eta);
    CHECK(std::abs(check.residual) <= check.tolerance);
  }
}

TEST_CASE("rate invariants on random cases") {
  std::mt19937_64 rng(41);
  for (int d = 1; d <= 2; ++d) {
    const SpaceSpec space = test::torus(d);
    for (const RateModel& m : model_zoo()) {
      for (int i = 0; i < 1250; ++i) {
        const auto eta = test::random_configuration(space, rng, 10);
        const Point x = test::random_point(space, rng);
        const Point y = test::random_point(space, rng);
        const double base = birth_rate(m, space, x, eta);
        CHECK(base >= 0.0);
        CHECK(base <= envelope(m, space, x) + 1e-12);
        auto grown = eta;
        grown.add(y);
        CHECK(std::abs(birth_rate(m, space, x, grown) - base) <= increment_kernel(m, space, x, y) + 1e-12);
        const auto other = test::random_configuration(space, rng, 10);
        const auto diff = symmetric_difference(eta, other);
        const double mass = kernel_mass(
            [&](const Point& a, const Point& b) { return increment_kernel(m, space, a, b); }, x, diff);
        CHECK(std::abs(base - birth_rate(m, space, x, other)) <= mass + 1e-12);
      }
    }
  }
}

TEST_CASE("area interaction monotonicity follows gamma") {
  std::mt19937_64 rng(43);
  const SpaceSpec sq = test::torus(2);
  const RateModel attractive(AreaInteractionRate{1.0, 2.0, 0.07, 1024});
  const RateModel repulsive(AreaInteractionRate{1.0, 0.5, 0.07, 1024});
  CHECK(attractive.monotonicity() == Monotonicity::Nondecreasing);
  CHECK(repulsive.monotonicity() == Monotonicity::Nonincreasing);
  for (int i = 0; i < 1000; ++i) {
    const auto small = test::random_configuration(sq, rng, 15);
    auto big = small;
    const auto extra = test::random_configuration(sq, rng, 6);
    for (const auto& e : extra) big.add(e.point);
    const Point x = test::random_point(sq, rng);
    CHECK(birth_rate(attractive, sq, x, small) <= birth_rate(attractive, sq, x, big));
    CHECK(birth_rate(repulsive, sq, x, small) >= birth_rate(repulsive, sq, x, big));
  }
}

TEST_CASE("grain rule fast path matches the reference") {
  std::mt19937_64 rng(47);
  for (int d = 1; d <= 3; ++d) {
    const GrainRule rule(d, 0.1, 1000);
    std::uniform_real_distribution<double> off(-0.2, 0.2);
    for (int i = 0; i < 300; ++i) {
      std::vector<Displacement> nb(rng() % 6);
      for (auto& v : nb) {
        v = Displacement{};
        for (int k = 0; k < d; ++k) v[static_cast<std::size_t>(k)] = off(rng);
      }
      const auto fast = rule.uncovered(nb);
      const auto ref = rule.uncovered_reference(nb);
      CHECK(fast.value == doctest::Approx(ref.value).epsilon(1e-12));
      CHECK(fast.error == doctest::Approx(ref.error).epsilon(1e-12));
    }
    CHECK(rule.uncovered({}).value == doctest::Approx(ball_volume(d, 0.1)).epsilon(1e-12));
  }
}

TEST_CASE("grain rule error covers the deviation from a much finer rule") {
  std::mt19937_64 rng(53);
  for (int d = 2; d <= 3; ++d) {
    const GrainRule rule(d, 0.06, 4096);
    const GrainRule fine(d, 0.06, 1 << 17);
    std::uniform_real_distribution<double> off(-0.12, 0.12);
    for (int i = 0; i < 300; ++i) {
      std::vector<Displacement> nb(1 + rng() % 8);
      for (auto& v : nb) {
        v = Displacement{};
        for (int k = 0; k < d; ++k) v[static_cast<std::size_t>(k)] = off(rng);
      }
      const auto a = rule.uncovered(nb);
      const auto b = fine.uncovered(nb);
      CHECK(std::abs(a.value - b.value) <= a.error + b.error);
    }
  }
}

TEST_CASE("grain overlap tracks the exact lens volume") {
  for (int d = 1; d <= 3; ++d) {
    const GrainRule rule(d, 0.1, 8192);
    for (double dist : {0.0, 0.03, 0.1, 0.17, 0.25}) {
      Displacement delta{};
      delta[0] = dist;
      const double tol = d == 1 ? 1e-4 : 2e-2 * ball_volume(d, 0.1);
      CHECK(std::abs(rule.overlap(delta) - lens_volume(d, 0.1, dist)) <= tol);
    }
  }
  CHECK(lens_volume(1, 0.1, 0.05) == doctest::Approx(0.15));
  CHECK(lens_volume(2, 1.0, 0.0) == doctest::Approx(std::numbers::pi));
  CHECK(lens_volume(3, 1.0, 2.0) == 0.0);
}

TEST_CASE("sandwich rate examples") {
  const SpaceSpec ring = test::torus();
  const auto eta = config_1d({0.05, 0.5});
  const auto same = sandwich_rates(kPairwise, ring, Point{0.0}, eta, eta);
  CHECK(same.lower == birth_rate(kPairwise, ring, Point{0.0}, eta));
  CHECK(same.upper == same.lower);

  const RateModel attractive(AreaInteractionRate{1.0, 2.0, 0.1, 512});
  const auto low = config_1d({0.2});
  const auto up = config_1d({0.2, 0.05, 0.9});
  const auto b = sandwich_rates(attractive, ring, Point{0.0}, low, up);
  CHECK(b.lower == birth_rate(attractive, ring, Point{0.0}, low));
  CHECK(b.upper == birth_rate(attractive, ring, Point{0.0}, up));

  // Pairwise is nonincreasing: check the reversed endpoints by enumeration.
  const auto pb = sandwich_rates(kPairwise, ring, Point{0.0}, Configuration{}, up);
  double lo = kInfinity;
  double hi = 0.0;
  for (const auto& mid : between(Configuration{}, {Point{0.2}, Point{0.05}, Point{0.9}})) {
    lo = std::min(lo, birth_rate(kPairwise, ring, Point{0.0}, mid));
    hi = std::max(hi, birth_rate(kPairwise, ring, Point{0.0}, mid));
  }
  CHECK(pb.lower == lo);
  CHECK(pb.upper == hi);
  CHECK(pb.lower == birth_rate(kPairwise, ring, Point{0.0}, up));

  CHECK_THROWS_AS(sandwich_rates(kPairwise, ring, Point{0.0}, up, low), InvalidInput);
}

TEST_CASE("sandwich rates bracket every intermediate configuration") {
  std::mt19937_64 rng(53);
  const SpaceSpec ring = test::torus();
  for (const RateModel& m : model_zoo()) {
    for (int i = 0; i < 300; ++i) {
      const auto low = test::random_configuration(ring, rng, 5);
      std::vector<Point> extra(rng() % 5);
      for (auto& p : extra) p = test::random_point(ring, rng);
      auto up = low;
      for (const auto& p : extra) up.add(p);
      const Point x = test::random_point(ring, rng);
      const auto b = sandwich_rates(m, ring, x, low, up);
      const auto lip = lipschitz_sandwich_rates(m, ring, x, low, up);
      for (const auto& mid : between(low, extra)) {
        const double v = birth_rate(m, ring, x, mid);
        CHECK(b.lower <= v + 1e-15);
        CHECK(v <= b.upper + 1e-15);
        CHECK(lip.lower <= v + 1e-12);
        CHECK(v <= lip.upper + 1e-12);
      }
      CHECK(lip.lower <= b.lower + 1e-12);
      CHECK(b.upper <= lip.upper + 1e-12);
    }
  }
}

TEST_CASE("model validation") {
  const SpaceSpec ring = test::torus();
  CHECK_THROWS_AS(RateModel(PairwiseRate{0.5, 0.0}).validate(ring), InvalidInput);
  CHECK_THROWS_AS(RateModel(ConstantRate{-1.0}).validate(ring), InvalidInput);
  CHECK_THROWS_AS(RateModel(AreaInteractionRate{1.0, 2.0, 0.3, 64}).validate(ring), InvalidInput);
  CHECK_THROWS_AS(RateModel(NearestNeighborRate{{0.0, 0.1}, {1.0, 0.0}, 2.0}).validate(ring), InvalidInput);
  CHECK_THROWS_AS(RateModel(CellPairwiseRate{1.0, 2, {1.0, 0.5, 0.4, 1.0}}).validate(ring), InvalidInput);
  CHECK_THROWS_AS(RateModel(ConstantRate{}, ConstantDeath{0.0}).validate(ring), InvalidInput);
  CHECK_NOTHROW(kPairwise.validate(ring));
}
