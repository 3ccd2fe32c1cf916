#include "sbd/models.hpp"

#include "sbd/noise.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <string>

namespace sbd {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double out = 0.0;
  while (i > 0) {
    out += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return out;
}

int cell_of(const CellPairwiseRate& m, const SpaceSpec& space, const Point& x) {
  const double frac = x[0] / space.lengths[0];
  int c = static_cast<int>(std::floor(frac * m.cells));
  return std::clamp(c, 0, m.cells - 1);
}

double cell_coupling(const CellPairwiseRate& m, int a, int b) {
  return m.coupling[static_cast<std::size_t>(a * m.cells + b)];
}

std::vector<Displacement> grain_neighbors(const SpaceSpec& space, double radius, const Point& x,
                                          const Configuration& eta) {
  std::vector<Displacement> out;
  const double reach_sq = 4.0 * radius * radius;
  for (const auto& e : eta) {
    if (distance_sq_unchecked(space, x, e.point) <= reach_sq) {
      out.push_back(space.displacement(x, e.point));
    }
  }
  return out;
}

double area_rate(const AreaInteractionRate& m, double uncovered) {
  return m.rho * std::exp(-uncovered * std::log(m.gamma));
}

}  // namespace

double ball_volume(int d, double r) {
  switch (d) {
    case 1:
      return 2.0 * r;
    case 2:
      return std::numbers::pi * r * r;
    case 3:
      return 4.0 / 3.0 * std::numbers::pi * r * r * r;
    default:
      throw InvalidInput("ball volume only defined for d in [1, 3]");
  }
}

double lens_volume(int d, double r, double dist) {
  if (dist >= 2.0 * r) return 0.0;
  dist = std::max(dist, 0.0);
  switch (d) {
    case 1:
      return 2.0 * r - dist;
    case 2:
      return 2.0 * r * r * std::acos(dist / (2.0 * r)) -
             0.5 * dist * std::sqrt(4.0 * r * r - dist * dist);
    case 3:
      return std::numbers::pi * (4.0 * r + dist) * (2.0 * r - dist) * (2.0 * r - dist) / 12.0;
    default:
      throw InvalidInput("lens volume only defined for d in [1, 3]");
  }
}

// ---------------------------------------------------------------------------
// GrainRule

GrainRule::GrainRule(int d, double radius, int points)
    : d_(d), radius_(radius), ball_volume_(sbd::ball_volume(d, radius)) {
  if (points < 4) throw InvalidInput("grain rule needs at least 4 points");
  shifts_ = std::clamp(points / 64, 2, 16);
  per_shift_ = points / shifts_;
  constexpr std::uint64_t kBases[kMaxDim] = {2, 3, 5};
  CounterRng shift_rng(mix64(0x6A09E667F3BCC909ULL));
  offsets_.reserve(static_cast<std::size_t>(shifts_ * per_shift_));
  for (int k = 0; k < shifts_; ++k) {
    std::array<double, kMaxDim> shift{};
    for (int j = 0; j < d; ++j) shift[static_cast<std::size_t>(j)] = shift_rng.uniform();
    int kept = 0;
    for (std::uint64_t i = 1; kept < per_shift_; ++i) {
      Displacement o{};
      double norm_sq = 0.0;
      for (int j = 0; j < d; ++j) {
        double u = radical_inverse(i, kBases[j]) + shift[static_cast<std::size_t>(j)];
        if (u >= 1.0) u -= 1.0;
        const double v = (2.0 * u - 1.0) * radius;
        o[static_cast<std::size_t>(j)] = v;
        norm_sq += v * v;
      }
      if (norm_sq <= radius * radius) {
        offsets_.push_back(o);
        ++kept;
      }
    }
  }
  if (d == 1) {
    sorted_.resize(static_cast<std::size_t>(shifts_));
    for (int k = 0; k < shifts_; ++k) {
      auto& dst = sorted_[static_cast<std::size_t>(k)];
      for (int i = 0; i < per_shift_; ++i) dst.push_back(offsets_[static_cast<std::size_t>(k * per_shift_ + i)][0]);
      std::sort(dst.begin(), dst.end());
    }
  }
}

bool GrainRule::covered(const Displacement& o, const Displacement& delta) const {
  if (d_ == 1) {
    const double lo = delta[0] - radius_;
    const double hi = delta[0] + radius_;
    return lo <= o[0] && o[0] <= hi;
  }
  double acc = 0.0;
  for (int k = 0; k < d_; ++k) {
    const double diff = o[static_cast<std::size_t>(k)] - delta[static_cast<std::size_t>(k)];
    acc += diff * diff;
  }
  return acc <= radius_ * radius_;
}

GrainRule::Volume GrainRule::summarize(std::span<const int> covered_per_shift) const {
  const double m = static_cast<double>(per_shift_);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (int c : covered_per_shift) {
    const double q = ball_volume_ * (m - c) / m;
    sum += q;
    sum_sq += q * q;
  }
  const double k = static_cast<double>(shifts_);
  const double mean = sum / k;
  const double var = std::max(0.0, (sum_sq - k * mean * mean) / (k - 1.0));
  // The shifted copies act as independent replicates. Their spread misses
  // slivers no shift resolves, hence the floor of one point per shift.
  return {mean, kErrorMultiplier * std::sqrt(var / k) + ball_volume_ / m};
}

GrainRule::Volume GrainRule::uncovered_reference(std::span<const Displacement> neighbors) const {
  std::vector<int> counts(static_cast<std::size_t>(shifts_), 0);
  for (std::size_t i = 0; i < offsets_.size(); ++i) {
    const bool hit = std::any_of(neighbors.begin(), neighbors.end(),
                                 [&](const Displacement& n) { return covered(offsets_[i], n); });
    if (hit) ++counts[i / static_cast<std::size_t>(per_shift_)];
  }
  return summarize(counts);
}

GrainRule::Volume GrainRule::uncovered(std::span<const Displacement> neighbors) const {
  if (d_ != 1) return uncovered_reference(neighbors);
  std::vector<int> counts(static_cast<std::size_t>(shifts_), 0);
  if (neighbors.empty()) return summarize(counts);

  std::vector<std::pair<double, double>> iv;
  iv.reserve(neighbors.size());
  for (const auto& n : neighbors) iv.emplace_back(n[0] - radius_, n[0] + radius_);
  std::sort(iv.begin(), iv.end());

  auto count_in = [&](double lo, double hi) {
    for (std::size_t k = 0; k < sorted_.size(); ++k) {
      const auto& s = sorted_[k];
      auto first = std::lower_bound(s.begin(), s.end(), lo);
      auto last = std::upper_bound(first, s.end(), hi);
      counts[k] += static_cast<int>(last - first);
    }
  };

  double lo = iv.front().first;
  double hi = iv.front().second;
  for (std::size_t i = 1; i <= iv.size(); ++i) {
    if (i < iv.size() && iv[i].first <= hi) {
      hi = std::max(hi, iv[i].second);
      continue;
    }
    count_in(lo, hi);
    if (i < iv.size()) {
      lo = iv[i].first;
      hi = iv[i].second;
    }
  }
  return summarize(counts);
}

double GrainRule::overlap(const Displacement& delta) const {
  double norm_sq = 0.0;
  for (int k = 0; k < d_; ++k) norm_sq += delta[static_cast<std::size_t>(k)] * delta[static_cast<std::size_t>(k)];
  if (norm_sq > 4.0 * radius_ * radius_) return 0.0;
  const double n = static_cast<double>(offsets_.size());
  int hits = 0;
  if (d_ == 1) {
    for (const auto& s : sorted_) {
      auto first = std::lower_bound(s.begin(), s.end(), delta[0] - radius_);
      hits += static_cast<int>(std::upper_bound(first, s.end(), delta[0] + radius_) - first);
    }
  } else {
    for (const auto& o : offsets_) hits += covered(o, delta) ? 1 : 0;
  }
  return ball_volume_ * hits / n;
}

// ---------------------------------------------------------------------------
// NearestNeighborRate

double NearestNeighborRate::operator()(double dist) const {
  if (knots.empty() || !std::isfinite(dist) || dist > knots.back()) return at_infinity;
  if (dist <= knots.front()) return values.front();
  auto it = std::upper_bound(knots.begin(), knots.end(), dist);
  const auto k = static_cast<std::size_t>(it - knots.begin());
  const double t = (dist - knots[k - 1]) / (knots[k] - knots[k - 1]);
  return values[k - 1] + t * (values[k] - values[k - 1]);
}

// ---------------------------------------------------------------------------
// RateModel

RateModel::RateModel(BirthSpec birth, DeathSpec death, WeightFn weight)
    : birth_(std::move(birth)), death_(death), weight_(std::move(weight)) {
  if (const auto* area = std::get_if<AreaInteractionRate>(&birth_)) {
    if (area->grain_radius > 0.0 && area->qmc_points >= 4) {
      for (int d = 1; d <= kMaxDim; ++d) {
        grains_.push_back(std::make_shared<const GrainRule>(d, area->grain_radius, area->qmc_points));
      }
    }
  }
}

double RateModel::death_constant() const {
  return std::visit(Overloaded{[](const UnitDeath&) { return 1.0; },
                               [](const ConstantDeath& c) { return c.delta0; }},
                    death_);
}

Monotonicity RateModel::monotonicity() const {
  return std::visit(
      Overloaded{
          [](const ConstantRate&) { return Monotonicity::Constant; },
          [](const PairwiseRate& m) {
            return m.theta == 0.0 ? Monotonicity::Constant : Monotonicity::Nonincreasing;
          },
          [](const CellPairwiseRate& m) {
            return m.theta == 0.0 ? Monotonicity::Constant : Monotonicity::Nonincreasing;
          },
          [](const AreaInteractionRate& m) {
            if (m.gamma > 1.0) return Monotonicity::Nondecreasing;
            if (m.gamma < 1.0) return Monotonicity::Nonincreasing;
            return Monotonicity::Constant;
          },
          [](const NearestNeighborRate& m) {
            // Adding points shrinks d(x, η), so λ runs opposite to h.
            std::vector<double> seq = m.values;
            seq.push_back(m.at_infinity);
            const bool up = std::is_sorted(seq.begin(), seq.end());
            const bool down = std::is_sorted(seq.begin(), seq.end(), std::greater<>());
            if (up && down) return Monotonicity::Constant;
            if (up) return Monotonicity::Nonincreasing;
            if (down) return Monotonicity::Nondecreasing;
            return Monotonicity::None;
          }},
      birth_);
}

bool RateModel::nondecreasing() const {
  const auto m = monotonicity();
  return m == Monotonicity::Nondecreasing || m == Monotonicity::Constant;
}

bool RateModel::has_energy() const {
  return std::holds_alternative<PairwiseRate>(birth_) ||
         std::holds_alternative<CellPairwiseRate>(birth_) ||
         std::holds_alternative<AreaInteractionRate>(birth_);
}

bool RateModel::translation_invariant() const {
  return default_weight() && !std::holds_alternative<CellPairwiseRate>(birth_);
}

const GrainRule& RateModel::grain(int d) const {
  if (grains_.empty()) throw UnsupportedModel("grain rule requested for a non-area model");
  if (d < 1 || d > kMaxDim) throw InvalidInput("grain dimension out of range");
  return *grains_[static_cast<std::size_t>(d - 1)];
}

void RateModel::validate(const SpaceSpec& space) const {
  space.validate();
  auto finite_nonneg = [](double v, const char* what) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidInput(std::string(what) + " must be nonnegative and finite");
    }
  };
  std::visit(
      Overloaded{
          [&](const ConstantRate& m) { finite_nonneg(m.lambda0, "model.lambda0"); },
          [&](const PairwiseRate& m) {
            finite_nonneg(m.theta, "model.theta");
            if (!(m.range > 0.0) || !std::isfinite(m.range)) {
              throw InvalidInput("model.range must be positive and finite");
            }
          },
          [&](const CellPairwiseRate& m) {
            finite_nonneg(m.theta, "model.theta");
            if (m.cells < 1) throw InvalidInput("model.cells must be positive");
            if (m.coupling.size() != static_cast<std::size_t>(m.cells * m.cells)) {
              throw InvalidInput("model.coupling must have cells*cells entries");
            }
            for (int a = 0; a < m.cells; ++a) {
              for (int b = 0; b < m.cells; ++b) {
                finite_nonneg(cell_coupling(m, a, b), "model.coupling entries");
                if (cell_coupling(m, a, b) != cell_coupling(m, b, a)) {
                  throw InvalidInput("model.coupling must be symmetric");
                }
              }
            }
          },
          [&](const AreaInteractionRate& m) {
            if (!(m.rho > 0.0) || !std::isfinite(m.rho)) throw InvalidInput("model.rho must be positive");
            if (!(m.gamma > 0.0) || !std::isfinite(m.gamma)) {
              throw InvalidInput("model.gamma must be positive");
            }
            if (!(m.grain_radius > 0.0)) throw InvalidInput("model.grain_radius must be positive");
            if (m.qmc_points < 4) throw InvalidInput("model.qmc_points must be at least 4");
            // Minimal-image overlap tests need the grain to stay well inside the torus.
            if (space.periodic() && !(4.0 * m.grain_radius < space.min_length())) {
              throw InvalidInput("model.grain_radius must be below a quarter of the torus side");
            }
          },
          [&](const NearestNeighborRate& m) {
            if (m.knots.empty() || m.knots.size() != m.values.size()) {
              throw InvalidInput("model.knots and model.values must be nonempty and equal length");
            }
            finite_nonneg(m.knots.front(), "model.knots");
            for (std::size_t i = 1; i < m.knots.size(); ++i) {
              if (!(m.knots[i] > m.knots[i - 1])) {
                throw InvalidInput("model.knots must be strictly increasing");
              }
            }
            for (double v : m.values) finite_nonneg(v, "model.values");
            finite_nonneg(m.at_infinity, "model.h_infinity");
            if (monotonicity() == Monotonicity::None) {
              throw InvalidInput("model.values with h_infinity must be monotone");
            }
          }},
      birth_);
  if (const auto* c = std::get_if<ConstantDeath>(&death_)) {
    if (!(c->delta0 > 0.0) || !std::isfinite(c->delta0)) {
      throw InvalidInput("death.delta0 must be positive and finite");
    }
  }
  if (!std::isfinite(envelope_bound(*this, space))) {
    throw InvalidInput("model envelope is not finite");
  }
}

// ---------------------------------------------------------------------------
// Rates

double birth_rate(const RateModel& model, const SpaceSpec& space, const Point& x,
                  const Configuration& eta) {
  return std::visit(
      Overloaded{
          [](const ConstantRate& m) { return m.lambda0; },
          [&](const PairwiseRate& m) {
            const double r2 = m.range * m.range;
            int count = 0;
            for (const auto& e : eta) count += distance_sq_unchecked(space, x, e.point) <= r2 ? 1 : 0;
            return std::exp(-m.theta * count);
          },
          [&](const CellPairwiseRate& m) {
            const int cx = cell_of(m, space, x);
            double sum = 0.0;
            for (const auto& e : eta) sum += cell_coupling(m, cx, cell_of(m, space, e.point));
            return std::exp(-m.theta * sum);
          },
          [&](const AreaInteractionRate& m) {
            const auto nb = grain_neighbors(space, m.grain_radius, x, eta);
            return area_rate(m, model.grain(space.d).uncovered(nb).value);
          },
          [&](const NearestNeighborRate& m) { return m(nearest_distance(space, x, eta)); }},
      model.birth());
}

double death_rate(const RateModel& model, const SpaceSpec& space, const Point& x,
                  const Configuration& eta) {
  space.check_point(x);
  const bool present =
      std::any_of(eta.begin(), eta.end(), [&](const auto& e) { return e.point == x; });
  if (!present) throw InvalidInput("death rate requested for a point not in the configuration");
  return model.death_constant();
}

double envelope(const RateModel& model, const SpaceSpec& space, const Point& x) {
  space.check_point(x);
  return envelope_bound(model, space);
}

double envelope_bound(const RateModel& model, const SpaceSpec& space) {
  return std::visit(
      Overloaded{[](const ConstantRate& m) { return m.lambda0; },
                 [](const PairwiseRate&) { return 1.0; },
                 [](const CellPairwiseRate&) { return 1.0; },
                 [&](const AreaInteractionRate& m) {
                   const double full = model.grain(space.d).ball_volume();
                   return m.rho * std::max(1.0, std::exp(-full * std::log(m.gamma)));
                 },
                 [](const NearestNeighborRate& m) {
                   const double top = *std::max_element(m.values.begin(), m.values.end());
                   return std::max(top, m.at_infinity);
                 }},
      model.birth());
}

double increment_kernel(const RateModel& model, const SpaceSpec& space, const Point& x,
                        const Point& y) {
  return std::visit(
      Overloaded{
          [](const ConstantRate&) { return 0.0; },
          [&](const PairwiseRate& m) {
            return distance_sq_unchecked(space, x, y) <= m.range * m.range ? -std::expm1(-m.theta)
                                                                           : 0.0;
          },
          [&](const CellPairwiseRate& m) {
            return -std::expm1(-m.theta * cell_coupling(m, cell_of(m, space, x), cell_of(m, space, y)));
          },
          [&](const AreaInteractionRate& m) {
            // Adding y removes at most the lens (x+G)∩(y+G) from the uncovered
            // part of x+G, and never more than is uncovered.
            const GrainRule& g = model.grain(space.d);
            const double lens = g.overlap(space.displacement(x, y));
            const double lg = std::log(m.gamma);
            if (m.gamma > 1.0) return -m.rho * std::expm1(-lens * lg);
            if (m.gamma < 1.0) return -m.rho * std::exp(-g.ball_volume() * lg) * std::expm1(lens * lg);
            return 0.0;
          },
          [&](const NearestNeighborRate& m) {
            return std::abs(m.at_infinity - m(std::sqrt(distance_sq_unchecked(space, x, y))));
          }},
      model.birth());
}

// ---------------------------------------------------------------------------
// Contraction constant

namespace {

// Calls fn(point) for each midpoint of an n^d grid over the window.
template <class Fn>
void for_each_midpoint(const SpaceSpec& space, long n, Fn&& fn) {
  long total = 1;
  for (int k = 0; k < space.d; ++k) total *= n;
  std::array<double, kMaxDim> c{};
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    for (int k = 0; k < space.d; ++k) {
      const long ik = rem % n;
      rem /= n;
      c[static_cast<std::size_t>(k)] =
          (static_cast<double>(ik) + 0.5) * space.lengths[static_cast<std::size_t>(k)] / static_cast<double>(n);
    }
    fn(Point(std::span<const double>(c.data(), static_cast<std::size_t>(space.d))));
  }
}

double grid_integral(const RateModel& model, const SpaceSpec& space, const Point& x, long n) {
  double cell = space.beta_intensity;
  for (int k = 0; k < space.d; ++k) cell *= space.lengths[static_cast<std::size_t>(k)] / static_cast<double>(n);
  const double cx = model.weight(x);
  double sum = 0.0;
  for_each_midpoint(space, n, [&](const Point& y) {
    sum += cx * increment_kernel(model, space, x, y) / model.weight(y);
  });
  return sum * cell;
}

// Points of [0, L) where y ↦ a(x, y) may jump or kink (1-D windows only).
std::vector<double> kernel_breakpoints(const RateModel& model, const SpaceSpec& space, const Point& x) {
  const double L = space.lengths[0];
  std::vector<double> offsets{0.0};
  std::vector<double> absolute{0.0, L};
  std::visit(Overloaded{[](const ConstantRate&) {},
                        [&](const PairwiseRate& m) { offsets.push_back(m.range); },
                        [&](const CellPairwiseRate& m) {
                          for (int c = 1; c < m.cells; ++c) absolute.push_back(L * c / m.cells);
                        },
                        [&](const AreaInteractionRate& m) { offsets.push_back(2.0 * m.grain_radius); },
                        [&](const NearestNeighborRate& m) {
                          for (double k : m.knots) offsets.push_back(k);
                        }},
             model.birth());
  for (double o : offsets) {
    for (double y : {x[0] - o, x[0] + o}) {
      if (space.periodic()) y = y - L * std::floor(y / L);
      if (y > 0.0 && y < L) absolute.push_back(y);
    }
  }
  std::sort(absolute.begin(), absolute.end());
  absolute.erase(std::unique(absolute.begin(), absolute.end()), absolute.end());
  return absolute;
}

// ∫ c(x)a(x, y)/c(y) β(dy) on a 1-D window: adaptive Gauss–Kronrod on each
// piece between breakpoints, so piecewise smooth kernels integrate to
// rounding accuracy.
ContractionEstimate::Integral line_integral(const RateModel& model, const SpaceSpec& space, const Point& x) {
  using boost::math::quadrature::gauss_kronrod;
  const double cx = model.weight(x);
  const auto f = [&](double y) {
    const Point py{y};
    return cx * increment_kernel(model, space, x, py) / model.weight(py);
  };
  const auto br = kernel_breakpoints(model, space, x);
  double value = 0.0;
  double error = 0.0;
  for (std::size_t i = 0; i + 1 < br.size(); ++i) {
    double err = 0.0;
    value += gauss_kronrod<double, 31>::integrate(f, br[i], br[i + 1], 8, 1e-13, &err);
    error += err;
  }
  return {value * space.beta_intensity, error * space.beta_intensity};
}

}  // namespace

ContractionEstimate contraction_constant(const RateModel& model, const SpaceSpec& space) {
  model.validate(space);
  const long n = space.quadrature_resolution;
  ContractionEstimate out;
  out.resolution = static_cast<int>(n);
  out.translation_shortcut = space.periodic() && model.translation_invariant();

  auto visit_x = [&](const Point& x) {
    ContractionEstimate::Integral q;
    if (space.d == 1) {
      q = line_integral(model, space, x);
    } else {
      const double coarse = grid_integral(model, space, x, n);
      const double fine = grid_integral(model, space, x, 2 * n);
      q = {fine, std::abs(fine - coarse)};
    }
    if (!std::isfinite(q.value) || !std::isfinite(q.error)) {
      throw QuadratureFailure("non-finite integrand in contraction constant");
    }
    out.value = std::max(out.value, q.value);
    out.error = std::max(out.error, q.error);
  };

  if (out.translation_shortcut) {
    std::array<double, kMaxDim> c{};
    for (int k = 0; k < space.d; ++k) {
      c[static_cast<std::size_t>(k)] = 0.5 * space.lengths[static_cast<std::size_t>(k)] / static_cast<double>(n);
    }
    visit_x(Point(std::span<const double>(c.data(), static_cast<std::size_t>(space.d))));
  } else {
    for_each_midpoint(space, n, visit_x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Energies

EnergyValue energy_with_error(const RateModel& model, const SpaceSpec& space,
                              const Configuration& eta) {
  return std::visit(
      Overloaded{
          [](const ConstantRate&) -> EnergyValue {
            throw UnsupportedModel("constant-rate model has no built-in energy");
          },
          [](const NearestNeighborRate&) -> EnergyValue {
            throw UnsupportedModel("nearest-neighbour model has no built-in energy");
          },
          [&](const PairwiseRate& m) {
            const auto pts = eta.sorted_points();
            const double r2 = m.range * m.range;
            long pairs = 0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
              for (std::size_t j = i + 1; j < pts.size(); ++j) {
                pairs += distance_sq_unchecked(space, pts[i], pts[j]) <= r2 ? 1 : 0;
              }
            }
            return EnergyValue{m.theta * static_cast<double>(pairs), 0.0};
          },
          [&](const CellPairwiseRate& m) {
            const auto pts = eta.sorted_points();
            double sum = 0.0;
            for (std::size_t i = 0; i < pts.size(); ++i) {
              for (std::size_t j = i + 1; j < pts.size(); ++j) {
                sum += cell_coupling(m, cell_of(m, space, pts[i]), cell_of(m, space, pts[j]));
              }
            }
            return EnergyValue{m.theta * sum, 0.0};
          },
          [&](const AreaInteractionRate& m) {
            // Union volume accumulated grain by grain in canonical (sorted) order.
            const auto pts = eta.sorted_points();
            const GrainRule& g = model.grain(space.d);
            double union_vol = 0.0;
            double union_err = 0.0;
            std::vector<Displacement> nb;
            for (std::size_t i = 0; i < pts.size(); ++i) {
              nb.clear();
              for (std::size_t j = 0; j < i; ++j) {
                if (distance_sq_unchecked(space, pts[i], pts[j]) <= 4.0 * m.grain_radius * m.grain_radius) {
                  nb.push_back(space.displacement(pts[i], pts[j]));
                }
              }
              const auto v = g.uncovered(nb);
              union_vol += v.value;
              union_err += v.error;
            }
            const double lg = std::log(m.gamma);
            return EnergyValue{-static_cast<double>(pts.size()) * std::log(m.rho) + lg * union_vol,
                               std::abs(lg) * union_err};
          }},
      model.birth());
}

double energy(const RateModel& model, const SpaceSpec& space, const Configuration& eta) {
  return energy_with_error(model, space, eta).value;
}

EnergySpec model_energy(const RateModel& model, const SpaceSpec& space) {
  if (!model.has_energy()) throw UnsupportedModel("model has no built-in energy");
  return EnergySpec{[model, space](const Configuration& eta) { return energy(model, space, eta); }};
}

double detailed_balance_residual(const RateModel& model, const SpaceSpec& space,
                                 const EnergySpec& energy_spec, const Point& x,
                                 const Configuration& eta) {
  Configuration grown = eta;
  grown.add(x);
  const double birth_side = birth_rate(model, space, x, eta) * std::exp(-energy_spec.H(eta));
  const double death_side = death_rate(model, space, x, grown) * std::exp(-energy_spec.H(grown));
  return birth_side - death_side;
}

double detailed_balance_residual(const RateModel& model, const SpaceSpec& space, const Point& x,
                                 const Configuration& eta) {
  if (!model.has_energy()) throw UnsupportedModel("model has no built-in energy");
  return detailed_balance_residual(model, space, model_energy(model, space), x, eta);
}

BalanceCheck detailed_balance_check(const RateModel& model, const SpaceSpec& space,
                                    const Point& x, const Configuration& eta) {
  if (!model.has_energy()) throw UnsupportedModel("model has no built-in energy");
  Configuration grown = eta;
  grown.add(x);
  const auto h0 = energy_with_error(model, space, eta);
  const auto h1 = energy_with_error(model, space, grown);
  double rate_err = 0.0;
  double lambda = 0.0;
  if (const auto* m = std::get_if<AreaInteractionRate>(&model.birth())) {
    const auto v = model.grain(space.d).uncovered(grain_neighbors(space, m->grain_radius, x, eta));
    lambda = area_rate(*m, v.value);
    rate_err = std::abs(std::log(m->gamma)) * v.error;
  } else {
    lambda = birth_rate(model, space, x, eta);
  }
  const double birth_side = lambda * std::exp(-h0.value);
  const double death_side = model.death_constant() * std::exp(-h1.value);
  BalanceCheck out;
  out.residual = birth_side - death_side;
  const double scale = std::max(std::abs(birth_side), std::abs(death_side));
  // Relative error of e^{-H} is bounded by e^{ε} − 1 for an absolute error ε in H.
  out.tolerance = 1e-12 * std::max(1.0, scale) +
                  scale * std::expm1(h0.error + h1.error + rate_err);
  return out;
}

// ---------------------------------------------------------------------------
// Sandwich bounds

RateBounds lipschitz_sandwich_rates(const RateModel& model, const SpaceSpec& space,
                                    const Point& x, const Configuration& low,
                                    const Configuration& up) {
  const auto extra = multiset_difference(up, low);
  const double mass = kernel_mass(
      [&](const Point& a, const Point& b) { return increment_kernel(model, space, a, b); }, x, extra);
  const double base = birth_rate(model, space, x, low);
  const double cap = envelope(model, space, x);
  return {std::clamp(base - mass, 0.0, cap), std::clamp(base + mass, 0.0, cap)};
}

RateBounds sandwich_rates_unchecked(const RateModel& model, const SpaceSpec& space,
                                    const Point& x, const Configuration& low,
                                    const Configuration& up) {
  switch (model.monotonicity()) {
    case Monotonicity::Constant: {
      const double v = birth_rate(model, space, x, low);
      return {v, v};
    }
    case Monotonicity::Nondecreasing:
      return {birth_rate(model, space, x, low), birth_rate(model, space, x, up)};
    case Monotonicity::Nonincreasing:
      return {birth_rate(model, space, x, up), birth_rate(model, space, x, low)};
    case Monotonicity::None:
      break;
  }
  return lipschitz_sandwich_rates(model, space, x, low, up);
}

RateBounds sandwich_rates(const RateModel& model, const SpaceSpec& space, const Point& x,
                          const Configuration& low, const Configuration& up) {
  space.check_point(x);
  if (!is_submultiset(low, up)) {
    throw InvalidInput("sandwich_rates requires the lower configuration to be contained in the upper");
  }
  return sandwich_rates_unchecked(model, space, x, low, up);
}

}  // namespace sbd
