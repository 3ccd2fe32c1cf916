#pragma once

// Birth and death rate models: birth rates λ(x, η), the configuration-free
// envelope Λ(x), increment kernels a(x, y) ≥ sup_η |λ(x, η+δ_y) − λ(x, η)|,
// the contraction constant M, Gibbs energies and sandwich bounds.

#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "sbd/core.hpp"

namespace sbd {

class UnsupportedModel : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class QuadratureFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConstantRate {
  double lambda0 = 1.0;
};

/// ρ(x, y) = θ·1{d(x, y) ≤ R}; λ(x, η) = exp(−∫ρ(x, y) η(dy)).
struct PairwiseRate {
  double theta = 0.5;
  double range = 0.2;
};

/// Pair potential that depends only on which cell of a uniform partition
/// along axis 0 each point falls in: ρ(x, y) = θ·J[cell(x)][cell(y)].
/// A pairwise interaction whose discretization is exact, so the finite-state
/// oracle describes the continuous process without approximation.
struct CellPairwiseRate {
  double theta = 1.0;
  int cells = 1;
  std::vector<double> coupling{1.0};  // cells × cells, row-major, symmetric
};

/// λ(x, η) = ρ·γ^{−m_d((x+G) ∖ (η⊕G))}, G the closed ball of grain_radius.
struct AreaInteractionRate {
  double rho = 1.0;
  double gamma = 1.0;
  double grain_radius = 0.1;
  int qmc_points = 4096;
};

/// λ(x, η) = h(d(x, η)), h tabulated (linear between knots) and monotone,
/// with an explicit value at +∞ used for d beyond the last knot.
struct NearestNeighborRate {
  std::vector<double> knots;
  std::vector<double> values;
  double at_infinity = 0.0;

  double operator()(double dist) const;
};

using BirthSpec =
    std::variant<ConstantRate, PairwiseRate, CellPairwiseRate, AreaInteractionRate, NearestNeighborRate>;

struct UnitDeath {};
struct ConstantDeath {
  double delta0 = 1.0;
};
using DeathSpec = std::variant<UnitDeath, ConstantDeath>;

using WeightFn = std::function<double(const Point&)>;

enum class Monotonicity { Constant, Nondecreasing, Nonincreasing, None };

/// Deterministic quasi-Monte Carlo rule on the grain ball: a Halton (van der
/// Corput in 1-D) point set under a few fixed Cranley-Patterson shifts, each
/// shift holding the same number of in-ball points. The value is the mean over
/// shifts; the error is kErrorMultiplier standard errors across shifts plus
/// the volume of one point of a single shift.
class GrainRule {
 public:
  struct Volume {
    double value = 0.0;
    double error = 0.0;
  };

  static constexpr double kErrorMultiplier = 4.0;

  /// `points` is split evenly over min(16, max(2, points/64)) shifts.
  GrainRule(int d, double radius, int points);

  int dim() const noexcept { return d_; }
  double radius() const noexcept { return radius_; }
  double ball_volume() const noexcept { return ball_volume_; }
  int size() const noexcept { return static_cast<int>(offsets_.size()); }
  int shifts() const noexcept { return shifts_; }

  /// m_d((x+G) ∖ ∪_j (y_j+G)) where `neighbors` are the displacements y_j − x.
  Volume uncovered(std::span<const Displacement> neighbors) const;
  /// Brute-force evaluation of the same rule (reference path).
  Volume uncovered_reference(std::span<const Displacement> neighbors) const;
  /// m_d((x+G) ∩ (y+G)) under the rule, y − x = delta.
  double overlap(const Displacement& delta) const;

 private:
  bool covered(const Displacement& o, const Displacement& delta) const;
  Volume summarize(std::span<const int> covered_per_shift) const;

  int d_;
  double radius_;
  double ball_volume_;
  int shifts_ = 0;
  int per_shift_ = 0;
  std::vector<Displacement> offsets_;       // shift-major
  std::vector<std::vector<double>> sorted_;  // 1-D fast path, one per shift
};

class RateModel {
 public:
  explicit RateModel(BirthSpec birth, DeathSpec death = UnitDeath{}, WeightFn weight = {});

  const BirthSpec& birth() const noexcept { return birth_; }
  const DeathSpec& death() const noexcept { return death_; }
  double death_constant() const;
  Monotonicity monotonicity() const;
  bool nondecreasing() const;
  bool has_energy() const;
  bool translation_invariant() const;
  double weight(const Point& x) const { return weight_ ? weight_(x) : 1.0; }
  bool default_weight() const noexcept { return !weight_; }
  /// Grain rule for dimension d (area interaction only).
  const GrainRule& grain(int d) const;

  /// Throws InvalidInput when parameters are out of range for `space`.
  void validate(const SpaceSpec& space) const;

 private:
  BirthSpec birth_;
  DeathSpec death_;
  WeightFn weight_;
  std::vector<std::shared_ptr<const GrainRule>> grains_;  // index d-1
};

double birth_rate(const RateModel& model, const SpaceSpec& space, const Point& x,
                  const Configuration& eta);

/// Requires some point of η at location x.
double death_rate(const RateModel& model, const SpaceSpec& space, const Point& x,
                  const Configuration& eta);

double envelope(const RateModel& model, const SpaceSpec& space, const Point& x);
/// sup_x Λ(x); every built-in envelope is constant in x.
double envelope_bound(const RateModel& model, const SpaceSpec& space);

double increment_kernel(const RateModel& model, const SpaceSpec& space, const Point& x,
                        const Point& y);

struct ContractionEstimate {
  struct Integral {
    double value = 0.0;
    double error = 0.0;
  };
  double value = 0.0;
  // 1-D: Gauss–Kronrod error over kernel-smooth pieces; otherwise |Q(2N) − Q(N)|
  // for the midpoint rule on an N^d grid.
  double error = 0.0;
  int resolution = 0;        // N, also the x-grid used for the supremum
  bool translation_shortcut = false;
  bool uniqueness_applies() const { return value < 1.0; }
};

ContractionEstimate contraction_constant(const RateModel& model, const SpaceSpec& space);

struct EnergySpec {
  std::function<double(const Configuration&)> H;
  // Z is only ever formed by the finite-state oracle.
  static constexpr bool normalizing_constant_computed = false;
};

/// Energy with the integrator's error bound (zero for closed-form potentials).
struct EnergyValue {
  double value = 0.0;
  double error = 0.0;
};

double energy(const RateModel& model, const SpaceSpec& space, const Configuration& eta);
EnergyValue energy_with_error(const RateModel& model, const SpaceSpec& space,
                              const Configuration& eta);
EnergySpec model_energy(const RateModel& model, const SpaceSpec& space);

/// λ(x,η)e^{−H(η)} − δ(x,η+δ_x)e^{−H(η+δ_x)}.
double detailed_balance_residual(const RateModel& model, const SpaceSpec& space, const Point& x,
                                 const Configuration& eta);
double detailed_balance_residual(const RateModel& model, const SpaceSpec& space,
                                 const EnergySpec& energy_spec, const Point& x,
                                 const Configuration& eta);

struct BalanceCheck {
  double residual = 0.0;
  double tolerance = 0.0;  // rounding plus propagated integrator error
};
BalanceCheck detailed_balance_check(const RateModel& model, const SpaceSpec& space,
                                    const Point& x, const Configuration& eta);

struct RateBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Bounds of λ(x, η) over η_low ⊆ η ⊆ η_up; throws unless η_low ⊆ η_up.
RateBounds sandwich_rates(const RateModel& model, const SpaceSpec& space, const Point& x,
                          const Configuration& low, const Configuration& up);
/// Same without the containment check (callers guarantee it).
RateBounds sandwich_rates_unchecked(const RateModel& model, const SpaceSpec& space,
                                    const Point& x, const Configuration& low,
                                    const Configuration& up);
/// Lipschitz envelope valid for any λ: λ(x,η_low) ± kernel_mass(a, x, η_up∖η_low),
/// clipped to [0, Λ(x)].
RateBounds lipschitz_sandwich_rates(const RateModel& model, const SpaceSpec& space,
                                    const Point& x, const Configuration& low,
                                    const Configuration& up);

/// Exact m_d of the intersection of two balls of radius r at distance dist.
double lens_volume(int d, double r, double dist);
double ball_volume(int d, double r);

}  // namespace sbd
