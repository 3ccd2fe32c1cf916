#pragma once

// Verification tools: the finite-state oracle (exact stationary law of a
// discretized chain), Gibbs tables, distances between laws, stationarity and
// Mecke checks, hypothesis tests and spatial summaries.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbd/core.hpp"
#include "sbd/engine.hpp"
#include "sbd/models.hpp"

namespace sbd {

class SolveFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Occupancy = std::vector<int>;

/// Probability table over occupancy vectors (or over {total count}).
class DistributionTable {
 public:
  DistributionTable() = default;
  explicit DistributionTable(std::map<Occupancy, double> probs) : probs_(std::move(probs)) {}

  double operator()(const Occupancy& k) const;
  void set(const Occupancy& k, double p) { probs_[k] = p; }
  const std::map<Occupancy, double>& probabilities() const noexcept { return probs_; }
  std::size_t size() const noexcept { return probs_.size(); }
  double total() const;
  /// Law of the total count Σk_i.
  DistributionTable totals() const;
  double mean_total() const;

 private:
  std::map<Occupancy, double> probs_;
};

/// Birth-death chain on occupancy vectors bounded by `caps`.
struct OracleModel {
  std::vector<double> masses;  // β mass of each cell
  std::vector<int> caps;
  /// λ(i, k): birth rate in cell i, relative to its β mass.
  std::function<double(int, std::span<const int>)> birth;
  double death_rate = 1.0;

  std::size_t cells() const { return masses.size(); }
  std::size_t state_count() const;
  void validate() const;
};

struct OracleSolution {
  DistributionTable table;
  double truncation_defect = 0.0;  // stationary outflow blocked at capped cells
  double balance_residual = 0.0;   // ‖πQ‖∞
};

inline constexpr std::size_t kMaxOracleStates = 1'000'000;

OracleSolution oracle_stationary(const OracleModel& oracle);

using OccupancyEnergy = std::function<double(std::span<const int>)>;

/// π(k) ∝ e^{−H(k)}·Π b_i^{k_i}/k_i! over the capped state space.
DistributionTable gibbs_table(std::span<const double> masses, std::span<const int> caps,
                              const OccupancyEnergy& H);

/// Discretization of a continuous model: `cells` equal slabs along axis 0,
/// rates evaluated with every point at its cell center.
OracleModel oracle_from_model(const RateModel& model, const SpaceSpec& space, int cells,
                              std::span<const int> caps);
std::vector<Point> cell_centers(const SpaceSpec& space, int cells);
/// Model energy of the cell-center configuration with occupancy k.
OccupancyEnergy oracle_energy(const RateModel& model, const SpaceSpec& space, int cells);
int cell_index(const SpaceSpec& space, int cells, const Point& x);

/// ½Σ|p − q|, states missing from one table count as 0.
double tv_distance(const DistributionTable& p, const DistributionTable& q);

struct Binning {
  int cells = 0;  // 0: total count; otherwise per-cell occupancy along axis 0
  SpaceSpec space;

  static Binning total() { return {}; }
  static Binning per_cell(const SpaceSpec& space, int cells) { return {cells, space}; }
};

DistributionTable empirical_count_table(std::span<const Configuration> samples,
                                        const Binning& binning = Binning::total());

/// Poisson(mean) probabilities of 0..cap as a total-count table.
DistributionTable poisson_table(double mean, int cap);

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

Estimate mean_estimate(std::span<const double> xs);

using TestFunction = std::function<double(const Point&)>;

/// A F(η) for F(η) = exp(−Σ_{x∈η} g(x)), birth integral by midpoint quadrature.
double generator_on_exponential(const RateModel& model, const SpaceSpec& space,
                                const Configuration& eta, const TestFunction& g);

/// Monte Carlo mean of A F over the samples.
Estimate stationarity_residual(const RateModel& model, const SpaceSpec& space,
                               std::span<const Configuration> samples, const TestFunction& g);

/// Σ_k π(k)·(QF)(k) on the truncated chain, with F(k) = exp(−Σ k_i g_i).
double stationarity_residual_table(const OracleModel& oracle, const DistributionTable& table,
                                   std::span<const double> g);

struct Box {
  std::vector<double> lo;
  std::vector<double> hi;
  double volume() const;
  bool contains(const Point& x) const;
};

enum class MeckeFunctional {
  Indicator,       // h(ζ, x) = 1{x ∈ B}
  EmptyIndicator,  // h(ζ, x) = 1{ζ(B) = 0, x ∈ B}
};

struct MeckeResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double std_error = 0.0;  // of the paired difference
  double discrepancy = 0.0;  // |lhs − rhs| / std_error, 0 when both sides agree exactly
};

/// Poisson samples with mean measure intensity·β; compares
/// E∫h(ξ−δ_x, x)ξ(dx) with E∫h(ξ, x)β(dx).
MeckeResult mecke_test(const SpaceSpec& space, double intensity, MeckeFunctional h,
                       const Box& region, int replicates, std::uint64_t seed);

enum class TestStatus { Conclusive, Inconclusive };

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  TestStatus status = TestStatus::Inconclusive;
};

inline constexpr std::size_t kMinKsSample = 100;

/// Asymptotic Kolmogorov tail P(K > x).
double kolmogorov_tail(double x);
/// One-sample KS test against Exp(rate).
KsResult exponential_ks_test(std::span<const double> sample, double rate);
/// Lifetimes of points born no later than `born_before`, tested against the
/// exponential law of the trajectory's death rate.
KsResult lifetime_ks_test(const Trajectory& trajectory, double born_before = kInfinity);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  int bins = 0;
};

/// Goodness of fit of counts to Poisson(mean); bins merged to expectation ≥ 5.
ChiSquareResult chi_square_poisson(std::span<const int> counts, double mean);
/// Two-sample test of equal count distributions; bins merged to expectation ≥ 5.
ChiSquareResult chi_square_two_sample(std::span<const int> a, std::span<const int> b);

struct BlockRow {
  int m = 0;
  double block_volume = 0.0;
  double variance = 0.0;           // of per-block intensity, pooled over samples
  double poisson_reference = 0.0;  // mean intensity / block volume
};

/// Splits the torus into m^d equal blocks for each m.
std::vector<BlockRow> block_average_diagnostic(std::span<const Configuration> samples,
                                               const SpaceSpec& space,
                                               std::span<const int> block_counts);

struct RipleyRow {
  double r = 0.0;
  double k = 0.0;
  double ordered_pairs = 0.0;  // total over all samples
};

struct RipleyResult {
  std::vector<RipleyRow> rows;
  std::size_t samples_used = 0;  // samples with at least two points
  bool defined() const { return samples_used > 0; }
};

/// K̂(r) = V·Σ_{i≠j}1{d(x_i, x_j) ≤ r} / (n(n−1)), averaged over samples.
RipleyResult ripley_k(std::span<const Configuration> samples, const SpaceSpec& space,
                      std::span<const double> radii);

/// Runs fn(i) for i in [0, n) on up to `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace sbd
