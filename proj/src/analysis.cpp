#include "sbd/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numbers>
#include <thread>
#include <unordered_map>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include "sbd/noise.hpp"

namespace sbd {
namespace {

// Mixed-radix indexing of occupancy vectors: index = Σ k_i·stride_i.
struct StateSpace {
  std::vector<int> caps;
  std::vector<std::size_t> strides;
  std::size_t count = 1;

  explicit StateSpace(std::span<const int> c) : caps(c.begin(), c.end()) {
    for (int cap : caps) {
      if (cap < 0) throw InvalidInput("occupancy caps must be nonnegative");
      strides.push_back(count);
      const auto radix = static_cast<std::size_t>(cap) + 1;
      if (count > kMaxOracleStates / radix) {
        throw InvalidInput(fmt::format("oracle state space exceeds {} states", kMaxOracleStates));
      }
      count *= radix;
    }
  }

  void decode(std::size_t index, std::vector<int>& k) const {
    k.resize(caps.size());
    for (std::size_t i = 0; i < caps.size(); ++i) {
      k[i] = static_cast<int>(index % (static_cast<std::size_t>(caps[i]) + 1));
      index /= static_cast<std::size_t>(caps[i]) + 1;
    }
  }
};

Configuration occupancy_configuration(std::span<const Point> centers, std::span<const int> k) {
  Configuration eta;
  for (std::size_t i = 0; i < k.size(); ++i) {
    for (int j = 0; j < k[i]; ++j) eta.add(centers[i]);
  }
  return eta;
}

// Visits the outgoing transitions of state k (index j) of the truncated chain.
template <class Fn>
void for_each_transition(const OracleModel& oracle, const StateSpace& ss, std::size_t j,
                         std::span<const int> k, Fn&& fn) {
  for (std::size_t i = 0; i < ss.caps.size(); ++i) {
    if (k[i] < ss.caps[i]) {
      const double r = oracle.masses[i] * oracle.birth(static_cast<int>(i), k);
      if (!(r >= 0.0) || !std::isfinite(r)) {
        throw InvalidInput("oracle birth rates must be finite and nonnegative");
      }
      if (r > 0.0) fn(j + ss.strides[i], r);
    }
    if (k[i] > 0) fn(j - ss.strides[i], oracle.death_rate * k[i]);
  }
}

double blocked_outflow(const OracleModel& oracle, const StateSpace& ss, std::span<const int> k) {
  double out = 0.0;
  for (std::size_t i = 0; i < ss.caps.size(); ++i) {
    if (k[i] == ss.caps[i]) out += oracle.masses[i] * oracle.birth(static_cast<int>(i), k);
  }
  return out;
}

// Per-axis midpoint count for birth integrals over the window.
int grid_per_axis(const SpaceSpec& space) {
  const int res = space.quadrature_resolution;
  return space.d == 1 ? res : space.d == 2 ? std::min(res, 64) : std::min(res, 16);
}

template <class Fn>
void for_each_cell_midpoint(const SpaceSpec& space, Fn&& fn) {
  const int n = grid_per_axis(space);
  double cell_volume = 1.0;
  for (int a = 0; a < space.d; ++a) cell_volume *= space.lengths[static_cast<std::size_t>(a)] / n;
  long total = 1;
  for (int a = 0; a < space.d; ++a) total *= n;
  std::array<double, kMaxDim> c{};
  for (long flat = 0; flat < total; ++flat) {
    long rest = flat;
    for (int a = 0; a < space.d; ++a) {
      c[static_cast<std::size_t>(a)] =
          (static_cast<double>(rest % n) + 0.5) * space.lengths[static_cast<std::size_t>(a)] / n;
      rest /= n;
    }
    fn(Point(std::span<const double>(c.data(), static_cast<std::size_t>(space.d))), cell_volume);
  }
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

double chi_square_tail(double stat, int dof) {
  if (dof < 1) return 1.0;
  const boost::math::chi_squared dist(dof);
  return boost::math::cdf(boost::math::complement(dist, std::max(stat, 0.0)));
}

}  // namespace

double DistributionTable::operator()(const Occupancy& k) const {
  const auto it = probs_.find(k);
  return it == probs_.end() ? 0.0 : it->second;
}

double DistributionTable::total() const {
  double s = 0.0;
  for (const auto& [k, p] : probs_) s += p;
  return s;
}

DistributionTable DistributionTable::totals() const {
  std::map<Occupancy, double> out;
  for (const auto& [k, p] : probs_) {
    int n = 0;
    for (int v : k) n += v;
    out[{n}] += p;
  }
  return DistributionTable(std::move(out));
}

double DistributionTable::mean_total() const {
  double m = 0.0;
  for (const auto& [k, p] : probs_) {
    int n = 0;
    for (int v : k) n += v;
    m += n * p;
  }
  return m;
}

std::size_t OracleModel::state_count() const { return StateSpace(caps).count; }

void OracleModel::validate() const {
  if (masses.empty()) throw InvalidInput("oracle needs at least one cell");
  if (caps.size() != masses.size()) throw InvalidInput("one occupancy cap per cell is required");
  for (double b : masses) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidInput("cell masses must be finite and nonnegative");
  }
  if (!birth) throw InvalidInput("oracle birth rate is missing");
  if (!(death_rate > 0.0) || !std::isfinite(death_rate)) throw InvalidInput("death rate must be positive");
  (void)state_count();
}

OracleSolution oracle_stationary(const OracleModel& oracle) {
  oracle.validate();
  const StateSpace ss(oracle.caps);
  const std::size_t n = ss.count;
  const auto last = static_cast<Eigen::Index>(n - 1);

  // Q^T with its last row replaced by the normalization Σπ = 1.
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<Eigen::Triplet<double>> generator;  // Q^T, unmodified
  std::vector<int> k;
  for (std::size_t j = 0; j < n; ++j) {
    ss.decode(j, k);
    double out = 0.0;
    for_each_transition(oracle, ss, j, k, [&](std::size_t to, double r) {
      generator.emplace_back(static_cast<Eigen::Index>(to), static_cast<Eigen::Index>(j), r);
      out += r;
    });
    generator.emplace_back(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j), -out);
  }
  for (const auto& t : generator) {
    if (t.row() != last) trips.push_back(t);
  }
  for (Eigen::Index c = 0; c <= last; ++c) trips.emplace_back(last, c, 1.0);

  Eigen::SparseMatrix<double> A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) {
    throw SolveFailure("oracle generator factorization failed: " + lu.lastErrorMessage());
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  rhs(last) = 1.0;
  Eigen::VectorXd pi = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !pi.allFinite()) {
    throw SolveFailure(fmt::format("oracle solve failed (log|det| = {})", lu.logAbsDeterminant()));
  }
  const double most_negative = pi.minCoeff();
  if (most_negative < -1e-9) {
    throw SolveFailure(fmt::format("oracle solve is ill-conditioned: min probability {} (log|det| = {})",
                                   most_negative, lu.logAbsDeterminant()));
  }
  pi = pi.cwiseMax(0.0);
  pi /= pi.sum();

  Eigen::SparseMatrix<double> Qt(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Qt.setFromTriplets(generator.begin(), generator.end());
  const Eigen::VectorXd flow = Qt * pi;

  OracleSolution out;
  out.balance_residual = flow.cwiseAbs().maxCoeff();
  std::map<Occupancy, double> probs;
  for (std::size_t j = 0; j < n; ++j) {
    ss.decode(j, k);
    const double p = pi(static_cast<Eigen::Index>(j));
    probs.emplace(k, p);
    out.truncation_defect += p * blocked_outflow(oracle, ss, k);
  }
  out.table = DistributionTable(std::move(probs));
  return out;
}

DistributionTable gibbs_table(std::span<const double> masses, std::span<const int> caps,
                              const OccupancyEnergy& H) {
  if (masses.size() != caps.size() || masses.empty()) {
    throw InvalidInput("gibbs_table needs one cap per cell mass");
  }
  const StateSpace ss(caps);
  std::vector<double> logw(ss.count);
  std::vector<int> k;
  double top = -kInfinity;
  for (std::size_t j = 0; j < ss.count; ++j) {
    ss.decode(j, k);
    double lw = -H(k);
    for (std::size_t i = 0; i < k.size(); ++i) {
      if (k[i] == 0) continue;
      lw += k[i] * std::log(masses[i]) - std::lgamma(k[i] + 1.0);
    }
    if (std::isnan(lw)) lw = -kInfinity;
    logw[j] = lw;
    top = std::max(top, lw);
  }
  if (!std::isfinite(top)) throw InvalidInput("every state has zero Gibbs weight");
  double z = 0.0;
  for (double& lw : logw) {
    lw = std::exp(lw - top);
    z += lw;
  }
  std::map<Occupancy, double> probs;
  for (std::size_t j = 0; j < ss.count; ++j) {
    ss.decode(j, k);
    probs.emplace(k, logw[j] / z);
  }
  return DistributionTable(std::move(probs));
}

std::vector<Point> cell_centers(const SpaceSpec& space, int cells) {
  space.validate();
  if (cells < 1) throw InvalidInput("need at least one cell");
  std::vector<Point> out;
  for (int i = 0; i < cells; ++i) {
    std::array<double, kMaxDim> c{};
    c[0] = (i + 0.5) * space.lengths[0] / cells;
    for (int a = 1; a < space.d; ++a) c[static_cast<std::size_t>(a)] = 0.5 * space.lengths[static_cast<std::size_t>(a)];
    out.emplace_back(std::span<const double>(c.data(), static_cast<std::size_t>(space.d)));
  }
  return out;
}

int cell_index(const SpaceSpec& space, int cells, const Point& x) {
  const int i = static_cast<int>(std::floor(x[0] / space.lengths[0] * cells));
  return std::clamp(i, 0, cells - 1);
}

OracleModel oracle_from_model(const RateModel& model, const SpaceSpec& space, int cells,
                              std::span<const int> caps) {
  model.validate(space);
  if (caps.size() != static_cast<std::size_t>(cells)) throw InvalidInput("one cap per cell is required");
  OracleModel out;
  out.masses.assign(static_cast<std::size_t>(cells), space.beta_total() / cells);
  out.caps.assign(caps.begin(), caps.end());
  out.death_rate = model.death_constant();
  auto centers = cell_centers(space, cells);
  out.birth = [model, space, centers](int i, std::span<const int> k) {
    return birth_rate(model, space, centers[static_cast<std::size_t>(i)], occupancy_configuration(centers, k));
  };
  return out;
}

OccupancyEnergy oracle_energy(const RateModel& model, const SpaceSpec& space, int cells) {
  auto centers = cell_centers(space, cells);
  return [model, space, centers](std::span<const int> k) {
    return energy(model, space, occupancy_configuration(centers, k));
  };
}

double tv_distance(const DistributionTable& p, const DistributionTable& q) {
  double s = 0.0;
  for (const auto& [k, v] : p.probabilities()) s += std::abs(v - q(k));
  for (const auto& [k, v] : q.probabilities()) {
    if (!p.probabilities().count(k)) s += std::abs(v);
  }
  return 0.5 * s;
}

DistributionTable empirical_count_table(std::span<const Configuration> samples, const Binning& binning) {
  if (samples.empty()) throw InvalidInput("empirical table needs at least one sample");
  if (binning.cells < 0) throw InvalidInput("cell count must be nonnegative");
  std::map<Occupancy, double> counts;
  for (const auto& eta : samples) {
    if (binning.cells == 0) {
      counts[{static_cast<int>(eta.size())}] += 1.0;
      continue;
    }
    Occupancy k(static_cast<std::size_t>(binning.cells), 0);
    for (const auto& e : eta) ++k[static_cast<std::size_t>(cell_index(binning.space, binning.cells, e.point))];
    counts[k] += 1.0;
  }
  for (auto& [k, c] : counts) c /= static_cast<double>(samples.size());
  return DistributionTable(std::move(counts));
}

DistributionTable poisson_table(double mean, int cap) {
  if (!(mean >= 0.0) || cap < 0) throw InvalidInput("poisson_table needs mean >= 0 and cap >= 0");
  std::map<Occupancy, double> probs;
  for (int k = 0; k <= cap; ++k) {
    const double p = mean == 0.0 ? (k == 0 ? 1.0 : 0.0)
                                 : std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
    probs[{k}] = p;
  }
  return DistributionTable(std::move(probs));
}

Estimate mean_estimate(std::span<const double> xs) {
  if (xs.empty()) throw InvalidInput("mean of an empty sample");
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  return {m, std::sqrt(sample_variance(xs) / static_cast<double>(xs.size()))};
}

double generator_on_exponential(const RateModel& model, const SpaceSpec& space,
                                const Configuration& eta, const TestFunction& g) {
  double log_f = 0.0;
  for (const auto& e : eta) log_f -= g(e.point);
  const double F = std::exp(log_f);
  double births = 0.0;
  for_each_cell_midpoint(space, [&](const Point& x, double vol) {
    const double gx = g(x);
    if (gx == 0.0) return;
    births += std::expm1(-gx) * birth_rate(model, space, x, eta) * space.beta_intensity * vol;
  });
  double deaths = 0.0;
  for (const auto& e : eta) deaths += std::expm1(g(e.point)) * death_rate(model, space, e.point, eta);
  const double out = F * (births + deaths);
  if (!std::isfinite(out)) throw QuadratureFailure("generator quadrature produced a non-finite value");
  return out;
}

Estimate stationarity_residual(const RateModel& model, const SpaceSpec& space,
                               std::span<const Configuration> samples, const TestFunction& g) {
  model.validate(space);
  std::vector<double> values;
  values.reserve(samples.size());
  for (const auto& eta : samples) values.push_back(generator_on_exponential(model, space, eta, g));
  return mean_estimate(values);
}

double stationarity_residual_table(const OracleModel& oracle, const DistributionTable& table,
                                   std::span<const double> g) {
  oracle.validate();
  if (g.size() != oracle.cells()) throw InvalidInput("one test value per cell is required");
  const StateSpace ss(oracle.caps);
  auto F = [&](std::size_t index) {
    std::vector<int> k;
    ss.decode(index, k);
    double s = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) s += k[i] * g[i];
    return std::exp(-s);
  };
  double total = 0.0;
  std::vector<int> k;
  for (std::size_t j = 0; j < ss.count; ++j) {
    ss.decode(j, k);
    const double p = table(k);
    if (p == 0.0) continue;
    const double Fj = F(j);
    double af = 0.0;
    for_each_transition(oracle, ss, j, k, [&](std::size_t to, double r) { af += r * (F(to) - Fj); });
    total += p * af;
  }
  return total;
}

double Box::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= std::max(0.0, hi[i] - lo[i]);
  return v;
}

bool Box::contains(const Point& x) const {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    const double c = x[static_cast<int>(i)];
    if (c < lo[i] || c > hi[i]) return false;
  }
  return true;
}

MeckeResult mecke_test(const SpaceSpec& space, double intensity, MeckeFunctional h,
                       const Box& region, int replicates, std::uint64_t seed) {
  space.validate();
  if (!(intensity >= 0.0) || !std::isfinite(intensity)) throw InvalidInput("intensity must be nonnegative");
  if (replicates < 2) throw InvalidInput("mecke_test needs at least two replicates");
  if (region.lo.size() != static_cast<std::size_t>(space.d) || region.hi.size() != region.lo.size()) {
    throw InvalidInput("region dimension must match the space");
  }
  const double mass = intensity * space.beta_intensity * region.volume();
  std::vector<double> lhs;
  std::vector<double> rhs;
  std::vector<double> diff;
  for (int rep = 0; rep < replicates; ++rep) {
    const Configuration xi = poisson_configuration(
        space, intensity, derive_key(seed, StreamTag::Replicate, static_cast<std::uint64_t>(rep)));
    int in_region = 0;
    for (const auto& e : xi) in_region += region.contains(e.point) ? 1 : 0;
    double l = 0.0;
    double r = 0.0;
    switch (h) {
      case MeckeFunctional::Indicator:
        l = in_region;
        r = mass;
        break;
      case MeckeFunctional::EmptyIndicator:
        // Removing x ∈ B leaves B empty iff x was its only point.
        l = in_region == 1 ? 1.0 : 0.0;
        r = in_region == 0 ? mass : 0.0;
        break;
    }
    lhs.push_back(l);
    rhs.push_back(r);
    diff.push_back(l - r);
  }
  MeckeResult out;
  out.lhs = mean_estimate(lhs).value;
  out.rhs = mean_estimate(rhs).value;
  out.std_error = mean_estimate(diff).std_error;
  const double gap = std::abs(out.lhs - out.rhs);
  out.discrepancy = gap == 0.0 ? 0.0 : out.std_error > 0.0 ? gap / out.std_error : kInfinity;
  return out;
}

double kolmogorov_tail(double x) {
  if (!(x > 0.0)) return 1.0;
  if (x < 1.18) {
    // Theta-function form, accurate where the alternating series is slow.
    const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * x * x));
    double s = 0.0;
    for (int k = 1; k < 20; k += 2) s += std::pow(y, k * k);
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / x * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-17) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

KsResult exponential_ks_test(std::span<const double> sample, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate)) throw InvalidInput("exponential rate must be positive");
  KsResult out;
  out.n = sample.size();
  if (sample.empty()) return out;
  std::vector<double> xs(sample.begin(), sample.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = -std::expm1(-rate * std::max(xs[i], 0.0));
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - F, F - static_cast<double>(i) / n});
  }
  out.statistic = d;
  const double sn = std::sqrt(n);
  out.p_value = kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d);
  out.status = out.n >= kMinKsSample ? TestStatus::Conclusive : TestStatus::Inconclusive;
  return out;
}

KsResult lifetime_ks_test(const Trajectory& trajectory, double born_before) {
  std::unordered_map<PointId, double> born;
  for (const auto& e : trajectory.initial) born[e.id] = trajectory.start_time;
  std::vector<double> sample;
  for (const auto& ev : trajectory.events) {
    if (ev.kind == EventKind::Birth) {
      born[ev.id] = ev.time;
    } else if (born.at(ev.id) <= born_before) {
      sample.push_back(ev.time - born.at(ev.id));
    }
  }
  return exponential_ks_test(sample, trajectory.death_rate);
}

ChiSquareResult chi_square_poisson(std::span<const int> counts, double mean) {
  if (counts.empty()) throw InvalidInput("chi-square test needs observations");
  ChiSquareResult out;
  const double N = static_cast<double>(counts.size());
  if (!(mean > 0.0)) {
    const bool all_zero = std::all_of(counts.begin(), counts.end(), [](int c) { return c == 0; });
    out.p_value = all_zero ? 1.0 : 0.0;
    out.bins = 1;
    return out;
  }
  const int top = *std::max_element(counts.begin(), counts.end());
  std::vector<double> observed(static_cast<std::size_t>(top) + 1, 0.0);
  for (int c : counts) {
    if (c < 0) throw InvalidInput("counts must be nonnegative");
    observed[static_cast<std::size_t>(c)] += 1.0;
  }
  auto pmf = [mean](int k) { return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0)); };

  // Bins [start, end) closed once their expectation reaches 5 while the
  // remaining tail also keeps at least 5; the final bin is [start, ∞).
  struct Bin {
    double expected = 0.0;
    double observed = 0.0;
  };
  std::vector<Bin> bins;
  Bin cur;
  double cdf = 0.0;
  for (int k = 0;; ++k) {
    const double p = pmf(k);
    cdf += p;
    cur.expected += N * p;
    if (k <= top) cur.observed += observed[static_cast<std::size_t>(k)];
    const double tail = N * std::max(0.0, 1.0 - cdf);
    if (tail < 5.0 && k >= top) {
      cur.expected += tail;
      bins.push_back(cur);
      break;
    }
    if (cur.expected >= 5.0 && tail >= 5.0) {
      bins.push_back(cur);
      cur = {};
    }
  }
  // Observations beyond `top` cannot exist; fold any tail bin shortfall backwards.
  while (bins.size() > 1 && bins.back().expected < 5.0) {
    Bin b = bins.back();
    bins.pop_back();
    bins.back().expected += b.expected;
    bins.back().observed += b.observed;
  }
  for (const auto& b : bins) out.statistic += (b.observed - b.expected) * (b.observed - b.expected) / b.expected;
  out.bins = static_cast<int>(bins.size());
  out.dof = out.bins - 1;
  out.p_value = chi_square_tail(out.statistic, out.dof);
  return out;
}

ChiSquareResult chi_square_two_sample(std::span<const int> a, std::span<const int> b) {
  if (a.empty() || b.empty()) throw InvalidInput("two-sample test needs two nonempty samples");
  std::map<int, std::pair<double, double>> table;
  for (int v : a) table[v].first += 1.0;
  for (int v : b) table[v].second += 1.0;
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double N = na + nb;

  std::vector<std::pair<double, double>> bins;
  std::pair<double, double> cur{0.0, 0.0};
  auto enough = [&](const std::pair<double, double>& c) {
    const double tot = c.first + c.second;
    return tot * na / N >= 5.0 && tot * nb / N >= 5.0;
  };
  for (const auto& [v, c] : table) {
    cur.first += c.first;
    cur.second += c.second;
    if (enough(cur)) {
      bins.push_back(cur);
      cur = {0.0, 0.0};
    }
  }
  if (cur.first + cur.second > 0.0) {
    if (bins.empty()) {
      bins.push_back(cur);
    } else {
      bins.back().first += cur.first;
      bins.back().second += cur.second;
    }
  }
  ChiSquareResult out;
  out.bins = static_cast<int>(bins.size());
  for (const auto& [oa, ob] : bins) {
    const double tot = oa + ob;
    const double ea = tot * na / N;
    const double eb = tot * nb / N;
    out.statistic += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
  }
  out.dof = out.bins - 1;
  out.p_value = chi_square_tail(out.statistic, out.dof);
  return out;
}

std::vector<BlockRow> block_average_diagnostic(std::span<const Configuration> samples,
                                               const SpaceSpec& space,
                                               std::span<const int> block_counts) {
  space.validate();
  if (!space.periodic()) throw UnsupportedModel("block averages need a periodic window");
  if (samples.empty()) throw InvalidInput("block averages need at least one sample");
  std::vector<BlockRow> out;
  for (int m : block_counts) {
    if (m < 1) throw InvalidInput("block counts must be positive");
    std::size_t blocks = 1;
    for (int a = 0; a < space.d; ++a) blocks *= static_cast<std::size_t>(m);
    const double block_volume = space.volume() / static_cast<double>(blocks);
    std::vector<double> intensities;
    intensities.reserve(blocks * samples.size());
    for (const auto& eta : samples) {
      std::vector<double> counts(blocks, 0.0);
      for (const auto& e : eta) {
        std::size_t flat = 0;
        std::size_t stride = 1;
        for (int a = 0; a < space.d; ++a) {
          const double len = space.lengths[static_cast<std::size_t>(a)];
          const int i = std::clamp(static_cast<int>(std::floor(e.point[a] / len * m)), 0, m - 1);
          flat += static_cast<std::size_t>(i) * stride;
          stride *= static_cast<std::size_t>(m);
        }
        counts[flat] += 1.0;
      }
      for (double c : counts) intensities.push_back(c / block_volume);
    }
    double mean = 0.0;
    for (double v : intensities) mean += v;
    mean /= static_cast<double>(intensities.size());
    out.push_back({m, block_volume, sample_variance(intensities), mean / block_volume});
  }
  return out;
}

RipleyResult ripley_k(std::span<const Configuration> samples, const SpaceSpec& space,
                      std::span<const double> radii) {
  space.validate();
  if (!space.periodic()) throw UnsupportedModel("Ripley's K is only provided on the torus");
  RipleyResult out;
  for (double r : radii) out.rows.push_back({r, 0.0, 0.0});
  const double V = space.volume();
  for (const auto& eta : samples) {
    const auto pts = eta.points();
    std::vector<double> dists;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) dists.push_back(torus_distance(space, pts[i], pts[j]));
    }
    std::sort(dists.begin(), dists.end());
    const double n = static_cast<double>(pts.size());
    for (auto& row : out.rows) {
      const auto within = static_cast<double>(std::upper_bound(dists.begin(), dists.end(), row.r) - dists.begin());
      row.ordered_pairs += 2.0 * within;
      if (pts.size() >= 2) row.k += V * 2.0 * within / (n * (n - 1.0));
    }
    if (pts.size() >= 2) ++out.samples_used;
  }
  if (out.samples_used > 0) {
    for (auto& row : out.rows) row.k /= static_cast<double>(out.samples_used);
  }
  return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace sbd
