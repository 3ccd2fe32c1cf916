#pragma once

// The driving Poisson random measure on S × ℝ × [0,∞)², generated lazily one
// time slab at a time from a counter-based generator keyed by
// (master_seed, slab). Regenerating a slab is bit-identical, so coupling from
// the past can re-read old noise without storing it.

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "sbd/core.hpp"
#include "sbd/models.hpp"

namespace sbd {

/// Tags separating the independent families of keyed streams derived from one
/// master seed.
enum class StreamTag : std::uint64_t {
  Slab = 1,
  DominatingTail = 2,
  InitialClocks = 3,
  PoissonConfiguration = 4,
  Replicate = 5,
  Test = 99,
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Key for a subordinate stream. The derivation is
///   mix64(mix64(mix64(seed ^ golden·tag) + a) ^ mix64(b + golden)).
std::uint64_t derive_key(std::uint64_t seed, StreamTag tag, std::uint64_t a, std::uint64_t b = 0);

/// Counter-based generator: draw i of a stream is mix64(key + (i+1)·golden).
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(key) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }
  double exponential();
  std::uint64_t poisson(double mean);
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Atom (x, s, r, u) of the driving measure, kept only when u ≤ Λ(x).
struct NoisePoint {
  Point x;
  double s = 0.0;
  double r = 0.0;
  double u = 0.0;
  std::int64_t slab = 0;
  std::uint32_t draw = 0;
};

class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  /// Atoms with s in [k·L, (k+1)·L), ordered by (s, draw).
  virtual std::vector<NoisePoint> slab(std::int64_t k) const = 0;
  virtual double slab_length() const = 0;
};

using EnvelopeFn = std::function<double(const Point&)>;

class NoiseStream final : public NoiseSource {
 public:
  /// Candidates are drawn at rate `envelope_max`·β and thinned to u ≤ Λ(x).
  NoiseStream(std::uint64_t master_seed, SpaceSpec space, EnvelopeFn envelope, double envelope_max,
              double slab_length = 1.0);

  static NoiseStream for_model(std::uint64_t master_seed, const RateModel& model,
                               const SpaceSpec& space, double slab_length = 1.0);

  std::vector<NoisePoint> slab(std::int64_t k) const override;
  double slab_length() const override { return slab_length_; }

  std::uint64_t master_seed() const noexcept { return seed_; }
  const SpaceSpec& space() const noexcept { return space_; }
  double envelope_max() const noexcept { return envelope_max_; }
  /// ∫Λ dβ for the envelopes shipped here (constant in x).
  double envelope_total() const { return envelope_max_ * space_.beta_total(); }

  /// State at time −anchor of the stationary dominating process started in the
  /// infinite past: Poisson with mean Λβ/δ, independent unit exponential clocks.
  TimedConfiguration dominating_tail(double anchor, double death_rate = 1.0) const;

 private:
  std::uint64_t seed_;
  SpaceSpec space_;
  EnvelopeFn envelope_;
  double envelope_max_;
  double slab_length_;
};

/// FNV-1a over the exact bit patterns of a slab.
std::uint64_t slab_hash(const std::vector<NoisePoint>& slab);

/// Slab index containing time t.
std::int64_t slab_index(double t, double slab_length);

TimedConfiguration initial_clocks(const Configuration& eta0, std::uint64_t seed);

using IntensityFn = std::function<double(const Point&)>;

/// Poisson configuration with mean measure intensity(x)·β(dx); `bound` must
/// dominate intensity on the window.
Configuration poisson_configuration(const SpaceSpec& space, const IntensityFn& intensity,
                                    double bound, std::uint64_t seed);
/// Constant intensity relative to β.
Configuration poisson_configuration(const SpaceSpec& space, double intensity, std::uint64_t seed);

/// Uniform location in the window.
Point uniform_point(const SpaceSpec& space, CounterRng& rng);

}  // namespace sbd
